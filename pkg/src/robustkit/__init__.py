"""Robustness of embeddings under image perturbations.

Three metrics (cosine, Euclidean and DivergenceRadius), the perturbation
catalogue they are measured over, downstream prediction from robustness
values and robustness-aware fine-tuning of a linear embedder.
"""

__version__ = "0.1.0"

from .downstream import (  # noqa: E402
    LinearModel,
    PerformanceKind,
    PerformanceRecord,
    ToyClassifier,
    acc_p,
    fit_linear,
    mse,
    pearson,
    predict,
    quartile_groups,
    rmse,
    rmse_p,
    split_and_fit,
)
from .embed import EmbeddingStore, StoreEmbedder, ToyEmbedder, store_get, store_load, store_write  # noqa: E402
from .enhance import EnhanceConfig, LossBreakdown, TrainableEmbedder, finetune, grad, loss  # noqa: E402
from .geometry import Ball, ToleranceConfig, meb_bruteforce, meb_coreset, meb_exact, random_rotation  # noqa: E402
from .metrics import (  # noqa: E402
    Embedding,
    RobustnessRecord,
    SamplingMode,
    SamplingPlan,
    measure,
    property_suite,
    r_cosine,
    r_divergence_radius,
    r_euclidean,
)
from .perturb import IDENTITY, PERTURBATIONS, Image, PerturbationSpec, apply, default_spec  # noqa: E402
