"""Robustness-aware fine-tuning of a linear embedder.

The trainable model is f'(x) = W phi(x) / ||W phi(x)|| over the toy raw
features phi. Fine-tuning minimizes

    L1 + lambda * L2,
    L1 = -mean_x cos(f'(x), f'(P(x, k)))      (robustness)
    L2 = -mean_x cos(f(x), f'(x))             (utility)

where f is a frozen copy of the initial model and k is redrawn from the
perturbation domain every epoch. Gradients are analytic.
"""

import csv
import hashlib
import json
from dataclasses import asdict, dataclass

import numpy as np

from .embed import toy_features
from .errors import DimensionMismatchError, GradientDegenerateError, NonFiniteError
from .metrics import Embedding, SamplingPlan, r_divergence_radius, sampled_params
from .perturb import apply

MIN_OUTPUT_NORM = 1e-12
LR_FLOOR = 1e-9


class TrainableEmbedder:
    def __init__(self, weights, grid=4, name="linear"):
        w = np.array(weights, dtype=np.float64)
        if w.ndim != 2:
            raise ValueError("weights must be a matrix")
        if w.shape[1] != 3 * grid**2 + 3:
            raise ValueError(f"weights have {w.shape[1]} input columns, toy grid {grid} gives {3 * grid**2 + 3}")
        self.W = w
        self.grid = grid
        self.name = name

    @classmethod
    def from_toy(cls, grid=4):
        """Identity weights: reproduces :class:`~robustkit.embed.ToyEmbedder` exactly up to rounding."""
        return cls(np.eye(3 * grid**2 + 3), grid)

    @property
    def dim(self):
        return self.W.shape[0]

    @property
    def id(self):
        return f"{self.name}-toy-grid{self.grid}"

    def copy(self, name=None):
        return TrainableEmbedder(self.W.copy(), self.grid, name or self.name)

    def features(self, image):
        return toy_features(image, self.grid)

    def embed_features(self, phi):
        u, _ = _forward(self.W, np.atleast_2d(phi))
        return u

    def embed(self, image):
        return Embedding(self.embed_features(self.features(image))[0])


@dataclass
class EnhanceConfig:
    lam: float = 1.0
    epochs: int = 50
    learning_rate: float = 1e-5
    batch_size: int = 32
    seed: int = 0
    resample_k: bool = True
    backtrack: bool = False
    probe_m: int = 5

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.epochs < 1 or self.batch_size < 1 or self.probe_m < 1:
            raise ValueError("epochs, batch_size and probe_m must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")

    def as_dict(self):
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d


@dataclass(frozen=True)
class LossBreakdown:
    l1: float
    l2: float
    total: float

    @classmethod
    def from_terms(cls, l1, l2, lam):
        return cls(float(l1), float(l2), float(l1 + lam * l2))


@dataclass
class EpochStats:
    epoch: int
    l1: float
    l2: float
    total: float
    probe_rdr: float
    probe_cos: float


def _forward(w, phi):
    v = phi @ w.T
    norms = np.linalg.norm(v, axis=1)
    if np.any(norms < MIN_OUTPUT_NORM):
        raise GradientDegenerateError("pre-normalization output norm below 1e-12")
    return v / norms[:, None], norms


def loss_terms(w, phi_clean, phi_pert, base_clean):
    """(L1, L2) for one batch given raw features and the frozen model's unit outputs."""
    u0, _ = _forward(w, phi_clean)
    u1, _ = _forward(w, phi_pert)
    l1 = -np.mean(np.sum(u0 * u1, axis=1))
    l2 = -np.mean(np.sum(base_clean * u0, axis=1))
    return float(l1), float(l2)


def loss_gradient(w, phi_clean, phi_pert, base_clean, lam):
    """d(L1 + lam * L2)/dW.

    For u = v / ||v|| the Jacobian is (I - u u^T) / ||v||, so the gradient
    of -u.a with respect to v is -(a - (u.a) u) / ||v||. Both the clean and
    the perturbed branch of L1 contribute.
    """
    u0, n0 = _forward(w, phi_clean)
    u1, n1 = _forward(w, phi_pert)
    c01 = np.sum(u0 * u1, axis=1, keepdims=True)
    cb = np.sum(base_clean * u0, axis=1, keepdims=True)
    g0 = -(u1 - c01 * u0) / n0[:, None] - lam * (base_clean - cb * u0) / n0[:, None]
    g1 = -(u0 - c01 * u1) / n1[:, None]
    return (g0.T @ phi_clean + g1.T @ phi_pert) / phi_clean.shape[0]


def epoch_params(images, spec, cfg, epoch):
    """One k per image for ``epoch``, drawn uniformly from the perturbation domain."""
    out = []
    for image in images:
        key = f"{int(cfg.seed)}|{int(epoch)}|{image.image_id}".encode()
        rng = np.random.default_rng(np.frombuffer(hashlib.sha256(key).digest(), dtype=np.uint32))
        out.append(float(rng.uniform(spec.a, spec.b)))
    return out


def _batch_arrays(fprime, fbase, batch, spec, cfg, params):
    if not batch:
        raise ValueError("batch is empty")
    if fprime.dim != fbase.dim:
        raise DimensionMismatchError(f"f' has output dim {fprime.dim} but f has {fbase.dim}")
    phi0 = np.stack([fprime.features(x) for x in batch])
    phi1 = np.stack([fprime.features(apply(x, spec, k, cfg.seed)) for x, k in zip(batch, params)])
    base = fbase.embed_features(np.stack([fbase.features(x) for x in batch]))
    return phi0, phi1, base


def loss(fprime, fbase, batch, spec, cfg, epoch=0, params=None):
    """Loss breakdown for ``batch``; k values come from ``params`` or the epoch draw."""
    params = epoch_params(batch, spec, cfg, epoch) if params is None else params
    phi0, phi1, base = _batch_arrays(fprime, fbase, batch, spec, cfg, params)
    return LossBreakdown.from_terms(*loss_terms(fprime.W, phi0, phi1, base), cfg.lam)


def grad(fprime, fbase, batch, spec, cfg, epoch=0, params=None):
    params = epoch_params(batch, spec, cfg, epoch) if params is None else params
    phi0, phi1, base = _batch_arrays(fprime, fbase, batch, spec, cfg, params)
    return loss_gradient(fprime.W, phi0, phi1, base, cfg.lam)


class _Probe:
    """Cached raw features of the probe images and their perturbed versions."""

    def __init__(self, fbase, images, spec, cfg):
        plan = SamplingPlan(m=cfg.probe_m)
        self.groups = []
        for x in images:
            params = sampled_params(spec, plan)
            self.groups.append(np.stack([fbase.features(apply(x, spec, k, cfg.seed)) for k in params]))
        clean = np.stack([g[0] for g in self.groups]) if self.groups else np.zeros((0, fbase.W.shape[1]))
        self.clean = clean
        self.base = fbase.embed_features(clean) if len(clean) else clean

    def evaluate(self, w):
        if not self.groups:
            return float("nan"), float("nan")
        rdr = np.mean([r_divergence_radius(_forward(w, g)[0]) for g in self.groups])
        u0, _ = _forward(w, self.clean)
        cos = np.mean(np.sum(u0 * self.base, axis=1))
        return float(rdr), float(cos)


def finetune(fprime, fbase, dataset, spec, cfg, probe=None):
    """Plain mini-batch gradient descent on L1 + lambda * L2.

    Parameters
    ----------
    fprime : TrainableEmbedder
        Starting model; not modified.
    fbase : TrainableEmbedder
        Frozen reference model for the utility term.
    dataset : list of Image
    spec : PerturbationSpec
    cfg : EnhanceConfig
    probe : list of Image, optional
        Held-out images on which mean DivergenceRadius (m = cfg.probe_m,
        equally spaced, identity included) and mean cos(f, f') are tracked.

    Returns
    -------
    (TrainableEmbedder, list of EpochStats)
        History row 0 is the initial state. Losses in the history are
        evaluated on the whole dataset with the epoch-0 draw of k.
    """
    if not dataset:
        raise ValueError("dataset is empty")
    if fprime.dim != fbase.dim:
        raise DimensionMismatchError(f"f' has output dim {fprime.dim} but f has {fbase.dim}")
    model = fprime.copy(name="finetuned")
    w = model.W
    n = len(dataset)
    phi0 = np.stack([model.features(x) for x in dataset])
    base = fbase.embed_features(np.stack([fbase.features(x) for x in dataset]))
    probe_set = _Probe(fbase, probe or [], spec, cfg)

    def perturbed_features(epoch):
        params = epoch_params(dataset, spec, cfg, epoch if cfg.resample_k else 0)
        return np.stack([model.features(apply(x, spec, k, cfg.seed)) for x, k in zip(dataset, params)])

    # history losses use one fixed draw so they are comparable across epochs
    phi_eval = perturbed_features(0)
    phi1 = phi_eval
    history = [EpochStats(0, *_full_loss(w, phi0, phi_eval, base, cfg.lam), *probe_set.evaluate(w))]
    lr = cfg.learning_rate
    for epoch in range(1, cfg.epochs + 1):
        if cfg.resample_k:
            phi1 = perturbed_features(epoch)
        order = np.random.default_rng([int(cfg.seed), epoch]).permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            b0, b1, bb = phi0[idx], phi1[idx], base[idx]
            g = loss_gradient(w, b0, b1, bb, cfg.lam)
            if not cfg.backtrack:
                w = w - lr * g
            else:
                before = _total(w, b0, b1, bb, cfg.lam)
                while True:
                    trial = w - lr * g
                    if _total(trial, b0, b1, bb, cfg.lam) <= before:
                        w = trial
                        break
                    if lr <= LR_FLOOR:
                        break
                    lr = max(lr / 2, LR_FLOOR)
            if not np.all(np.isfinite(w)):
                raise NonFiniteError(f"weights became non-finite in epoch {epoch}")
        history.append(EpochStats(epoch, *_full_loss(w, phi0, phi_eval, base, cfg.lam), *probe_set.evaluate(w)))
    model.W = w
    return model, history


def _total(w, phi0, phi1, base, lam):
    l1, l2 = loss_terms(w, phi0, phi1, base)
    return l1 + lam * l2


def _full_loss(w, phi0, phi1, base, lam):
    l1, l2 = loss_terms(w, phi0, phi1, base)
    return l1, l2, l1 + lam * l2


# --- persistence -------------------------------------------------------------------


def save_checkpoint(path, model, cfg, epoch):
    payload = {
        "d_out": int(model.W.shape[0]),
        "d_raw": int(model.W.shape[1]),
        "W": [float(v) for v in model.W.ravel()],
        "config": cfg.as_dict(),
        "epoch": int(epoch),
        "grid": model.grid,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_checkpoint(path):
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    w = np.asarray(payload["W"], dtype=np.float64).reshape(payload["d_out"], payload["d_raw"])
    cfg = dict(payload["config"])
    cfg["lam"] = cfg.pop("lambda")
    return TrainableEmbedder(w, payload.get("grid", 4)), EnhanceConfig(**cfg), payload["epoch"]


HISTORY_FIELDS = ("epoch", "l1", "l2", "total", "probe_rdr", "probe_cos")


def write_history(path, history):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(HISTORY_FIELDS)
        for row in history:
            writer.writerow([row.epoch] + [repr(float(getattr(row, f))) for f in HISTORY_FIELDS[1:]])


__all__ = [
    "TrainableEmbedder",
    "EnhanceConfig",
    "LossBreakdown",
    "EpochStats",
    "loss",
    "grad",
    "finetune",
    "epoch_params",
    "loss_terms",
    "loss_gradient",
    "save_checkpoint",
    "load_checkpoint",
    "write_history",
]
