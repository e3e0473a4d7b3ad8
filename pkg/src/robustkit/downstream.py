"""Downstream performance under perturbation and its prediction from robustness.

Accuracy under perturbation (ACC_p) and RMSE under perturbation (RMSE_p) are
per-image averages over the sampled perturbation parameters. A one-variable
least-squares fit predicts them from a robustness value.
"""

import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import (
    DegenerateFitWarning,
    DimensionMismatchError,
    EmptyInputError,
    TooFewPairsError,
    ZeroVarianceError,
)


class PerformanceKind(str, Enum):
    ACCURACY = "accuracy"
    RMSE = "rmse"


@dataclass(frozen=True)
class PerformanceRecord:
    image_id: str
    perturbation_id: str
    value: float
    kind: PerformanceKind

    def __post_init__(self):
        object.__setattr__(self, "kind", PerformanceKind(self.kind))
        if self.kind is PerformanceKind.ACCURACY and not 0.0 <= self.value <= 1.0:
            raise ValueError(f"accuracy {self.value} outside [0, 1]")
        if self.kind is PerformanceKind.RMSE and not self.value >= 0.0:
            raise ValueError(f"rmse {self.value} is negative")


def acc_p(correct_flags):
    """Fraction of sampled parameters under which the prediction was correct."""
    flags = list(correct_flags)
    if not flags:
        raise EmptyInputError("acc_p needs at least one flag")
    return sum(bool(f) for f in flags) / len(flags)


def rmse(gt, pred):
    gt = np.asarray(gt, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if gt.shape != pred.shape:
        raise DimensionMismatchError(f"depth map shapes differ: {gt.shape} vs {pred.shape}")
    return float(np.sqrt(np.mean((gt - pred) ** 2)))


def rmse_p(gt, preds):
    """Mean over parameters of the per-map RMSE (not the RMSE of pooled errors)."""
    preds = list(preds)
    if not preds:
        raise EmptyInputError("rmse_p needs at least one predicted map")
    return float(np.mean([rmse(gt, p) for p in preds]))


# --- linear prediction ---------------------------------------------------------


@dataclass(frozen=True)
class LinearModel:
    slope: float
    intercept: float
    degenerate: bool = False

    def __call__(self, robustness):
        return predict(self, robustness)


def _split_pairs(pairs):
    arr = np.asarray(list(pairs), dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("pairs must be a sequence of (robustness, performance)")
    return arr[:, 0], arr[:, 1]


def fit_linear(pairs):
    """Ordinary least squares fit of performance against robustness.

    If every robustness value is identical the slope is undetermined; a flat
    model at the mean performance is returned with ``degenerate=True`` and a
    :class:`DegenerateFitWarning` is emitted.
    """
    x, y = _split_pairs(pairs)
    if x.size < 2:
        raise TooFewPairsError("fit_linear needs at least 2 pairs")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("pairs must be finite")
    xm, ym = x.mean(), y.mean()
    # test equality directly; the mean of equal values can round off them
    if np.all(x == x[0]):
        warnings.warn("all robustness values are equal; fitting a constant", DegenerateFitWarning, stacklevel=2)
        return LinearModel(0.0, float(ym), degenerate=True)
    slope = float(np.sum((x - xm) * (y - ym)) / np.sum((x - xm) ** 2))
    return LinearModel(slope, float(ym - slope * xm))


def predict(model, robustness):
    r = np.asarray(robustness, dtype=np.float64)
    out = model.slope * r + model.intercept
    return float(out) if out.ndim == 0 else out


def mse(model, pairs):
    x, y = _split_pairs(pairs)
    return float(np.mean((predict(model, x) - y) ** 2))


def pearson(xs, ys):
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DimensionMismatchError("pearson needs two 1-d series of equal length")
    if x.size < 2:
        raise TooFewPairsError("pearson needs at least 2 points")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise ZeroVarianceError("pearson is undefined for a constant series")
    dx, dy = x - x.mean(), y - y.mean()
    sx, sy = np.sqrt(np.sum(dx**2)), np.sqrt(np.sum(dy**2))
    return float(np.clip(np.sum(dx * dy) / (sx * sy), -1.0, 1.0))


def quartile_groups(pairs):
    """Rank pairs by robustness and return (mean robustness, mean performance) of 4 groups.

    With n = 4q + r the first r groups hold q + 1 pairs. The sort is stable.
    """
    x, y = _split_pairs(pairs)
    n = x.size
    if n < 4:
        raise TooFewPairsError(f"quartile_groups needs at least 4 pairs, got {n}")
    order = np.argsort(x, kind="stable")
    q, r = divmod(n, 4)
    sizes = [q + 1 if i < r else q for i in range(4)]
    groups = []
    start = 0
    for size in sizes:
        idx = order[start : start + size]
        groups.append((float(x[idx].mean()), float(y[idx].mean())))
        start += size
    return groups


def split_and_fit(pairs, seed=0):
    """Seeded shuffle, fit on the first half, evaluate on the second.

    Returns the prediction report as a dict.
    """
    pairs = np.asarray(list(pairs), dtype=np.float64)
    n = len(pairs)
    if n < 4:
        raise TooFewPairsError(f"need at least 4 pairs for a train/test split, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = n // 2
    train, test = pairs[perm[:n_train]], pairs[perm[n_train:]]
    model = fit_linear(train)
    return {
        "slope": model.slope,
        "intercept": model.intercept,
        "train_mse": mse(model, train),
        "test_mse": mse(model, test),
        "n_train": int(n_train),
        "n_test": int(n - n_train),
        "seed": int(seed),
        "degenerate": model.degenerate,
    }


# --- toy classifier --------------------------------------------------------------


class ToyClassifier:
    """Nearest-centroid classifier on unit embeddings (cosine similarity, ties to lowest index)."""

    def __init__(self, centroids, class_names):
        centroids = np.asarray(centroids, dtype=np.float64)
        norms = np.linalg.norm(centroids, axis=1, keepdims=True)
        if np.any(norms == 0):
            raise ValueError("centroids must be non-zero")
        self.centroids = centroids / norms
        self.class_names = list(class_names)

    @classmethod
    def fit(cls, embeddings, labels):
        e = np.asarray([getattr(v, "vector", v) for v in embeddings], dtype=np.float64)
        labels = list(labels)
        names = sorted(set(labels))
        lab = np.asarray(labels)
        centroids = [e[lab == name].mean(axis=0) for name in names]
        return cls(centroids, names)

    def predict(self, embedding):
        v = np.asarray(getattr(embedding, "vector", embedding), dtype=np.float64)
        # argmax returns the first maximum, which breaks ties toward the lowest index
        return self.class_names[int(np.argmax(self.centroids @ v))]
