"""Embedders: the deterministic toy feature map and a store of precomputed vectors.

Real foundation models are not run here. Embeddings produced elsewhere
(CLIP, DINO v2, ...) enter through :class:`EmbeddingStore`, a JSON Lines
file with one record per (image, perturbation, parameter).
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatchError,
    ImageTooSmallError,
    MissingKeyError,
    NonUnitNormError,
    ParseError,
)
from .metrics import UNIT_NORM_TOL, Embedding

ZERO_FEATURE_EPS = 1e-8


def param_key(param):
    """Canonical store key for a sampled parameter; ``None`` stands for the identity."""
    if param is None:
        return None
    return repr(float(param))


def toy_features(image, grid=4):
    """Raw (unnormalized) toy features: grid-cell channel means, then global channel stds."""
    px = image.pixels
    h, w = px.shape[:2]
    if min(h, w) < grid:
        raise ImageTooSmallError(f"toy embedder with grid={grid} needs at least {grid}px per side")
    row_edges = np.linspace(0, h, grid + 1).astype(int)
    col_edges = np.linspace(0, w, grid + 1).astype(int)
    means = np.empty((grid, grid, 3))
    for i in range(grid):
        for j in range(grid):
            cell = px[row_edges[i] : row_edges[i + 1], col_edges[j] : col_edges[j + 1]]
            means[i, j] = cell.mean(axis=(0, 1))
    stds = px.std(axis=(0, 1))
    return np.concatenate([means.ravel(), stds])


def normalize_features(raw):
    raw = np.array(raw, dtype=np.float64)
    norm = np.linalg.norm(raw)
    if norm == 0.0:
        raw[0] += ZERO_FEATURE_EPS
        norm = np.linalg.norm(raw)
    return raw / norm


class ToyEmbedder:
    """Desk-scale stand-in for an image foundation model.

    Features are per-cell channel means over a ``grid x grid`` partition
    followed by the three global channel standard deviations, L2-normalized.
    """

    def __init__(self, grid=4):
        if grid < 1:
            raise ValueError("grid must be positive")
        self.grid = int(grid)
        self.dim = 3 * self.grid**2 + 3
        self.id = f"toy-grid{self.grid}"

    def features(self, image):
        return toy_features(image, self.grid)

    def embed(self, image):
        return Embedding(normalize_features(self.features(image)))

    def __repr__(self):
        return f"ToyEmbedder(grid={self.grid})"


@dataclass(frozen=True)
class EmbeddingStore:
    path: str
    index: dict
    dim: int

    def __len__(self):
        return len(self.index)

    def get(self, image_id, perturbation_id, param):
        key = (image_id, perturbation_id, param_key(param))
        try:
            return self.index[key]
        except KeyError:
            shown = "⊥" if param is None else param_key(param)
            raise MissingKeyError(
                f"no embedding for image={image_id!r} perturbation={perturbation_id!r} param={shown}"
            ) from None


def store_load(path):
    """Parse an embedding JSONL file into an :class:`EmbeddingStore`."""
    path = Path(path)
    index = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", lineno) from None
            if not isinstance(rec, dict):
                raise ParseError("expected a JSON object", lineno)
            missing = {"id", "perturbation", "param", "vector"} - rec.keys()
            if missing:
                raise ParseError(f"missing fields {sorted(missing)}", lineno)
            param = rec["param"]
            if param is not None and (isinstance(param, bool) or not isinstance(param, (int, float))):
                raise ParseError("param must be a number or null", lineno)
            vec = rec["vector"]
            if not isinstance(vec, list) or not vec or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in vec
            ):
                raise ParseError("vector must be a non-empty list of numbers", lineno)
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise DimensionMismatchError(f"{path}:{lineno}: vector length {len(vec)} != {dim}")
            try:
                emb = Embedding(np.asarray(vec, dtype=np.float64))
            except NonUnitNormError as exc:
                raise NonUnitNormError(f"{path}:{lineno}: {exc}") from None
            index[(str(rec["id"]), str(rec["perturbation"]), param_key(param))] = emb
    if dim is None:
        raise ParseError(f"{path}: no embeddings found")
    return EmbeddingStore(str(path), index, dim)


def store_get(store, image_id, perturbation_id, param):
    return store.get(image_id, perturbation_id, param)


def store_write(path, entries):
    """Write ``(image_id, perturbation_id, param, vector)`` tuples as embedding JSONL.

    Floats are written with ``repr``, which round-trips exactly.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for image_id, pid, param, vector in entries:
            vec = vector.vector if isinstance(vector, Embedding) else np.asarray(vector, dtype=np.float64)
            rec = {
                "id": image_id,
                "perturbation": pid,
                "param": None if param is None else float(param),
                "vector": [float(v) for v in vec],
            }
            fh.write(json.dumps(rec) + "\n")


class StoreEmbedder:
    """Embedder backed by an :class:`EmbeddingStore`; looks vectors up by key."""

    def __init__(self, store):
        self.store = store
        self.dim = store.dim
        self.id = f"store:{store.path}"

    def embed_perturbed(self, image, spec, k, seed=0):
        return self.store.get(image.image_id, spec.id, k)

    def embed(self, image):
        raise TypeError("StoreEmbedder only serves precomputed embeddings; use embed_perturbed")


__all__ = [
    "ToyEmbedder",
    "StoreEmbedder",
    "EmbeddingStore",
    "store_load",
    "store_get",
    "store_write",
    "param_key",
    "toy_features",
    "normalize_features",
    "UNIT_NORM_TOL",
]
