"""Robustness metrics over the embeddings of an image's perturbed versions.

Given unit-norm embeddings e_1..e_n of P(x, k) for the sampled parameters
k, three scores in [0, 1] are computed (larger means less robust):

* ``r_cosine``: (1 - smallest pairwise cosine) / 2
* ``r_euclidean``: largest pairwise distance / 2, equal to sqrt(r_cosine)
* ``r_divergence_radius``: radius of the minimum enclosing ball
"""

import hashlib
import struct
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import geometry
from .errors import (
    DimensionMismatchError,
    EmptyInputError,
    InvalidDomainError,
    NonFiniteError,
    NonUnitNormError,
    RobustkitError,
)
from .perturb import IDENTITY, apply

UNIT_NORM_TOL = 1e-6
# above this many points the exact solver is replaced by the iterative one
EXACT_MEB_MAX_POINTS = 64
CORESET_ITERATIONS = 20000


class Embedding:
    """Unit-norm embedding vector.

    Vectors within ``UNIT_NORM_TOL`` of unit length are rescaled to unit
    length; anything farther off is rejected.
    """

    __slots__ = ("vector",)

    def __init__(self, vector):
        v = np.array(vector, dtype=np.float64)
        if v.ndim != 1 or v.size == 0:
            raise DimensionMismatchError(f"embedding must be a non-empty 1-d vector, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise NonFiniteError("embedding has non-finite entries")
        norm = np.linalg.norm(v)
        if abs(norm - 1.0) > UNIT_NORM_TOL:
            raise NonUnitNormError(f"embedding norm {norm:.9g} is not 1 within {UNIT_NORM_TOL}")
        if abs(norm - 1.0) > 2**-50:
            v = v / norm
        v.setflags(write=False)
        self.vector = v

    @property
    def dim(self):
        return self.vector.shape[0]

    def __eq__(self, other):
        return isinstance(other, Embedding) and np.array_equal(self.vector, other.vector)

    def __repr__(self):
        return f"Embedding(dim={self.dim})"


class SamplingMode(str, Enum):
    EQUALLY_SPACED = "equal"
    RANDOM = "random"


@dataclass(frozen=True)
class SamplingPlan:
    mode: SamplingMode = SamplingMode.EQUALLY_SPACED
    m: int = 5
    seed: int = 0
    include_identity: bool = True

    def __post_init__(self):
        object.__setattr__(self, "mode", SamplingMode(self.mode))
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"m must be a positive integer, got {self.m!r}")

    def as_dict(self):
        return {"mode": self.mode.value, "m": int(self.m), "seed": int(self.seed), "include_identity": self.include_identity}


def _domain_seed(seed, a, b):
    key = struct.pack("<qdd", int(seed), float(a), float(b))
    return np.frombuffer(hashlib.sha256(key).digest(), dtype=np.uint32)


def sample_domain(a, b, plan):
    """Sample ``plan.m`` parameters from ``[a, b]``; the identity is never included."""
    if not (np.isfinite(a) and np.isfinite(b)) or a > b:
        raise InvalidDomainError(f"invalid domain [{a}, {b}]")
    if plan.mode is SamplingMode.EQUALLY_SPACED:
        if plan.m == 1:
            return [float(a)]
        return [float(v) for v in np.linspace(a, b, plan.m)]
    rng = np.random.default_rng(_domain_seed(plan.seed, a, b))
    return [float(v) for v in rng.uniform(a, b, plan.m)]


def sampled_params(spec, plan):
    params = sample_domain(spec.a, spec.b, plan)
    return [IDENTITY] + params if plan.include_identity else params


def as_matrix(embeddings):
    """Stack embeddings into an ``(n, d)`` array, validating unit norm and shared dim."""
    rows = list(embeddings)
    if not rows:
        raise EmptyInputError("need at least one embedding")
    vecs = [e.vector if isinstance(e, Embedding) else Embedding(e).vector for e in rows]
    dims = {v.shape[0] for v in vecs}
    if len(dims) != 1:
        raise DimensionMismatchError(f"embeddings have differing dims: {sorted(dims)}")
    return np.stack(vecs)


def r_cosine(embeddings):
    # duplicates would only add self-pairs, whose dot product may round below 1
    e = np.unique(as_matrix(embeddings), axis=0)
    n = e.shape[0]
    if n == 1:
        return 0.0
    gram = e @ e.T
    iu = np.triu_indices(n, 1)
    worst = float(np.clip(gram[iu].min(), -1.0, 1.0))
    return (1.0 - worst) / 2.0


def r_euclidean(embeddings):
    e = as_matrix(embeddings)
    n = e.shape[0]
    if n == 1:
        return 0.0
    best = 0.0
    for i in range(n - 1):
        d = np.linalg.norm(e[i + 1 :] - e[i], axis=1).max()
        best = max(best, float(d))
    return min(best / 2.0, 1.0)


def r_divergence_radius(embeddings):
    e = as_matrix(embeddings)
    if e.shape[0] > EXACT_MEB_MAX_POINTS:
        ball = geometry.meb_coreset(e, CORESET_ITERATIONS)
    else:
        ball = geometry.meb_exact(e)
    # points on the unit sphere always fit in the unit ball about the origin
    return min(ball.radius, 1.0)


def all_metrics(embeddings):
    e = as_matrix(embeddings)
    return r_cosine(e), r_euclidean(e), r_divergence_radius(e)


@dataclass
class RobustnessRecord:
    image_id: str
    perturbation_id: str
    sampled_params: list
    r_cs: float
    r_ed: float
    r_dr: float

    def as_dict(self):
        return {
            "image_id": self.image_id,
            "perturbation": self.perturbation_id,
            "params": list(self.sampled_params),
            "r_cs": self.r_cs,
            "r_ed": self.r_ed,
            "r_dr": self.r_dr,
        }


class MeasureError(RobustkitError):
    """A perturbation or embedding failure, tagged with the offending image."""

    def __init__(self, image_id, cause):
        self.image_id = image_id
        self.cause = cause
        super().__init__(f"image {image_id!r}: {type(cause).__name__}: {cause}")


def embed_versions(image, spec, params, embedder, seed=0):
    """Embeddings of P(image, k) for each k in ``params``, as an ``(n, d)`` array."""
    lookup = getattr(embedder, "embed_perturbed", None)
    rows = []
    try:
        for k in params:
            if lookup is not None:
                emb = lookup(image, spec, k, seed)
            else:
                emb = embedder.embed(apply(image, spec, k, seed))
            rows.append(emb)
    except RobustkitError as exc:
        raise MeasureError(image.image_id, exc) from exc
    return as_matrix(rows)


def measure(image, spec, plan, embedder, seed=None):
    """Compute all three metrics for one image under one perturbation.

    The perturbation seed defaults to ``plan.seed``.
    """
    seed = plan.seed if seed is None else seed
    params = sampled_params(spec, plan)
    e = embed_versions(image, spec, params, embedder, seed)
    r_cs, r_ed, r_dr = all_metrics(e)
    return RobustnessRecord(image.image_id, spec.id, params, r_cs, r_ed, r_dr)


# --- property harness ----------------------------------------------------------


def regular_simplex(n, dim, rotation_seed=None):
    """``n`` unit vectors summing to zero with equal pairwise angles, in ``dim`` dims."""
    if n < 2 or n - 1 > dim:
        raise ValueError(f"a regular {n}-simplex needs 2 <= n <= dim + 1 (dim={dim})")
    centered = np.eye(n) - 1.0 / n
    u, s, _ = np.linalg.svd(centered)
    coords = u[:, : n - 1] * s[: n - 1]
    coords /= np.linalg.norm(coords, axis=1, keepdims=True)
    pts = np.zeros((n, dim))
    pts[:, : n - 1] = coords
    if rotation_seed is not None:
        pts = pts @ geometry.random_rotation(dim, rotation_seed).T
    return pts


def zero_sum_configurations(dim, count=50, seed=0):
    """Unit-vector sets with zero vector sum and no antipodal pairs.

    Alternates rotated regular simplices and unions of randomly placed
    120-degree triads.
    """
    rng = np.random.default_rng(seed)
    configs = []
    for i in range(count):
        if i % 2 == 0:
            n = int(rng.integers(3, min(dim + 1, 9) + 1)) if dim >= 2 else 2
            configs.append(regular_simplex(n, dim, rotation_seed=int(rng.integers(2**31))))
        else:
            triads = int(rng.integers(1, 4))
            parts = [regular_simplex(3, dim, rotation_seed=int(rng.integers(2**31))) for _ in range(triads)]
            configs.append(np.vstack(parts))
    return configs


@dataclass
class PropertyResult:
    name: str
    passed: bool
    slack: float
    detail: str = ""


@dataclass
class PropertyReport:
    results: list = field(default_factory=list)

    @property
    def passed(self):
        return all(r.passed for r in self.results)

    def __getitem__(self, name):
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def table(self):
        width = max(len(r.name) for r in self.results)
        lines = [f"{'property'.ljust(width)}  result  slack"]
        for r in self.results:
            status = "PASS" if r.passed else "FAIL"
            lines.append(f"{r.name.ljust(width)}  {status:6}  {r.slack + 0.0:+.3e}  {r.detail}")
        return "\n".join(lines)


def property_suite(embedder, images, specs, plan=None, n_rotations=20, n_zero_sum=50, seed=0):
    """Check the five metric properties (plus the sqrt identity) on real measurements.

    Failures are reported in the returned :class:`PropertyReport`, never raised.
    """
    plan = plan or SamplingPlan()
    metric_fns = (r_cosine, r_euclidean, r_divergence_radius)
    sets = []
    for image in images:
        for spec in specs:
            params = sampled_params(spec, plan)
            sets.append(embed_versions(image, spec, params, embedder, plan.seed))
    report = PropertyReport()

    values = np.array([all_metrics(e) for e in sets])
    slack = float(np.minimum(values, 1.0 - values).min())
    report.results.append(PropertyResult("bounded_domain", slack >= 0.0, slack, f"{values.size} values"))

    mono_slack = np.inf
    for e in sets:
        prev = None
        for size in range(1, e.shape[0] + 1):
            cur = np.array([f(e[:size]) for f in metric_fns])
            if prev is not None:
                mono_slack = min(mono_slack, float((cur - prev).min()) + 1e-12)
            prev = cur
    report.results.append(
        PropertyResult("monotonicity", mono_slack >= 0.0, float(mono_slack), "nested prefixes of each sampled set")
    )

    best_max = 0.0
    for image in images:
        anchor = embed_versions(image, specs[0], [IDENTITY], embedder, plan.seed)[0]
        same = np.tile(anchor, (plan.m + 1, 1))
        best_max = max(best_max, max(f(same) for f in metric_fns))
    report.results.append(
        PropertyResult("best_robustness", best_max == 0.0, -best_max, "identical embeddings give exactly 0")
    )

    configs = zero_sum_configurations(embedder.dim, n_zero_sum, seed)
    dr_err = max(abs(r_divergence_radius(c) - 1.0) for c in configs)
    report.results.append(
        PropertyResult("worst_robustness", dr_err <= 1e-9, 1e-9 - dr_err, f"r_dr on {len(configs)} zero-sum sets")
    )
    cs_max = max(r_cosine(c) for c in configs)
    ed_max = max(r_euclidean(c) for c in configs)
    report.results.append(
        PropertyResult(
            "cosine_fails_worst_robustness",
            cs_max < 1.0 and ed_max < 1.0,
            1.0 - max(cs_max, ed_max),
            f"max r_cs={cs_max:.6f}, max r_ed={ed_max:.6f} (expected < 1)",
        )
    )

    rot_err = 0.0
    for i in range(n_rotations):
        rot = geometry.random_rotation(embedder.dim, seed + 1000 + i)
        for e in sets:
            turned = e @ rot.T
            for f in metric_fns:
                rot_err = max(rot_err, abs(f(turned) - f(e)))
    report.results.append(
        PropertyResult("rotation_invariance", rot_err <= 1e-9, 1e-9 - rot_err, f"{n_rotations} random rotations")
    )

    sq_err = max(abs(r_euclidean(e) - np.sqrt(r_cosine(e))) for e in sets)
    report.results.append(
        PropertyResult("euclidean_is_sqrt_cosine", sq_err <= 1e-9, 1e-9 - sq_err, "on measured sets")
    )
    return report
