"""Minimum enclosing balls for small sets of high-dimensional points.

Three solvers are provided:

* :func:`meb_exact` projects onto the affine span of the points and runs
  Welzl's move-to-front algorithm there, which bounds the recursion by the
  number of points rather than the ambient dimension. Spans wider than
  ``WELZL_MAX_RANK`` switch to an exact pivoting walk, since Welzl's cost
  grows exponentially with the span.
* :func:`meb_bruteforce` enumerates support sets. It is exponential and
  exists as an independent oracle for tests.
* :func:`meb_coreset` is an iterative approximation for large point sets.
"""

from dataclasses import dataclass
from itertools import combinations

import numpy as np
import scipy.linalg

from .errors import (
    DimensionMismatchError,
    EmptyInputError,
    NonFiniteError,
    TooManyPointsError,
)

__all__ = [
    "Ball",
    "ToleranceConfig",
    "meb_exact",
    "meb_bruteforce",
    "meb_coreset",
    "random_rotation",
]

BRUTEFORCE_MAX_POINTS = 10
# Welzl's recursion is exponential in the span dimension; above this rank
# the pivoting solver takes over.
WELZL_MAX_RANK = 8


@dataclass(frozen=True)
class Ball:
    center: np.ndarray
    radius: float

    def contains(self, point, rel_tol=1e-12, abs_tol=1e-9):
        dist = np.linalg.norm(np.asarray(point, dtype=float) - self.center)
        return dist <= self.radius * (1 + rel_tol) + abs_tol


@dataclass(frozen=True)
class ToleranceConfig:
    """Numerical tolerances for :func:`meb_exact`.

    ``rel`` is the relative slack used for boundary membership inside the
    Welzl recursion; ``span`` scales the largest column norm to decide
    which directions of the affine span are numerically zero.
    """

    rel: float = 1e-12
    span: float = 1e-10


def as_points(points):
    """Validate ``points`` and return them as an ``(n, d)`` float array."""
    if isinstance(points, np.ndarray):
        arr = points
    else:
        points = list(points)
        if not points:
            raise EmptyInputError("point set is empty")
        dims = {np.shape(p) for p in points}
        if len(dims) != 1:
            raise DimensionMismatchError(f"points have differing shapes: {sorted(dims)}")
        arr = np.asarray(points)
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise DimensionMismatchError(f"expected a 2-d point array, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise EmptyInputError("point set is empty")
    if arr.shape[1] == 0:
        raise DimensionMismatchError("points must have dim >= 1")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError("point coordinates must be finite")
    return arr


def _span_basis(diffs, span_tol):
    # diffs: (n-1, d) offsets from the first point
    if diffs.shape[0] == 0:
        return np.zeros((diffs.shape[1], 0))
    col_norms = np.linalg.norm(diffs, axis=1)
    max_norm = col_norms.max()
    if max_norm == 0.0:
        return np.zeros((diffs.shape[1], 0))
    q, r, _ = scipy.linalg.qr(diffs.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag > span_tol * max_norm))
    return q[:, :rank]


def _circumball(pts):
    """Smallest ball with all of ``pts`` on its boundary (within their affine hull)."""
    s0 = pts[0]
    if len(pts) == 1:
        return s0.copy(), 0.0
    a = pts[1:] - s0
    gram = a @ a.T
    lam = np.linalg.lstsq(gram, 0.5 * np.diag(gram), rcond=None)[0]
    center = s0 + lam @ a
    r2 = float(np.max(np.sum((pts - center) ** 2, axis=1)))
    return center, r2


def _welzl(coords, rel_tol):
    n, dim = coords.shape
    order = list(range(n))
    scale = float(np.max(np.sum(coords**2, axis=1)))
    abs_tol = (rel_tol**2) * scale

    def outside(ball, p):
        center, r2 = ball
        return float(np.sum((p - center) ** 2)) > r2 * (1 + 2 * rel_tol) + abs_tol

    def mtf(end, support):
        ball = _circumball(coords[support]) if support else None
        if len(support) == dim + 1:
            return ball
        for i in range(end):
            idx = order[i]
            if ball is None or outside(ball, coords[idx]):
                ball = mtf(i, support + [idx])
                del order[i]
                order.insert(0, idx)
        return ball

    return mtf(n, [])


def _affine_coefficients(support_pts, x):
    s0 = support_pts[0]
    if len(support_pts) == 1:
        return np.ones(1)
    a = support_pts[1:] - s0
    mu = np.linalg.lstsq(a.T, x - s0, rcond=None)[0]
    return np.concatenate([[1.0 - mu.sum()], mu])


def _pivot_walk(coords, rel_tol, max_steps=None):
    """Exact MEB by walking the center toward support circumcenters.

    The support set T is kept affinely independent with every member at the
    current maximal distance. Each step moves the center toward the
    circumcenter of T until another point becomes equally far (that point
    joins T) or the circumcenter is reached; in the latter case a member
    with negative affine coefficient is dropped, or, if there is none, the
    center lies in conv(T) and is optimal.
    """
    n = coords.shape[0]
    scale = float(np.max(np.sum(coords**2, axis=1))) or 1.0
    max_steps = max_steps or 50 * n + 1000
    center = coords[0].copy()
    far = int(np.argmax(np.sum((coords - center) ** 2, axis=1)))
    support = [far]
    for _ in range(max_steps):
        target, _ = _circumball(coords[support])
        step = target - center
        s = coords[support[0]]
        others = np.setdiff1d(np.arange(n), support)
        best_t, stopper = 1.0, None
        if others.size:
            p = coords[others]
            denom = 2.0 * (p - s) @ step
            numer = np.sum((p - s) * (p + s - 2.0 * center), axis=1)
            ok = denom < -rel_tol * scale
            if np.any(ok):
                ts = np.where(ok, numer / np.where(ok, denom, 1.0), np.inf)
                ts = np.maximum(ts, 0.0)
                j = int(np.argmin(ts))
                if ts[j] < best_t:
                    best_t, stopper = float(ts[j]), int(others[j])
        center = center + best_t * step
        if stopper is not None:
            support.append(stopper)
            continue
        coeffs = _affine_coefficients(coords[support], center)
        worst = int(np.argmin(coeffs))
        if coeffs[worst] >= -1e-12 or len(support) == 1:
            return center
        del support[worst]
    raise RuntimeError("pivoting MEB solver did not converge")


def meb_exact(points, tol=None):
    """Exact minimum enclosing ball of a small point set.

    Parameters
    ----------
    points : array_like, shape (n, d)
        Points to enclose. Intended for n up to about 64; d may be large.
    tol : ToleranceConfig, optional

    Returns
    -------
    Ball
    """
    tol = tol or ToleranceConfig()
    pts = as_points(points)
    origin = pts[0]
    basis = _span_basis(pts[1:] - origin, tol.span)
    if basis.shape[1] == 0:
        return Ball(center=origin.copy(), radius=0.0)
    coords = (pts - origin) @ basis
    if coords.shape[1] <= WELZL_MAX_RANK:
        center_low, _ = _welzl(coords, tol.rel)
    else:
        center_low = _pivot_walk(coords, tol.rel)
    center = origin + basis @ center_low
    radius = float(np.max(np.linalg.norm(pts - center, axis=1)))
    return Ball(center=center, radius=radius)


def _affine_rank(pts, rel_tol=1e-10):
    diffs = pts[1:] - pts[0]
    if diffs.shape[0] == 0:
        return 0
    scale = np.abs(diffs).max()
    if scale == 0.0:
        return 0
    s = np.linalg.svd(diffs, compute_uv=False)
    return int(np.sum(s > rel_tol * s[0]))


def meb_bruteforce(points):
    """Minimum enclosing ball by enumerating every candidate support set.

    Each subset of size 1..r+1 (r the affine rank) that is affinely
    independent defines a circumball; the smallest one enclosing all
    points wins. Ties within 1e-12 go to the lexicographically smallest
    index tuple. Only meant as a test oracle: limited to 10 points.
    """
    pts = as_points(points)
    n = pts.shape[0]
    if n > BRUTEFORCE_MAX_POINTS:
        raise TooManyPointsError(f"meb_bruteforce accepts at most {BRUTEFORCE_MAX_POINTS} points, got {n}")
    rank = _affine_rank(pts)
    spread = float(np.max(np.linalg.norm(pts - pts.mean(axis=0), axis=1)))
    enclose_tol = 1e-10 * max(spread, 1e-300)

    best = None
    for size in range(1, min(n, rank + 1) + 1):
        for combo in combinations(range(n), size):
            sub = pts[list(combo)]
            if size > 1 and _affine_rank(sub) < size - 1:
                continue
            s0 = sub[0]
            if size == 1:
                center = s0
            else:
                a = sub[1:] - s0
                gram = a @ a.T
                center = s0 + np.linalg.solve(gram, 0.5 * np.diag(gram)) @ a
            rad = float(np.max(np.linalg.norm(sub - center, axis=1)))
            dists = np.linalg.norm(pts - center, axis=1)
            if np.any(dists > rad + enclose_tol):
                continue
            rad = float(dists.max())
            if best is None or rad < best[0] - 1e-12 or (abs(rad - best[0]) <= 1e-12 and combo < best[2]):
                best = (rad, center, combo)
    return Ball(center=np.array(best[1], dtype=float), radius=best[0])


def meb_coreset(points, iterations=1000):
    """Approximate minimum enclosing ball for larger point sets.

    Frank-Wolfe on the dual problem with exact line search and away steps.
    Each toward step moves the center toward the current farthest point,
    as in the Badoiu-Clarkson scheme, but by the optimal fraction instead
    of 1/(i+1); away steps drop weight from inner support points, which
    gives linear convergence on small inputs.
    """
    pts = as_points(points)
    if iterations < 1:
        raise ValueError("iterations must be positive")
    n = pts.shape[0]
    u = np.zeros(n)
    u[0] = 1.0
    center = pts[0].copy()
    for _ in range(iterations):
        d2 = np.sum((pts - center) ** 2, axis=1)
        j = int(np.argmax(d2))
        if d2[j] == 0.0:
            break
        r2 = float(u @ d2)
        if r2 <= 0.0:
            lam = 0.5
            u *= 1 - lam
            u[j] += lam
        else:
            delta_plus = d2[j] / r2 - 1.0
            active = np.flatnonzero(u > 0)
            k = int(active[np.argmin(d2[active])])
            delta_minus = 1.0 - d2[k] / r2
            if max(delta_plus, delta_minus) <= 1e-15:
                break
            if delta_plus >= delta_minus or u[k] >= 1.0:
                lam = delta_plus / (2 * (1 + delta_plus))
                u *= 1 - lam
                u[j] += lam
            else:
                lam = min(delta_minus / (2 * (1 - delta_minus)), u[k] / (1 - u[k]))
                u *= 1 + lam
                u[k] -= lam
                u[k] = max(u[k], 0.0)
        u /= u.sum()
        center = u @ pts
    radius = float(np.max(np.linalg.norm(pts - center, axis=1)))
    return Ball(center=center, radius=radius)


def random_rotation(dim, seed=0):
    """Seeded proper rotation matrix (orthogonal, det +1) of size ``dim``."""
    if int(dim) != dim or dim < 1:
        raise ValueError(f"dim must be a positive integer, got {dim!r}")
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, -1] = -q[:, -1]
    return q
