"""Seeded synthetic images and embedding curves for tests and demos."""

import numpy as np
from scipy import ndimage

from .perturb import Image

CLASS_PALETTES = {
    "warm": np.array([0.75, 0.45, 0.25]),
    "cool": np.array([0.25, 0.45, 0.75]),
}


def synthetic_image(rng, size=32, label="warm", image_id="", contrast=1.0):
    """Smooth random scene: a tinted gradient, a few colored blobs and mild texture.

    ``contrast`` scales every deviation from the class palette color.
    """
    base = CLASS_PALETTES[label]
    yy, xx = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    angle = rng.uniform(0, 2 * np.pi)
    ramp = np.cos(angle) * xx + np.sin(angle) * yy
    dev = 0.15 * (ramp[..., None] - 0.5) * rng.uniform(0.5, 1.5, 3)
    for _ in range(int(rng.integers(2, 5))):
        cy, cx = rng.uniform(0, 1, 2)
        width = rng.uniform(0.08, 0.25)
        blob = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * width**2))
        dev = dev + blob[..., None] * rng.uniform(-0.35, 0.35, 3)
    texture = ndimage.gaussian_filter(rng.standard_normal((size, size)), 1.0)
    dev = dev + 0.05 * texture[..., None]
    return Image(np.clip(base + contrast * dev, 0.0, 1.0), image_id)


def synthetic_corpus(n, size=32, seed=0, prefix="img", contrast=1.0):
    """``n`` labeled images alternating between the two palette classes.

    Returns a list of ``(Image, label)`` pairs; image ids are ``{prefix}{i:04d}``.
    """
    rng = np.random.default_rng(seed)
    labels = list(CLASS_PALETTES)
    out = []
    for i in range(n):
        label = labels[i % len(labels)]
        out.append((synthetic_image(rng, size, label, f"{prefix}{i:04d}", contrast), label))
    return out


def gray_image(size=64, level=0.5, image_id="gray"):
    return Image(np.full((size, size, 3), level), image_id)


class SmoothCurve:
    """A smooth path k -> e(k) on the unit sphere over a parameter domain [a, b].

    e(k) = normalize(u0 + sum_j amp_j * sin(freq_j * t + phase_j) * u_j),
    with t = (k - a) / (b - a) and orthonormal u_j.
    """

    def __init__(self, a, b, dim=16, terms=3, spread=0.8, seed=0):
        rng = np.random.default_rng(seed)
        q, _ = np.linalg.qr(rng.standard_normal((dim, terms + 1)))
        self.a, self.b = float(a), float(b)
        self.basis = q.T
        self.amps = spread * rng.uniform(0.5, 1.0, terms)
        self.freqs = rng.uniform(0.5, 2.0, terms)
        self.phases = rng.uniform(-0.5, 0.5, terms)

    def __call__(self, ks):
        ks = np.atleast_1d(np.asarray(ks, dtype=np.float64))
        t = (ks - self.a) / (self.b - self.a) if self.b > self.a else np.zeros_like(ks)
        coef = self.amps * np.sin(np.outer(t, self.freqs) + self.phases)
        v = self.basis[0] + coef @ self.basis[1:]
        return v / np.linalg.norm(v, axis=1, keepdims=True)
