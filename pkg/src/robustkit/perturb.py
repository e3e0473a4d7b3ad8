"""Parameterized image perturbations P(x, k).

Every function takes an RGB image with values in [0, 1] and a scalar key
parameter ``k`` drawn from the perturbation's domain ``[a, b]``. Passing
``IDENTITY`` (``None``) as ``k`` returns the input unchanged.

The recipes follow the common-corruption benchmark conventions. Stochastic
perturbations draw their randomness from a generator keyed on
``(seed, image_id, perturbation id, k)``, so results do not depend on call
order or thread scheduling.
"""

import hashlib
import io
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image as PILImage
from scipy import ndimage
from skimage import color

from .errors import (
    CodecFailureError,
    ImageTooSmallError,
    InvalidDomainError,
    NonFiniteError,
    ParamOutOfDomainError,
)

IDENTITY = None

PERTURBATIONS = (
    "jpeg",
    "brightness",
    "contrast",
    "defocus",
    "elastic",
    "fog",
    "frost",
    "gaussian_noise",
    "glass",
)

_DOMAINS = {
    "jpeg": (30.0, 70.0),
    "brightness": (0.1, 0.5),
    "contrast": (0.3, 0.7),
    "defocus": (1.0, 5.0),
    "elastic": (0.01, 0.05),
    "fog": (0.5, 2.5),
    "frost": (0.2, 0.6),
    "gaussian_noise": (0.02, 0.10),
    "glass": (0.2, 1.0),
}

_FIXED = {
    "jpeg": {"chroma_subsampling": 2},
    "brightness": {},
    "contrast": {},
    "defocus": {"alias_sigma": 0.5},
    "elastic": {"smooth_sigma": 8.0},
    "fog": {"wibble_decay": 2.0, "blend": 0.75},
    "frost": {"threshold": 0.45, "streak_long": 3.0, "streak_short": 0.5, "gamma": 0.5},
    "gaussian_noise": {},
    "glass": {"iterations": 2, "max_delta": 1},
}

_STOCHASTIC = {"elastic", "fog", "frost", "gaussian_noise", "glass"}
_NEEDS_16PX = {"defocus", "elastic", "glass"}
MIN_KERNEL_SIDE = 16


@dataclass(frozen=True, eq=False)
class Image:
    """RGB image, float64 pixels in [0, 1], shape (height, width, 3)."""

    pixels: np.ndarray
    image_id: str = ""

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) pixels, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        if not np.all(np.isfinite(px)):
            raise NonFiniteError("pixel values must be finite")
        if px.min() < 0.0 or px.max() > 1.0:
            raise ValueError("pixel values must lie in [0, 1]")
        object.__setattr__(self, "pixels", px)

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]

    @classmethod
    def from_uint8(cls, arr, image_id=""):
        return cls(np.asarray(arr, dtype=np.float64) / 255.0, image_id)

    def to_uint8(self):
        return np.clip(np.rint(self.pixels * 255.0), 0, 255).astype(np.uint8)

    def tobytes(self):
        return self.pixels.tobytes()


@dataclass(frozen=True)
class PerturbationSpec:
    id: str
    a: float
    b: float
    fixed_params: dict = field(default_factory=dict)
    stochastic: bool = False

    def __post_init__(self):
        if self.id not in PERTURBATIONS:
            raise ValueError(f"unknown perturbation {self.id!r}; expected one of {PERTURBATIONS}")
        if not (np.isfinite(self.a) and np.isfinite(self.b)) or self.a > self.b:
            raise InvalidDomainError(f"invalid domain [{self.a}, {self.b}] for {self.id}")

    def with_domain(self, a, b):
        return replace(self, a=float(a), b=float(b))

    def contains(self, k):
        if k is IDENTITY:
            return True
        slack = 1e-9 * max(1.0, abs(self.a), abs(self.b))
        return self.a - slack <= k <= self.b + slack


def default_spec(pid):
    """Spec with the standard domain and frozen side parameters for ``pid``."""
    if pid not in _DOMAINS:
        raise ValueError(f"unknown perturbation {pid!r}; expected one of {PERTURBATIONS}")
    a, b = _DOMAINS[pid]
    return PerturbationSpec(pid, a, b, dict(_FIXED[pid]), pid in _STOCHASTIC)


def all_specs():
    return [default_spec(pid) for pid in PERTURBATIONS]


def max_distortion(spec):
    """Domain endpoint giving the strongest distortion (lowest quality for JPEG)."""
    return spec.a if spec.id == "jpeg" else spec.b


def perturbation_rng(seed, image_id, pid, k):
    key = f"{int(seed)}|{image_id}|{pid}|{float(k)!r}".encode()
    digest = hashlib.sha256(key).digest()
    return np.random.default_rng(np.frombuffer(digest, dtype=np.uint32))


# --- individual recipes -----------------------------------------------------


def jpeg(x, k, subsampling=2):
    quality = int(np.floor(k + 0.5))
    buf = io.BytesIO()
    try:
        PILImage.fromarray(np.clip(np.rint(x * 255.0), 0, 255).astype(np.uint8), "RGB").save(
            buf, format="JPEG", quality=quality, subsampling=subsampling
        )
        buf.seek(0)
        decoded = np.asarray(PILImage.open(buf).convert("RGB"), dtype=np.float64)
    except (OSError, ValueError) as exc:
        raise CodecFailureError(f"JPEG round trip failed at quality {quality}: {exc}") from exc
    return decoded / 255.0


def brightness(x, k):
    hsv = color.rgb2hsv(x)
    hsv[..., 2] = np.clip(hsv[..., 2] + k, 0.0, 1.0)
    return color.hsv2rgb(hsv)


def contrast(x, k):
    means = x.mean(axis=(0, 1), keepdims=True)
    return means + k * (x - means)


def disk_kernel(radius, alias_sigma=0.5):
    half = int(np.ceil(radius + 3 * alias_sigma))
    ax = np.arange(-half, half + 1)
    yy, xx = np.meshgrid(ax, ax, indexing="ij")
    kernel = (xx**2 + yy**2 <= radius**2).astype(np.float64)
    kernel /= kernel.sum()
    if alias_sigma > 0:
        kernel = ndimage.gaussian_filter(kernel, alias_sigma, mode="constant")
        kernel /= kernel.sum()
    return kernel


def defocus(x, k, alias_sigma=0.5):
    kernel = disk_kernel(k, alias_sigma)
    return np.stack([ndimage.convolve(x[..., c], kernel, mode="reflect") for c in range(3)], axis=-1)


def elastic(x, k, rng, smooth_sigma=8.0):
    h, w = x.shape[:2]
    amplitude = k * min(h, w)
    fields = []
    for _ in range(2):
        f = ndimage.gaussian_filter(rng.standard_normal((h, w)), smooth_sigma, mode="reflect")
        peak = np.abs(f).max()
        fields.append(f * (amplitude / peak) if peak > 0 else f)
    dy, dx = fields
    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    coords = [yy + dy, xx + dx]
    return np.stack(
        [ndimage.map_coordinates(x[..., c], coords, order=1, mode="reflect") for c in range(3)],
        axis=-1,
    )


def plasma_fractal(mapsize, rng, wibble_decay=2.0):
    """Diamond-square height map on a ``mapsize`` square grid, scaled to [0, 1].

    ``mapsize`` must be a power of two.
    """
    if mapsize & (mapsize - 1):
        raise ValueError("mapsize must be a power of two")
    grid = np.zeros((mapsize, mapsize))
    step = mapsize
    wibble = 100.0

    def wibbled_mean(arr):
        return arr / 4 + wibble * rng.uniform(-wibble, wibble, arr.shape)

    while step >= 2:
        half = step // 2
        # squares: centers from the four corners
        corners = grid[0:mapsize:step, 0:mapsize:step]
        acc = corners + np.roll(corners, -1, axis=0)
        acc = acc + np.roll(acc, -1, axis=1)
        grid[half:mapsize:step, half:mapsize:step] = wibbled_mean(acc)
        # diamonds: edge midpoints from adjacent corners and centers
        centers = grid[half:mapsize:step, half:mapsize:step]
        corners = grid[0:mapsize:step, 0:mapsize:step]
        ldr = centers + np.roll(centers, 1, axis=1)
        ldr_sum = ldr + corners + np.roll(corners, -1, axis=0)
        grid[half:mapsize:step, 0:mapsize:step] = wibbled_mean(ldr_sum)
        tdr = centers + np.roll(centers, 1, axis=0)
        tdr_sum = tdr + corners + np.roll(corners, -1, axis=1)
        grid[0:mapsize:step, half:mapsize:step] = wibbled_mean(tdr_sum)
        step = half
        wibble /= wibble_decay
    grid -= grid.min()
    top = grid.max()
    return grid / top if top > 0 else grid


def fog(x, k, rng, wibble_decay=2.0, blend=0.75):
    h, w = x.shape[:2]
    mapsize = 1 << max(1, int(np.ceil(np.log2(max(h, w)))))
    t = k * plasma_fractal(mapsize, rng, wibble_decay)[:h, :w, None]
    peak = color.rgb2gray(x).max()
    return (x + t * peak) / (1.0 + blend * k)


def frost_texture(h, w, rng, threshold=0.45, streak_long=3.0, streak_short=0.5, gamma=0.5):
    """Procedural ice texture in [0, 1]: two crossed streaks of value noise, thresholded."""
    across = ndimage.gaussian_filter(rng.random((h, w)), (streak_short, streak_long), mode="wrap")
    down = ndimage.gaussian_filter(rng.random((h, w)), (streak_long, streak_short), mode="wrap")
    v = np.maximum(across, down)
    span = v.max() - v.min()
    v = (v - v.min()) / span if span > 0 else np.zeros_like(v)
    return np.clip((v - threshold) / (1.0 - threshold), 0.0, 1.0) ** gamma


def frost(x, k, rng, **texture_params):
    tex = frost_texture(x.shape[0], x.shape[1], rng, **texture_params)
    return (1.0 - k) * x + k * tex[..., None]


def gaussian_noise(x, k, rng):
    return x + rng.normal(0.0, k, size=x.shape)


def glass(x, k, rng, iterations=2, max_delta=1):
    h, w = x.shape[:2]
    blurred = ndimage.gaussian_filter(x, sigma=(k, k, 0), mode="reflect")
    offsets = rng.integers(-max_delta, max_delta + 1, size=(iterations, h, w, 2))
    perm = list(range(h * w))
    for it in range(iterations):
        dys = offsets[it, ..., 0].tolist()
        dxs = offsets[it, ..., 1].tolist()
        for r in range(h):
            row_dy, row_dx = dys[r], dxs[r]
            for c in range(w):
                nr = min(max(r + row_dy[c], 0), h - 1)
                nc = min(max(c + row_dx[c], 0), w - 1)
                i, j = r * w + c, nr * w + nc
                perm[i], perm[j] = perm[j], perm[i]
    flat = blurred.reshape(h * w, 3)
    return flat[np.asarray(perm)].reshape(h, w, 3)


def apply(x, spec, k, seed=0):
    """Return the perturbed image P(x, k).

    ``k=IDENTITY`` returns ``x`` itself. Otherwise ``k`` must lie in
    ``[spec.a, spec.b]``.
    """
    if k is IDENTITY:
        return x
    k = float(k)
    if not spec.contains(k):
        raise ParamOutOfDomainError(f"{spec.id}: k={k} outside [{spec.a}, {spec.b}]")
    if spec.id in _NEEDS_16PX and min(x.height, x.width) < MIN_KERNEL_SIDE:
        raise ImageTooSmallError(
            f"{spec.id} needs images of at least {MIN_KERNEL_SIDE}px per side, got {x.height}x{x.width}"
        )
    fp = spec.fixed_params
    px = x.pixels
    pid = spec.id
    rng = perturbation_rng(seed, x.image_id, pid, k) if pid in _STOCHASTIC else None
    if pid == "jpeg":
        out = jpeg(px, k, subsampling=int(fp.get("chroma_subsampling", 2)))
    elif pid == "brightness":
        out = brightness(px, k)
    elif pid == "contrast":
        out = contrast(px, k)
    elif pid == "defocus":
        out = defocus(px, k, alias_sigma=fp.get("alias_sigma", 0.5))
    elif pid == "elastic":
        out = elastic(px, k, rng, smooth_sigma=fp.get("smooth_sigma", 8.0))
    elif pid == "fog":
        out = fog(px, k, rng, wibble_decay=fp.get("wibble_decay", 2.0), blend=fp.get("blend", 0.75))
    elif pid == "frost":
        out = frost(px, k, rng, **fp)
    elif pid == "gaussian_noise":
        out = gaussian_noise(px, k, rng)
    else:
        out = glass(px, k, rng, iterations=int(fp.get("iterations", 2)), max_delta=int(fp.get("max_delta", 1)))
    return Image(np.clip(out, 0.0, 1.0), x.image_id)


# --- file I/O -----------------------------------------------------------------

IMAGE_SUFFIXES = (".png", ".ppm")


def read_image(path, image_id=None):
    """Load an 8-bit RGB PNG or binary PPM (P6) into an :class:`Image`."""
    path = Path(path)
    with PILImage.open(path) as im:
        if im.mode not in ("RGB", "RGBA", "L", "P"):
            raise ValueError(f"{path}: unsupported image mode {im.mode}")
        arr = np.asarray(im.convert("RGB"))
    return Image.from_uint8(arr, path.stem if image_id is None else image_id)


def write_png(image, path):
    PILImage.fromarray(image.to_uint8(), "RGB").save(path, format="PNG")


def list_images(directory):
    directory = Path(directory)
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES and p.is_file())
