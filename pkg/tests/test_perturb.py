import colorsys
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from PIL import Image as PILImage
from scipy import ndimage

from robustkit.errors import ImageTooSmallError, InvalidDomainError, ParamOutOfDomainError
from robustkit.perturb import (
    IDENTITY,
    PERTURBATIONS,
    Image,
    all_specs,
    apply,
    default_spec,
    disk_kernel,
    list_images,
    max_distortion,
    read_image,
    write_png,
)
from robustkit.synthetic import gray_image, synthetic_corpus

# domains from the perturbation table
PAPER_DOMAINS = {
    "jpeg": (30, 70),
    "brightness": (0.1, 0.5),
    "contrast": (0.3, 0.7),
    "defocus": (1, 5),
    "elastic": (0.01, 0.05),
    "fog": (0.5, 2.5),
    "frost": (0.2, 0.6),
    "gaussian_noise": (0.02, 0.10),
    "glass": (0.2, 1.0),
}


@pytest.fixture(scope="module")
def scene():
    return synthetic_corpus(1, size=48, seed=3)[0][0]


def test_default_domains_match_table():
    assert set(PERTURBATIONS) == set(PAPER_DOMAINS)
    for pid, (a, b) in PAPER_DOMAINS.items():
        spec = default_spec(pid)
        assert (spec.a, spec.b) == (a, b)
    assert {s.id for s in all_specs() if s.stochastic} == {"elastic", "fog", "frost", "gaussian_noise", "glass"}


def test_max_distortion():
    assert max_distortion(default_spec("jpeg")) == 30
    assert max_distortion(default_spec("gaussian_noise")) == 0.10
    assert max_distortion(default_spec("brightness")) == 0.5


@pytest.mark.parametrize("pid", PERTURBATIONS)
def test_identity_range_shape_determinism(pid, scene):
    spec = default_spec(pid)
    assert apply(scene, spec, IDENTITY, seed=9) is scene
    for k in (spec.a, (spec.a + spec.b) / 2, spec.b):
        out = apply(scene, spec, k, seed=1)
        assert out.pixels.shape == scene.pixels.shape
        assert out.pixels.min() >= 0.0 and out.pixels.max() <= 1.0
        assert out.tobytes() == apply(scene, spec, k, seed=1).tobytes()
        assert out.image_id == scene.image_id
    assert not np.array_equal(apply(scene, spec, spec.b, seed=1).pixels, scene.pixels)


@pytest.mark.parametrize("pid", sorted({"elastic", "fog", "frost", "gaussian_noise", "glass"}))
def test_stochastic_seeding(pid, scene):
    spec = default_spec(pid)
    k = spec.b
    a = apply(scene, spec, k, seed=1).pixels
    assert not np.array_equal(a, apply(scene, spec, k, seed=2).pixels)
    other = Image(scene.pixels, "another-id")
    assert not np.array_equal(a, apply(other, spec, k, seed=1).pixels)


def test_call_order_independence(scene):
    spec = default_spec("gaussian_noise")
    first = apply(scene, spec, 0.05, seed=0).tobytes()
    for k in (0.02, 0.07, 0.1):
        apply(scene, spec, k, seed=0)
    assert apply(scene, spec, 0.05, seed=0).tobytes() == first


def test_thread_count_determinism(scene):
    jobs = [(spec, k) for spec in all_specs() for k in (spec.a, spec.b)]

    def run(job):
        return apply(scene, job[0], job[1], seed=4).tobytes()

    serial = [run(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=8) as pool:
        assert list(pool.map(run, jobs)) == serial


def test_domain_and_size_errors(scene):
    with pytest.raises(ParamOutOfDomainError):
        apply(scene, default_spec("jpeg"), 80)
    with pytest.raises(ParamOutOfDomainError):
        apply(scene, default_spec("fog"), 0.1)
    small = gray_image(15)
    for pid in ("defocus", "elastic", "glass"):
        with pytest.raises(ImageTooSmallError):
            apply(small, default_spec(pid), default_spec(pid).a)
    apply(small, default_spec("jpeg"), 50)
    with pytest.raises(InvalidDomainError):
        default_spec("jpeg").with_domain(70, 30)


def test_image_validation():
    with pytest.raises(ValueError):
        Image(np.zeros((4, 4)))
    with pytest.raises(ValueError):
        Image(np.full((4, 4, 3), 1.5))


# --- recipe oracles --------------------------------------------------------------


def test_brightness_matches_colorsys(scene):
    k = 0.3
    out = apply(scene, default_spec("brightness"), k).pixels
    for y, x in [(0, 0), (5, 17), (20, 3), (47, 47), (30, 30)]:
        h, s, v = colorsys.rgb_to_hsv(*scene.pixels[y, x])
        expected = colorsys.hsv_to_rgb(h, s, min(v + k, 1.0))
        np.testing.assert_allclose(out[y, x], expected, atol=1e-9)


def test_contrast_formula(scene):
    k = 0.45
    px = scene.pixels
    mean = px.reshape(-1, 3).mean(axis=0)
    expected = np.clip(mean + k * (px - mean), 0, 1)
    np.testing.assert_allclose(apply(scene, default_spec("contrast"), k).pixels, expected, atol=1e-15)


def test_contrast_fixed_points(scene, gray64):
    spec = default_spec("contrast").with_domain(1, 1)
    np.testing.assert_allclose(apply(scene, spec, 1.0).pixels, scene.pixels, rtol=0, atol=2e-16)
    const = Image(np.full((20, 20, 3), [0.2, 0.5, 0.9]))
    for k in (0.3, 0.5, 0.7):
        np.testing.assert_allclose(apply(const, default_spec("contrast"), k).pixels, const.pixels, atol=1e-15)


def test_gaussian_noise_std(gray64):
    out = apply(gray64, default_spec("gaussian_noise"), 0.10, seed=0)
    std = float(np.std(out.pixels - gray64.pixels, ddof=1))
    assert 0.095 <= std <= 0.105


def test_jpeg_quality_is_rounded(scene):
    spec = default_spec("jpeg")
    q50 = apply(scene, spec, 50).tobytes()
    assert apply(scene, spec, 49.6).tobytes() == q50
    assert apply(scene, spec, 50.4).tobytes() == q50
    assert apply(scene, spec, 51).tobytes() != q50
    err30 = np.abs(apply(scene, spec, 30).pixels - scene.pixels).mean()
    err70 = np.abs(apply(scene, spec, 70).pixels - scene.pixels).mean()
    assert err30 > err70


def test_disk_kernel_normalized():
    for r in (1, 2.5, 5):
        kern = disk_kernel(r)
        assert kern.sum() == pytest.approx(1.0)
        np.testing.assert_allclose(kern, kern[::-1, ::-1])


def test_defocus_and_glass_keep_constant_images(gray64):
    for pid in ("defocus", "glass", "elastic"):
        spec = default_spec(pid)
        np.testing.assert_allclose(apply(gray64, spec, spec.b).pixels, gray64.pixels, atol=1e-12)


def test_glass_permutes_blurred_pixels(scene):
    k = 0.6
    out = apply(scene, default_spec("glass"), k, seed=2).pixels
    blurred = np.stack([ndimage.gaussian_filter(scene.pixels[..., c], k) for c in range(3)], axis=-1)
    key = lambda a: np.sort(a.reshape(-1, 3).view([("r", float), ("g", float), ("b", float)]), axis=0)
    np.testing.assert_array_equal(key(out), key(np.clip(blurred, 0, 1)))


def test_fog_bounds_on_constant_image():
    # fog adds t * max gray with 0 <= t <= k, then divides by 1 + 0.75 k
    level = 0.4
    flat = Image(np.full((32, 32, 3), level))
    for k in (0.5, 1.5, 2.5):
        out = apply(flat, default_spec("fog"), k).pixels
        lo, hi = level / (1 + 0.75 * k), level * (1 + k) / (1 + 0.75 * k)
        assert out.min() >= lo - 1e-12 and out.max() <= hi + 1e-12
        assert out.max() - out.min() > 0.01


def test_frost_brightens_dark_images():
    dark = Image(np.full((32, 32, 3), 0.1))
    spec = default_spec("frost")
    weak = apply(dark, spec, spec.a).pixels.mean()
    strong = apply(dark, spec, spec.b).pixels.mean()
    assert 0.1 < weak < strong


def test_elastic_amplitude_grows_with_k(scene):
    spec = default_spec("elastic")
    lo = np.abs(apply(scene, spec, spec.a).pixels - scene.pixels).mean()
    hi = np.abs(apply(scene, spec, spec.b).pixels - scene.pixels).mean()
    assert 0 < lo < hi


# --- I/O ---------------------------------------------------------------------------


def test_png_and_ppm_roundtrip(tmp_path, scene):
    img = Image.from_uint8(scene.to_uint8(), "s")
    write_png(img, tmp_path / "s.png")
    back = read_image(tmp_path / "s.png")
    assert back.image_id == "s"
    np.testing.assert_array_equal(back.to_uint8(), img.to_uint8())
    PILImage.fromarray(img.to_uint8()).save(tmp_path / "t.ppm")
    np.testing.assert_array_equal(read_image(tmp_path / "t.ppm").pixels, img.pixels)
    (tmp_path / "notes.txt").write_text("x")
    assert [p.name for p in list_images(tmp_path)] == ["s.png", "t.ppm"]
