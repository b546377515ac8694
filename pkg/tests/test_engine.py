"""Blur engine tests against a brute-force per-pixel correlation oracle."""

import numpy as np
import pytest

from blurfield.engine import (
    NOISE_GAUSSIAN,
    KernelField,
    NoiseConfig,
    PatternKind,
    Region,
    blur_nonuniform,
    blur_uniform,
    make_pattern,
)
from blurfield.errors import DataError
from blurfield.kernels import BlurParams, make_kernel


def oracle_blur(image: np.ndarray, field: KernelField) -> np.ndarray:
    """Direct evaluation: per-pixel correlation over the symmetric-padded image."""
    img = image if image.ndim == 3 else image[:, :, None]
    h, w, chans = img.shape
    out = np.empty_like(img, dtype=np.float64)
    for m in range(h):
        for n in range(w):
            kern = make_kernel(field.params_at(m, n))
            pad = kern.radius
            for ch in range(chans):
                padded = np.pad(img[:, :, ch], pad, mode="symmetric")
                window = padded[m : m + kern.size, n : n + kern.size]
                out[m, n, ch] = np.sum(kern.weights * window)
    out = np.clip(out, 0.0, 1.0)
    return out if image.ndim == 3 else out[:, :, 0]


class TestBlurUniform:
    def test_identity_kernel(self):
        rng = np.random.default_rng(0)
        img = rng.random((9, 7, 3))
        out = blur_uniform(img, make_kernel(BlurParams(1, 0)))
        np.testing.assert_array_equal(out, img)

    def test_constant_image_preserved(self):
        for c in (0.0, 0.25, 1.0):
            img = np.full((11, 13), c)
            out = blur_uniform(img, make_kernel(BlurParams(5, 30)))
            np.testing.assert_allclose(out, c, atol=1e-9)

    def test_ramp_matches_oracle(self):
        img = np.linspace(0, 1, 25).reshape(5, 5)
        kern = make_kernel(BlurParams(3, 0))
        out = blur_uniform(img, kern)
        ref = oracle_blur(img, KernelField.constant(5, 5, BlurParams(3, 0)))
        np.testing.assert_allclose(out, ref, atol=1e-6)

    def test_random_images_match_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(8):
            h, w = rng.integers(6, 17, size=2)
            chans = int(rng.choice([1, 3]))
            img = rng.random((h, w, chans)) if chans == 3 else rng.random((h, w))
            params = BlurParams(float(rng.uniform(1, 6)), float(rng.uniform(-90, 90)))
            out = blur_uniform(img, make_kernel(params))
            ref = oracle_blur(img, KernelField.constant(h, w, params))
            np.testing.assert_allclose(out, ref, atol=1e-6)

    def test_kernel_too_large(self):
        img = np.zeros((5, 5))
        with pytest.raises(DataError):
            blur_uniform(img, make_kernel(BlurParams(30, 0)))

    def test_noise_determinism(self):
        img = np.random.default_rng(2).random((8, 8, 3))
        kern = make_kernel(BlurParams(3, 45))
        noise = NoiseConfig(kind=NOISE_GAUSSIAN, sigma=0.05, seed=99)
        a = blur_uniform(img, kern, noise)
        b = blur_uniform(img, kern, noise)
        np.testing.assert_array_equal(a, b)
        c = blur_uniform(img, kern, NoiseConfig(kind=NOISE_GAUSSIAN, sigma=0.05, seed=100))
        assert np.any(a != c)

    def test_zero_sigma_equals_none(self):
        img = np.random.default_rng(3).random((8, 8))
        kern = make_kernel(BlurParams(4, 10))
        plain = blur_uniform(img, kern, None)
        zeroed = blur_uniform(img, kern, NoiseConfig(kind=NOISE_GAUSSIAN, sigma=0.0, seed=5))
        np.testing.assert_array_equal(plain, zeroed)

    def test_output_clamped(self):
        img = np.ones((8, 8))
        noise = NoiseConfig(kind=NOISE_GAUSSIAN, sigma=0.5, seed=1)
        out = blur_uniform(img, make_kernel(BlurParams(3, 0)), noise)
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_noise_config_validation(self):
        with pytest.raises(ValueError):
            NoiseConfig(kind="salt-pepper")
        with pytest.raises(ValueError):
            NoiseConfig(kind=NOISE_GAUSSIAN, sigma=-1.0)


class TestBlurNonuniform:
    def test_constant_field_reduces_to_uniform(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            h, w = rng.integers(6, 17, size=2)
            img = rng.random((h, w, 3))
            params = BlurParams(float(rng.uniform(1, 6)), float(rng.uniform(-90, 90)))
            field = KernelField.constant(h, w, params)
            kern = make_kernel(params)
            np.testing.assert_allclose(
                blur_nonuniform(img, field), blur_uniform(img, kern), atol=1e-6
            )

    def test_two_region_matches_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(6):
            img = rng.random((12, 12))
            split = int(rng.integers(3, 10))
            p1 = BlurParams(float(rng.uniform(1, 7)), float(rng.uniform(-90, 90)))
            p2 = BlurParams(float(rng.uniform(1, 7)), float(rng.uniform(-90, 90)))
            vertical = bool(rng.integers(2))
            if vertical:
                regions = [Region(0, 0, 12, split, p1), Region(0, split, 12, 12 - split, p2)]
            else:
                regions = [Region(0, 0, split, 12, p1), Region(split, 0, 12 - split, 12, p2)]
            field = KernelField(12, 12, regions=regions)
            out = blur_nonuniform(img, field)
            ref = oracle_blur(img, field)
            np.testing.assert_allclose(out, ref, atol=1e-6)

    def test_dense_grid_matches_oracle(self):
        rng = np.random.default_rng(6)
        img = rng.random((10, 11, 3))
        r_grid = np.where(np.add.outer(np.arange(10), np.arange(11)) % 2 == 0, 3.0, 5.0)
        phi_grid = np.where(r_grid == 3.0, 0.0, 45.0)
        field = KernelField.from_grids(r_grid, phi_grid)
        out = blur_nonuniform(img, field)
        ref = oracle_blur(img, field)
        np.testing.assert_allclose(out, ref, atol=1e-6)

    def test_locality_far_from_split(self):
        # pixels more than a kernel radius left of the split see only the
        # left kernel, so they equal the whole-image uniform blur
        rng = np.random.default_rng(7)
        img = rng.random((20, 40))
        field = make_pattern(PatternKind.LENGTH_HORIZONTAL, 20, 40)
        out = blur_nonuniform(img, field)
        left = field.params_at(0, 0)
        uniform = blur_uniform(img, make_kernel(left))
        radius = make_kernel(left).radius
        np.testing.assert_allclose(out[:, : 20 - radius], uniform[:, : 20 - radius], atol=1e-9)

    def test_field_size_mismatch(self):
        img = np.zeros((6, 6))
        field = KernelField.constant(5, 5, BlurParams(1, 0))
        with pytest.raises(DataError):
            blur_nonuniform(img, field)

    def test_determinism_bytes(self):
        rng = np.random.default_rng(8)
        img = rng.random((16, 16, 3))
        field = make_pattern(PatternKind.ANGLE_HORIZONTAL, 16, 16, split=8)
        noise = NoiseConfig(kind=NOISE_GAUSSIAN, sigma=0.02, seed=42)
        a = blur_nonuniform(img, field, noise)
        b = blur_nonuniform(img, field, noise)
        assert a.tobytes() == b.tobytes()


class TestKernelField:
    def test_exact_tiling_required(self):
        with pytest.raises(DataError):
            KernelField(4, 4, regions=[Region(0, 0, 4, 3, BlurParams(1, 0))])
        with pytest.raises(DataError):
            KernelField(
                4, 4,
                regions=[
                    Region(0, 0, 4, 3, BlurParams(1, 0)),
                    Region(0, 2, 4, 2, BlurParams(3, 0)),
                ],
            )

    def test_json_roundtrip(self):
        field = make_pattern(PatternKind.ANGLE_VERTICAL, 10, 8)
        back = KernelField.from_json_dict(field.to_json_dict())
        assert back.height == 10 and back.width == 8
        for m, n in [(0, 0), (9, 7), (4, 3), (5, 3)]:
            assert back.params_at(m, n) == field.params_at(m, n)


class TestMakePattern:
    def test_length_horizontal_corners(self):
        field = make_pattern(PatternKind.LENGTH_HORIZONTAL, 100, 100)
        assert field.params_at(0, 0) == BlurParams(5, 0)
        assert field.params_at(0, 99) == BlurParams(15, 0)

    def test_angle_vertical_corners(self):
        field = make_pattern(PatternKind.ANGLE_VERTICAL, 100, 100)
        assert field.params_at(0, 0) == BlurParams(15, -45)
        assert field.params_at(99, 0) == BlurParams(15, 45)

    def test_length_vertical_angle_canonicalized(self):
        field = make_pattern(PatternKind.LENGTH_VERTICAL, 10, 10)
        assert field.params_at(0, 0) == BlurParams(5, -90)
        assert field.params_at(9, 0) == BlurParams(15, -90)

    def test_odd_dimension_middle_goes_to_second_region(self):
        field = make_pattern(PatternKind.LENGTH_VERTICAL, 101, 10)
        assert field.params_at(50, 0).r == 15.0
        assert field.params_at(49, 0).r == 5.0
        horizontal = make_pattern(PatternKind.ANGLE_HORIZONTAL, 10, 101)
        assert horizontal.params_at(0, 50).phi == 45.0

    def test_validation(self):
        with pytest.raises(ValueError):
            make_pattern(PatternKind.LENGTH_HORIZONTAL, 1, 10)
        with pytest.raises(ValueError):
            make_pattern(
                PatternKind.LENGTH_HORIZONTAL, 10, 10,
                first=BlurParams(5, 0), second=BlurParams(5, 0),
            )
        with pytest.raises(ValueError):
            make_pattern(PatternKind.LENGTH_HORIZONTAL, 10, 10, split=0)
        with pytest.raises(ValueError):
            make_pattern(PatternKind.LENGTH_HORIZONTAL, 10, 10, split=10)
