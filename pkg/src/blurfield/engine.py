"""Apply uniform and spatially-varying linear motion blur to images.

Images are float arrays in [0, 1], shaped (H, W) or (H, W, C) with C in
{1, 3}.  Blurring correlates the reflect-padded (symmetric, edge-including)
image with the kernel; because kernels are centro-symmetric this coincides
with convolution.  Output pixel (m, n) depends only on the kernel assigned
to (m, n), so a piecewise-constant field can be blurred by compositing
whole-image blurs under the region masks; the result equals the per-pixel
definition.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.signal import fftconvolve

from .errors import DataError
from .kernels import BlurParams, Kernel, make_kernel

NOISE_NONE = "none"
NOISE_GAUSSIAN = "additive-gaussian"


@dataclass(frozen=True)
class NoiseConfig:
    """Additive noise settings: kind, intensity sigma, and RNG seed."""

    kind: str = NOISE_NONE
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in (NOISE_NONE, NOISE_GAUSSIAN):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if not (math.isfinite(self.sigma) and self.sigma >= 0):
            raise ValueError(f"noise sigma must be finite and >= 0, got {self.sigma}")

    @property
    def active(self) -> bool:
        return self.kind != NOISE_NONE and self.sigma > 0


@dataclass(frozen=True)
class Region:
    """Axis-aligned rectangle carrying one BlurParams."""

    top: int
    left: int
    height: int
    width: int
    params: BlurParams

    def __post_init__(self):
        if self.height <= 0 or self.width <= 0:
            raise ValueError("region must have positive extent")
        if self.top < 0 or self.left < 0:
            raise ValueError("region origin must be non-negative")


class KernelField:
    """Total mapping from pixel coordinates to BlurParams.

    Backed either by a rectangle list that tiles the image exactly or by
    dense per-pixel (r, phi) grids.
    """

    def __init__(self, height: int, width: int, regions=None, r_grid=None, phi_grid=None):
        if height < 1 or width < 1:
            raise ValueError("field dimensions must be positive")
        self.height = int(height)
        self.width = int(width)
        self.regions: tuple[Region, ...] | None = None
        self._r_grid = None
        self._phi_grid = None
        if regions is not None:
            regions = tuple(regions)
            cover = np.zeros((height, width), dtype=np.int32)
            for reg in regions:
                if reg.top + reg.height > height or reg.left + reg.width > width:
                    raise DataError("region extends outside the image")
                cover[reg.top : reg.top + reg.height, reg.left : reg.left + reg.width] += 1
            if np.any(cover != 1):
                raise DataError("regions must tile the image exactly with no overlap")
            self.regions = regions
        elif r_grid is not None and phi_grid is not None:
            r_grid = np.asarray(r_grid, dtype=np.float64)
            phi_grid = np.asarray(phi_grid, dtype=np.float64)
            if r_grid.shape != (height, width) or phi_grid.shape != (height, width):
                raise DataError("dense field grids must match the image shape")
            self._r_grid = r_grid
            self._phi_grid = phi_grid
        else:
            raise ValueError("provide either regions or dense r/phi grids")

    @classmethod
    def constant(cls, height: int, width: int, params: BlurParams) -> "KernelField":
        return cls(height, width, regions=[Region(0, 0, height, width, params)])

    @classmethod
    def from_grids(cls, r_grid, phi_grid) -> "KernelField":
        r_grid = np.asarray(r_grid, dtype=np.float64)
        return cls(r_grid.shape[0], r_grid.shape[1], r_grid=r_grid, phi_grid=phi_grid)

    def params_at(self, m: int, n: int) -> BlurParams:
        if not (0 <= m < self.height and 0 <= n < self.width):
            raise ValueError(f"pixel ({m}, {n}) outside field")
        if self.regions is not None:
            for reg in self.regions:
                if reg.top <= m < reg.top + reg.height and reg.left <= n < reg.left + reg.width:
                    return reg.params
            raise DataError("field does not cover pixel")  # unreachable after validation
        return BlurParams(self._r_grid[m, n], self._phi_grid[m, n])

    def unique_masks(self) -> list[tuple[BlurParams, np.ndarray]]:
        """Distinct BlurParams with their boolean pixel masks, sorted."""
        if self.regions is not None:
            by_params: dict[BlurParams, np.ndarray] = {}
            for reg in self.regions:
                mask = by_params.setdefault(
                    reg.params, np.zeros((self.height, self.width), dtype=bool)
                )
                mask[reg.top : reg.top + reg.height, reg.left : reg.left + reg.width] = True
            return sorted(by_params.items())
        pairs = np.stack([self._r_grid, self._phi_grid], axis=-1).reshape(-1, 2)
        uniq = np.unique(pairs, axis=0)
        out = []
        for r, phi in uniq:
            mask = (self._r_grid == r) & (self._phi_grid == phi)
            out.append((BlurParams(float(r), float(phi)), mask))
        return sorted(out, key=lambda t: t[0])

    def to_json_dict(self) -> dict:
        if self.regions is None:
            raise DataError("only region-list fields serialize to JSON")
        return {
            "height": self.height,
            "width": self.width,
            "regions": [
                {
                    "top": reg.top,
                    "left": reg.left,
                    "height": reg.height,
                    "width": reg.width,
                    "r": reg.params.r,
                    "phi": reg.params.phi,
                }
                for reg in self.regions
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json_dict(cls, obj: dict) -> "KernelField":
        regions = [
            Region(
                top=int(r["top"]),
                left=int(r["left"]),
                height=int(r["height"]),
                width=int(r["width"]),
                params=BlurParams(float(r["r"]), float(r["phi"])),
            )
            for r in obj["regions"]
        ]
        return cls(int(obj["height"]), int(obj["width"]), regions=regions)


class PatternKind(str, Enum):
    """The four two-region test patterns (split at the image midline)."""

    LENGTH_HORIZONTAL = "length-horizontal"
    LENGTH_VERTICAL = "length-vertical"
    ANGLE_HORIZONTAL = "angle-horizontal"
    ANGLE_VERTICAL = "angle-vertical"

    @property
    def split_line(self) -> str:
        """Orientation of the discontinuity line: 'vertical' or 'horizontal'."""
        if self in (PatternKind.LENGTH_HORIZONTAL, PatternKind.ANGLE_HORIZONTAL):
            return "vertical"
        return "horizontal"

    @property
    def varied_quantity(self) -> str:
        if self in (PatternKind.LENGTH_HORIZONTAL, PatternKind.LENGTH_VERTICAL):
            return "length"
        return "angle"

    def default_params(self) -> tuple[BlurParams, BlurParams]:
        """(first, second) region params: first is left/top, second right/bottom."""
        if self.varied_quantity == "length":
            # phi = 90 for the vertical variant canonicalizes to -90.
            phi = 0.0 if self.split_line == "vertical" else -90.0
            return BlurParams(5.0, phi), BlurParams(15.0, phi)
        return BlurParams(15.0, -45.0), BlurParams(15.0, 45.0)


def make_pattern(
    kind: PatternKind,
    height: int,
    width: int,
    first: BlurParams | None = None,
    second: BlurParams | None = None,
    split: int | None = None,
) -> KernelField:
    """Build the piecewise-constant two-region field for a test pattern.

    The first region is the left/top half, the second the right/bottom.
    For odd dimensions the middle row/column belongs to the second region
    (the default split is ``dim // 2``, the start of the second region).
    """
    kind = PatternKind(kind)
    if height < 2 or width < 2:
        raise ValueError("pattern image must be at least 2x2")
    dflt_first, dflt_second = kind.default_params()
    first = dflt_first if first is None else first
    second = dflt_second if second is None else second
    if first == second:
        raise ValueError("pattern regions must differ")
    dim = width if kind.split_line == "vertical" else height
    split = dim // 2 if split is None else int(split)
    if not (0 < split < dim):
        raise ValueError(f"split {split} must lie strictly inside [0, {dim})")
    if kind.split_line == "vertical":
        regions = [
            Region(0, 0, height, split, first),
            Region(0, split, height, width - split, second),
        ]
    else:
        regions = [
            Region(0, 0, split, width, first),
            Region(split, 0, height - split, width, second),
        ]
    return KernelField(height, width, regions=regions)


def _as_channels(image: np.ndarray) -> tuple[np.ndarray, bool]:
    """View an image as (H, W, C) float64; report whether input was 2D."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        return img[:, :, None], True
    if img.ndim == 3 and img.shape[2] in (1, 3):
        return img, False
    raise DataError(f"image must be (H, W) or (H, W, C) with C in {{1, 3}}, got {img.shape}")


def _check_kernel(kernel: Kernel, height: int, width: int) -> None:
    w = kernel.weights
    if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] % 2 == 0:
        raise DataError("malformed kernel: weights must be an odd square grid")
    if np.any(w < 0) or abs(float(w.sum()) - 1.0) > 1e-9:
        raise DataError("malformed kernel: weights must be non-negative and sum to 1")
    if kernel.size > 2 * min(height, width):
        raise DataError(
            f"kernel side {kernel.size} too large for {height}x{width} image "
            "(reflect padding undefined)"
        )


def _correlate(plane: np.ndarray, kernel: Kernel) -> np.ndarray:
    """Correlate one channel with the kernel under symmetric padding."""
    if kernel.size == 1:
        return plane * kernel.weights[0, 0]
    pad = kernel.radius
    padded = np.pad(plane, pad, mode="symmetric")
    # Correlation == convolution with the 180-degree-rotated kernel.
    return fftconvolve(padded, kernel.weights[::-1, ::-1], mode="valid")


def _apply_noise(out: np.ndarray, noise: NoiseConfig | None) -> np.ndarray:
    if noise is not None and noise.active:
        rng = np.random.default_rng(int(noise.seed) & 0xFFFFFFFFFFFFFFFF)
        out = out + rng.normal(0.0, noise.sigma, size=out.shape)
    return np.clip(out, 0.0, 1.0)


def blur_uniform(image, kernel: Kernel, noise: NoiseConfig | None = None) -> np.ndarray:
    """Blur the whole image with one kernel, add noise, clamp to [0, 1].

    Channels are processed independently with the same kernel.
    """
    img, was_2d = _as_channels(image)
    h, w = img.shape[:2]
    _check_kernel(kernel, h, w)
    out = np.empty_like(img)
    for ch in range(img.shape[2]):
        out[:, :, ch] = _correlate(img[:, :, ch], kernel)
    out = _apply_noise(out, noise)
    return out[:, :, 0] if was_2d else out


def blur_nonuniform(image, field: KernelField, noise: NoiseConfig | None = None) -> np.ndarray:
    """Blur with a per-pixel kernel field.

    Output pixel (m, n) is the correlation of the reflect-padded sharp image
    with the kernel assigned to (m, n), centered there.  Piecewise-constant
    fields are fast-pathed by blurring the whole image once per distinct
    kernel and compositing under the region masks, which is exactly the
    per-pixel definition because each output pixel reads only its own
    kernel's result.
    """
    img, was_2d = _as_channels(image)
    h, w = img.shape[:2]
    if (field.height, field.width) != (h, w):
        raise DataError(
            f"field covers {field.height}x{field.width} but image is {h}x{w}"
        )
    out = np.empty_like(img)
    for params, mask in field.unique_masks():
        kern = make_kernel(params)
        _check_kernel(kern, h, w)
        for ch in range(img.shape[2]):
            out[:, :, ch][mask] = _correlate(img[:, :, ch], kern)[mask]
    out = _apply_noise(out, noise)
    return out[:, :, 0] if was_2d else out
