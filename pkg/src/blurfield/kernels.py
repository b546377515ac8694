"""Linear motion blur kernels parametrized by length and angle.

A blur of length ``r`` (pixels) and angle ``phi`` (degrees, counterclockwise
from horizontal) is rasterized as a line segment of geometric length
``r - 1`` centered on the kernel grid, so ``r = 1`` is exactly the no-blur
identity.  Rasterization is anti-aliased: the segment is sampled densely and
each sample deposits its mass onto the four nearest pixel centers with
bilinear weights.  The result is normalized to sum to one and is exactly
centro-symmetric, so correlating with the kernel equals convolving with it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Segment sampling density for rasterization (samples per unit length).
SAMPLES_PER_UNIT = 10_000

# Two kernels closer than this (max abs weight difference) are duplicates.
DEDUP_TOLERANCE = 1e-9

_SQRT_HALF = math.sqrt(0.5)


def canonicalize_angle(phi: float) -> float:
    """Reduce an angle in degrees into the canonical range [-90, 90).

    A line at ``phi`` and at ``phi + 180`` is the same line; +90 maps
    to -90.

    Raises:
        ValueError: if ``phi`` is not finite.
    """
    phi = float(phi)
    if not math.isfinite(phi):
        raise ValueError(f"angle must be finite, got {phi}")
    shifted = math.fmod(phi + 90.0, 180.0)
    if shifted < 0:
        shifted += 180.0
    return shifted - 90.0


@dataclass(frozen=True, order=True)
class BlurParams:
    """A (length, angle) pair parametrizing a linear motion blur kernel.

    ``r`` is the blur length in pixels (>= 1) and ``phi`` the blur angle in
    degrees, stored canonicalized into [-90, 90).  ``(1, 0)`` denotes the
    no-blur identity.
    """

    r: float
    phi: float = 0.0

    def __post_init__(self):
        r = float(self.r)
        if not math.isfinite(r):
            raise ValueError(f"blur length must be finite, got {r}")
        if r < 1.0:
            raise ValueError(f"blur length must be >= 1, got {r}")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "phi", canonicalize_angle(self.phi))


@dataclass(frozen=True)
class Kernel:
    """Odd-sized square grid of non-negative weights summing to one."""

    size: int
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        w = self.weights
        if w.shape != (self.size, self.size):
            raise ValueError(f"weights shape {w.shape} != ({self.size}, {self.size})")
        if self.size < 1 or self.size % 2 == 0:
            raise ValueError(f"kernel size must be odd and positive, got {self.size}")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("kernel weights must be finite and non-negative")
        if abs(float(w.sum()) - 1.0) > 1e-9:
            raise ValueError(f"kernel weights must sum to 1, got {w.sum()!r}")

    @property
    def radius(self) -> int:
        return self.size // 2


def _cos_sin_deg(phi: float) -> tuple[float, float]:
    """Cosine and sine of an angle in degrees, exact at multiples of 45.

    Exactness at the axis angles matters: a vertical blur must deposit no
    mass outside its single column, which ``cos(radians(90)) ~ 6e-17``
    would violate.
    """
    k = math.fmod(phi, 360.0)
    if k < 0:
        k += 360.0
    table = {
        0.0: (1.0, 0.0),
        90.0: (0.0, 1.0),
        180.0: (-1.0, 0.0),
        270.0: (0.0, -1.0),
        45.0: (_SQRT_HALF, _SQRT_HALF),
        135.0: (-_SQRT_HALF, _SQRT_HALF),
        225.0: (-_SQRT_HALF, -_SQRT_HALF),
        315.0: (_SQRT_HALF, -_SQRT_HALF),
    }
    if k in table:
        return table[k]
    rad = math.radians(phi)
    return math.cos(rad), math.sin(rad)


def kernel_side(params: BlurParams) -> int:
    """Side length of the smallest odd square containing the blur segment."""
    c, s = _cos_sin_deg(params.phi)
    half = 0.5 * (params.r - 1.0) * max(abs(c), abs(s))
    return 2 * math.ceil(half) + 1


# Memo cache of immutable kernels (weights are read-only views), so
# concurrent callers are safe; a benign race merely recomputes an entry.
_kernel_cache: dict[tuple[float, float], Kernel] = {}


def make_kernel(params: BlurParams) -> Kernel:
    """Rasterize the blur segment for ``params`` into a normalized kernel.

    The segment of length ``r - 1`` is sampled at SAMPLES_PER_UNIT midpoints
    per unit length, symmetric in pairs about the center; each sample
    deposits unit mass onto its four surrounding pixel centers by bilinear
    weights.  Adding the 180-degree rotation of the accumulated grid to
    itself before normalizing makes centro-symmetry exact, not approximate.
    """
    if not isinstance(params, BlurParams):
        params = BlurParams(*params)
    key = (params.r, params.phi)
    cached = _kernel_cache.get(key)
    if cached is not None:
        return cached

    length = params.r - 1.0
    side = kernel_side(params)
    k = side // 2
    if length == 0.0:
        grid = np.array([[1.0]])
    else:
        # Deposit only the positive-half samples: mirroring a sample about
        # the center mirrors its bilinear deposit exactly, so adding the
        # 180-degree rotation below supplies the negative half and makes
        # centro-symmetry exact in one step.
        c, s = _cos_sin_deg(params.phi)
        half_count = math.ceil(length * SAMPLES_PER_UNIT / 2.0)
        step = length / (2 * half_count)
        u = (np.arange(half_count) + 0.5) * step
        ys = k + u * s
        xs = k + u * c
        i0 = np.floor(ys).astype(np.int32)
        j0 = np.floor(xs).astype(np.int32)
        fy = ys - i0
        fx = xs - j0
        i1 = np.minimum(i0 + 1, side - 1)  # clipped cells only get weight 0
        j1 = np.minimum(j0 + 1, side - 1)
        i0 = np.maximum(i0, 0)
        j0 = np.maximum(j0, 0)
        gy = 1.0 - fy
        gx = 1.0 - fx
        flat = np.concatenate(
            [i0 * side + j0, i0 * side + j1, i1 * side + j0, i1 * side + j1]
        )
        mass = np.concatenate([gy * gx, gy * fx, fy * gx, fy * fx])
        grid = np.bincount(flat, weights=mass, minlength=side * side)
        grid = grid.reshape(side, side)
        grid = grid + np.rot90(grid, 2)
        grid = grid / grid.sum()
    grid.flags.writeable = False
    kern = Kernel(size=side, weights=grid)
    _kernel_cache[key] = kern
    return kern


def unique_params(
    lengths,
    angle_step: float,
    tolerance: float = DEDUP_TOLERANCE,
) -> list[BlurParams]:
    """Enumerate (r, phi) over a grid and keep one representative per kernel.

    Angles run over ``[-90, 90)`` in steps of ``angle_step``.  Two kernels
    are equivalent iff they have the same size and max-abs weight difference
    <= ``tolerance``; the class of the 1x1 identity is always represented by
    exactly ``(1, 0)``.

    Returns the representatives sorted by (r, phi).
    """
    lengths = sorted(set(float(r) for r in lengths))
    if not lengths:
        raise ValueError("lengths set must not be empty")
    for r in lengths:
        if not (1.0 <= r <= 100.0):
            raise ValueError(f"blur lengths must lie in [1, 100], got {r}")
    if not (angle_step > 0):
        raise ValueError(f"angle_step must be positive, got {angle_step}")

    angles = np.arange(-90.0, 90.0, float(angle_step))
    buckets: dict[int, list[np.ndarray]] = {}
    reps: dict[tuple[int, int], BlurParams] = {}
    identity = BlurParams(1.0, 0.0)
    for r in lengths:
        for phi in angles:
            params = BlurParams(r, float(phi))
            kern = make_kernel(params)
            bucket = buckets.setdefault(kern.size, [])
            match = None
            for idx, w in enumerate(bucket):
                if np.max(np.abs(w - kern.weights)) <= tolerance:
                    match = idx
                    break
            if match is None:
                bucket.append(kern.weights)
                if kern.size == 1:
                    params = identity
                reps[(kern.size, len(bucket) - 1)] = params
    return sorted(reps.values())


def kernel_to_text(kernel: Kernel) -> str:
    """Serialize a kernel as one row per line of space-separated decimals."""
    lines = [" ".join(repr(float(v)) for v in row) for row in kernel.weights]
    return "\n".join(lines) + "\n"


def kernel_from_text(text: str) -> Kernel:
    """Parse the plain-text grid format written by :func:`kernel_to_text`."""
    rows = [
        [float(v) for v in line.split()] for line in text.splitlines() if line.strip()
    ]
    if not rows:
        raise ValueError("empty kernel text")
    grid = np.array(rows, dtype=np.float64)
    grid.flags.writeable = False
    return Kernel(size=grid.shape[0], weights=grid)


def kernel_to_image(kernel: Kernel, path) -> None:
    """Write the kernel as a lossless 16-bit grayscale PNG for inspection.

    Weights are scaled so the maximum maps to 65535; this is a
    visualization export, not a round-trippable encoding.
    """
    from PIL import Image

    peak = float(kernel.weights.max())
    scaled = np.round(kernel.weights / peak * 65535.0).astype(np.uint16)
    Image.fromarray(scaled).save(path, format="PNG")
