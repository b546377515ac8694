"""Patch admissibility filtering, patch-size scheduling, and batch building.

A blur of (r, phi) fits inside an N x N patch iff its bounding extent along
the dominant axis is at most N.  Blurred samples failing this test at the
current patch size are rejected at draw time rather than dropped from
already-built batches: dropping can produce empty batches, which turn the
training loss into NaN.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import Manifest, SampleRecord
from .errors import SamplerExhausted
from .imgio import ensure_rgb, load_image

# Relative slack on the admissibility bound.  The boundary case
# r = N*sqrt(2) at phi = 45 is admissible in exact arithmetic but lands a
# few ulps above the bound in floats; the slack keeps it admissible without
# affecting any non-boundary decision.
ADMISSIBLE_REL_TOL = 1e-9

# Consecutive rejected draws before giving up on a batch.
MAX_CONSECUTIVE_REJECTIONS = 10_000


def admissible(r: float, phi: float, n: int) -> bool:
    """True iff a blur of length ``r`` at angle ``phi`` fits an N x N patch.

    For |phi| <= 45 the horizontal axis is the binding one and the bound is
    sqrt(N^2 (1 + tan^2 |phi|)); beyond 45 the vertical axis binds and tan
    is replaced by cot.  Equivalent to r * max(|cos phi|, |sin phi|) <= N.
    """
    if not (math.isfinite(r) and r >= 1.0):
        raise ValueError(f"blur length must be finite and >= 1, got {r}")
    if not (-90.0 <= phi < 90.0):
        raise ValueError(f"angle {phi} outside [-90, 90)")
    if n < 1:
        raise ValueError(f"patch size must be >= 1, got {n}")
    a = abs(phi)
    if a <= 45.0:
        t = 1.0 if a == 45.0 else math.tan(math.radians(a))
        bound = math.sqrt(n * n * (1.0 + t * t))
    else:
        cot = 0.0 if a == 90.0 else 1.0 / math.tan(math.radians(a))
        bound = math.sqrt(n * n * (1.0 + cot * cot))
    return r <= bound * (1.0 + ADMISSIBLE_REL_TOL)


@dataclass(frozen=True)
class PatchSchedule:
    """Per-epoch patch sizes, indexed circularly."""

    sizes: tuple[int, ...]

    def __init__(self, sizes):
        sizes = tuple(int(s) for s in sizes)
        if not sizes:
            raise ValueError("patch schedule must not be empty")
        if any(s < 1 for s in sizes):
            raise ValueError(f"patch sizes must be positive, got {sizes}")
        object.__setattr__(self, "sizes", sizes)

    @property
    def n_max(self) -> int:
        return max(self.sizes)

    def __len__(self) -> int:
        return len(self.sizes)


def patch_size_for_epoch(schedule: PatchSchedule, epoch: int) -> int:
    """Patch size for a given epoch: the schedule loops back after its end."""
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    return schedule.sizes[epoch % len(schedule.sizes)]


@dataclass
class Batch:
    """Fixed-size batch of same-sized patches with normalized labels."""

    patches: np.ndarray  # (B, N, N, 3) float64
    labels: np.ndarray  # (B, 2) float64
    patch_size: int
    provenance: list[tuple[str, tuple[int, int]]]  # (source_id, (top, left))


def eligible_records(records, n: int) -> list[SampleRecord]:
    """Records admissible at patch size ``n`` whose image fits an n-crop."""
    return [
        rec
        for rec in records
        if rec.height >= n and rec.width >= n and admissible(rec.params.r, rec.params.phi, n)
    ]


def batches_per_epoch(records, n: int, batch_size: int) -> int:
    """Epoch length: admissible record count divided by batch size, rounded up."""
    count = len(eligible_records(records, n))
    if count == 0:
        raise SamplerExhausted(f"no record admissible at patch size {n}")
    return -(-count // batch_size)


class BatchStream:
    """Deterministic stream of training batches drawn from a manifest.

    One stream is a single logical sequence owned by one consumer; run
    independent streams with distinct seeds for parallel consumption.
    Decoded images are cached in memory.
    """

    def __init__(self, manifest: Manifest, seed: int, split: str | None = None):
        self.manifest = manifest
        self.records = manifest.split_records(split)
        if not self.records:
            raise SamplerExhausted(f"manifest has no records for split {split!r}")
        self._rng = np.random.default_rng(int(seed) & 0xFFFFFFFFFFFFFFFF)
        self._cache: dict[int, np.ndarray] = {}

    def _image(self, idx: int) -> np.ndarray:
        img = self._cache.get(idx)
        if img is None:
            img = ensure_rgb(load_image(self.manifest.resolve_path(self.records[idx])))
            self._cache[idx] = img
        return img

    def next_batch(self, n: int, batch_size: int) -> Batch:
        """Draw the next batch of ``batch_size`` admissible N x N patches.

        Draws a random record and a uniform crop origin, keeps the sample
        only if its blur fits the patch, and repeats until the batch is
        full.  Raises :class:`SamplerExhausted` immediately when nothing is
        admissible at ``n``, or after MAX_CONSECUTIVE_REJECTIONS rejected
        draws.
        """
        if batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {batch_size}")
        if not eligible_records(self.records, n):
            raise SamplerExhausted(
                f"no record admissible at patch size {n}; "
                "largest admissible blur is too long for this patch"
            )
        patches = np.empty((batch_size, n, n, 3), dtype=np.float64)
        labels = np.empty((batch_size, 2), dtype=np.float64)
        provenance: list[tuple[str, tuple[int, int]]] = []
        filled = 0
        rejections = 0
        while filled < batch_size:
            idx = int(self._rng.integers(len(self.records)))
            rec = self.records[idx]
            ok = (
                rec.height >= n
                and rec.width >= n
                and admissible(rec.params.r, rec.params.phi, n)
            )
            if not ok:
                rejections += 1
                if rejections >= MAX_CONSECUTIVE_REJECTIONS:
                    raise SamplerExhausted(
                        f"{rejections} consecutive rejections at patch size {n}"
                    )
                continue
            rejections = 0
            top = int(self._rng.integers(rec.height - n + 1))
            left = int(self._rng.integers(rec.width - n + 1))
            img = self._image(idx)
            patches[filled] = img[top : top + n, left : left + n]
            labels[filled] = rec.labels
            provenance.append((rec.source_id, (top, left)))
            filled += 1
        return Batch(patches=patches, labels=labels, patch_size=n, provenance=provenance)
