"""Sliding-window blur-field prediction and overlap-transition analysis.

A model is slid across a blurred image at a fixed patch size; each window
yields one denormalized (r, phi) prediction anchored at the patch center,
giving a grid smaller than the image by N-1 per axis at stride 1.  Two-
region test patterns are analyzed by grouping windows by how many of their
pixels fall in the minority region (the overlap), and by aggregating the
grid perpendicular to the blur discontinuity.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import denormalize_arrays
from .engine import PatternKind
from .errors import DataError
from .imgio import ensure_rgb

GRID_ORIGIN = "patch-center"


@dataclass
class PredictionGrid:
    """Per-window (r, phi) predictions over a sliding window."""

    r: np.ndarray  # (rows, cols) float64
    phi: np.ndarray  # (rows, cols) float64
    patch_size: int
    stride: int
    checkpoint_id: str
    origin: str = GRID_ORIGIN

    @property
    def shape(self) -> tuple[int, int]:
        return self.r.shape

    def window_origin(self, i: int, j: int) -> tuple[int, int]:
        """Image (top, left) of grid cell (i, j)."""
        return i * self.stride, j * self.stride

    def to_csv(self, out_dir, prefix: str = "grid") -> tuple[Path, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = []
        for name, arr in (("r", self.r), ("phi", self.phi)):
            path = out_dir / f"{prefix}-{name}.csv"
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh)
                for row in arr:
                    writer.writerow([repr(float(v)) for v in row])
            paths.append(path)
        return paths[0], paths[1]


def grid_dims(height: int, width: int, n: int, stride: int) -> tuple[int, int]:
    """Sliding-window grid dimensions: floor((dim - N) / stride) + 1."""
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if height < n or width < n:
        raise ValueError(f"image {height}x{width} smaller than patch size {n}")
    return (height - n) // stride + 1, (width - n) // stride + 1


def sliding_predict(model, image, n: int, stride: int = 1) -> PredictionGrid:
    """Predict (r, phi) for every N x N window that fits inside the image.

    Windows are visited row-major; predictions are denormalized with the
    model's N_max.
    """
    img = ensure_rgb(image)
    rows, cols = grid_dims(img.shape[0], img.shape[1], n, stride)
    r_grid = np.empty((rows, cols), dtype=np.float64)
    phi_grid = np.empty((rows, cols), dtype=np.float64)
    for i in range(rows):
        top = i * stride
        patches = np.empty((cols, n, n, 3), dtype=np.float64)
        for j in range(cols):
            left = j * stride
            patches[j] = img[top : top + n, left : left + n]
        preds = model.predict_batch(patches)
        r_row, phi_row = denormalize_arrays(preds[:, 0], preds[:, 1], model.n_max)
        r_grid[i] = r_row
        phi_grid[i] = phi_row
    return PredictionGrid(
        r=r_grid,
        phi=phi_grid,
        patch_size=n,
        stride=stride,
        checkpoint_id=getattr(model, "checkpoint_id", type(model).__name__),
    )


def render_heatmaps(grid: PredictionGrid, out_dir, prefix: str = "heatmap") -> tuple[Path, Path]:
    """Write color-mapped PNG heatmaps of the r and phi grids."""
    import matplotlib

    matplotlib.use("Agg")
    from matplotlib import pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, arr in (("r", grid.r), ("phi", grid.phi)):
        path = out_dir / f"{prefix}-{name}.png"
        plt.imsave(path, arr, cmap="viridis")
        paths.append(path)
    return paths[0], paths[1]


def perpendicular_profile(values: np.ndarray, split_line: str) -> tuple[np.ndarray, np.ndarray]:
    """Mean and population std aggregated perpendicular to the discontinuity.

    For a vertical split line (pattern varying horizontally) the grid is
    aggregated over rows, yielding one (mean, std) per column; a horizontal
    split line aggregates over columns, one pair per row.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"grid must be non-empty 2D, got shape {arr.shape}")
    if split_line == "vertical":
        axis = 0
    elif split_line == "horizontal":
        axis = 1
    else:
        raise ValueError(f"split_line must be 'vertical' or 'horizontal', got {split_line!r}")
    return arr.mean(axis=axis), arr.std(axis=axis)


@dataclass(frozen=True)
class OverlapPoint:
    """Aggregate prediction for one window-position class.

    ``position`` counts the window pixels lying in the second (right or
    bottom) region along the split axis, from 0 (pure first region) to N
    (pure second region); ``overlap`` is the minority-region fraction
    min(position, N - position) / N.
    """

    position: int
    side: str  # 'first' or 'second': which region dominates the window
    overlap: float
    mean: float
    std: float
    count: int
    reference: float


@dataclass
class OverlapCurve:
    """Prediction-vs-overlap curve for one pattern, pooled across images."""

    pattern: PatternKind
    patch_size: int
    quantity: str  # 'length' or 'angle'
    points: list[OverlapPoint]

    @property
    def max_overlap(self) -> float:
        return max(p.overlap for p in self.points)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["position", "side", "overlap", "mean", "std", "count", "reference"])
            for p in self.points:
                writer.writerow(
                    [p.position, p.side, repr(p.overlap), repr(p.mean), repr(p.std), p.count, repr(p.reference)]
                )

    def plot_svg(self, path) -> None:
        import matplotlib

        matplotlib.use("Agg")
        from matplotlib import pyplot as plt

        xs = [p.position for p in self.points]
        means = np.array([p.mean for p in self.points])
        stds = np.array([p.std for p in self.points])
        refs = [p.reference for p in self.points]
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(xs, refs, "k-", label="linear reference")
        ax.plot(xs, means, "r-", label="mean prediction")
        ax.fill_between(xs, means - stds, means + stds, color="r", alpha=0.25)
        n = self.patch_size
        ticks = [0, n // 2, n]
        ax.set_xticks(ticks)
        ax.set_xticklabels([f"{min(t, n - t) / n:.0%}" for t in ticks])
        ax.set_xlabel("overlap (left/top side to right/bottom side)")
        ax.set_ylabel(self.quantity)
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def overlap_sweep(
    model,
    images,
    pattern: PatternKind,
    n: int = 31,
    first=None,
    second=None,
) -> OverlapCurve:
    """Sweep an N-window across images blurred with a two-region pattern.

    Every stride-1 window is predicted; windows are grouped by how many of
    their rows/columns lie in the second region, pooling over the direction
    parallel to the split and over all images.  ``n`` must be odd so the
    50/50 position is excluded and the minority overlap tops out at
    floor(N/2)/N.  The reference value for a class with k second-region
    columns is the area-weighted mix of the two region values.
    """
    pattern = PatternKind(pattern)
    if n % 2 == 0 or n < 1:
        raise ValueError(f"patch size must be odd and positive, got {n}")
    dflt_first, dflt_second = pattern.default_params()
    first = dflt_first if first is None else first
    second = dflt_second if second is None else second
    if pattern.varied_quantity == "length":
        v1, v2 = first.r, second.r
    else:
        v1, v2 = first.phi, second.phi

    values_by_pos: list[list[float]] = [[] for _ in range(n + 1)]
    n_images = 0
    for image in images:
        img = ensure_rgb(image)
        h, w = img.shape[0], img.shape[1]
        dim = w if pattern.split_line == "vertical" else h
        split = dim // 2
        if split < n or dim - split < n:
            raise DataError(
                f"image {h}x{w} has no pure-region window at patch size {n} "
                f"for pattern {pattern.value}"
            )
        grid = sliding_predict(model, img, n, stride=1)
        vals = grid.r if pattern.varied_quantity == "length" else grid.phi
        if pattern.split_line == "vertical":
            starts = np.arange(vals.shape[1])
        else:
            starts = np.arange(vals.shape[0])
        positions = np.clip(starts + n - split, 0, n)
        for idx, pos in enumerate(positions):
            col = vals[:, idx] if pattern.split_line == "vertical" else vals[idx, :]
            values_by_pos[int(pos)].extend(float(v) for v in col)
        n_images += 1
    if n_images == 0:
        raise ValueError("no images supplied")

    points = []
    for pos in range(n + 1):
        bucket = np.array(values_by_pos[pos])
        if bucket.size == 0:
            raise DataError(f"no window realizes overlap position {pos}")
        points.append(
            OverlapPoint(
                position=pos,
                side="first" if pos <= n // 2 else "second",
                overlap=min(pos, n - pos) / n,
                mean=float(bucket.mean()),
                std=float(bucket.std()),
                count=int(bucket.size),
                reference=v1 + (v2 - v1) * pos / n,
            )
        )
    return OverlapCurve(pattern=pattern, patch_size=n, quantity=pattern.varied_quantity, points=points)
