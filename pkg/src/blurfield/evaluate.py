"""Coefficient-of-determination scoring across patch sizes.

R^2 = 1 - SS_res / SS_tot.  A perfect predictor scores 1, predicting the
data average scores 0, and worse-than-average predictions go negative
without bound.  Scores are computed on denormalized (r, phi); since both
labels are affine maps of those values, the score is identical either way.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import Manifest, denormalize_arrays, stable_hash64
from .errors import DataError
from .imgio import ensure_rgb, load_image
from .sampler import eligible_records


def r2(y_true, y_pred) -> float:
    """Coefficient of determination of predictions against ground truth.

    Raises:
        ValueError: on length mismatch, fewer than two samples, or zero
            variance in ``y_true`` (the score is undefined there).
    """
    yt = np.asarray(y_true, dtype=np.float64).ravel()
    yp = np.asarray(y_pred, dtype=np.float64).ravel()
    if yt.shape != yp.shape:
        raise ValueError(f"length mismatch: {yt.shape} vs {yp.shape}")
    if yt.size < 2:
        raise ValueError("need at least two samples")
    ss_tot = float(np.sum((yt - yt.mean()) ** 2))
    if ss_tot == 0.0:
        raise ValueError("y_true has zero variance; R^2 undefined")
    ss_res = float(np.sum((yt - yp) ** 2))
    return 1.0 - ss_res / ss_tot


@dataclass(frozen=True)
class EvalCell:
    """Scores for one tested patch size."""

    patch_size: int
    count: int
    r2_length: float
    r2_angle: float


@dataclass
class EvalMatrix:
    """One row of the patch-size robustness table: a model across sizes."""

    row_label: str
    cells: list[EvalCell]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["training_config", "patch_size", "count", "r2_length", "r2_angle"])
            for c in self.cells:
                writer.writerow(
                    [self.row_label, c.patch_size, c.count, repr(c.r2_length), repr(c.r2_angle)]
                )

    def format_table(self) -> str:
        """Two stacked sections (length then angle), sizes as columns."""
        sizes = [c.patch_size for c in self.cells]
        header = "Training Config.  " + "".join(f"{s:>10d}" for s in sizes)
        lines = ["Length r", header]
        lines.append(f"{self.row_label:<18s}" + "".join(f"{c.r2_length:>10.3f}" for c in self.cells))
        lines.append("")
        lines.append("Angle phi")
        lines.append(header)
        lines.append(f"{self.row_label:<18s}" + "".join(f"{c.r2_angle:>10.3f}" for c in self.cells))
        return "\n".join(lines) + "\n"


def eval_matrix(
    model,
    manifest: Manifest,
    patch_sizes,
    seed: int = 0,
    split: str | None = "test",
) -> EvalMatrix:
    """Score a model at several patch sizes on a manifest split.

    For each size N, every record admissible at N contributes one uniform
    random crop (seeded from the global seed, N, and the record id);
    records whose blur does not fit the patch are excluded, mirroring
    training-time filtering.
    """
    records = manifest.split_records(split)
    cells: list[EvalCell] = []
    for n in patch_sizes:
        n = int(n)
        included = eligible_records(records, n)
        if len(included) < 2:
            raise DataError(
                f"patch size {n} admits {len(included)} records in split {split!r}; "
                "need at least 2 for R^2"
            )
        patches = np.empty((len(included), n, n, 3), dtype=np.float64)
        true_r = np.empty(len(included))
        true_phi = np.empty(len(included))
        for i, rec in enumerate(included):
            rng = np.random.default_rng(
                stable_hash64("eval", seed, n, rec.source_id) & 0xFFFFFFFFFFFFFFFF
            )
            top = int(rng.integers(rec.height - n + 1))
            left = int(rng.integers(rec.width - n + 1))
            img = ensure_rgb(load_image(manifest.resolve_path(rec)))
            patches[i] = img[top : top + n, left : left + n]
            true_r[i] = rec.params.r
            true_phi[i] = rec.params.phi
        preds = model.predict_batch(patches)
        pred_r, pred_phi = denormalize_arrays(preds[:, 0], preds[:, 1], model.n_max)
        cells.append(
            EvalCell(
                patch_size=n,
                count=len(included),
                r2_length=r2(true_r, pred_r),
                r2_angle=r2(true_phi, pred_phi),
            )
        )
    label = getattr(model, "checkpoint_id", type(model).__name__)
    return EvalMatrix(row_label=label, cells=cells)


def save_matrix(matrix: EvalMatrix, out_dir) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "eval-matrix.csv"
    matrix.to_csv(csv_path)
    table_path = out_dir / "eval-matrix.txt"
    table_path.write_text(matrix.format_table())
    return csv_path, table_path
