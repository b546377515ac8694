"""Patch-based regression CNN predicting normalized (length, angle) labels.

The network is a VGG16-style stack with a global-average-pool head so one
set of weights accepts any patch size above the architecture minimum: four
(optionally five) conv blocks, each followed by 2x2/stride-2 max pooling,
then GAP, two fully connected layers of width 2048, and a 2-wide sigmoid
output.  Dropping the fifth block lowers the minimum input size from 32 to
16 pixels.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from .dataset import Manifest, stable_hash64
from .errors import DivergenceError, SamplerExhausted
from .imgio import ensure_rgb, load_image
from .sampler import (
    Batch,
    BatchStream,
    PatchSchedule,
    batches_per_epoch,
    eligible_records,
    patch_size_for_epoch,
)

CHECKPOINT_FORMAT_VERSION = 1

_BASE_BLOCKS = ((64, 64), (128, 128), (256, 512, 512), (1024, 1024, 1024), (2048, 2048, 2048))
_BASE_FC = 2048


@dataclass(frozen=True)
class ArchitectureConfig:
    """Conv plan and head of the regression network.

    ``width_divisor`` scales every channel/FC width down uniformly; it
    exists for fast tests and stays 1 for real models.
    """

    include_block5: bool = True
    width_divisor: int = 1

    def __post_init__(self):
        if self.width_divisor < 1 or _BASE_BLOCKS[0][0] % self.width_divisor != 0:
            raise ValueError(f"width_divisor must divide {_BASE_BLOCKS[0][0]}, got {self.width_divisor}")

    @property
    def block_channels(self) -> tuple[tuple[int, ...], ...]:
        blocks = _BASE_BLOCKS if self.include_block5 else _BASE_BLOCKS[:4]
        return tuple(tuple(c // self.width_divisor for c in blk) for blk in blocks)

    @property
    def fc_width(self) -> int:
        return _BASE_FC // self.width_divisor

    @property
    def gap_width(self) -> int:
        return self.block_channels[-1][-1]

    @property
    def min_input_size(self) -> int:
        return 32 if self.include_block5 else 16

    def to_json_dict(self) -> dict:
        return {"include_block5": self.include_block5, "width_divisor": self.width_divisor}

    @classmethod
    def from_json_dict(cls, obj: dict) -> "ArchitectureConfig":
        return cls(
            include_block5=bool(obj["include_block5"]),
            width_divisor=int(obj.get("width_divisor", 1)),
        )


def output_shape(n: int, config: ArchitectureConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Layer-by-layer output dimensions for an N x N input.

    Spatial sizes halve (floor) after each block's pooling.  Raises
    ``ValueError`` for N below the architecture minimum or if any spatial
    dimension would collapse to zero.
    """
    if n < config.min_input_size:
        raise ValueError(
            f"patch size {n} below architecture minimum {config.min_input_size}"
        )
    shapes: list[tuple[str, tuple[int, ...]]] = [("input", (n, n, 3))]
    size = n
    for bi, channels in enumerate(config.block_channels, start=1):
        size = size // 2
        if size == 0:
            raise ValueError(f"spatial dimension collapses to zero at block {bi}")
        shapes.append((f"block{bi}", (size, size, channels[-1])))
    shapes.append(("gap", (1, config.gap_width)))
    shapes.append(("fc1", (config.fc_width,)))
    shapes.append(("fc2", (config.fc_width,)))
    shapes.append(("output", (2,)))
    return shapes


class BlurRegressor(nn.Module):
    """The conv stack plus GAP head; input (B, 3, N, N), output (B, 2)."""

    def __init__(self, config: ArchitectureConfig):
        super().__init__()
        self.config = config
        layers: list[nn.Module] = []
        cin = 3
        for channels in config.block_channels:
            for cout in channels:
                layers.append(nn.Conv2d(cin, cout, kernel_size=3, padding=1))
                layers.append(nn.ReLU(inplace=True))
                cin = cout
            layers.append(nn.MaxPool2d(kernel_size=2, stride=2))
        self.features = nn.Sequential(*layers)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.head = nn.Sequential(
            nn.Linear(config.gap_width, config.fc_width),
            nn.ReLU(inplace=True),
            nn.Linear(config.fc_width, config.fc_width),
            nn.ReLU(inplace=True),
            nn.Linear(config.fc_width, 2),
            nn.Sigmoid(),
        )
        self._reset_parameters()

    def _reset_parameters(self):
        # Variance-scaling init for the rectified layers; the sigmoid output
        # layer gets Xavier so it starts near the middle of its range.
        modules = [m for m in self.modules() if isinstance(m, (nn.Conv2d, nn.Linear))]
        for m in modules[:-1]:
            nn.init.kaiming_normal_(m.weight, nonlinearity="relu")
            nn.init.zeros_(m.bias)
        out = modules[-1]
        nn.init.xavier_uniform_(out.weight)
        nn.init.zeros_(out.bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] < self.config.min_input_size or x.shape[-2] < self.config.min_input_size:
            raise ValueError(
                f"input {tuple(x.shape[-2:])} below architecture minimum "
                f"{self.config.min_input_size}"
            )
        # center [0, 1] inputs: a DC offset through a deep plain conv stack
        # inflates activations and pins the sigmoid outputs early in training
        feats = self.features(x - 0.5)
        pooled = self.pool(feats).flatten(1)
        return self.head(pooled)


@dataclass(frozen=True)
class TrainingConfig:
    """Training hyperparameters and the convergence rule."""

    schedule: PatchSchedule
    batch_size: int = 32
    learning_rate: float = 1e-4
    epsilon: float = 1e-12
    patience: int = 15
    max_epochs: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not (self.epsilon > 0):
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")
        if self.max_epochs < self.patience:
            raise ValueError(
                f"max_epochs {self.max_epochs} must be >= patience {self.patience}"
            )


def _patches_to_tensor(patches: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(patches.transpose(0, 3, 1, 2))).float()


class ModelCheckpoint:
    """Learned parameters plus the metadata needed to reuse them."""

    def __init__(self, arch: ArchitectureConfig, state: dict, meta: dict):
        self.arch = arch
        self.state = state
        self.meta = meta
        self._net: BlurRegressor | None = None

    @property
    def n_max(self) -> int:
        return int(self.meta["n_max"])

    @property
    def checkpoint_id(self) -> str:
        return self.meta.get("label", "unlabeled")

    def net(self) -> BlurRegressor:
        if self._net is None:
            net = BlurRegressor(self.arch)
            net.load_state_dict(self.state)
            net.eval()
            self._net = net
        return self._net

    def predict_batch(self, patches: np.ndarray, chunk: int = 256) -> np.ndarray:
        """Normalized (l_r, l_phi) predictions for a (B, N, N, C) stack."""
        patches = np.asarray(patches, dtype=np.float64)
        if patches.ndim == 3:
            patches = patches[:, :, :, None]
        if patches.shape[-1] == 1:
            patches = np.repeat(patches, 3, axis=-1)
        if patches.shape[-1] != 3:
            raise ValueError(f"patches must have 1 or 3 channels, got {patches.shape[-1]}")
        net = self.net()
        outs = []
        with torch.no_grad():
            for start in range(0, len(patches), chunk):
                x = _patches_to_tensor(patches[start : start + chunk])
                outs.append(net(x).double().numpy())
        return np.concatenate(outs, axis=0)

    def predict(self, patch: np.ndarray) -> tuple[float, float]:
        """Normalized labels for a single N x N patch."""
        out = self.predict_batch(np.asarray(patch)[None])
        return float(out[0, 0]), float(out[0, 1])

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        torch.save(
            {
                "format_version": CHECKPOINT_FORMAT_VERSION,
                "arch": self.arch.to_json_dict(),
                "state": self.state,
                "meta": self.meta,
            },
            path,
        )
        sidecar = {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "arch": self.arch.to_json_dict(),
            "meta": self.meta,
        }
        Path(str(path) + ".json").write_text(
            json.dumps(sidecar, indent=2, sort_keys=True) + "\n"
        )
        return path

    @classmethod
    def load(cls, path) -> "ModelCheckpoint":
        blob = torch.load(path, map_location="cpu", weights_only=False)
        if blob.get("format_version") != CHECKPOINT_FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint version {blob.get('format_version')!r}")
        return cls(
            arch=ArchitectureConfig.from_json_dict(blob["arch"]),
            state=blob["state"],
            meta=blob["meta"],
        )


def _check_finite(value: float, context: str) -> None:
    if not math.isfinite(value):
        raise DivergenceError(f"loss became non-finite ({value}) {context}")


def _validation_loss(
    net: BlurRegressor, manifest: Manifest, n: int, seed: int, epoch: int
) -> float | None:
    """MSE over one deterministic crop per admissible validation record."""
    records = eligible_records(manifest.split_records("val"), n)
    if not records:
        return None
    rng = np.random.default_rng(stable_hash64("val", seed, epoch) & 0xFFFFFFFFFFFFFFFF)
    patches = np.empty((len(records), n, n, 3), dtype=np.float64)
    labels = np.empty((len(records), 2), dtype=np.float64)
    for i, rec in enumerate(records):
        img = ensure_rgb(load_image(manifest.resolve_path(rec)))
        top = int(rng.integers(rec.height - n + 1))
        left = int(rng.integers(rec.width - n + 1))
        patches[i] = img[top : top + n, left : left + n]
        labels[i] = rec.labels
    with torch.no_grad():
        pred = net(_patches_to_tensor(patches))
        loss = nn.functional.mse_loss(pred, torch.from_numpy(labels).float())
    return float(loss)


def train(
    manifest: Manifest,
    arch: ArchitectureConfig,
    cfg: TrainingConfig,
    loss_log_path=None,
    label: str | None = None,
    progress=None,
) -> ModelCheckpoint:
    """Train the network on the manifest's train split.

    Epoch ``e`` uses patch size ``schedule[e mod len(schedule)]`` and runs
    ceil(admissible_records / batch_size) batches of rejection-sampled
    crops, minimizing MSE between predicted and stored normalized labels.
    Stops when the epoch loss changes by less than ``epsilon`` for
    ``patience`` consecutive epochs, or at ``max_epochs``.
    """
    for size in cfg.schedule.sizes:
        if size < arch.min_input_size:
            raise ValueError(
                f"schedule size {size} below architecture minimum {arch.min_input_size}"
            )
    if manifest.n_max != cfg.schedule.n_max:
        raise ValueError(
            f"manifest N_max={manifest.n_max} must equal the largest schedule size "
            f"{cfg.schedule.n_max}: labels would denormalize on the wrong scale"
        )
    train_records = manifest.split_records("train")
    if not train_records:
        raise SamplerExhausted("manifest has no training records")
    for size in sorted(set(cfg.schedule.sizes)):
        if not eligible_records(train_records, size):
            raise SamplerExhausted(f"no training record admissible at patch size {size}")

    torch.manual_seed(cfg.seed)
    net = BlurRegressor(arch)
    optimizer = torch.optim.Adam(net.parameters(), lr=cfg.learning_rate)
    stream = BatchStream(manifest, seed=stable_hash64("batches", cfg.seed), split="train")

    history: list[float] = []
    val_history: list[float | None] = []
    sizes_used: list[int] = []
    streak = 0
    converged = False
    log_rows: list[tuple] = []

    for epoch in range(cfg.max_epochs):
        n = patch_size_for_epoch(cfg.schedule, epoch)
        n_batches = batches_per_epoch(train_records, n, cfg.batch_size)
        net.train()
        total = 0.0
        for b in range(n_batches):
            batch: Batch = stream.next_batch(n, cfg.batch_size)
            x = _patches_to_tensor(batch.patches)
            y = torch.from_numpy(batch.labels).float()
            pred = net(x)
            loss = nn.functional.mse_loss(pred, y)
            value = float(loss.detach())
            _check_finite(value, f"at epoch {epoch}, batch {b}, patch size {n}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += value
        epoch_loss = total / n_batches
        _check_finite(epoch_loss, f"averaging epoch {epoch}")
        net.eval()
        val_loss = _validation_loss(net, manifest, n, cfg.seed, epoch)
        history.append(epoch_loss)
        val_history.append(val_loss)
        sizes_used.append(n)
        log_rows.append((epoch, n, epoch_loss, "" if val_loss is None else val_loss))
        if progress is not None:
            progress(epoch, n, epoch_loss, val_loss)
        if epoch > 0 and abs(history[-1] - history[-2]) < cfg.epsilon:
            streak += 1
        else:
            streak = 0
        if streak >= cfg.patience:
            converged = True
            break

    if loss_log_path is not None:
        with open(loss_log_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "patch_size", "loss", "val_loss"])
            writer.writerows(log_rows)

    net.eval()
    meta = {
        "schedule": list(cfg.schedule.sizes),
        "n_max": cfg.schedule.n_max,
        "epochs_run": len(history),
        "final_loss": history[-1],
        "loss_history": history,
        "val_history": val_history,
        "patch_sizes_used": sizes_used,
        "converged": converged,
        "batch_size": cfg.batch_size,
        "learning_rate": cfg.learning_rate,
        "seed": cfg.seed,
        "label": label or ",".join(str(s) for s in cfg.schedule.sizes),
    }
    return ModelCheckpoint(arch=arch, state=net.state_dict(), meta=meta)
