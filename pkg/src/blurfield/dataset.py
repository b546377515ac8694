"""Deterministic blurred-dataset generation with label normalization.

Labels map (r, phi) affinely onto [0, 1]^2 so a sigmoid output layer can
use its full range:

    l_r   = (r - 1) / (r_max - 1),   r_max = min(N_max * sqrt(2), 100)
    l_phi = (phi + 90) / 180

where N_max is the largest patch size the model will be trained on; the
sqrt(2) factor keeps diagonal blurs that fit an N_max patch representable.

Every random choice derives from a per-image seed hashed from the global
seed and the source id, so regeneration is byte-identical and independent
of iteration order.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .engine import NOISE_NONE, NoiseConfig, blur_uniform
from .errors import DataError
from .imgio import IMAGE_SUFFIXES, load_image, save_image
from .kernels import BlurParams, make_kernel

MANIFEST_FORMAT_VERSION = 1
R_ABS_MAX = 100.0
SPLITS = ("train", "val", "test")


def r_max_for(n_max: int) -> float:
    """Largest representable blur length for a given maximum patch size."""
    if n_max < 2:
        raise ValueError(f"N_max must be >= 2, got {n_max}")
    return min(n_max * math.sqrt(2.0), R_ABS_MAX)


def normalize_labels(params: BlurParams, n_max: int) -> tuple[float, float]:
    """Map (r, phi) to normalized labels in [0, 1]^2."""
    r_max = r_max_for(n_max)
    if not (1.0 <= params.r <= r_max):
        raise ValueError(f"blur length {params.r} outside [1, {r_max}] for N_max={n_max}")
    if not (-90.0 <= params.phi < 90.0):
        raise ValueError(f"angle {params.phi} outside [-90, 90)")
    l_r = (params.r - 1.0) / (r_max - 1.0)
    l_phi = (params.phi + 90.0) / 180.0
    return l_r, l_phi


def denormalize_labels(labels, n_max: int) -> BlurParams:
    """Exact inverse of :func:`normalize_labels`."""
    l_r, l_phi = float(labels[0]), float(labels[1])
    if not (0.0 <= l_r <= 1.0 and 0.0 <= l_phi <= 1.0):
        raise ValueError(f"labels ({l_r}, {l_phi}) outside [0, 1]^2")
    r_max = r_max_for(n_max)
    r = 1.0 + l_r * (r_max - 1.0)
    phi = l_phi * 180.0 - 90.0
    if phi >= 90.0:  # l_phi == 1.0 canonicalizes back to the same line
        phi = -90.0
    return BlurParams(r, phi)


def denormalize_arrays(l_r, l_phi, n_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized label denormalization for prediction post-processing."""
    r_max = r_max_for(n_max)
    r = 1.0 + np.asarray(l_r, dtype=np.float64) * (r_max - 1.0)
    phi = np.asarray(l_phi, dtype=np.float64) * 180.0 - 90.0
    return r, phi


def stable_hash64(*parts) -> int:
    """Platform-independent 64-bit hash of the stringified parts."""
    blob = "\x1f".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "big")


def assign_split(source_id: str, split_ratios) -> str:
    """Deterministically assign a source image to train/val/test."""
    u = stable_hash64("split", source_id) / 2.0**64
    train, val, test = split_ratios
    if u < train:
        return "train"
    if u < train + val:
        return "val"
    return "test"


@dataclass(frozen=True)
class SampleRecord:
    """Provenance of one blurred image."""

    source_id: str
    params: BlurParams
    labels: tuple[float, float]
    blurred_path: str
    split: str
    seed: int
    height: int
    width: int

    def to_json_dict(self) -> dict:
        return {
            "source_id": self.source_id,
            "r": self.params.r,
            "phi": self.params.phi,
            "label_r": self.labels[0],
            "label_phi": self.labels[1],
            "blurred_path": self.blurred_path,
            "split": self.split,
            "seed": self.seed,
            "height": self.height,
            "width": self.width,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "SampleRecord":
        return cls(
            source_id=obj["source_id"],
            params=BlurParams(obj["r"], obj["phi"]),
            labels=(float(obj["label_r"]), float(obj["label_phi"])),
            blurred_path=obj["blurred_path"],
            split=obj["split"],
            seed=int(obj["seed"]),
            height=int(obj["height"]),
            width=int(obj["width"]),
        )


@dataclass
class Manifest:
    """Dataset index: records plus the generator settings that made them."""

    n_max: int
    records: list[SampleRecord]
    settings: dict
    format_version: int = MANIFEST_FORMAT_VERSION
    base_dir: Path | None = field(default=None, compare=False)

    def __post_init__(self):
        r_max = r_max_for(self.n_max)
        for rec in self.records:
            if rec.params.r > r_max:
                raise DataError(
                    f"record {rec.source_id} has r={rec.params.r} > r_max={r_max}"
                )
            if rec.split not in SPLITS:
                raise DataError(f"record {rec.source_id} has unknown split {rec.split!r}")

    def resolve_path(self, record: SampleRecord) -> Path:
        path = Path(record.blurred_path)
        if path.is_absolute() or self.base_dir is None:
            return path
        return self.base_dir / path

    def split_records(self, split: str | None) -> list[SampleRecord]:
        if split is None:
            return list(self.records)
        return [r for r in self.records if r.split == split]

    def to_json(self) -> str:
        obj = {
            "format_version": self.format_version,
            "n_max": self.n_max,
            "settings": self.settings,
            "records": [r.to_json_dict() for r in self.records],
        }
        return json.dumps(obj, indent=2, sort_keys=True) + "\n"

    def save(self, out_dir) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        manifest_path = out_dir / "manifest.json"
        manifest_path.write_text(self.to_json())
        with open(out_dir / "index.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                [
                    "source_id", "split", "r", "phi", "label_r", "label_phi",
                    "blurred_path", "seed", "height", "width",
                ]
            )
            for rec in self.records:
                writer.writerow(
                    [
                        rec.source_id, rec.split, repr(rec.params.r), repr(rec.params.phi),
                        repr(rec.labels[0]), repr(rec.labels[1]),
                        rec.blurred_path, rec.seed, rec.height, rec.width,
                    ]
                )
        self.base_dir = out_dir
        return manifest_path

    @classmethod
    def load(cls, manifest_path) -> "Manifest":
        manifest_path = Path(manifest_path)
        obj = json.loads(manifest_path.read_text())
        if obj.get("format_version") != MANIFEST_FORMAT_VERSION:
            raise DataError(
                f"unsupported manifest format_version {obj.get('format_version')!r}"
            )
        return cls(
            n_max=int(obj["n_max"]),
            records=[SampleRecord.from_json_dict(r) for r in obj["records"]],
            settings=obj["settings"],
            base_dir=manifest_path.parent,
        )


def _list_corpus(corpus_dir: Path) -> list[Path]:
    files = sorted(
        p for p in corpus_dir.iterdir()
        if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
    )
    if not files:
        raise DataError(f"corpus {corpus_dir} contains no readable images")
    stems = [p.stem for p in files]
    if len(set(stems)) != len(stems):
        raise DataError("corpus filenames must have unique stems")
    return files


def generate_dataset(
    corpus_dir,
    params_set,
    out_dir,
    seed: int,
    n_max: int,
    split_ratios=(0.8, 0.1, 0.1),
    noise: NoiseConfig | None = None,
    enumerate_all: bool = False,
    extra_settings: dict | None = None,
) -> Manifest:
    """Blur a local image corpus and write images plus a manifest.

    Each source image draws one BlurParams from ``params_set`` using a seed
    hashed from (seed, source_id), or enumerates the whole set when
    ``enumerate_all`` is on.  Splits are assigned by hashing the source id
    against ``split_ratios``, so no source ever lands in two splits.
    """
    corpus_dir = Path(corpus_dir)
    out_dir = Path(out_dir)
    params_list = sorted(set(params_set))
    if not params_list:
        raise ValueError("params_set must not be empty")
    ratios = tuple(float(x) for x in split_ratios)
    if len(ratios) != 3 or any(x < 0 for x in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must be 3 non-negative values summing to 1, got {ratios}")
    r_max = r_max_for(n_max)
    for p in params_list:
        if p.r > r_max:
            raise ValueError(f"params {p} exceed r_max={r_max} for N_max={n_max}")

    files = _list_corpus(corpus_dir)
    images_dir = out_dir / "images"
    images_dir.mkdir(parents=True, exist_ok=True)

    records: list[SampleRecord] = []
    for path in files:
        sid = path.stem
        per_image_seed = stable_hash64("sample", seed, sid)
        rng = np.random.default_rng(per_image_seed)
        if enumerate_all:
            chosen = list(enumerate(params_list))
        else:
            idx = int(rng.integers(len(params_list)))
            chosen = [(idx, params_list[idx])]
        img = load_image(path)
        h, w = img.shape[0], img.shape[1]
        split = assign_split(sid, ratios)
        img_noise = None
        if noise is not None and noise.active:
            img_noise = NoiseConfig(
                kind=noise.kind,
                sigma=noise.sigma,
                seed=stable_hash64("noise", seed, sid),
            )
        for k, params in chosen:
            blurred = blur_uniform(img, make_kernel(params), img_noise)
            name = f"{sid}.png" if not enumerate_all else f"{sid}__{k:04d}.png"
            save_image(images_dir / name, blurred)
            records.append(
                SampleRecord(
                    source_id=sid,
                    params=params,
                    labels=normalize_labels(params, n_max),
                    blurred_path=f"images/{name}",
                    split=split,
                    seed=per_image_seed,
                    height=h,
                    width=w,
                )
            )

    settings = {
        "seed": seed,
        "split_ratios": list(ratios),
        "enumerate_all": enumerate_all,
        "noise": {
            "kind": noise.kind if noise is not None else NOISE_NONE,
            "sigma": noise.sigma if noise is not None else 0.0,
            "seed": noise.seed if noise is not None else 0,
        },
        "params": [[p.r, p.phi] for p in params_list],
    }
    if extra_settings:
        settings.update(extra_settings)
    manifest = Manifest(n_max=n_max, records=records, settings=settings)
    manifest.save(out_dir)
    return manifest
