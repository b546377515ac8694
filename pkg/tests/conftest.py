"""Shared fixtures and synthetic-image helpers."""

import numpy as np
import pytest

from blurfield.dataset import generate_dataset
from blurfield.imgio import save_image
from blurfield.kernels import BlurParams


def textured_image(rng: np.random.Generator, height: int, width: int, channels: int = 3) -> np.ndarray:
    """Random image dominated by broadband detail with mild structure on top.

    Broadband content is what carries a blur's directional signature, so
    white noise forms the base; a few weak oriented waves and smooth blobs
    add photograph-like structure without letting any single orientation
    dominate (a strongly oriented texture masquerades as motion blur).
    """
    base = rng.random((height, width, channels))
    yy, xx = np.mgrid[0:height, 0:width]
    for _ in range(10):
        angle = rng.uniform(0, np.pi)
        freq = rng.uniform(0.05, 0.45)
        phase = rng.uniform(0, 2 * np.pi)
        wave = np.sin((np.cos(angle) * xx + np.sin(angle) * yy) * freq + phase)
        base += rng.uniform(0.05, 0.25) * wave[:, :, None]
    for _ in range(3):
        cy, cx = rng.integers(0, height), rng.integers(0, width)
        sy, sx = rng.uniform(2, height / 2), rng.uniform(2, width / 2)
        blob = np.exp(-(((yy - cy) / sy) ** 2 + ((xx - cx) / sx) ** 2))
        base += rng.uniform(-0.4, 0.4) * blob[:, :, None]
    lo, hi = base.min(), base.max()
    img = (base - lo) / (hi - lo)
    return img if channels == 3 else img[:, :, 0]


def write_corpus(directory, count: int, size=(48, 48), seed: int = 0) -> list:
    """Write ``count`` synthetic PNG sources and return their paths."""
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = []
    for i in range(count):
        img = textured_image(rng, size[0], size[1])
        path = directory / f"src{i:04d}.png"
        save_image(path, img)
        paths.append(path)
    return paths


@pytest.fixture(scope="session")
def tiny_manifest(tmp_path_factory):
    """Small all-train dataset usable at patch size 16 (N_max = 16)."""
    root = tmp_path_factory.mktemp("tinyds")
    write_corpus(root / "corpus", 10, size=(24, 24), seed=7)
    params = [
        BlurParams(1, 0),
        BlurParams(5, 0),
        BlurParams(9, 45),
        BlurParams(7, -60),
        BlurParams(13, 30),
    ]
    return generate_dataset(
        corpus_dir=root / "corpus",
        params_set=params,
        out_dir=root / "data",
        seed=11,
        n_max=16,
        split_ratios=(1.0, 0.0, 0.0),
    )
