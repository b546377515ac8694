"""PNG-backed image loading and saving.

Images are exchanged with the rest of the package as float64 arrays in
[0, 1]: grayscale as (H, W), color as (H, W, 3).
"""

from __future__ import annotations

import numpy as np
from PIL import Image

from .errors import DataError

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


def load_image(path) -> np.ndarray:
    """Load an image file as float64 in [0, 1]; grayscale stays 2D."""
    try:
        with Image.open(path) as im:
            if im.mode in ("L", "I;16", "I"):
                arr = np.asarray(im.convert("L"), dtype=np.float64)
            else:
                arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    except FileNotFoundError:
        raise
    except OSError as exc:
        raise DataError(f"unreadable image {path}: {exc}") from exc
    return arr / 255.0


def save_image(path, image: np.ndarray) -> None:
    """Quantize a [0, 1] float image to 8 bits and write a PNG."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    data = np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(data).save(path, format="PNG")


def ensure_rgb(image: np.ndarray) -> np.ndarray:
    """Replicate grayscale to 3 channels; pass 3-channel images through."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 2:
        return np.repeat(arr[:, :, None], 3, axis=2)
    if arr.ndim == 3 and arr.shape[2] == 1:
        return np.repeat(arr, 3, axis=2)
    if arr.ndim == 3 and arr.shape[2] == 3:
        return arr
    raise DataError(f"cannot interpret shape {arr.shape} as an image")
