"""PNG encoding of generated images and mosaic grids."""

from __future__ import annotations

import io

import numpy as np
from PIL import Image


def to_uint8(image: np.ndarray) -> np.ndarray:
    """[-1, 1] -> [0, 255], rounded half to even."""
    arr = np.asarray(image, dtype=np.float64)
    scaled = (arr + 1.0) / 2.0 * 255.0
    return np.clip(np.rint(scaled), 0, 255).astype(np.uint8)


def encode_png(image: np.ndarray) -> bytes:
    """Grayscale PNG bytes for a (1, H, W) or (H, W) image in [-1, 1]."""
    arr = np.asarray(image)
    if arr.ndim == 3:
        if arr.shape[0] != 1:
            raise ValueError(f"PNG export needs a single-channel image, got shape {arr.shape}")
        arr = arr[0]
    buf = io.BytesIO()
    Image.fromarray(to_uint8(arr), mode="L").save(buf, format="PNG")
    return buf.getvalue()


def mosaic(images: np.ndarray, cols: int, pad: int = 1) -> np.ndarray:
    """Row-major grid of (n, 1, H, W) images in [-1, 1]; background fill -1."""
    n, _, h, w = images.shape
    rows = (n + cols - 1) // cols
    grid = np.full((1, rows * (h + pad) + pad, cols * (w + pad) + pad), -1.0, dtype=np.float32)
    for i, img in enumerate(images):
        r, c = divmod(i, cols)
        y, x = pad + r * (h + pad), pad + c * (w + pad)
        grid[0, y:y + h, x:x + w] = img[0]
    return grid
