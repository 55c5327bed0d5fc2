"""PNG I/O and resizing. In memory an image is H x W x 3 float32 in [0, 1]."""
from __future__ import annotations

import os
import tempfile
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image

PathLike = Union[str, os.PathLike]


def resize_bilinear(img: np.ndarray, size) -> np.ndarray:
    """Bilinear resize with half-pixel centres (``align_corners=False``), no antialiasing.

    ``size`` is an int (square) or ``(height, width)``. Aspect ratio is not kept.
    """
    out_h, out_w = (size, size) if np.isscalar(size) else size
    img = np.asarray(img, dtype=np.float32)
    in_h, in_w = img.shape[:2]

    def axis(n_out, n_in):
        src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0.0, n_in - 1)
        lo = np.floor(src).astype(np.int64)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, (src - lo).astype(np.float32)

    y0, y1, wy = axis(out_h, in_h)
    x0, x1, wx = axis(out_w, in_w)
    wy = wy[:, None, None] if img.ndim == 3 else wy[:, None]
    wx = wx[None, :, None] if img.ndim == 3 else wx[None, :]
    top = img[y0][:, x0] * (1 - wx) + img[y0][:, x1] * wx
    bot = img[y1][:, x0] * (1 - wx) + img[y1][:, x1] * wx
    return (top * (1 - wy) + bot * wy).astype(np.float32)


def load_image(path: PathLike) -> np.ndarray:
    """Decode any PIL-readable file to an H x W x 3 float image in [0, 1]."""
    with Image.open(path) as im:
        im = im.convert("RGB")
        arr = np.asarray(im, dtype=np.uint8)
    return arr.astype(np.float32) / 255.0


def load_image8(path: PathLike) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()


def save_png(image8: np.ndarray, path: PathLike) -> Path:
    """Write an 8-bit H x W x 3 array as PNG atomically (temp file + rename)."""
    arr = np.asarray(image8)
    if arr.dtype != np.uint8 or arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"save_png needs an H x W x 3 uint8 array, got {arr.dtype} {arr.shape}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".png.tmp")
    os.close(fd)
    try:
        Image.fromarray(arr).save(tmp, format="PNG")
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)
    return path
