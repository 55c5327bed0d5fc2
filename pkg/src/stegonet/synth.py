"""Seeded synthetic RGB images for smoke tests and desk-scale training.

Each image is a smooth colour field with a few soft-edged ellipses and
rectangles on top and a little mid-frequency texture. No real photo corpus
ships with the package, so tests and the README demo use these.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .images import resize_bilinear, save_png
from .metrics import quantize


def _smooth_field(rng: np.random.Generator, size: int, grid: int, channels: int) -> np.ndarray:
    coarse = rng.random((grid, grid, channels)).astype(np.float32)
    return resize_bilinear(coarse, size)


def synth_image(rng: np.random.Generator, size: int = 64) -> np.ndarray:
    """One H x W x 3 float image in [0, 1]."""
    img = _smooth_field(rng, size, int(rng.integers(2, 5)), 3)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float32) + 0.5
    for _ in range(int(rng.integers(2, 6))):
        color = rng.random(3).astype(np.float32)
        cy, cx = rng.uniform(0, size, 2)
        ry, rx = rng.uniform(size * 0.08, size * 0.35, 2)
        if rng.random() < 0.5:
            d = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2
            edge = np.sqrt(d)
        else:
            edge = np.maximum(np.abs(yy - cy) / ry, np.abs(xx - cx) / rx)
        # soft boundary about one pixel wide
        mask = np.clip((1.0 - edge) * min(ry, rx), 0.0, 1.0)[..., None]
        img = img * (1.0 - mask) + color * mask
    texture = _smooth_field(rng, size, max(2, size // 4), 1) - 0.5
    img = img + 0.08 * texture
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def synth_images(n: int, size: int = 64, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.stack([synth_image(rng, size) for _ in range(n)])


def write_dataset(out_dir, n: int, size: int = 64, seed: int = 0) -> list[Path]:
    """Write ``n`` synthetic PNGs named ``img_00000.png`` ... into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, img in enumerate(synth_images(n, size, seed)):
        path = out_dir / f"img_{i:05d}.png"
        save_png(quantize(img), path)
        paths.append(path)
    return paths
