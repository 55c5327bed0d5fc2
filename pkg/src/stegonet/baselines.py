"""k-bit LSB substitution: the secret's top k bits replace the cover's low k bits."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from . import metrics


def _check_k(k: int) -> int:
    if not 1 <= int(k) <= 8:
        raise ValueError(f"k must be in 1..8, got {k}")
    return int(k)


def _as_u8(img: np.ndarray) -> np.ndarray:
    arr = np.asarray(img)
    if arr.dtype != np.uint8:
        raise TypeError(f"expected a uint8 image, got {arr.dtype}")
    return arr


def lsb_embed(cover: np.ndarray, secret: np.ndarray, k: int) -> np.ndarray:
    k = _check_k(k)
    cover, secret = _as_u8(cover), _as_u8(secret)
    if cover.shape != secret.shape:
        raise ValueError(f"cover {cover.shape} and secret {secret.shape} differ in shape")
    keep = np.uint8((0xFF << k) & 0xFF)
    return (cover & keep) | (secret >> np.uint8(8 - k))


def lsb_extract(stego: np.ndarray, k: int) -> np.ndarray:
    """Recover the secret's top k bits; the remaining low bits are zero."""
    k = _check_k(k)
    stego = _as_u8(stego)
    low = np.uint8((1 << k) - 1)
    return ((stego & low).astype(np.uint16) << (8 - k)).astype(np.uint8)


class LsbSystem:
    """k-bit LSB with the float-image interface used by :func:`metrics.evaluate`."""

    def __init__(self, k: int):
        self.k = _check_k(k)

    def embed(self, cover: np.ndarray, secret: np.ndarray) -> np.ndarray:
        stego = lsb_embed(metrics.quantize(cover), metrics.quantize(secret), self.k)
        return metrics.dequantize(stego)

    def extract(self, stego: np.ndarray) -> np.ndarray:
        return metrics.dequantize(lsb_extract(metrics.quantize(stego), self.k))


def lsb_report(covers: Sequence[np.ndarray], secrets: Sequence[np.ndarray], k: int, n_pairs: int) -> metrics.MetricsReport:
    """Per-pair metrics for k-bit LSB, relative capacity column = k."""
    k = _check_k(k)
    if n_pairs < 1 or n_pairs > min(len(covers), len(secrets)):
        raise ValueError(f"n_pairs={n_pairs} outside 1..{min(len(covers), len(secrets))}")
    report = metrics.MetricsReport(label=f"{k}-bit LSB")
    for idx in range(n_pairs):
        c8, s8 = metrics.quantize(covers[idx]), metrics.quantize(secrets[idx])
        stego = lsb_embed(c8, s8, k)
        rec = metrics.StegoRecord(c8, s8, stego, lsb_extract(stego, k), idx)
        rel = metrics.relative_capacity(s8.shape, c8.shape, bits_per_sample=k)
        report.rows.append(metrics.PairMetrics.from_record(rec, rel))
    return report


def lsb_expected_psnr(k: int, trials: int = 10, seed: int = 0, size: int = 64) -> float:
    """Mean PSNR(cover, stego) over seeded uniform-random 8-bit image pairs."""
    k = _check_k(k)
    if trials < 1:
        raise ValueError("trials must be at least 1")
    rng = np.random.default_rng(seed)
    vals = []
    for _ in range(trials):
        cover = rng.integers(0, 256, (size, size, 3), dtype=np.uint8)
        secret = rng.integers(0, 256, (size, size, 3), dtype=np.uint8)
        vals.append(metrics.psnr(cover, lsb_embed(cover, secret, k)))
    return float(np.mean(vals))
