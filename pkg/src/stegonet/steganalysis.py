"""Histogram and difference-image analyses of cover/stego pairs."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .images import save_png
from .metrics import StegoRecord

CHANNELS = ("red", "green", "blue")
AMPLIFICATION = 10


@dataclass
class Histogram:
    counts: np.ndarray  # (3, 256) int64
    source: str = ""

    @property
    def pixels(self) -> int:
        return int(self.counts[0].sum())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("bin",) + CHANNELS)
        for b in range(256):
            w.writerow([b] + [int(self.counts[c, b]) for c in range(3)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, source: str = "") -> "Histogram":
        rows = list(csv.DictReader(io.StringIO(text)))
        counts = np.array([[int(r[c]) for r in rows] for c in CHANNELS], dtype=np.int64)
        return cls(counts, source)


def _u8(img: np.ndarray) -> np.ndarray:
    arr = np.asarray(img)
    if arr.dtype != np.uint8 or arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected an H x W x 3 uint8 image, got {arr.dtype} {arr.shape}")
    return arr


def channel_histogram(image: np.ndarray, source: str = "") -> Histogram:
    image = _u8(image)
    counts = np.stack([np.bincount(image[..., c].ravel(), minlength=256) for c in range(3)])
    return Histogram(counts.astype(np.int64), source)


def difference_image(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a, b = _u8(a), _u8(b)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    return np.abs(a.astype(np.int16) - b.astype(np.int16)).astype(np.uint8)


def amplified_difference(a: np.ndarray, b: np.ndarray, factor: int = AMPLIFICATION) -> np.ndarray:
    """``min(|a - b| * factor, 255)``: saturates instead of wrapping."""
    if factor < 1:
        raise ValueError(f"factor must be at least 1, got {factor}")
    diff = difference_image(a, b).astype(np.int32) * int(factor)
    return np.minimum(diff, 255).astype(np.uint8)


def histogram_distance(h1: Histogram, h2: Histogram) -> float:
    """Mean over channels of the L1 distance between normalized histograms (0..2)."""
    p = h1.counts / h1.counts.sum(axis=1, keepdims=True)
    q = h2.counts / h2.counts.sum(axis=1, keepdims=True)
    return float(np.mean(np.abs(p - q).sum(axis=1)))


def emit_analysis(record: StegoRecord, out_dir, factor: int = AMPLIFICATION) -> dict:
    """Write the histogram CSVs, the two difference PNGs and a one-line summary.

    Returns the written paths and the cover/stego histogram distance.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    h_cover = channel_histogram(record.cover, "cover")
    h_stego = channel_histogram(record.stego, "stego")
    dist = histogram_distance(h_cover, h_stego)

    paths = {
        "cover_histogram": out_dir / "cover_histogram.csv",
        "stego_histogram": out_dir / "stego_histogram.csv",
        "difference": out_dir / "difference.png",
        "amplified_difference": out_dir / f"difference_x{factor}.png",
        "summary": out_dir / "summary.txt",
    }
    paths["cover_histogram"].write_text(h_cover.to_csv())
    paths["stego_histogram"].write_text(h_stego.to_csv())
    save_png(difference_image(record.cover, record.stego), paths["difference"])
    save_png(amplified_difference(record.cover, record.stego, factor), paths["amplified_difference"])
    paths["summary"].write_text(f"histogram_distance={dist:.6f}\n")
    return {"paths": paths, "histogram_distance": dist}
