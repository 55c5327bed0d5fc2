"""Image quality and capacity metrics, computed on 8-bit images.

SSIM here is the global form: one mean/variance/covariance per channel over the
whole image, not the sliding-window variant. Variances are population (biased)
estimates.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Protocol, Sequence

import numpy as np

logger = logging.getLogger(__name__)

MAX_VALUE = 255.0
C1 = (0.01 * MAX_VALUE) ** 2
C2 = (0.03 * MAX_VALUE) ** 2
C3 = C2 / 2
INF_TOKEN = "inf"

_clamped_samples = 0


def clamped_sample_count() -> int:
    """Total samples clamped by :func:`quantize` since the last reset."""
    return _clamped_samples


def reset_clamp_counter() -> None:
    global _clamped_samples
    _clamped_samples = 0


def quantize(image: np.ndarray) -> np.ndarray:
    """[0, 1] floats to uint8 by ``floor(v * 255 + 0.5)`` (halves round up).

    Out-of-range samples are clamped and counted.
    """
    global _clamped_samples
    x = np.asarray(image, dtype=np.float64)
    bad = int(np.count_nonzero((x < 0.0) | (x > 1.0)))
    if bad:
        _clamped_samples += bad
        logger.warning("quantize: clamped %d out-of-range samples", bad)
    return np.clip(np.floor(x * MAX_VALUE + 0.5), 0, MAX_VALUE).astype(np.uint8)


def dequantize(image8: np.ndarray) -> np.ndarray:
    return np.asarray(image8, dtype=np.float32) / np.float32(MAX_VALUE)


def _pair(i: np.ndarray, j: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    i = np.asarray(i, dtype=np.float64)
    j = np.asarray(j, dtype=np.float64)
    if i.shape != j.shape:
        raise ValueError(f"image shapes differ: {i.shape} vs {j.shape}")
    return i, j


def mse8(i: np.ndarray, j: np.ndarray) -> float:
    i, j = _pair(i, j)
    return float(np.mean((i - j) ** 2))


def psnr(i: np.ndarray, j: np.ndarray) -> float:
    """PSNR in dB with peak 255; identical images give ``math.inf``."""
    err = mse8(i, j)
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(MAX_VALUE ** 2 / err)


def ssim_components(a: np.ndarray, b: np.ndarray) -> tuple[float, float, float]:
    """Luminance, contrast and structure factors for one channel."""
    a, b = _pair(a, b)
    mu_a, mu_b = a.mean(), b.mean()
    var_a, var_b = a.var(), b.var()
    sd_a, sd_b = math.sqrt(var_a), math.sqrt(var_b)
    cov = float(np.mean((a - mu_a) * (b - mu_b)))
    lum = (2 * mu_a * mu_b + C1) / (mu_a ** 2 + mu_b ** 2 + C1)
    con = (2 * sd_a * sd_b + C2) / (var_a + var_b + C2)
    struct = (cov + C3) / (sd_a * sd_b + C3)
    return float(lum), float(con), float(struct)


def ssim(i: np.ndarray, j: np.ndarray) -> float:
    """Global SSIM per channel, averaged over channels."""
    i, j = _pair(i, j)
    if i.ndim == 2:
        i, j = i[..., None], j[..., None]
    vals = []
    for ch in range(i.shape[-1]):
        lum, con, struct = ssim_components(i[..., ch], j[..., ch])
        vals.append(lum * con * struct)
    return float(np.mean(vals))


def relative_capacity(secret_dims: Sequence[int], cover_dims: Sequence[int], bits_per_sample: int = 8) -> float:
    """Hidden bits per cover pixel and colour channel.

    A full-size 8-bit RGB secret in an RGB cover gives 8; k-bit LSB
    substitution gives k (pass ``bits_per_sample=k``).
    """
    m, n, o = secret_dims
    mc, nc = cover_dims[:2]
    if min(m, n, o, mc, nc, bits_per_sample) <= 0:
        raise ValueError("dimensions must be positive")
    return (m * n * o * bits_per_sample) / (mc * nc * o)


def payload_capacity(secret8: np.ndarray, extracted8: np.ndarray) -> float:
    """``(1 - mean|S - R|) * 24`` with the absolute error on the [0, 1] scale."""
    s, r = _pair(secret8, extracted8)
    mae = float(np.mean(np.abs(s - r))) / MAX_VALUE
    return (1.0 - mae) * 8 * 3


@dataclass
class StegoRecord:
    """Cover, secret, stego and extracted images (uint8, H x W x 3) for one pair."""

    cover: np.ndarray
    secret: np.ndarray
    stego: np.ndarray
    extracted: np.ndarray
    pair_id: int = 0


@dataclass
class PairMetrics:
    pair_id: int
    psnr_cover_stego: float
    ssim_cover_stego: float
    psnr_secret_extracted: float
    ssim_secret_extracted: float
    payload_bpp: float
    relative_bpp: float

    @classmethod
    def from_record(cls, rec: StegoRecord, relative_bpp: float) -> "PairMetrics":
        return cls(
            rec.pair_id,
            psnr(rec.cover, rec.stego),
            ssim(rec.cover, rec.stego),
            psnr(rec.secret, rec.extracted),
            ssim(rec.secret, rec.extracted),
            payload_capacity(rec.secret, rec.extracted),
            relative_bpp,
        )


COLUMNS = [
    "pair_id",
    "psnr_cover_stego",
    "ssim_cover_stego",
    "psnr_secret_extracted",
    "ssim_secret_extracted",
    "payload_bpp",
    "relative_bpp",
]
VALUE_COLUMNS = COLUMNS[1:]


def _fmt(x: float) -> str:
    return INF_TOKEN if math.isinf(x) else f"{x:.6f}"


@dataclass
class MetricsReport:
    rows: list[PairMetrics] = field(default_factory=list)
    label: str = ""

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=np.float64)

    def aggregates(self) -> dict[str, dict[str, float]]:
        if not self.rows:
            raise ValueError("empty report has no aggregates")
        out = {}
        for stat, fn in (("mean", np.mean), ("min", np.min), ("max", np.max)):
            out[stat] = {c: float(fn(self.column(c))) for c in VALUE_COLUMNS}
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow([r.pair_id] + [_fmt(getattr(r, c)) for c in VALUE_COLUMNS])
        buf.write("\n")
        w.writerow(["stat"] + VALUE_COLUMNS)
        for stat, vals in self.aggregates().items():
            w.writerow([stat] + [_fmt(vals[c]) for c in VALUE_COLUMNS])
        return buf.getvalue()

    def write_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_csv())
        return path

    @classmethod
    def from_csv(cls, text: str) -> "MetricsReport":
        rows = []
        lines = text.split("\n\n", 1)[0].strip().splitlines()
        for rec in csv.DictReader(lines):
            rows.append(PairMetrics(int(rec["pair_id"]), *(float(rec[c]) for c in VALUE_COLUMNS)))
        return cls(rows)


class System(Protocol):
    def embed(self, cover: np.ndarray, secret: np.ndarray) -> np.ndarray: ...

    def extract(self, stego: np.ndarray) -> np.ndarray: ...


def run_pair(system: System, cover: np.ndarray, secret: np.ndarray, pair_id: int = 0,
             quantize_stego: bool = True) -> StegoRecord:
    """Embed and extract one float image pair; all outputs quantized to 8 bits.

    With ``quantize_stego`` the extractor sees the 8-bit stego image, as it would
    after a PNG round trip.
    """
    stego = system.embed(cover, secret)
    stego8 = quantize(stego)
    extracted = system.extract(dequantize(stego8) if quantize_stego else stego)
    return StegoRecord(quantize(cover), quantize(secret), stego8, quantize(extracted), pair_id)


def evaluate(system: System, covers: Sequence[np.ndarray], secrets: Sequence[np.ndarray],
             n_pairs: Optional[int] = None, quantize_stego: bool = True) -> MetricsReport:
    """Metrics for the first ``n_pairs`` cover/secret pairs."""
    n = len(covers) if n_pairs is None else n_pairs
    if n < 1 or n > min(len(covers), len(secrets)):
        raise ValueError(f"n_pairs={n} outside 1..{min(len(covers), len(secrets))}")
    report = MetricsReport()
    for idx in range(n):
        rec = run_pair(system, covers[idx], secrets[idx], idx, quantize_stego)
        rel = relative_capacity(rec.secret.shape, rec.cover.shape)
        report.rows.append(PairMetrics.from_record(rec, rel))
    return report
