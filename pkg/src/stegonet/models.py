"""Preprocess encoder, residual transposed-conv decoder, and the embed/extract system.

Embedding: secret and cover each pass through the embedding encoder, their
feature maps are concatenated (secret first) into 128 channels, and the
embedding decoder renders the stego image. Extraction: the stego image passes
through the extraction encoder (128 channels out) and the extraction decoder.
Both decoders have the same layer shapes but their own weights.
"""
from __future__ import annotations

from typing import Union

import numpy as np

from .nn import ops
from .nn.layers import BatchNorm2d, Conv2d, ConvTranspose2d, Module
from .nn.tensor import Tensor, concat, mean, no_grad, square

LEAKY_SLOPE = 0.2
EMBED_FILTERS = (16, 32, 64)
EXTRACT_FILTERS = (32, 64, 128)
DECODER_CHANNELS = (128, 64, 32, 16)
DOWNSAMPLE = 8
# Stated order after each encoder conv: ReLU, then BatchNorm (where present).
ENCODER_ORDER = "conv-relu-bn"
DECODER_ORDER = "convT-bn-leakyrelu"


class PreprocessModel(Module):
    """Three stride-2 3x3 convolutions, each followed by ReLU; BatchNorm on the middle one only."""

    def __init__(self, variant: str, rng: np.random.Generator):
        super().__init__()
        if variant not in ("embedding", "extraction"):
            raise ValueError(f"variant must be 'embedding' or 'extraction', got {variant!r}")
        self.variant = variant
        f1, f2, f3 = EMBED_FILTERS if variant == "embedding" else EXTRACT_FILTERS
        self.out_channels = f3
        self.conv1 = Conv2d(3, f1, 3, 2, 1, rng)
        self.conv2 = Conv2d(f1, f2, 3, 2, 1, rng)
        self.bn2 = BatchNorm2d(f2)
        self.conv3 = Conv2d(f2, f3, 3, 2, 1, rng)

    def forward(self, x: Tensor) -> Tensor:
        _check_divisible(x.shape[2:])
        x = ops.relu(self.conv1(x))
        x = self.bn2(ops.relu(self.conv2(x)))
        return ops.relu(self.conv3(x))

    def describe(self, prefix: str = "") -> list[dict]:
        entries = super().describe(prefix)
        for e in entries:
            if e["type"] == "conv2d":
                e["activation"] = "relu"
        return entries


class ResidualUnit(Module):
    """``leaky_relu(bn(conv_transpose(x))) + x`` with channels preserved."""

    def __init__(self, channels: int, rng: np.random.Generator, slope: float = LEAKY_SLOPE):
        super().__init__()
        self.channels = channels
        self.slope = slope
        self.conv = ConvTranspose2d(channels, channels, 3, 1, 1, rng)
        self.bn = BatchNorm2d(channels)

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise ops.ShapeError(f"residual unit expects {self.channels} channels, got input {x.shape}")
        path = ops.leaky_relu(self.bn(self.conv(x)), self.slope)
        if path.shape != x.shape:
            raise ops.ShapeError(f"shortcut operands differ: {path.shape} vs {x.shape}")
        return path + x

    def describe(self, prefix: str = "") -> list[dict]:
        entries = super().describe(prefix)
        entries[0]["activation"] = "leaky_relu"
        entries.append({"name": prefix + "shortcut", "type": "shortcut_add", "channels": self.channels})
        return entries


class UpsampleStage(Module):
    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator, slope: float = LEAKY_SLOPE):
        super().__init__()
        self.slope = slope
        self.conv = ConvTranspose2d(c_in, c_out, 4, 2, 1, rng)
        self.bn = BatchNorm2d(c_out)

    def forward(self, x: Tensor) -> Tensor:
        return ops.leaky_relu(self.bn(self.conv(x)), self.slope)

    def describe(self, prefix: str = "") -> list[dict]:
        entries = super().describe(prefix)
        entries[0]["activation"] = "leaky_relu"
        return entries


class OperationalModel(Module):
    """[residual -> x2 upsample] x 3, then a 3x3 transposed conv to RGB and a sigmoid."""

    def __init__(self, rng: np.random.Generator, slope: float = LEAKY_SLOPE):
        super().__init__()
        chans = DECODER_CHANNELS
        self.in_channels = chans[0]
        self.res1 = ResidualUnit(chans[0], rng, slope)
        self.up1 = UpsampleStage(chans[0], chans[1], rng, slope)
        self.res2 = ResidualUnit(chans[1], rng, slope)
        self.up2 = UpsampleStage(chans[1], chans[2], rng, slope)
        self.res3 = ResidualUnit(chans[2], rng, slope)
        self.up3 = UpsampleStage(chans[2], chans[3], rng, slope)
        self.out = ConvTranspose2d(chans[3], 3, 3, 1, 1, rng)

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ops.ShapeError(f"operational model expects {self.in_channels} input channels, got {x.shape}")
        x = self.up1(self.res1(x))
        x = self.up2(self.res2(x))
        x = self.up3(self.res3(x))
        return ops.sigmoid(self.out(x))

    def describe(self, prefix: str = "") -> list[dict]:
        entries = super().describe(prefix)
        entries[-1]["activation"] = "sigmoid"
        return entries


def merge_features(s_feat: Tensor, c_feat: Tensor) -> Tensor:
    """Concatenate secret and cover feature maps along channels, secret first."""
    if s_feat.shape != c_feat.shape:
        raise ops.ShapeError(f"cannot merge feature maps of shapes {s_feat.shape} and {c_feat.shape}")
    return concat([s_feat, c_feat], axis=1)


def _check_divisible(spatial) -> None:
    h, w = spatial
    if h % DOWNSAMPLE or w % DOWNSAMPLE:
        raise ops.ShapeError(
            f"image size {h}x{w} is not divisible by {DOWNSAMPLE}; resize to e.g. "
            f"{max(DOWNSAMPLE, h // DOWNSAMPLE * DOWNSAMPLE)}x{max(DOWNSAMPLE, w // DOWNSAMPLE * DOWNSAMPLE)}"
        )


def to_batch(images: np.ndarray) -> np.ndarray:
    """H x W x 3 (or B x H x W x 3) images to B x 3 x H x W float32."""
    arr = np.asarray(images, dtype=np.float32)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[-1] != 3:
        raise ops.ShapeError(f"expected H x W x 3 image(s), got shape {arr.shape}")
    return np.ascontiguousarray(arr.transpose(0, 3, 1, 2))


def from_batch(batch: np.ndarray) -> np.ndarray:
    """B x 3 x H x W to B x H x W x 3."""
    return np.ascontiguousarray(batch.transpose(0, 2, 3, 1))


class StegoSystem(Module):
    """The four sub-models trained jointly, plus the loss weight ``alpha``."""

    def __init__(self, alpha: float = 0.5, seed: int = 0, slope: float = LEAKY_SLOPE):
        super().__init__()
        _check_alpha(alpha)
        self.alpha = alpha
        self.seed = seed
        self.slope = slope
        rng = np.random.default_rng(seed)
        self.prep_embed = PreprocessModel("embedding", rng)
        self.prep_extract = PreprocessModel("extraction", rng)
        self.om_embed = OperationalModel(rng, slope)
        self.om_extract = OperationalModel(rng, slope)
        self.assign_names()

    def embed_tensor(self, cover: Tensor, secret: Tensor) -> Tensor:
        if cover.shape != secret.shape:
            raise ops.ShapeError(f"cover {cover.shape} and secret {secret.shape} differ in shape")
        n = cover.shape[0]
        # one encoder pass over [secret; cover] so both share batch statistics
        feats = self.prep_embed(concat([secret, cover], axis=0))
        return self.om_embed(merge_features(feats[:n], feats[n:]))

    def extract_tensor(self, stego: Tensor) -> Tensor:
        return self.om_extract(self.prep_extract(stego))

    def forward(self, cover: Tensor, secret: Tensor) -> tuple[Tensor, Tensor]:
        """Training graph: the stego output feeds extraction directly, unquantized."""
        stego = self.embed_tensor(cover, secret)
        return stego, self.extract_tensor(stego)

    def embed(self, cover: np.ndarray, secret: np.ndarray) -> np.ndarray:
        """Stego image(s) for H x W x 3 (or batched) cover/secret arrays in [0, 1]."""
        cover, secret = np.asarray(cover), np.asarray(secret)
        if cover.shape != secret.shape:
            raise ops.ShapeError(f"cover {cover.shape} and secret {secret.shape} differ in shape")
        with no_grad():
            out = self.embed_tensor(Tensor(to_batch(cover)), Tensor(to_batch(secret))).data
        out = from_batch(out)
        return out[0] if cover.ndim == 3 else out

    def extract(self, stego: np.ndarray) -> np.ndarray:
        stego = np.asarray(stego)
        with no_grad():
            out = from_batch(self.extract_tensor(Tensor(to_batch(stego))).data)
        return out[0] if stego.ndim == 3 else out

    def architecture(self) -> dict:
        """Structural descriptor used for audits and checkpoint validation."""
        return {
            "model": "stego_system",
            "encoder_order": ENCODER_ORDER,
            "decoder_order": DECODER_ORDER,
            "leaky_slope": self.slope,
            "merge_order": ["secret", "cover"],
            "downsample": DOWNSAMPLE,
            "submodels": {
                name: {"variant": getattr(m, "variant", "operational"), "layers": m.describe(name + ".")}
                for name, m in self._modules.items()
            },
            "parameters": [[name, list(p.shape)] for name, p in self.named_parameters()],
            "buffers": [[name, list(b.shape)] for name, b in self.named_buffers()],
        }


def embed(system: StegoSystem, cover: np.ndarray, secret: np.ndarray) -> np.ndarray:
    return system.embed(cover, secret)


def extract(system: StegoSystem, stego: np.ndarray) -> np.ndarray:
    return system.extract(stego)


def preprocess_forward(model: PreprocessModel, images: Union[Tensor, np.ndarray]) -> Tensor:
    return model(images if isinstance(images, Tensor) else Tensor(images))


def residual_unit_forward(unit: ResidualUnit, x: Union[Tensor, np.ndarray]) -> Tensor:
    return unit(x if isinstance(x, Tensor) else Tensor(x))


def _check_alpha(alpha: float) -> None:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")


def mse(i, j):
    """Mean squared difference over every element.

    Tensors give a differentiable scalar Tensor; arrays give a float.
    """
    if isinstance(i, Tensor) or isinstance(j, Tensor):
        i = i if isinstance(i, Tensor) else Tensor(i)
        j = j if isinstance(j, Tensor) else Tensor(j)
        if i.shape != j.shape:
            raise ops.ShapeError(f"mse operands differ in shape: {i.shape} vs {j.shape}")
        return mean(square(i - j))
    i, j = np.asarray(i, dtype=np.float64), np.asarray(j, dtype=np.float64)
    if i.shape != j.shape:
        raise ops.ShapeError(f"mse operands differ in shape: {i.shape} vs {j.shape}")
    return float(np.mean((i - j) ** 2))


def total_loss(cover, stego, secret, extracted, alpha: float):
    """``alpha * mse(cover, stego) + (1 - alpha) * mse(secret, extracted)``."""
    _check_alpha(alpha)
    return alpha * mse(cover, stego) + (1.0 - alpha) * mse(secret, extracted)
