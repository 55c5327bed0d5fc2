"""Dataset loading, joint training of the four sub-models, and the loss log."""
from __future__ import annotations

import csv
import dataclasses
import io
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .checkpoint import ModelCheckpoint, checkpoint_from_system, save_checkpoint
from .images import load_image, resize_bilinear
from .models import DOWNSAMPLE, StegoSystem, mse, to_batch
from .nn import Adam, Tensor

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
CHECKPOINT_NAME = "model.ckpt"
LOSS_CURVE_NAME = "loss.csv"


class ConfigError(ValueError):
    pass


class DataError(RuntimeError):
    pass


class NumericalError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    image_size: int = 64
    alpha: float = 0.5
    learning_rate: float = 1e-3
    batch_size: int = 10
    epochs: int = 50
    seed: int = 0
    limit: Optional[int] = None
    save_every: int = 10
    dataset_dir: Optional[str] = None
    checkpoint_dir: Optional[str] = None

    def validate(self) -> "TrainConfig":
        if self.image_size <= 0 or self.image_size % DOWNSAMPLE:
            raise ConfigError(f"image_size must be a positive multiple of {DOWNSAMPLE}, got {self.image_size}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be positive, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be non-negative, got {self.epochs}")
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")
        if self.limit is not None and self.limit < 2:
            raise ConfigError(f"limit must be at least 2 images, got {self.limit}")
        if self.save_every < 1:
            raise ConfigError(f"save_every must be positive, got {self.save_every}")
        return self

    def snapshot(self) -> dict:
        """Hyperparameters stored with the model. Output locations are left out."""
        snap = dataclasses.asdict(self)
        snap.pop("checkpoint_dir")
        return snap

    @classmethod
    def from_mapping(cls, values: dict) -> "TrainConfig":
        fields = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            key = key.strip().replace("-", "_")
            if key not in fields:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(key, raw, fields[key].type)
        return cls(**kwargs)


def _coerce(key: str, raw, type_name: str):
    if raw is None or not isinstance(raw, str):
        return raw
    raw = raw.strip()
    if "Optional" in type_name and raw.lower() in ("", "none"):
        return None
    try:
        if "int" in type_name:
            return int(raw)
        if "float" in type_name:
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from exc
    return raw


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


@dataclass
class PairedDataset:
    covers: np.ndarray
    secrets: np.ndarray
    cover_sources: list[str]
    secret_sources: list[str]
    seed: int = 0

    def __post_init__(self):
        if len(self.covers) != len(self.secrets):
            raise DataError("covers and secrets must have equal length")
        if set(self.cover_sources) & set(self.secret_sources):
            raise DataError("cover and secret sets overlap")

    def __len__(self) -> int:
        return len(self.covers)

    @property
    def image_size(self) -> int:
        return int(self.covers.shape[1])

    @classmethod
    def from_images(cls, images: np.ndarray, seed: int = 0, names: Optional[list[str]] = None) -> "PairedDataset":
        """Shuffle with ``seed`` and split half/half; an odd last image is dropped."""
        n = len(images)
        if n < 2:
            raise DataError(f"need at least 2 images, got {n}")
        names = names or [f"image_{i}" for i in range(n)]
        order = np.random.default_rng(seed).permutation(n)
        pairs = n // 2
        c_idx, s_idx = order[:pairs], order[pairs:2 * pairs]
        return cls(
            np.ascontiguousarray(images[c_idx]),
            np.ascontiguousarray(images[s_idx]),
            [names[i] for i in c_idx],
            [names[i] for i in s_idx],
            seed,
        )


def list_images(directory) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"dataset directory {directory} does not exist")
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES and p.is_file())


def load_dataset(directory, image_size: int, limit: Optional[int] = None, seed: int = 0) -> PairedDataset:
    """Decode, resize and pair the images in ``directory``.

    Files are sorted by name and shuffled with ``seed``; at most ``limit`` usable
    images are kept. Undecodable files are skipped with a warning.
    """
    paths = list_images(directory)
    order = np.random.default_rng(seed).permutation(len(paths))
    images, names = [], []
    for i in order:
        if limit is not None and len(images) >= limit:
            break
        path = paths[i]
        try:
            img = load_image(path)
        except Exception as exc:  # PIL raises a variety of types on bad input
            logger.warning("skipping %s: %s", path.name, exc)
            continue
        if img.shape[:2] != (image_size, image_size):
            img = resize_bilinear(img, image_size)
        images.append(img)
        names.append(path.name)
    if len(images) < 2:
        raise DataError(f"{directory} has {len(images)} usable image(s); at least 2 are needed")
    # already shuffled above, so the split keeps file order within this permutation
    pairs = len(images) // 2
    stack = np.stack(images).astype(np.float32)
    return PairedDataset(
        stack[:pairs], stack[pairs:2 * pairs], names[:pairs], names[pairs:2 * pairs], seed
    )


@dataclass
class EpochRecord:
    epoch: int
    mean_loss: float
    mse_cover_stego: float
    mse_secret_extracted: float
    seconds: float


LOSS_COLUMNS = [f.name for f in dataclasses.fields(EpochRecord)]


@dataclass
class LossLog:
    records: list[EpochRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def losses(self) -> list[float]:
        return [r.mean_loss for r in self.records]

    def append(self, rec: EpochRecord) -> None:
        expected = len(self.records) + 1
        if rec.epoch != expected:
            raise ValueError(f"epoch {rec.epoch} out of sequence, expected {expected}")
        self.records.append(rec)


def loss_curve_csv(log: LossLog) -> str:
    if not log.records:
        raise ValueError("loss log is empty")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LOSS_COLUMNS)
    for r in log.records:
        w.writerow([r.epoch] + [repr(float(getattr(r, c))) for c in LOSS_COLUMNS[1:]])
    return buf.getvalue()


def export_loss_curve(log: LossLog, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(loss_curve_csv(log))
    return path


def read_loss_curve(path) -> LossLog:
    log = LossLog()
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            log.append(EpochRecord(int(row["epoch"]), *(float(row[c]) for c in LOSS_COLUMNS[1:])))
    return log


def _param_norms(system: StegoSystem) -> str:
    norms = [(n, float(np.linalg.norm(p.data))) for n, p in system.named_parameters()]
    worst = sorted(norms, key=lambda x: -x[1] if math.isfinite(x[1]) else -math.inf)[:5]
    bad = [n for n, v in norms if not math.isfinite(v)]
    return f"largest norms {worst}; non-finite: {bad[:5]}"


def train(
    config: TrainConfig,
    dataset: PairedDataset,
    progress: Optional[Callable[[EpochRecord], None]] = None,
) -> tuple[ModelCheckpoint, LossLog]:
    """Train the embed and extract paths end to end with one Adam optimizer.

    Each epoch visits the pairs in a seeded random order in full batches (a
    trailing partial batch is dropped). When ``config.checkpoint_dir`` is set the
    checkpoint is written every ``save_every`` epochs and at the end.
    """
    config.validate()
    if len(dataset) == 0:
        raise DataError("dataset is empty")
    if config.batch_size > len(dataset):
        raise ConfigError(f"batch_size {config.batch_size} exceeds the {len(dataset)} training pairs")
    if dataset.image_size != config.image_size:
        raise ConfigError(f"dataset images are {dataset.image_size}px but image_size is {config.image_size}")

    system = StegoSystem(alpha=config.alpha, seed=config.seed)
    system.train()
    opt = Adam(system.parameters(), lr=config.learning_rate)
    rng = np.random.default_rng([config.seed, 1])
    covers, secrets = to_batch(dataset.covers), to_batch(dataset.secrets)
    n_batches = len(dataset) // config.batch_size
    alpha = config.alpha
    log = LossLog()

    def snapshot(epochs_done: int) -> ModelCheckpoint:
        return checkpoint_from_system(system, {
            "config": config.snapshot(),
            "image_size": config.image_size,
            "epochs_completed": epochs_done,
            "final_mean_loss": log.records[-1].mean_loss if log.records else None,
            "optimizer_steps": opt.step_count,
        })

    ckpt_path = Path(config.checkpoint_dir) / CHECKPOINT_NAME if config.checkpoint_dir else None

    for epoch in range(1, config.epochs + 1):
        start = time.perf_counter()
        order = rng.permutation(len(dataset))
        sums = np.zeros(3)
        for b in range(n_batches):
            idx = order[b * config.batch_size:(b + 1) * config.batch_size]
            cover, secret = Tensor(covers[idx]), Tensor(secrets[idx])
            stego, extracted = system(cover, secret)
            mse_c = mse(cover, stego)
            mse_s = mse(secret, extracted)
            loss = alpha * mse_c + (1.0 - alpha) * mse_s
            if not np.isfinite(loss.item()):
                raise NumericalError(f"non-finite loss at epoch {epoch}, batch {b + 1}: {_param_norms(system)}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            sums += (loss.item(), mse_c.item(), mse_s.item())
        means = sums / n_batches
        rec = EpochRecord(epoch, float(means[0]), float(means[1]), float(means[2]), time.perf_counter() - start)
        log.append(rec)
        logger.info("epoch %d loss %.6f mse(c,h) %.6f mse(s,e) %.6f (%.1fs)", *dataclasses.astuple(rec))
        if progress is not None:
            progress(rec)
        if ckpt_path is not None and epoch % config.save_every == 0 and epoch != config.epochs:
            save_checkpoint(snapshot(epoch), ckpt_path)

    system.eval()
    ckpt = snapshot(config.epochs)
    if ckpt_path is not None:
        save_checkpoint(ckpt, ckpt_path)
    return ckpt, log
