"""``stegonet`` command line: train, embed, extract, evaluate, baseline, analyze, synth.

Exit codes: 0 success, 1 configuration/usage/checkpoint error, 2 data error,
3 numerical failure during training.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import baselines, metrics, steganalysis, synth
from .checkpoint import CheckpointError, load_checkpoint, system_from_checkpoint
from .images import load_image, save_png
from .models import DOWNSAMPLE
from .nn.ops import ShapeError
from .training import (
    CHECKPOINT_NAME,
    LOSS_CURVE_NAME,
    ConfigError,
    DataError,
    NumericalError,
    TrainConfig,
    export_loss_curve,
    load_dataset,
    read_config_file,
    train,
)

logger = logging.getLogger("stegonet")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
CHECKPOINT_ENV = "STEGONET_CHECKPOINT_DIR"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _default_checkpoint_dir() -> str:
    return os.environ.get(CHECKPOINT_ENV, "checkpoints")


def _default_checkpoint() -> str:
    return str(Path(_default_checkpoint_dir()) / CHECKPOINT_NAME)


def _load_system(path):
    return system_from_checkpoint(load_checkpoint(path))


def _read_image(path) -> np.ndarray:
    try:
        return load_image(path)
    except FileNotFoundError as exc:
        raise DataError(f"no such image: {path}") from exc
    except Exception as exc:
        raise DataError(f"cannot decode {path}: {exc}") from exc


def _check_size(img: np.ndarray, what: str) -> None:
    h, w = img.shape[:2]
    if h % DOWNSAMPLE or w % DOWNSAMPLE:
        raise DataError(
            f"{what} is {w}x{h}; width and height must be multiples of {DOWNSAMPLE} "
            f"(resize to {w // DOWNSAMPLE * DOWNSAMPLE or DOWNSAMPLE}x{h // DOWNSAMPLE * DOWNSAMPLE or DOWNSAMPLE})"
        )


# ---------------------------------------------------------------- train
TRAIN_FLAGS = {
    "data": "dataset_dir",
    "size": "image_size",
    "epochs": "epochs",
    "alpha": "alpha",
    "lr": "learning_rate",
    "batch_size": "batch_size",
    "seed": "seed",
    "limit": "limit",
    "save_every": "save_every",
    "checkpoint_dir": "checkpoint_dir",
}


def resolve_train_config(args) -> TrainConfig:
    values = read_config_file(args.config) if args.config else {}
    for flag, key in TRAIN_FLAGS.items():
        val = getattr(args, flag)
        if val is not None:
            values[key] = val
    values.setdefault("checkpoint_dir", _default_checkpoint_dir())
    cfg = TrainConfig.from_mapping(values)
    if not cfg.dataset_dir:
        raise UsageError("--data is required (or dataset_dir in the config file)")
    return cfg.validate()


def cmd_train(args) -> int:
    cfg = resolve_train_config(args)
    logger.info("resolved config: %s", cfg)
    dataset = load_dataset(cfg.dataset_dir, cfg.image_size, cfg.limit, cfg.seed)
    logger.info("dataset: %d pairs of %dpx images", len(dataset), dataset.image_size)
    _, log = train(cfg, dataset)
    out = Path(cfg.checkpoint_dir)
    if log.records:
        export_loss_curve(log, out / LOSS_CURVE_NAME)
        print(f"epoch {log.records[-1].epoch}: mean loss {log.records[-1].mean_loss:.6f}")
    print(f"checkpoint: {out / CHECKPOINT_NAME}")
    return EXIT_OK


# ---------------------------------------------------------------- embed / extract
def cmd_embed(args) -> int:
    system = _load_system(args.checkpoint)
    cover, secret = _read_image(args.cover), _read_image(args.secret)
    if cover.shape != secret.shape:
        raise DataError(f"cover {cover.shape[1]}x{cover.shape[0]} and secret {secret.shape[1]}x{secret.shape[0]} differ in size")
    _check_size(cover, "cover")
    save_png(metrics.quantize(system.embed(cover, secret)), args.out)
    print(f"stego: {args.out}")
    return EXIT_OK


def cmd_extract(args) -> int:
    system = _load_system(args.checkpoint)
    stego = _read_image(args.stego)
    _check_size(stego, "stego image")
    save_png(metrics.quantize(system.extract(stego)), args.out)
    print(f"extracted: {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------- evaluate / baseline
def _print_summary(report: metrics.MetricsReport) -> None:
    mean = report.aggregates()["mean"]
    print(
        f"{len(report.rows)} pairs | PSNR(c,h) {mean['psnr_cover_stego']:.3f} dB  SSIM(c,h) {mean['ssim_cover_stego']:.4f} | "
        f"PSNR(s,e) {mean['psnr_secret_extracted']:.3f} dB  SSIM(s,e) {mean['ssim_secret_extracted']:.4f} | "
        f"payload {mean['payload_bpp']:.3f} bpp  relative {mean['relative_bpp']:g} bpp"
    )


def cmd_evaluate(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    system = system_from_checkpoint(ckpt)
    size = args.size or ckpt.metadata.get("image_size") or 64
    dataset = load_dataset(args.data, size, args.limit, args.seed)
    if args.n > len(dataset):
        raise DataError(f"--n {args.n} exceeds the {len(dataset)} available pairs")
    report = metrics.evaluate(system, dataset.covers, dataset.secrets, args.n)
    report.write_csv(args.out)
    _print_summary(report)
    print(f"report: {args.out}")
    return EXIT_OK


def cmd_baseline(args) -> int:
    if not 1 <= args.k <= 8:
        raise ConfigError(f"--k must be in 1..8, got {args.k}")
    dataset = load_dataset(args.data, args.size, args.limit, args.seed)
    if args.n > len(dataset):
        raise DataError(f"--n {args.n} exceeds the {len(dataset)} available pairs")
    report = baselines.lsb_report(dataset.covers, dataset.secrets, args.k, args.n)
    report.write_csv(args.out)
    _print_summary(report)
    print(f"report: {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------- analyze
def cmd_analyze(args) -> int:
    if args.checkpoint is None and args.stego is None:
        raise UsageError("analyze needs --checkpoint (to embed) or --stego (an existing stego image)")
    cover, secret = _read_image(args.cover), _read_image(args.secret)
    if cover.shape != secret.shape:
        raise DataError("cover and secret differ in size")
    system = _load_system(args.checkpoint) if args.checkpoint else None
    if args.stego:
        stego = _read_image(args.stego)
        if stego.shape != cover.shape:
            raise DataError("stego and cover differ in size")
    else:
        _check_size(cover, "cover")
        stego = system.embed(cover, secret)
    stego8 = metrics.quantize(stego)
    if system is not None:
        extracted8 = metrics.quantize(system.extract(metrics.dequantize(stego8)))
    else:
        extracted8 = metrics.quantize(secret)
    record = metrics.StegoRecord(metrics.quantize(cover), metrics.quantize(secret), stego8, extracted8)
    result = steganalysis.emit_analysis(record, args.out_dir, args.factor)
    print(f"histogram_distance={result['histogram_distance']:.6f}")
    print(f"files: {args.out_dir}")
    return EXIT_OK


def cmd_synth(args) -> int:
    paths = synth.write_dataset(args.out, args.n, args.size, args.seed)
    print(f"wrote {len(paths)} images to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------- parser
def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="stegonet", description="Hide a colour image inside another with a trained encoder/decoder pair.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train a model on a directory of images")
    t.add_argument("--config", help="key=value file with TrainConfig fields; flags override it")
    t.add_argument("--data", help="directory of PNG/JPEG images")
    t.add_argument("--size", type=int, help="square training size, multiple of 8 (default 64)")
    t.add_argument("--epochs", type=int, help="training epochs (default 50)")
    t.add_argument("--alpha", type=float, help="loss weight of the cover/stego term, in [0, 1] (default 0.5)")
    t.add_argument("--lr", type=float, help="Adam learning rate (default 0.001)")
    t.add_argument("--batch-size", type=int, help="pairs per batch (default 10)")
    t.add_argument("--seed", type=int, help="seed for init, pairing and batch order (default 0)")
    t.add_argument("--limit", type=int, help="use at most this many images")
    t.add_argument("--save-every", type=int, help="checkpoint interval in epochs (default 10)")
    t.add_argument("--checkpoint-dir", help=f"output directory (default ${CHECKPOINT_ENV} or ./checkpoints)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("embed", help="hide a secret image in a cover image")
    e.add_argument("--checkpoint", default=None, help="trained checkpoint file")
    e.add_argument("--cover", required=True)
    e.add_argument("--secret", required=True)
    e.add_argument("--out", required=True, help="stego PNG path")
    e.set_defaults(func=cmd_embed)

    x = sub.add_parser("extract", help="recover the secret from a stego image")
    x.add_argument("--checkpoint", default=None, help="trained checkpoint file")
    x.add_argument("--stego", required=True)
    x.add_argument("--out", required=True, help="extracted PNG path")
    x.set_defaults(func=cmd_extract)

    v = sub.add_parser("evaluate", help="PSNR/SSIM/capacity report for a trained model")
    v.add_argument("--checkpoint", default=None)
    v.add_argument("--data", required=True)
    v.add_argument("--n", type=int, default=100, help="number of pairs (default 100)")
    v.add_argument("--size", type=int, default=None, help="image size (default: the checkpoint's)")
    v.add_argument("--limit", type=int, default=None)
    v.add_argument("--seed", type=int, default=0, help="pairing seed (default 0)")
    v.add_argument("--out", default="report.csv")
    v.set_defaults(func=cmd_evaluate)

    b = sub.add_parser("baseline", help="the same report for k-bit LSB substitution")
    b.add_argument("--k", type=int, required=True, help="bits substituted per sample, 1..8")
    b.add_argument("--data", required=True)
    b.add_argument("--n", type=int, default=100)
    b.add_argument("--size", type=int, default=64)
    b.add_argument("--limit", type=int, default=None)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", default="baseline.csv")
    b.set_defaults(func=cmd_baseline)

    a = sub.add_parser("analyze", help="histogram and difference analysis of one pair")
    a.add_argument("--checkpoint", default=None, help="model used to embed (omit when --stego is given)")
    a.add_argument("--cover", required=True)
    a.add_argument("--secret", required=True)
    a.add_argument("--stego", default=None, help="analyze this stego image instead of embedding")
    a.add_argument("--factor", type=int, default=steganalysis.AMPLIFICATION, help="difference amplification (default 10)")
    a.add_argument("--out-dir", required=True)
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("synth", help="write a seeded synthetic image dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--n", type=int, default=200)
    s.add_argument("--size", type=int, default=64)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    logger.setLevel(logging.DEBUG if args.verbose else logging.INFO)
    if getattr(args, "checkpoint", "") is None and args.command in ("embed", "extract", "evaluate"):
        args.checkpoint = _default_checkpoint()
    logger.info("command %s with %s", args.command, {k: v for k, v in vars(args).items() if k != "func"})
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"stegonet: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, CheckpointError) as exc:
        print(f"stegonet: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ShapeError) as exc:
        print(f"stegonet: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"stegonet: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
