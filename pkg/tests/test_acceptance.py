"""Acceptance criteria. Each test records one PASS/FAIL line, shown in the terminal summary."""
import time

import numpy as np
import pytest
from PIL import Image

from stegonet import cli, metrics
from stegonet.baselines import lsb_embed, lsb_expected_psnr, lsb_extract, lsb_report
from stegonet.checkpoint import save_checkpoint, system_from_checkpoint
from stegonet.images import load_image8, save_png
from stegonet.metrics import StegoRecord, payload_capacity, psnr, relative_capacity, ssim
from stegonet.models import ResidualUnit, StegoSystem, merge_features
from stegonet.nn import ops
from stegonet.nn.gradcheck import gradcheck
from stegonet.nn.tensor import Tensor, concat, mean, mul, square
from stegonet.steganalysis import (
    amplified_difference,
    channel_histogram,
    difference_image,
    emit_analysis,
    histogram_distance,
)
from stegonet.synth import synth_images, write_dataset
from stegonet.training import PairedDataset, TrainConfig, train

SHAPES_PER_LAYER = 20
TOY_EPOCHS = 200


# ---------------------------------------------------------------- 1
def _away_from_zero(x):
    # keeps finite differences off the ReLU kink
    return np.sign(x) * (np.abs(x) + 0.05)


def _layer_cases(rng):
    """Yield (layer, fn, inputs) with randomly drawn small shapes."""
    t = lambda *shape: Tensor(rng.standard_normal(shape))
    b, c_in, c_out = int(rng.integers(1, 3)), int(rng.integers(1, 4)), int(rng.integers(1, 4))
    k = int(rng.integers(1, 4))
    stride = int(rng.integers(1, 3))
    pad = int(rng.integers(0, k))
    h, w = int(rng.integers(k, k + 4)), int(rng.integers(k, k + 4))
    yield "conv2d", lambda x, wt, bias: ops.conv2d(x, wt, bias, stride, pad), [t(b, c_in, h, w), t(c_out, c_in, k, k), t(c_out)]
    hi, wi = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    pad_t = int(rng.integers(0, (k + 1) // 2))
    yield "conv_transpose2d", lambda x, wt, bias: ops.conv_transpose2d(x, wt, bias, stride, pad_t), [
        t(b, c_in, hi, wi), t(c_in, c_out, k, k), t(c_out)]
    nb = int(rng.integers(2, 4))
    rm, rv = np.zeros(c_in), np.ones(c_in)
    yield "batch_norm_train", lambda x, g, be: ops.batch_norm(x, g, be, rm.copy(), rv.copy(), True), [
        t(nb, c_in, h, w), t(c_in), t(c_in)]
    run_mean, run_var = rng.standard_normal(c_in), rng.random(c_in) + 0.5
    yield "batch_norm_eval", lambda x, g, be: ops.batch_norm(x, g, be, run_mean, run_var, False), [
        t(b, c_in, h, w), t(c_in), t(c_in)]
    yield "relu", ops.relu, [Tensor(_away_from_zero(rng.standard_normal((b, c_in, h, w))))]
    yield "leaky_relu", lambda x: ops.leaky_relu(x, 0.2), [Tensor(_away_from_zero(rng.standard_normal((b, c_in, h, w))))]
    yield "sigmoid", ops.sigmoid, [Tensor(3.0 * rng.standard_normal((b, c_in, h, w)))]
    yield "concat", lambda x, y: concat([x, y], axis=1), [t(b, c_in, h, w), t(b, c_out, h, w)]
    yield "add_mul", lambda x, y: mul(x + y, y), [t(b, c_in, h, w), t(b, c_in, h, w)]
    yield "mse", lambda x, y: mean(square(x - y)), [t(b, c_in, h, w), t(b, c_in, h, w)]


def test_criterion_1_gradient_correctness(criterion):
    start = time.perf_counter()
    worst, counts, failures = {}, {}, []
    for seed in range(SHAPES_PER_LAYER):
        rng = np.random.default_rng(1000 + seed)
        for layer, fn, inputs in _layer_cases(rng):
            counts[layer] = counts.get(layer, 0) + 1
            try:
                errs = gradcheck(fn, inputs, step=1e-5, tol=1e-3, seed=seed)
            except AssertionError as exc:
                failures.append(f"{layer}@seed{seed}: {exc}")
                continue
            worst[layer] = max(worst.get(layer, 0.0), max(errs.values()))
    # the residual unit as assembled in the decoder, through its own module
    for seed in range(SHAPES_PER_LAYER):
        rng = np.random.default_rng(2000 + seed)
        ch = int(rng.integers(1, 4))
        unit = ResidualUnit(ch, rng).astype(np.float64)
        x = Tensor(rng.standard_normal((2, ch, int(rng.integers(2, 5)), int(rng.integers(2, 5)))))
        counts["residual_unit"] = counts.get("residual_unit", 0) + 1
        try:
            errs = gradcheck(lambda x_, w_, g_: unit(x_), [x, unit.conv.weight, unit.bn.gamma], seed=seed)
            worst["residual_unit"] = max(worst.get("residual_unit", 0.0), max(errs.values()))
        except AssertionError as exc:
            failures.append(f"residual_unit@seed{seed}: {exc}")
    elapsed = time.perf_counter() - start
    detail = f"{len(counts)} layers x {min(counts.values())} shapes, worst rel err {max(worst.values()):.2e}, {elapsed:.1f}s"
    if failures:
        detail += f"; failures: {failures[:3]}"
    criterion(1, "gradient correctness", {
        "no failures": not failures,
        "shapes per layer": min(counts.values()) >= 20,
        "runtime under 60s": elapsed < 60,
    }, detail)


# ---------------------------------------------------------------- 2
def test_criterion_2_architecture(criterion, rng):
    system = StegoSystem(seed=0).eval()
    arch = system.architecture()["submodels"]
    checks = {}
    for name, filters in (("prep_embed", [16, 32, 64]), ("prep_extract", [32, 64, 128])):
        convs = [e for e in arch[name]["layers"] if e["type"] == "conv2d"]
        checks[f"{name} 3 convs"] = len(convs) == 3
        checks[f"{name} filters"] = [e["out_channels"] for e in convs] == filters
    for name in ("om_embed", "om_extract"):
        layers = arch[name]["layers"]
        convt = [e for e in layers if e["type"] == "conv_transpose2d"]
        checks[f"{name} 7 convT"] = len(convt) == 7
        checks[f"{name} 3 shortcuts"] = sum(e["type"] == "shortcut_add" for e in layers) == 3
        checks[f"{name} 128-ch input"] = convt[0]["in_channels"] == 128
        checks[f"{name} 3-ch output"] = convt[-1]["out_channels"] == 3
    x = Tensor(rng.random((1, 3, 32, 32), dtype=np.float32))
    feat = system.prep_embed(x)
    checks["merged 128 channels"] = merge_features(feat, feat).shape[1] == 128
    checks["extract prep 128 channels"] = system.prep_extract(x).shape[1] == 128
    for size in ((32, 32), (64, 48), (256, 256)):
        cover = rng.random(size + (3,), dtype=np.float32)
        stego = system.embed(cover, cover)
        checks[f"output {size}"] = stego.shape == cover.shape and system.extract(stego).shape == cover.shape
    passed = sum(checks.values())
    criterion(2, "architecture conformance", checks, f"{passed}/{len(checks)} structural checks")


# ---------------------------------------------------------------- 3
@pytest.fixture(scope="module")
def toy_run():
    images = synth_images(200, 64, seed=1)
    dataset = PairedDataset.from_images(images, seed=0)
    config = TrainConfig(image_size=64, alpha=0.5, learning_rate=1e-3, batch_size=10, epochs=TOY_EPOCHS, seed=0)
    start = time.perf_counter()
    ckpt, log = train(config, dataset)
    elapsed = time.perf_counter() - start
    system = system_from_checkpoint(ckpt)
    report = metrics.evaluate(system, dataset.covers, dataset.secrets)
    return {"dataset": dataset, "config": config, "ckpt": ckpt, "log": log, "system": system,
            "report": report, "seconds": elapsed}


@pytest.mark.slow
def test_criterion_3_toy_training(criterion, toy_run):
    losses = toy_run["log"].losses()
    ratio = losses[-1] / losses[0]
    mean = toy_run["report"].aggregates()["mean"]
    detail = (
        f"{len(losses)} epochs in {toy_run['seconds'] / 60:.1f} min, loss ratio {ratio:.3f}, "
        f"PSNR(c,h) {mean['psnr_cover_stego']:.2f} dB, PSNR(s,e) {mean['psnr_secret_extracted']:.2f} dB, "
        f"SSIM(c,h) {mean['ssim_cover_stego']:.4f}"
    )
    criterion(3, "toy training convergence", {
        "epochs <= 300": len(losses) <= 300,
        "loss ratio < 0.2": ratio < 0.2,
        "PSNR(c,h) > 25": mean["psnr_cover_stego"] > 25,
        "PSNR(s,e) > 20": mean["psnr_secret_extracted"] > 20,
        "SSIM(c,h) > 0.85": mean["ssim_cover_stego"] > 0.85,
        "under 45 min": toy_run["seconds"] < 45 * 60,
    }, detail)


@pytest.mark.slow
class TestToyRunProperties:
    """Properties that need a trained model; they reuse the criterion-3 run."""

    def test_beats_untrained_system(self, toy_run):
        ds = toy_run["dataset"]
        untrained = StegoSystem(alpha=0.5, seed=0).eval()
        before = metrics.evaluate(untrained, ds.covers, ds.secrets, 20).aggregates()["mean"]
        after = metrics.evaluate(toy_run["system"], ds.covers, ds.secrets, 20).aggregates()["mean"]
        assert after["psnr_cover_stego"] > before["psnr_cover_stego"]

    def test_extraction_beats_noise(self, toy_run):
        ds = toy_run["dataset"]
        rng = np.random.default_rng(0)
        noise = [psnr(metrics.quantize(s), rng.integers(0, 256, s.shape, dtype=np.uint8)) for s in ds.secrets]
        assert toy_run["report"].aggregates()["mean"]["psnr_secret_extracted"] > np.mean(noise)

    def test_stego_histogram_closer_than_noise(self, toy_run):
        ds = toy_run["dataset"]
        rng = np.random.default_rng(0)
        for i in range(5):
            c8 = metrics.quantize(ds.covers[i])
            h8 = metrics.quantize(toy_run["system"].embed(ds.covers[i], ds.secrets[i]))
            noise = rng.integers(0, 256, c8.shape, dtype=np.uint8)
            hc = channel_histogram(c8)
            assert histogram_distance(hc, channel_histogram(h8)) < histogram_distance(hc, channel_histogram(noise))

    def test_cli_roundtrip_on_trained_checkpoint(self, toy_run, tmp_path):
        ds = toy_run["dataset"]
        path = save_checkpoint(toy_run["ckpt"], tmp_path / "model.ckpt")
        cover = save_png(metrics.quantize(ds.covers[0]), tmp_path / "cover.png")
        secret = save_png(metrics.quantize(ds.secrets[0]), tmp_path / "secret.png")
        stego, out = tmp_path / "stego.png", tmp_path / "out.png"
        assert cli.main(["embed", "--checkpoint", str(path), "--cover", str(cover), "--secret", str(secret),
                         "--out", str(stego)]) == 0
        assert cli.main(["extract", "--checkpoint", str(path), "--stego", str(stego), "--out", str(out)]) == 0
        assert psnr(load_image8(secret), load_image8(out)) > 20

    def test_loss_curve_decreases_overall(self, toy_run):
        losses = toy_run["log"].losses()
        tenth = len(losses) // 10
        assert np.mean(losses[-tenth:]) < np.mean(losses[:tenth])


# ---------------------------------------------------------------- 4
def _brute_mse(a, b):
    total = 0.0
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            for k in range(a.shape[2]):
                d = float(a[i, j, k]) - float(b[i, j, k])
                total += d * d
    return total / a.size


def test_criterion_4_metric_oracles(criterion):
    rng = np.random.default_rng(4)
    x = rng.integers(0, 255, (32, 32, 3), dtype=np.uint8)
    one_level = psnr(x, x + 1)
    ssim_self = max(abs(ssim(y, y) - 1.0) for y in rng.integers(0, 256, (10, 16, 16, 3), dtype=np.uint8))
    mse_err = 0.0
    for _ in range(100):
        a = rng.integers(0, 256, (16, 16, 3), dtype=np.uint8)
        b = rng.integers(0, 256, (16, 16, 3), dtype=np.uint8)
        mse_err = max(mse_err, abs(metrics.mse8(a, b) - _brute_mse(a, b)))
    criterion(4, "metric oracles", {
        "1-level PSNR": abs(one_level - 48.1308) <= 1e-3,
        "ssim(x,x)": ssim_self <= 1e-9,
        "brute-force MSE": mse_err <= 1e-9,
    }, f"PSNR {one_level:.6f} dB, |ssim-1| {ssim_self:.1e}, MSE max diff {mse_err:.1e}")


# ---------------------------------------------------------------- 5
def test_criterion_5_capacity(criterion):
    rng = np.random.default_rng(5)
    s = rng.integers(0, 256, (64, 64, 3), dtype=np.uint8)
    proposed = relative_capacity((256, 256, 3), (256, 256))
    lsb = {k: relative_capacity((256, 256, 3), (256, 256), bits_per_sample=k) for k in (1, 2, 4, 7)}
    payload = payload_capacity(s, s)
    checks = {"proposed 8 bpp": proposed == 8, "payload(S,S) 24": payload == 24}
    checks.update({f"LSB k={k}": v == k for k, v in lsb.items()})
    criterion(5, "capacity", checks, f"proposed {proposed:g}, LSB {[lsb[k] for k in lsb]}, payload {payload:g}")


# ---------------------------------------------------------------- 6
def test_criterion_6_lsb_baseline(criterion):
    vals = np.arange(256, dtype=np.uint8)
    cover, secret = np.meshgrid(vals, vals, indexing="ij")
    bound_ok = True
    for k in range(1, 9):
        err = np.abs(lsb_extract(lsb_embed(cover, secret, k), k).astype(int) - secret.astype(int))
        bound_ok &= bool(err.max() < 2 ** (8 - k))
    k1 = lsb_expected_psnr(1, trials=10, seed=0)
    stego_psnr = [lsb_expected_psnr(k, trials=5, seed=1) for k in range(1, 8)]
    rng = np.random.default_rng(6)
    covers, secrets = rng.random((10, 32, 32, 3)), rng.random((10, 32, 32, 3))
    extracted_psnr = [lsb_report(covers, secrets, k, 10).aggregates()["mean"]["psnr_secret_extracted"]
                      for k in range(1, 8)]
    criterion(6, "LSB baseline oracle", {
        "exhaustive bound": bound_ok,
        "k=1 PSNR 51.14 +- 0.5": abs(k1 - 51.14) <= 0.5,
        "stego PSNR decreasing": all(a > b for a, b in zip(stego_psnr, stego_psnr[1:])),
        "extracted PSNR increasing": all(a < b for a, b in zip(extracted_psnr, extracted_psnr[1:])),
    }, f"k=1 {k1:.2f} dB; PSNR(c,h) k=1..7 {[round(v, 1) for v in stego_psnr]}")


# ---------------------------------------------------------------- 7
def test_criterion_7_steganalysis(criterion, tmp_path):
    rng = np.random.default_rng(7)
    conserved, amp_ok = True, True
    for _ in range(50):
        h, w = (int(v) for v in rng.integers(1, 40, 2))
        a = rng.integers(0, 256, (h, w, 3), dtype=np.uint8)
        b = rng.integers(0, 256, (h, w, 3), dtype=np.uint8)
        conserved &= bool(np.all(channel_histogram(a).counts.sum(axis=1) == h * w))
        amp_ok &= bool(np.array_equal(amplified_difference(a, b, 1), difference_image(a, b)))
    cover = rng.integers(0, 256, (24, 24, 3), dtype=np.uint8)
    stego = np.clip(cover.astype(int) + rng.integers(-4, 5, cover.shape), 0, 255).astype(np.uint8)
    out = emit_analysis(StegoRecord(cover, cover, stego, cover), tmp_path)
    names = sorted(p.name for p in tmp_path.iterdir())
    decoded = (
        np.array_equal(np.asarray(Image.open(out["paths"]["difference"])), difference_image(cover, stego))
        and np.array_equal(np.asarray(Image.open(out["paths"]["amplified_difference"])),
                           amplified_difference(cover, stego, 10))
    )
    criterion(7, "steganalysis conservation", {
        "histogram sums": conserved,
        "factor-1 amplification": amp_ok,
        "file set": names == ["cover_histogram.csv", "difference.png", "difference_x10.png",
                              "stego_histogram.csv", "summary.txt"],
        "PNGs re-decode": decoded,
    }, f"50 images, files {names}")


# ---------------------------------------------------------------- 8
def _cli_pipeline(root, data):
    ckpt_dir = root / "ckpt"
    codes = [cli.main(["train", "--data", str(data), "--size", "32", "--epochs", "5", "--batch-size", "10",
                       "--seed", "11", "--checkpoint-dir", str(ckpt_dir)])]
    ckpt = ckpt_dir / "model.ckpt"
    codes.append(cli.main(["embed", "--checkpoint", str(ckpt), "--cover", str(data / "img_00000.png"),
                           "--secret", str(data / "img_00001.png"), "--out", str(root / "stego.png")]))
    codes.append(cli.main(["extract", "--checkpoint", str(ckpt), "--stego", str(root / "stego.png"),
                           "--out", str(root / "extracted.png")]))
    codes.append(cli.main(["evaluate", "--checkpoint", str(ckpt), "--data", str(data), "--n", "10",
                           "--seed", "11", "--out", str(root / "report.csv")]))
    return codes


def _loss_csv_without_timing(path):
    # wall-clock seconds is the only run-dependent column
    return [line.rsplit(",", 1)[0] for line in path.read_text().splitlines()]


def test_criterion_8_reproducibility(criterion, tmp_path):
    start = time.perf_counter()
    data = tmp_path / "data"
    write_dataset(data, 20, 32, seed=8)
    runs = [tmp_path / "run1", tmp_path / "run2"]
    codes = [_cli_pipeline(r, data) for r in runs]
    a, b = runs
    same = {
        "checkpoint": (a / "ckpt/model.ckpt").read_bytes() == (b / "ckpt/model.ckpt").read_bytes(),
        "stego PNG": (a / "stego.png").read_bytes() == (b / "stego.png").read_bytes(),
        "extracted PNG": (a / "extracted.png").read_bytes() == (b / "extracted.png").read_bytes(),
        "report CSV": (a / "report.csv").read_bytes() == (b / "report.csv").read_bytes(),
        "loss CSV (timing column excluded)":
            _loss_csv_without_timing(a / "ckpt/loss.csv") == _loss_csv_without_timing(b / "ckpt/loss.csv"),
    }
    elapsed = time.perf_counter() - start
    same["all exit 0"] = all(c == 0 for run in codes for c in run)
    same["under 2 min"] = elapsed < 120
    criterion(8, "reproducibility", same, f"two CLI pipelines in {elapsed:.1f}s")
