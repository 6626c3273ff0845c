"""Acceptance criteria 1-11, each at its stated tolerance and time budget.

Every test prints ``criterion N: PASS|FAIL <details>``; the lines are also
collected into the pytest terminal summary. Criteria 7 and 8 train the
desk-scale network and take several minutes each on one CPU core.
"""
import os
import time

import numpy as np
import pytest
from threadpoolctl import threadpool_limits

from bdss.cli import main
from bdss.data import bdsr_bytes, extract_patches, parse_bdsr, PairDataset, scene_set
from bdss.exceptions import DomainError, FormatError
from bdss.metrics import enl, epd_roa, mor, psnr, ssim, tcr
from bdss.network import ModelConfig, build_bdss, checkpoint_bytes, forward, model_from_bytes
from bdss.numerics import Tensor, concat_channels, conv2d, field_of_view, mse, prelu
from bdss.speckle import SpeckleSpec, sample_speckle, speckle_realization
from bdss.trainer import TrainConfig, despeckle, train

import conftest
from oracles import (
    central_difference,
    conv2d_loop,
    enl_ref,
    epd_roa_ref,
    mor_ref,
    psnr_ref,
    rel_error,
    ssim_ref,
    tcr_ref,
)


def report(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}"
    print(line)
    conftest.ACCEPTANCE_LINES.append(line)
    assert ok, line


# 1 ---------------------------------------------------------------------------


def test_criterion_01_speckle_moments():
    t0 = time.perf_counter()
    n = 10**6
    details, ok = [], True
    for looks in (1, 2, 4, 8):
        v = sample_speckle((n,), SpeckleSpec(float(looks), seed=looks)).values
        var_target = 1 / looks
        # standard error of the sample variance for Gamma(L, L): sigma^2 * sqrt((2 + 6/L) / n)
        se = var_target * np.sqrt((2 + 6 / looks) / n)
        dmean, dvar = abs(v.mean() - 1), abs(v.var(ddof=1) - var_target)
        ok &= dmean < 0.005 and dvar < 3 * se
        details.append(f"L={looks} |dmean|={dmean:.1e} |dvar|={dvar / se:.2f}SE")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 5
    report(1, ok, "; ".join(details) + f"; {elapsed:.1f}s")


# 2 ---------------------------------------------------------------------------


def test_criterion_02_speckled_psnr_baseline():
    t0 = time.perf_counter()
    scenes = scene_set(20, 128, seed=0)
    bands = {1.0: (14, 18), 8.0: (22, 26)}
    fractions = {}
    for looks, (lo, hi) in bands.items():
        spec = SpeckleSpec(looks, seed=2024)
        vals = [psnr(x, speckle_realization(x, spec, i)[0]) for i, x in enumerate(scenes)]
        fractions[looks] = np.mean([lo <= v <= hi for v in vals]), np.mean(vals)
    elapsed = time.perf_counter() - t0
    ok = all(f >= 0.8 for f, _ in fractions.values()) and elapsed < 60
    detail = "; ".join(f"L={int(k)} in-band {f:.0%} mean {m:.2f} dB" for k, (f, m) in fractions.items())
    report(2, ok, f"{detail}; {elapsed:.1f}s")


# 3 ---------------------------------------------------------------------------


def test_criterion_03_dilated_conv_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    worst = {np.float32: 0.0, np.float64: 0.0}
    for i in range(200):
        d = 1 + i % 4
        dtype = np.float32 if i % 2 == 0 else np.float64
        h, w = d * 2 + 1 + rng.integers(0, 4), d * 2 + 1 + rng.integers(0, 4)
        x = rng.standard_normal((1, 2, h, w)).astype(dtype)
        k = rng.standard_normal((2, 2, 3, 3)).astype(dtype)
        b = rng.standard_normal(2).astype(dtype)
        pad = int(rng.integers(0, d + 1))
        out = conv2d(Tensor(x), Tensor(k), Tensor(b), dilation=d, padding=pad).data
        worst[dtype] = max(worst[dtype], float(np.max(np.abs(out - conv2d_loop(x, k, b, d, pad)))))
    elapsed = time.perf_counter() - t0
    ok = worst[np.float32] <= 1e-5 and worst[np.float64] <= 1e-12 and elapsed < 10
    report(3, ok, f"max err f32 {worst[np.float32]:.1e}, f64 {worst[np.float64]:.1e}; {elapsed:.1f}s")


# 4 ---------------------------------------------------------------------------


def test_criterion_04_fov_table():
    got = [field_of_view(3, l) for l in (1, 2, 3, 4)]
    report(4, got == [3, 7, 11, 15], f"field_of_view(3, 1..4) = {got}")


# 5 ---------------------------------------------------------------------------


def _fd_probes(build, inputs, probes, rng):
    leaves = [Tensor(v, requires_grad=True) for v in inputs]
    build(*leaves).backward()
    g0 = np.concatenate([np.ravel(l.grad if l.grad is not None else np.zeros_like(l.data)) for l in leaves])
    x0 = np.concatenate([np.ravel(v) for v in inputs])

    def f(flat):
        parts, start = [], 0
        for v in inputs:
            parts.append(Tensor(flat[start : start + v.size].reshape(v.shape)))
            start += v.size
        return float(build(*parts).item())

    worst = 0.0
    for _ in range(probes):
        d = rng.standard_normal(x0.size)
        worst = max(worst, rel_error(g0 @ d, central_difference(f, x0, d)))
    return worst


def _model_probes(model, x, weights, probes, rng):
    params = model.parameters()
    xt = Tensor(x, requires_grad=True)
    (forward(model, xt) * Tensor(weights)).sum().backward()
    g0 = np.concatenate([xt.grad.ravel()] + [p.grad.ravel() for p in params])
    x0 = np.concatenate([x.ravel()] + [p.data.ravel() for p in params])
    originals = [p.data.copy() for p in params]

    def f(flat):
        start = x.size
        for p, v in zip(params, originals):
            p.data = flat[start : start + v.size].reshape(v.shape)
            start += v.size
        return float((forward(model, Tensor(flat[: x.size].reshape(x.shape))) * Tensor(weights)).sum().item())

    worst = 0.0
    for _ in range(probes):
        d = rng.standard_normal(x0.size)
        worst = max(worst, rel_error(g0 @ d, central_difference(f, x0, d)))
    for p, v in zip(params, originals):
        p.data = v
    return worst


def test_criterion_05_gradient_suite():
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    r = lambda *s: rng.standard_normal(s)
    w4 = r(2, 3, 5, 5)
    wp = r(2, 3, 5, 5)
    cases = {
        "add": (lambda a, b: ((a + b) * (a + b)).sum(), [r(3, 4), r(4)]),
        "sub": (lambda a, b: ((a - b) ** 2).sum(), [r(3, 4), r(3, 1)]),
        "mul": (lambda a, b: (a * b * a).sum(), [r(3, 4), r(3, 4)]),
        "div": (lambda a, b: (a / (b * b + 1.0)).sum(), [r(3, 4), r(4)]),
        "pow": (lambda a: (a**3).sum(), [r(6)]),
        "sum": (lambda a: a.sum() * a.sum(), [r(2, 3)]),
        "mean": (lambda a: (a * a).mean(), [r(2, 3)]),
        "reshape": (lambda a: (a.reshape(3, 4) ** 2)[1].sum(), [r(2, 6)]),
        "getitem": (lambda a: (a[[0, 2, 2]] ** 2).sum(), [r(3, 2)]),
        "conv2d": (
            lambda x, k, b: (conv2d(x, k, b, dilation=2, padding=2) * Tensor(w4)).sum(),
            [r(2, 2, 5, 5), r(3, 2, 3, 3), r(3)],
        ),
        "prelu": (lambda x, a: (prelu(x, a) * Tensor(wp)).sum(), [r(2, 3, 5, 5), rng.uniform(0.1, 0.5, 3)]),
        "concat": (lambda a, b: (concat_channels([a, b]) ** 2).sum(), [r(1, 2, 3, 3), r(1, 1, 3, 3)]),
        "mse": (lambda a, b: mse(a, b), [r(2, 1, 4, 4), r(2, 1, 4, 4)]),
    }
    errors = {name: _fd_probes(build, inputs, 50, rng) for name, (build, inputs) in cases.items()}

    model = build_bdss(ModelConfig.desk(), seed=5, dtype=np.float64)
    x = rng.uniform(0.05, 1, (1, 1, 16, 16))
    weights = rng.standard_normal((1, 1, 16, 16))
    errors["bdss(desk)"] = _model_probes(model, x, weights, 50, rng)
    elapsed = time.perf_counter() - t0
    worst_name = max(errors, key=errors.get)
    ok = all(e <= 1e-4 for e in errors.values()) and elapsed < 120
    report(5, ok, f"{len(errors)} ops x 50 probes, worst {worst_name} {errors[worst_name]:.1e}; {elapsed:.1f}s")


# 6 ---------------------------------------------------------------------------


def test_criterion_06_table_audit():
    rows = build_bdss(ModelConfig(), seed=0).layer_table()
    table = dict(rows)
    blocks_ok = all(
        [w for n, w in rows if n.startswith(f"block{b}.concat")] == [32, 48, 64, 80, 96, 112, 128]
        and all(w == 16 for n, w in rows if n.startswith(f"block{b}.layer"))
        for b in "ABC"
    )
    concats = [table["Concat-A"], table["Concat-B"], table["Concat-C"]]
    ok = blocks_ok and concats == [256, 384, 512] and table["Bottleneck"] == 256 and table["Reconstruction"] == 1
    report(6, ok, f"layers 16, concats 32..128, Concat-A/B/C {concats}, bottleneck {table['Bottleneck']}, out {table['Reconstruction']}")


# 7 / 8 -----------------------------------------------------------------------

DESK_TRAIN = dict(epochs=160, halve_every=40, batch_size=16, patch=32)
TEST_LOOKS = (1.0, 4.0, 8.0)


def _desk_run(mode):
    scenes = scene_set(20, 128, seed=0)
    patches = [p for s in scenes[:13] for p in extract_patches(s, 32)]
    dataset = PairDataset(patches, SpeckleSpec((1.0, 10.0), seed=0), mode)
    model = build_bdss(ModelConfig.desk(), seed=0)
    t0 = time.perf_counter()
    with threadpool_limits(limits=1):
        model, log = train(dataset, model, TrainConfig(mode=mode, **DESK_TRAIN))
    elapsed = time.perf_counter() - t0
    held_out = scenes[13:]
    scores = {}
    for looks in TEST_LOOKS:
        spec = SpeckleSpec(looks, seed=99)
        before, after = [], []
        for i, x in enumerate(held_out):
            y, _ = speckle_realization(x, spec, i)
            before.append(psnr(x, y))
            after.append(psnr(x, despeckle(model, y)))
        scores[looks] = (float(np.mean(before)), float(np.mean(after)))
    return {"patches": len(patches), "iterations": len(log.losses), "seconds": elapsed, "scores": scores}


@pytest.fixture(scope="module")
def self_supervised_run():
    return _desk_run("self_supervised")


@pytest.fixture(scope="module")
def supervised_run():
    return _desk_run("supervised")


def test_criterion_07_noise2noise_efficacy(self_supervised_run):
    run = self_supervised_run
    gains = {L: after - before for L, (before, after) in run["scores"].items()}
    ok = run["iterations"] >= 2000 and run["seconds"] <= 600 and all(g >= 3 for g in gains.values())
    detail = ", ".join(f"L={int(L)} {run['scores'][L][0]:.2f}->{run['scores'][L][1]:.2f} dB (+{g:.2f})" for L, g in gains.items())
    report(7, ok, f"{detail}; {run['patches']} patches, {run['iterations']} it, {run['seconds']:.0f}s")


def test_criterion_08_supervised_parity(self_supervised_run, supervised_run):
    diffs = {L: supervised_run["scores"][L][1] - self_supervised_run["scores"][L][1] for L in TEST_LOOKS}
    total = self_supervised_run["seconds"] + supervised_run["seconds"]
    ok = all(abs(d) <= 1 for d in diffs.values()) and total <= 1200
    detail = ", ".join(f"L={int(L)} sup-selfsup {d:+.2f} dB" for L, d in diffs.items())
    report(8, ok, f"{detail}; {total:.0f}s training")


# 9 ---------------------------------------------------------------------------


def test_criterion_09_metric_oracles():
    t0 = time.perf_counter()
    rng = np.random.default_rng(9)
    worst = 0.0
    for _ in range(100):
        s = rng.uniform(0.01, 1, (12, 13))
        d = np.clip(s + 0.1 * rng.standard_normal(s.shape), 0.01, None)
        pairs = [
            (psnr(s, d), psnr_ref(s, d)),
            (enl(d), enl_ref(d)),
            (tcr(s, d), tcr_ref(s, d)),
            (epd_roa(s, d), epd_roa_ref(s, d)),
            (mor(s, d), mor_ref(s, d)),
        ]
        worst = max(worst, max(abs(a - b) for a, b in pairs))
    for _ in range(100):
        s = rng.uniform(0, 1, (12, 12))
        d = np.clip(s + 0.1 * rng.standard_normal(s.shape), 0, 1)
        worst = max(worst, abs(ssim(s, d) - ssim_ref(s, d)))
    a = rng.uniform(0.1, 1, (16, 16))
    try:
        enl(np.full((8, 8), 0.3))
        enl_raises = False
    except DomainError:
        enl_raises = True
    identity = psnr(a, a) == 99.0 and ssim(a, a) == 1.0 and enl_raises
    identity &= tcr(a, a) == 0.0 and epd_roa(a, a) == 1.0 and mor(a, a) == 1.0
    enl_dev = {}
    for looks in (1, 2, 4, 8):
        field = 0.4 * sample_speckle((100, 100), SpeckleSpec(float(looks), seed=10 + looks)).values
        enl_dev[looks] = abs(enl(field) - looks) / looks
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and identity and all(v < 0.05 for v in enl_dev.values()) and elapsed < 60
    enl_txt = ", ".join(f"L={k} {v:.1%}" for k, v in enl_dev.items())
    report(9, ok, f"max oracle diff {worst:.1e}, identity suite {'ok' if identity else 'broken'}, ENL dev {enl_txt}; {elapsed:.1f}s")


# 10 --------------------------------------------------------------------------


def _pipeline(root):
    fx = os.path.join(root, "fixture")
    assert main(["fixture", "--out", fx, "--seed", "7"]) == 0
    cfg = os.path.join(fx, "fixture.ini")
    assert main(["simulate", os.path.join(fx, "test"), "--config", cfg, "--out", os.path.join(root, "sim")]) == 0
    assert main(["train", os.path.join(fx, "manifest.txt"), "--config", cfg, "--out", os.path.join(root, "run")]) == 0
    assert main(["despeckle", os.path.join(root, "run", "model.bdsm"), os.path.join(root, "sim"), "--out", os.path.join(root, "den")]) == 0
    names = sorted(n for n in os.listdir(os.path.join(root, "sim")) if n.endswith(".bdsr"))
    with open(os.path.join(root, "pairs.txt"), "w") as fh:
        for n in names:
            fh.write(f"{n[:-5]} despeckled=den/{n} clean=fixture/test/{n} speckled=sim/{n}\n")
    csv_path = os.path.join(root, "metrics.csv")
    assert main(["evaluate", "--pairs", os.path.join(root, "pairs.txt"), "--csv", csv_path, "--out", os.path.join(root, "ev")]) == 0
    blobs = {}
    for sub in ("run", os.path.join("run", "checkpoints")):
        for n in sorted(os.listdir(os.path.join(root, sub))):
            if n.endswith(".bdsm"):
                with open(os.path.join(root, sub, n), "rb") as fh:
                    blobs[os.path.join(sub, n)] = fh.read()
    with open(csv_path, "rb") as fh:
        blobs["metrics.csv"] = fh.read()
    return blobs


def test_criterion_10_determinism(tmp_path):
    t0 = time.perf_counter()
    first = _pipeline(str(tmp_path / "a"))
    second = _pipeline(str(tmp_path / "b"))
    elapsed = time.perf_counter() - t0
    same = first.keys() == second.keys() and all(first[k] == second[k] for k in first)
    ok = same and len(first) >= 3 and elapsed <= 900
    report(10, ok, f"{len(first)} artifacts ({len(first) - 1} checkpoints + metrics CSV) byte-identical={same}; {elapsed:.0f}s for two runs")


# 11 --------------------------------------------------------------------------


def test_criterion_11_format_round_trips():
    t0 = time.perf_counter()
    rng = np.random.default_rng(11)
    raster = rng.standard_normal((37, 23)).astype(np.float32)
    raster_ok = parse_bdsr(bdsr_bytes(raster)).tobytes() == raster.tobytes()
    model = build_bdss(ModelConfig.desk(), seed=11)
    for p in model.parameters():
        p.data = rng.standard_normal(p.shape).astype(np.float32)
    blob = checkpoint_bytes(model)
    loaded = model_from_bytes(blob)
    ckpt_ok = checkpoint_bytes(loaded) == blob and all(
        p.data.tobytes() == q.data.tobytes() for p, q in zip(model.parameters(), loaded.parameters())
    )
    rejected = []
    for parse, buf in (
        (parse_bdsr, b"BDSX" + bdsr_bytes(raster)[4:]),
        (parse_bdsr, bdsr_bytes(raster)[:9]),
        (parse_bdsr, bdsr_bytes(raster)[:-2]),
        (model_from_bytes, b"XDSM" + blob[4:]),
        (model_from_bytes, blob[:20]),
        (model_from_bytes, blob + b"\x00"),
    ):
        try:
            parse(buf)
            rejected.append(False)
        except FormatError as exc:
            rejected.append("offset" in str(exc) or "magic" in str(exc))
    elapsed = time.perf_counter() - t0
    ok = raster_ok and ckpt_ok and all(rejected) and elapsed < 5
    report(11, ok, f"BDSR bit-exact={raster_ok}, BDSM bit-exact={ckpt_ok}, {sum(rejected)}/{len(rejected)} malformed rejected with diagnostics; {elapsed:.2f}s")
