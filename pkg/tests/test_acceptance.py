"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Criteria 6 to 8 train full-size models and are marked ``slow``
(about 1.5 min, 4 min and 80 min on one core).
"""

import math
import shutil
import time

import numpy as np
import pytest

from graphunwrap.baselines import energy, itoh_unwrap, mrf_recover, sparse_opt_recover
from graphunwrap.cli import gradcheck_report, main
from graphunwrap.data import Band, SynthConfig, WindowDataset, prepare_windows, synth_generate
from graphunwrap.graph import build_graph, default_montage, knn_spatial
from graphunwrap.metrics import paired_ttest, pearson_r, score
from graphunwrap.model import init_params
from graphunwrap.rng import SplitMix64
from graphunwrap.signal import FoldedWindow, SignalWindow, fold, unfold_exact
from graphunwrap.train import (
    TrainConfig,
    evaluate,
    evaluate_baseline,
    make_samples,
    run_ablation,
    sample_loss,
    train,
    train_step,
)
from oracles import exhaustive_chain_min, pearson_loops, small_chain_cases

DESK_LAMBDA = 0.6
DESK_SPLIT = dict(test_subjects=2, val_subjects=1, folds=1)


@pytest.fixture(scope="module")
def desk_dataset():
    return prepare_windows(synth_generate(SynthConfig(seed=0)), 200, DESK_LAMBDA)


def test_criterion_1_folding_algebra(criterion):
    rng = SplitMix64(2024)
    n = 10_000
    xs = rng.uniform(-100.0, 100.0, n)
    lams = rng.uniform(0.01, 5.0, n)
    t0 = time.perf_counter()
    worst, in_range = 0.0, True
    for x, lam in zip(xs, lams):
        f = fold(SignalWindow(np.array([[x]])), float(lam))
        in_range &= bool(0.0 <= f.p[0, 0] < lam)
        worst = max(worst, abs(unfold_exact(f).x[0, 0] - x))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-12 and in_range and elapsed < 1.0
    criterion(1, "folding algebra", ok,
              f"max roundtrip error {worst:.2e}, p in [0, lam) {in_range}, {elapsed:.2f}s for {n} pairs")


def test_criterion_2_graph_size(criterion):
    t0 = time.perf_counter()
    p = SplitMix64(0).uniform(0, 0.5, 2800).reshape(200, 14)
    g = build_graph(FoldedWindow(p, 0.5), default_montage(), 3)
    elapsed = time.perf_counter() - t0
    edges = len(g.edges)
    directed_picks = g.structure.n_temporal + 200 * 14 * 3
    ok = g.num_nodes == 2800 and 1.0e4 <= edges <= 1.2e4 and elapsed < 1.0
    criterion(2, "graph size", ok,
              f"{g.num_nodes} nodes, {edges} undirected edges ({g.structure.n_temporal} temporal + "
              f"{g.structure.n_spatial} spatial from {len(knn_spatial(default_montage(), 3))} channel pairs); "
              f"counting directed k-NN picks would give {directed_picks}; {elapsed:.2f}s")


def test_criterion_3_gradcheck(criterion):
    t0 = time.perf_counter()
    on, _ = gradcheck_report(1, pgfi=True)
    off, _ = gradcheck_report(1, pgfi=False)
    elapsed = time.perf_counter() - t0
    worst = max(on, off)
    criterion(3, "gradient correctness", worst < 1e-4 and elapsed < 30,
              f"max relative error {worst:.2e} (PGFI on {on:.1e}, off {off:.1e}), {elapsed:.1f}s")


SLOW_BANDS = SynthConfig(num_subjects=4, duration_s=30.0, bands=(Band(0.5, 3.0, 1.0, 2.0),),
                         pink_noise_amp=0.02, seed=21)


def test_criterion_4_itoh_exact(criterion):
    t0 = time.perf_counter()
    lam = 0.6
    ds = prepare_windows(synth_generate(SLOW_BANDS), 200, lam)
    keep = [i for i, w in enumerate(ds.signals) if np.max(np.abs(np.diff(w.x, axis=0))) < lam / 2]
    ds = WindowDataset(ds.T, ds.C, lam, [ds.signals[i] for i in keep], [ds.folded[i] for i in keep])
    results = [itoh_unwrap(f) for f in ds.folded]
    m = score([w.x for w in ds.signals], [r.x_hat for r in results],
              [f.z for f in ds.folded], [r.z_hat for r in results], lam)
    worst = max(w.mse_offset for w in m.per_window)
    elapsed = time.perf_counter() - t0
    ok = len(keep) > 0 and worst < 1e-20 and elapsed < 5
    criterion(4, "Itoh exactness", ok,
              f"{len(keep)} windows within the lam/2 step bound, worst offset-corrected MSE {worst:.1e}, "
              f"{elapsed:.1f}s")


def test_criterion_5_small_instance_oracle(criterion):
    t0 = time.perf_counter()
    cases = small_chain_cases(100, seed=11)
    mrf_hits = sparse_hits = 0
    sweeps = monotone = 0
    for f, g in cases:
        best, _ = exhaustive_chain_min(f.p[:, 0].tolist(), f.lam)
        r = mrf_recover(f, g, init="itoh")
        mrf_hits += energy(r.z_hat, f.p, f.lam, g.edges) <= best + 1e-9
        s = sparse_opt_recover(f, g)
        sparse_hits += energy(s.z_hat, f.p, f.lam, g.edges) <= best + 1e-9
        # zero-init runs exercise longer ICM trajectories on the same instances
        for run in (r, mrf_recover(f, g, init="zero")):
            for a, b in zip(run.energies, run.energies[1:]):
                sweeps += 1
                monotone += b <= a + 1e-12
    elapsed = time.perf_counter() - t0
    ok = mrf_hits >= 95 and sparse_hits >= 95 and monotone == sweeps and elapsed < 60
    criterion(5, "small-instance oracle equivalence", ok,
              f"mrf {mrf_hits}/100, sparse {sparse_hits}/100 at the exhaustive minimum; "
              f"ICM monotone in {monotone}/{sweeps} sweeps; {elapsed:.1f}s")


@pytest.mark.slow
def test_criterion_6_overfit(criterion):
    t0 = time.perf_counter()
    lam = 0.5
    recs = synth_generate(SynthConfig(num_subjects=1, duration_s=10.0, seed=0))
    full = prepare_windows(recs, 200, lam)
    ds = WindowDataset(full.T, full.C, lam, full.signals[:4], full.folded[:4])
    cfg = TrainConfig(lam=lam)
    samples = make_samples(ds, cfg.k, cfg.delta)
    params = init_params(cfg.model, cfg.seed)

    def eval_loss():
        return float(np.mean([sample_loss(s, params, cfg, lam, "eval")[2]["total"] for s in samples]))

    initial = eval_loss()
    root = SplitMix64(cfg.seed)
    for step in range(500):
        rngs = [root.spawn(f"dropout/{step}/{j}") for j in range(len(samples))]
        train_step(samples, params, cfg, lam, rngs)
    final = eval_loss()
    acc = evaluate(params, cfg.model, ds, cfg.k).accuracy
    elapsed = time.perf_counter() - t0
    ratio = final / initial
    ok = ratio < 0.05 and acc > 95.0 and elapsed < 600
    criterion(6, "overfit sanity", ok,
              f"loss {initial:.3f} -> {final:.3f} (ratio {ratio:.3f}, need < 0.05), "
              f"accuracy {acc:.1f}% (need > 95), {elapsed:.0f}s")


@pytest.mark.slow
def test_criterion_7_desk_ordering(criterion, desk_dataset):
    t0 = time.perf_counter()
    cfg = TrainConfig(lam=DESK_LAMBDA, epochs=30, seed=0, **DESK_SPLIT)
    res = train(desk_dataset, cfg)
    test = desk_dataset.select(res.split.test)
    m = evaluate(res.params, cfg.model, test, cfg.k)
    parts, ok = [f"model acc {m.accuracy:.2f} mse {m.mse:.3f}"], True
    for method in ("mrf", "sparse"):
        b, _ = evaluate_baseline(method, test, cfg.k)
        _, p = paired_ttest(m.per_window_values("mse"), b.per_window_values("mse"))
        better = m.accuracy > b.accuracy and m.mse < b.mse
        ok &= better and p < 0.01
        parts.append(f"{method} acc {b.accuracy:.2f} mse {b.mse:.3f} p={p:.1e}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 7200
    criterion(7, "desk-scale ordering", ok, "; ".join(parts) + f"; {elapsed:.0f}s")


@pytest.mark.slow
def test_criterion_8_ablation_direction(criterion, desk_dataset):
    t0 = time.perf_counter()
    wins, rows, shared = 0, [], True
    for seed in range(10):
        cfg = TrainConfig(lam=DESK_LAMBDA, epochs=30, seed=seed, **DESK_SPLIT)
        r = run_ablation(desk_dataset, cfg)
        shared &= r.shared_init_equal
        wins += r.with_pgfi.mse <= r.without_pgfi.mse
        rows.append(f"{r.with_pgfi.mse:.4f}/{r.without_pgfi.mse:.4f}")
    elapsed = time.perf_counter() - t0
    criterion(8, "ablation direction", wins >= 7 and shared,
              f"PGFI-on MSE <= PGFI-off in {wins}/10 seeds (on/off: {', '.join(rows)}); "
              f"shared init {shared}; {elapsed:.0f}s")


def _snapshot(path):
    if path.is_dir():
        return {p.relative_to(path).as_posix(): p.read_bytes() for p in sorted(path.rglob("*")) if p.is_file()}
    return {path.name: path.read_bytes(), "repro": path.with_name(path.name + ".repro.txt").read_bytes()}


def _twice(argv, out):
    snaps = []
    for _ in range(2):
        assert main(argv) == 0
        snaps.append(_snapshot(out))
        if out.is_dir():
            shutil.rmtree(out)
        else:
            out.unlink()
    return snaps[0] == snaps[1], snaps[0]


def test_criterion_9_determinism(criterion, tmp_path):
    cfg = tmp_path / "tiny.cfg"
    cfg.write_text("synth.num_subjects = 4\nsynth.duration_s = 4\nsynth.num_channels = 4\n"
                   "train.epochs = 2\ntrain.batch_size = 4\ntrain.test_subjects = 1\n"
                   "train.val_subjects = 1\ntrain.folds = 1\nmodel.hidden_dim = 8\n"
                   "model.num_heads = 2\nmodel.num_layers = 1\ndata.window = 64\n")
    data = tmp_path / "d.modr"
    same, results = {}, []
    same["synth"], _ = _twice(["synth", "--config", str(cfg), "--seed", "7", "--out", str(data)], data)
    assert main(["synth", "--config", str(cfg), "--seed", "7", "--lambda", "0.5", "--out", str(data)]) == 0
    tr = tmp_path / "train"
    same["train"], files = _twice(["train", "--config", str(cfg), "--data", str(data), "--seed", "3",
                                   "--out", str(tr), "--quiet"], tr)
    assert main(["train", "--config", str(cfg), "--data", str(data), "--seed", "3", "--out", str(tr),
                 "--quiet"]) == 0
    ck = str(tr / "model.mrcp")
    ev = tmp_path / "eval"
    same["eval"], _ = _twice(["eval", "--data", str(data), "--checkpoint", ck, "--out", str(ev)], ev)
    pred = tmp_path / "pred.modr"
    same["recover"], _ = _twice(["recover", "--data", str(data), "--method", "mrf", "--out", str(pred)], pred)
    ok = all(same.values()) and {"model.mrcp", "history.tsv", "summary.txt", "repro.txt"} <= set(files)
    criterion(9, "determinism", ok,
              ", ".join(f"{k} {'identical' if v else 'DIFFERENT'}" for k, v in same.items()))


def test_criterion_10_metrics(criterion):
    checks = {}
    checks["r([1,2,3],[1,3,2]) = 0.5"] = abs(pearson_r([1, 2, 3], [1, 3, 2]) - 0.5) < 1e-15
    a = SplitMix64(5).normal(50)
    b = a + SplitMix64(6).normal(50)
    r = pearson_r(a, b)
    checks["hand loop oracle"] = abs(r - pearson_loops(a.tolist(), b.tolist())) < 1e-12
    checks["affine invariance"] = abs(pearson_r(3.5 * a - 2.0, b) - r) < 1e-12 and \
        abs(pearson_r(a, 0.2 * b + 7) - r) < 1e-12
    checks["a = b"] = abs(pearson_r(a, a) - 1.0) < 1e-12
    stats = pytest.importorskip("scipy.stats")
    worst = 0.0
    for seed in range(10):
        rng = SplitMix64(100 + seed)
        x = rng.normal(10)
        y = x + rng.normal(10, 0.8) + 0.3
        worst = max(worst, abs(paired_ttest(x, y)[1] - stats.ttest_rel(x, y).pvalue))
    checks[f"t-test |dp| {worst:.1e}"] = worst < 1e-9
    checks["identical samples p = 1"] = paired_ttest(a, a)[1] == 1.0
    t, p = paired_ttest([2, 3, 4, 5], [1, 2, 3, 4])
    checks["zero-variance p < 1e-12"] = math.isinf(t) and p < 1e-12
    criterion(10, "metrics", all(checks.values()),
              ", ".join(f"{k}: {'ok' if v else 'FAIL'}" for k, v in checks.items()))
