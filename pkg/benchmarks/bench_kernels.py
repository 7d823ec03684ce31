"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeats N] [--hidden D]

Workload: one 200 x 14 window graph (Emotiv montage, k = 3).
"""

import argparse
import time

import numpy as np

from graphunwrap import autodiff as ad
from graphunwrap import kernels
from graphunwrap.data import SynthConfig, prepare_windows, synth_generate
from graphunwrap.graph import build_graph
from graphunwrap.model import ModelConfig, forward, init_params


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def workloads(hidden):
    ds = prepare_windows(synth_generate(SynthConfig(num_subjects=1, duration_s=5.0)), 200, 0.5)
    g = build_graph(ds.folded[0])
    s = g.structure
    rng = np.random.default_rng(0)
    N, H = g.num_nodes, 4
    q, k, v = (rng.normal(size=(N, hidden)) for _ in range(3))
    gout = rng.normal(size=(N, hidden))
    p = ds.folded[0].p.reshape(-1).copy()
    z0 = rng.integers(-2, 3, N).astype(np.int64)
    cfg = ModelConfig(hidden_dim=hidden)
    params = init_params(cfg, 0)

    def attention():
        kb = kernels.backend
        sc = kb.attn_scores(q, k, s.att_ptr, s.att_src, H, 0.25)
        a = kb.segment_softmax(sc, s.att_ptr)
        kb.attn_aggregate(a, v, s.att_ptr, s.att_src)
        da, _ = kb.attn_aggregate_grad(gout, a, v, s.att_ptr, s.att_src)
        ds_ = kb.segment_softmax_grad(a, da, s.att_ptr)
        kb.attn_scores_grad(ds_, q, k, s.att_ptr, s.att_src, H, 0.25)

    def icm():
        kernels.backend.icm_sweep(z0.copy(), p, 0.5, s.nbr_ptr, s.nbr, 8)

    def median():
        kernels.backend.median_sweep(z0.astype(float), p, 0.5, s.nbr_ptr, s.nbr)

    def model_step():
        out = forward(g, 0.5, cfg, params)
        out.trace.tape.backward(ad.mse_loss(out.trace.x_hat, np.zeros((N, 1))))
        params.zero_grad()

    return {"attention fwd+bwd": attention, "icm sweep": icm, "median sweep": median,
            "model fwd+bwd": model_step}


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--hidden", type=int, default=64)
    args = ap.parse_args()
    backends = kernels.available()
    original = kernels.BACKEND
    jobs = workloads(args.hidden)
    results = {}
    for name in backends:
        kernels.set_backend(name)
        for job, fn in jobs.items():
            fn()  # warm up
            results[(job, name)] = best_of(fn, args.repeats)
    kernels.set_backend(original)
    names = list(backends)
    print(f"{'workload':<20}" + "".join(f"{n:>12}" for n in names) + ("     speedup" if len(names) > 1 else ""))
    for job in jobs:
        row = f"{job:<20}" + "".join(f"{results[(job, n)] * 1e3:>10.2f}ms" for n in names)
        if "compiled" in backends:
            row += f"{results[(job, 'python')] / results[(job, 'compiled')]:>11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
