"""Independent reference computations used by the tests."""

import itertools
import math

import numpy as np

from graphunwrap.graph import build_graph
from graphunwrap.rng import SplitMix64
from graphunwrap.signal import FoldedWindow, SignalWindow, fold


def chain_energy(z, p, lam):
    x = [lam * zi + pi for zi, pi in zip(z, p)]
    return sum(abs(x[t + 1] - x[t]) for t in range(len(x) - 1))


def exhaustive_chain_min(p, lam, values=(-1, 0, 1)):
    """Minimum first-difference energy over every z in values^T (pure Python)."""
    best, arg = math.inf, None
    for z in itertools.product(values, repeat=len(p)):
        e = chain_energy(z, p, lam)
        if e < best:
            best, arg = e, z
    return best, arg


def small_chain_cases(n=100, seed=11, lam=0.5, t_max=8):
    """1-channel windows with T in [2, t_max] and true z in {-1, 0, 1}."""
    root = SplitMix64(seed)
    cases = []
    for i in range(n):
        rng = root.spawn(i)
        T = 2 + int(rng.integers(t_max - 1, 1)[0])
        z = rng.integers(3, T) - 1
        p = rng.uniform(0.0, lam, T)
        f = fold(SignalWindow((lam * z + p)[:, None]), lam)
        cases.append((f, build_graph(f)))
    return cases


def pearson_loops(a, b):
    n = len(a)
    ma, mb = sum(a) / n, sum(b) / n
    sab = sum((x - ma) * (y - mb) for x, y in zip(a, b))
    saa = sum((x - ma) ** 2 for x in a)
    sbb = sum((y - mb) ** 2 for y in b)
    return sab / math.sqrt(saa * sbb)


def folded_from_p(p, lam, z=None):
    p = np.asarray(p, dtype=float)
    return FoldedWindow(p if p.ndim == 2 else p[:, None], lam, z)
