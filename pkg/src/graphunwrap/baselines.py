"""Classical unwrapping baselines.

All three methods return integer fold counts, so ``x_hat = lam * z_hat + p``
holds exactly. The graph methods minimise the first-difference energy

    E(z) = sum over edges (u, v) of |(lam z_u + p_u) - (lam z_v + p_v)|

which is invariant to a global integer shift of ``z``; every method anchors
the first sample of each channel at ``z = 0`` through its Itoh start.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import GraphMismatch
from .graph import WindowGraph
from .signal import FoldedWindow


@dataclass
class BaselineResult:
    x_hat: np.ndarray
    z_hat: np.ndarray
    iterations_used: int
    converged: bool
    energies: list = field(default_factory=list)


def _result(folded, z, iterations, converged, energies=()):
    z = np.asarray(z, dtype=np.int64).reshape(folded.p.shape)
    return BaselineResult(folded.lam * z + folded.p, z, iterations, converged, list(energies))


def energy(z, p, lam: float, edges: np.ndarray) -> float:
    """First-difference l1 energy of the reconstruction ``lam * z + p``."""
    x = lam * np.asarray(z, dtype=np.float64).reshape(-1) + np.asarray(p, dtype=np.float64).reshape(-1)
    return float(np.abs(x[edges[:, 0]] - x[edges[:, 1]]).sum())


def itoh_z(p: np.ndarray, lam: float) -> np.ndarray:
    """Sequential per-channel unwrapping with ``z = 0`` at the first sample."""
    p = np.asarray(p, dtype=np.float64)
    z = np.zeros(p.shape, dtype=np.int64)
    if p.shape[0] > 1:
        steps = -np.rint(np.diff(p, axis=0) / lam).astype(np.int64)
        z[1:] = np.cumsum(steps, axis=0)
    return z


def itoh_unwrap(folded: FoldedWindow) -> BaselineResult:
    if folded.p.shape[0] < 2:
        raise ValueError("itoh_unwrap needs T >= 2")
    return _result(folded, itoh_z(folded.p, folded.lam), 1, True)


def _check_graph(folded: FoldedWindow, graph: WindowGraph):
    if (graph.T, graph.C) != folded.p.shape:
        raise GraphMismatch(f"graph is {graph.T}x{graph.C}, window is {folded.p.shape}")


def mrf_recover(folded: FoldedWindow, graph: WindowGraph, max_iters: int = 50,
                init: str = "itoh", z_max: int = 8) -> BaselineResult:
    """Iterated conditional modes on the first-difference energy.

    Each sweep visits nodes in index order and moves a node by at most one
    fold (within ``+-z_max``) when that strictly lowers the energy. Stops
    when a sweep changes nothing or after ``max_iters`` sweeps.
    """
    _check_graph(folded, graph)
    if init == "itoh":
        z = itoh_z(folded.p, folded.lam).reshape(-1)
    elif init == "zero":
        z = np.zeros(folded.p.size, dtype=np.int64)
    else:
        raise ValueError("init must be 'itoh' or 'zero'")
    z = np.ascontiguousarray(z, dtype=np.int64)
    p = np.ascontiguousarray(folded.p.reshape(-1), dtype=np.float64)
    s = graph.structure
    energies = [energy(z, p, folded.lam, s.edges)]
    converged = False
    sweeps = 0
    while sweeps < max_iters:
        changes = kernels.backend.icm_sweep(z, p, folded.lam, s.nbr_ptr, s.nbr, z_max)
        sweeps += 1
        energies.append(energy(z, p, folded.lam, s.edges))
        if changes == 0:
            converged = True
            break
    return _result(folded, z, sweeps, converged, energies)


def sparse_opt_recover(folded: FoldedWindow, graph: WindowGraph, rounds: int = 50,
                       tol: float = 1e-9, z_max: int = 8) -> BaselineResult:
    """Real-valued l1 relaxation, rounding, then one ICM polish sweep.

    Starting from the Itoh fold counts, coordinate descent over real ``z``
    replaces each coordinate by the median of its neighbour-implied values.
    ``energies`` holds the relaxed, rounded and polished energies.
    """
    _check_graph(folded, graph)
    lam = folded.lam
    p = np.ascontiguousarray(folded.p.reshape(-1), dtype=np.float64)
    s = graph.structure
    zr = np.ascontiguousarray(itoh_z(folded.p, lam).reshape(-1), dtype=np.float64)
    converged = False
    used = 0
    for _ in range(rounds):
        used += 1
        if kernels.backend.median_sweep(zr, p, lam, s.nbr_ptr, s.nbr) < tol:
            converged = True
            break
    relaxed = energy(zr, p, lam, s.edges)
    z = np.ascontiguousarray(np.rint(zr).astype(np.int64))
    rounded = energy(z, p, lam, s.edges)
    kernels.backend.icm_sweep(z, p, lam, s.nbr_ptr, s.nbr, z_max)
    polished = energy(z, p, lam, s.edges)
    return _result(folded, z, used, converged, [relaxed, rounded, polished])


METHODS = ("itoh", "mrf", "sparse")


def recover(method: str, folded: FoldedWindow, graph: WindowGraph | None = None, **kw) -> BaselineResult:
    if method == "itoh":
        return itoh_unwrap(folded)
    if graph is None:
        raise ValueError(f"method {method!r} needs a graph")
    if method == "mrf":
        return mrf_recover(folded, graph, **kw)
    if method == "sparse":
        return sparse_opt_recover(folded, graph, **kw)
    raise ValueError(f"unknown baseline {method!r}; choose from {METHODS}")
