"""Spatio-temporal window graphs.

Node ``(t, i)`` (0-based time ``t``, channel ``i``) has index ``t * C + i``,
so node order matches a row-major ravel of a ``(T, C)`` window. Temporal
edges join consecutive samples of one channel; spatial edges join k-nearest
montage neighbours at the same time step.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ChannelMismatch, FormatError, KTooLarge
from .signal import FoldedWindow


@dataclass(frozen=True)
class Montage:
    channel_names: tuple
    coords: np.ndarray  # (C, 2)

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "channel_names", tuple(self.channel_names))
        if coords.shape != (len(self.channel_names), 2):
            raise ValueError("coords must be a (C, 2) matrix matching channel_names")
        if len(self.channel_names) < 2:
            raise ValueError("a montage needs at least 2 channels")
        if len(np.unique(coords, axis=0)) != len(coords):
            raise ValueError("montage coordinates must be pairwise distinct")

    @property
    def n_channels(self) -> int:
        return len(self.channel_names)

    def key(self):
        return (self.channel_names, self.coords.tobytes())


def load_montage(path) -> Montage:
    """Read a montage file: one ``name x y`` line per channel."""
    names, coords = [], []
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise FormatError(f"expected 'name x y', got {len(parts)} fields", path, lineno)
        try:
            coords.append((float(parts[1]), float(parts[2])))
        except ValueError:
            raise FormatError("non-numeric coordinate", path, lineno) from None
        names.append(parts[0])
    return Montage(tuple(names), np.array(coords))


@functools.lru_cache(maxsize=None)
def default_montage() -> Montage:
    """The 14 Emotiv EPOC electrodes (AF3 ... AF4) projected onto the plane."""
    ref = resources.files("graphunwrap") / "data" / "emotiv_epoc.txt"
    with resources.as_file(ref) as path:
        return load_montage(path)


def circle_montage(C: int) -> Montage:
    """``C`` channels evenly spaced on the unit circle (synthetic setups)."""
    ang = 2 * np.pi * np.arange(C) / C
    return Montage(tuple(f"ch{i}" for i in range(C)), np.column_stack([np.cos(ang), np.sin(ang)]))


def knn_spatial(montage: Montage, k: int) -> list[tuple[int, int]]:
    """Undirected union of each channel's k nearest neighbours.

    Pairs are 0-based ``(i, j)`` with ``i < j``, sorted. Distance ties go to
    the lower channel index. ``k = 0`` yields no spatial edges.
    """
    C = montage.n_channels
    if k < 0:
        raise ValueError("k must be non-negative")
    if k > C - 1:
        raise KTooLarge(f"k={k} exceeds C-1={C - 1}")
    xy = montage.coords
    pairs = set()
    idx = np.arange(C)
    for i in range(C):
        d = np.linalg.norm(xy - xy[i], axis=1)
        d[i] = np.inf
        for j in np.lexsort((idx, d))[:k]:
            pairs.add((min(i, int(j)), max(i, int(j))))
    return sorted(pairs)


@dataclass(frozen=True)
class GraphStructure:
    """Value-independent part of a window graph, shared across windows."""

    T: int
    C: int
    edges: np.ndarray  # (E, 2) undirected, u < v
    n_temporal: int
    n_spatial: int
    # CSR over neighbours (no self loops): neighbours of u are nbr[nbr_ptr[u]:nbr_ptr[u+1]]
    nbr_ptr: np.ndarray = field(repr=False)
    nbr: np.ndarray = field(repr=False)
    # CSR for attention, self loops included, grouped by receiving node
    att_ptr: np.ndarray = field(repr=False)
    att_src: np.ndarray = field(repr=False)

    @property
    def num_nodes(self) -> int:
        return self.T * self.C


def _csr(n, dst, src):
    order = np.lexsort((src, dst))
    dst, src = dst[order], src[order]
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(dst, minlength=n), out=ptr[1:])
    return ptr, np.ascontiguousarray(src, dtype=np.int64)


def structure_from_edges(T: int, C: int, edges: np.ndarray, n_temporal=None) -> GraphStructure:
    n = T * C
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    u, v = edges[:, 0], edges[:, 1]
    nbr_ptr, nbr = _csr(n, np.concatenate([u, v]), np.concatenate([v, u]))
    loops = np.arange(n, dtype=np.int64)
    att_ptr, att_src = _csr(n, np.concatenate([u, v, loops]), np.concatenate([v, u, loops]))
    if n_temporal is None:
        n_temporal = 0
    return GraphStructure(T, C, edges, n_temporal, len(edges) - n_temporal,
                          nbr_ptr, nbr, att_ptr, att_src)


@functools.lru_cache(maxsize=64)
def _structure_cached(T, C, montage_key, k):
    names, raw = montage_key
    pairs = [] if k == 0 else knn_spatial(Montage(names, np.frombuffer(raw).reshape(-1, 2)), k)
    t = np.arange(T - 1)[:, None]
    ch = np.arange(C)[None, :]
    temporal = np.stack([(t * C + ch).ravel(), ((t + 1) * C + ch).ravel()], axis=1)
    if pairs:
        pa = np.array(pairs, dtype=np.int64)
        ts = np.arange(T)[:, None] * C
        spatial = np.stack([(ts + pa[:, 0]).ravel(), (ts + pa[:, 1]).ravel()], axis=1)
    else:
        spatial = np.zeros((0, 2), dtype=np.int64)
    edges = np.concatenate([temporal, spatial]).astype(np.int64)
    return structure_from_edges(T, C, edges, n_temporal=len(temporal))


def graph_structure(T: int, C: int, montage: Montage | None = None, k: int = 3) -> GraphStructure:
    if montage is None:
        k = 0 if C == 1 else k
        montage_key = ((), b"") if C == 1 else resolve_montage(C).key()
    else:
        if montage.n_channels != C:
            raise ChannelMismatch(f"window has {C} channels, montage has {montage.n_channels}")
        montage_key = montage.key()
    return _structure_cached(T, C, montage_key, k)


def resolve_montage(C: int) -> Montage:
    """Default montage for ``C`` channels: Emotiv EPOC for 14, a circle otherwise."""
    return default_montage() if C == 14 else circle_montage(C)


def node_features(folded: FoldedWindow) -> np.ndarray:
    """``[p, dp, t/T, i/C]`` per node with 1-based t, i and ``dp`` zero at t = 1."""
    p = np.asarray(folded.p, dtype=np.float64)
    T, C = p.shape
    if T < 2:
        raise ValueError("node features need T >= 2")
    dp = np.zeros_like(p)
    dp[1:] = p[1:] - p[:-1]
    t = np.broadcast_to((np.arange(1, T + 1) / T)[:, None], (T, C))
    i = np.broadcast_to((np.arange(1, C + 1) / C)[None, :], (T, C))
    return np.stack([p.ravel(), dp.ravel(), t.ravel(), i.ravel()], axis=1)


@dataclass(frozen=True)
class WindowGraph:
    structure: GraphStructure
    features: np.ndarray  # (N, 4)

    @property
    def num_nodes(self) -> int:
        return self.structure.num_nodes

    @property
    def edges(self) -> np.ndarray:
        return self.structure.edges

    @property
    def T(self) -> int:
        return self.structure.T

    @property
    def C(self) -> int:
        return self.structure.C

    def node_index(self, t: int, i: int) -> int:
        """0-based (t, i) to node index."""
        return t * self.structure.C + i


def build_graph(folded: FoldedWindow, montage: Montage | None = None, k: int = 3) -> WindowGraph:
    """Graph for one folded window.

    With ``montage=None`` the default montage for the window's channel count
    is used; a single-channel window gets temporal edges only.
    """
    T, C = folded.p.shape
    structure = graph_structure(T, C, montage, k)
    return WindowGraph(structure, node_features(folded))
