"""Signals and the modulo folding algebra.

A latent window ``x`` is observed through a modulo sensor as

    x = lam * z + p,    p in [0, lam),  z integer,

so folding is ``z = floor(x / lam)``, ``p = x - lam * z``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    BadDelta,
    ConstantChannel,
    MissingFoldCounts,
    NonPositiveLambda,
    TooShort,
)

STATE_ZERO, STATE_BOUNDARY, STATE_WRAPPED = 0, 1, 2
#: coarse fold state values represented by labels 0, 1, 2
STATE_VALUES = (0.0, 0.5, 1.0)


@dataclass(frozen=True)
class Recording:
    samples: np.ndarray  # (time, channels)
    subject_id: str
    sample_rate_hz: float = 128.0

    def __post_init__(self):
        if self.samples.ndim != 2:
            raise ValueError("samples must be a (time, channels) matrix")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError(f"recording {self.subject_id!r} has non-finite samples")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")

    @property
    def n_channels(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray
    subject_id: str


@dataclass(frozen=True)
class SignalWindow:
    x: np.ndarray  # (T, C)
    subject_id: str = ""
    window_index: int = 0

    @property
    def shape(self):
        return self.x.shape


@dataclass(frozen=True)
class FoldedWindow:
    p: np.ndarray  # (T, C), entries in [0, lam)
    lam: float
    z: Optional[np.ndarray] = None  # integer fold counts, same shape as p
    subject_id: str = ""
    window_index: int = 0

    @property
    def shape(self):
        return self.p.shape

    def require_z(self) -> np.ndarray:
        if self.z is None:
            raise MissingFoldCounts("fold counts z are required for this operation")
        return self.z


@dataclass(frozen=True)
class CoarseLabelGrid:
    labels: np.ndarray  # (T, C) in {0, 1, 2}
    delta: float

    def fractions(self) -> np.ndarray:
        return np.bincount(self.labels.ravel(), minlength=3) / self.labels.size


def normalize(recording: Recording) -> tuple[Recording, NormStats]:
    """Per-channel z-score over the whole recording (population std)."""
    x = np.asarray(recording.samples, dtype=np.float64)
    if x.shape[0] < 2:
        raise TooShort("normalization needs at least 2 samples per channel")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    for c in np.flatnonzero(std == 0):
        raise ConstantChannel(int(c))
    out = Recording((x - mean) / std, recording.subject_id, recording.sample_rate_hz)
    return out, NormStats(mean, std, recording.subject_id)


def segment(recording: Recording, T: int) -> list[SignalWindow]:
    """Non-overlapping windows of ``T`` samples; the trailing remainder is dropped."""
    if T < 2:
        raise ValueError("window length T must be >= 2")
    n = recording.samples.shape[0]
    if n < T:
        raise TooShort(f"recording {recording.subject_id!r} has {n} samples < T={T}")
    return [
        SignalWindow(recording.samples[w * T:(w + 1) * T].copy(), recording.subject_id, w)
        for w in range(n // T)
    ]


def fold_array(x, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(p, z)`` with ``p`` in [0, lam) and ``x == lam * z + p``."""
    if not lam > 0:
        raise NonPositiveLambda(f"lambda must be > 0, got {lam}")
    x = np.asarray(x, dtype=np.float64)
    z = np.floor(x / lam)
    p = x - lam * z
    # x / lam can round across an integer; repair so the half-open range holds
    hi = p >= lam
    if np.any(hi):
        z = np.where(hi, z + 1, z)
        p = np.where(hi, p - lam, p)
    lo = p < 0
    if np.any(lo):
        wrapped = p + lam
        ok = lo & (wrapped < lam)
        z = np.where(ok, z - 1, z)
        p = np.where(ok, wrapped, np.where(lo, 0.0, p))
    return p, z.astype(np.int64)


def fold(window: SignalWindow, lam: float) -> FoldedWindow:
    p, z = fold_array(window.x, lam)
    return FoldedWindow(p, float(lam), z, window.subject_id, window.window_index)


def unfold_exact(folded: FoldedWindow) -> SignalWindow:
    z = folded.require_z()
    return SignalWindow(folded.lam * z + folded.p, folded.subject_id, folded.window_index)


def coarse_labels(folded: FoldedWindow, delta: float = 0.1) -> CoarseLabelGrid:
    """Three-state fold labels for the pre-estimator.

    Samples within ``delta * lam`` of either wrap boundary get the boundary
    state (label 1) whatever their fold count; interior samples get label 0
    when unwrapped (z == 0) and label 2 otherwise.
    """
    z = folded.require_z()
    if not 0 < delta < 0.5:
        raise BadDelta(f"delta must lie in (0, 0.5), got {delta}")
    lam, p = folded.lam, folded.p
    near = (p < delta * lam) | (p > (1.0 - delta) * lam)
    labels = np.where(z == 0, STATE_ZERO, STATE_WRAPPED)
    labels = np.where(near, STATE_BOUNDARY, labels).astype(np.int64)
    return CoarseLabelGrid(labels, float(delta))
