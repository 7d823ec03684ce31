"""Dataset ingestion, synthetic EEG-like signals and the ``MODR`` container.

``MODR`` layout (all little-endian)::

    b"MODR" | version u32 | T u32 | C u32 | lam f64 | n_windows u32
    per window:
        id_len u32 | subject id (utf-8) | window_index u32
        x f64[T*C] | p f64[T*C] | z i32[T*C]          (row-major)
"""

from __future__ import annotations

import csv
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadBand,
    BadColumnCount,
    BadMagic,
    CorruptPayload,
    EmptyFile,
    NonNumericCell,
    ShapeMismatch,
    VersionUnsupported,
)
from .rng import SplitMix64
from .signal import FoldedWindow, Recording, SignalWindow, fold, normalize, segment

STEW_CHANNELS = 14
STEW_RATE_HZ = 128.0

_SUBJECT_RE = re.compile(r"(sub\d+)", re.IGNORECASE)


def subject_from_filename(name: str) -> str:
    m = _SUBJECT_RE.search(name)
    return m.group(1).lower() if m else Path(name).stem


def read_stew_file(path, n_channels: int = STEW_CHANNELS) -> np.ndarray:
    path = Path(path)
    rows = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            cells = line.split()
            if not cells:
                continue
            if len(cells) != n_channels:
                raise BadColumnCount(f"expected {n_channels} columns, found {len(cells)}", path, lineno)
            try:
                rows.append([float(c) for c in cells])
            except ValueError:
                bad = next(c for c in cells if not _is_float(c))
                raise NonNumericCell(f"non-numeric cell {bad!r}", path, lineno) from None
    if not rows:
        raise EmptyFile("no data rows", path)
    return np.array(rows)


def _is_float(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


def load_stew(directory, subject_ids: dict | None = None, pattern: str = "*.txt") -> list[Recording]:
    """One Recording per text file (sorted by name), 128 Hz.

    ``subject_ids`` optionally maps file names to subject ids; otherwise the
    ``subNN`` token in the file name is used, falling back to the stem.
    """
    subject_ids = subject_ids or {}
    out = []
    for path in sorted(Path(directory).glob(pattern)):
        samples = read_stew_file(path)
        sid = subject_ids.get(path.name, subject_from_filename(path.name))
        out.append(Recording(samples, sid, STEW_RATE_HZ))
    return out


# --------------------------------------------------------------------------
# synthetic data


@dataclass(frozen=True)
class Band:
    low_hz: float
    high_hz: float
    amp_low: float
    amp_high: float


DEFAULT_BANDS = (
    Band(1.0, 4.0, 1.0, 2.0),     # delta
    Band(4.0, 8.0, 0.3, 0.6),     # theta
    Band(8.0, 13.0, 0.2, 0.5),    # alpha
    Band(13.0, 30.0, 0.03, 0.1),  # beta
)


@dataclass(frozen=True)
class SynthConfig:
    num_subjects: int = 8
    duration_s: float = 60.0
    sample_rate_hz: float = 128.0
    num_channels: int = STEW_CHANNELS
    bands: tuple = DEFAULT_BANDS
    components_per_band: int = 3
    pink_noise_amp: float = 0.1
    mixing: float = 0.3
    seed: int = 0

    def validate(self):
        if self.num_subjects < 1 or self.num_channels < 1:
            raise ValueError("num_subjects and num_channels must be positive")
        if not 0.0 <= self.mixing <= 1.0:
            raise ValueError("mixing must lie in [0, 1]")
        if self.pink_noise_amp < 0:
            raise ValueError("pink_noise_amp must be nonnegative")
        nyq = self.sample_rate_hz / 2
        for b in self.bands:
            if not (0 < b.low_hz < b.high_hz < nyq):
                raise BadBand(f"band {b.low_hz}-{b.high_hz} Hz outside (0, {nyq})")
            if b.amp_low < 0 or b.amp_high < b.amp_low:
                raise BadBand(f"bad amplitude range {b.amp_low}-{b.amp_high}")


def pink_noise(rng: SplitMix64, n: int) -> np.ndarray:
    """Unit-variance noise with a 1/f power spectrum."""
    white = rng.normal(n)
    spec = np.fft.rfft(white)
    f = np.arange(spec.size)
    f[0] = 1
    spec = spec / np.sqrt(f)
    spec[0] = 0.0
    x = np.fft.irfft(spec, n)
    sd = x.std()
    return x / sd if sd > 0 else x


def synth_generate(config: SynthConfig) -> list[Recording]:
    """Deterministic EEG-like recordings: band sinusoids + pink noise, mixed
    across channels as ``(1 - m) * own + m * channel_mean``."""
    config.validate()
    root = SplitMix64(config.seed)
    n = int(round(config.duration_s * config.sample_rate_hz))
    t = np.arange(n) / config.sample_rate_hz
    out = []
    for s in range(config.num_subjects):
        rng = root.spawn(f"subject{s}")
        gain = rng.uniform(0.5, 2.0, 1)[0]
        src = np.zeros((n, config.num_channels))
        for c in range(config.num_channels):
            for b in config.bands:
                m = config.components_per_band
                freq = rng.uniform(b.low_hz, b.high_hz, m)
                amp = rng.uniform(b.amp_low, b.amp_high, m)
                phase = rng.uniform(0.0, 2 * np.pi, m)
                src[:, c] += (amp * np.sin(2 * np.pi * freq * t[:, None] + phase)).sum(axis=1)
            if config.pink_noise_amp > 0:
                src[:, c] += config.pink_noise_amp * pink_noise(rng, n)
        mixed = (1.0 - config.mixing) * src + config.mixing * src.mean(axis=1, keepdims=True)
        out.append(Recording(gain * mixed, f"S{s + 1:02d}", config.sample_rate_hz))
    return out


# --------------------------------------------------------------------------
# windowed datasets


@dataclass
class WindowDataset:
    """Windows sharing (T, C, lam): latent signals with their folded views."""

    T: int
    C: int
    lam: float
    signals: list = field(default_factory=list)  # SignalWindow
    folded: list = field(default_factory=list)  # FoldedWindow with z

    def __len__(self):
        return len(self.signals)

    def subjects(self) -> list[str]:
        seen = []
        for w in self.signals:
            if w.subject_id not in seen:
                seen.append(w.subject_id)
        return seen

    def select(self, subjects) -> "WindowDataset":
        keep = set(subjects)
        idx = [i for i, w in enumerate(self.signals) if w.subject_id in keep]
        return WindowDataset(self.T, self.C, self.lam,
                             [self.signals[i] for i in idx], [self.folded[i] for i in idx])

    def refold(self, lam: float) -> "WindowDataset":
        return WindowDataset(self.T, self.C, float(lam), list(self.signals),
                             [fold(w, lam) for w in self.signals])


def prepare_windows(recordings, T: int, lam: float) -> WindowDataset:
    """Normalise each recording, cut it into windows and fold at ``lam``."""
    signals = []
    for rec in recordings:
        normed, _ = normalize(rec)
        signals.extend(segment(normed, T))
    if not signals:
        raise ValueError("no windows produced")
    C = signals[0].x.shape[1]
    return WindowDataset(T, C, float(lam), signals, [fold(w, lam) for w in signals])


MAGIC = b"MODR"
VERSION = 1
_HEADER = struct.Struct("<4sIIIdI")


def save_dataset(ds: WindowDataset, path) -> None:
    parts = [_HEADER.pack(MAGIC, VERSION, ds.T, ds.C, ds.lam, len(ds))]
    for w, f in zip(ds.signals, ds.folded):
        if w.x.shape != (ds.T, ds.C) or f.p.shape != (ds.T, ds.C):
            raise ShapeMismatch("all windows must be T x C")
        sid = w.subject_id.encode("utf-8")
        parts.append(struct.pack("<I", len(sid)) + sid + struct.pack("<I", w.window_index))
        parts.append(np.ascontiguousarray(w.x, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(f.p, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(f.require_z(), dtype="<i4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_dataset(path) -> WindowDataset:
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise BadMagic("not a MODR container", path)
    if len(buf) < _HEADER.size:
        raise CorruptPayload("truncated header", path)
    _, version, T, C, lam, count = _HEADER.unpack_from(buf, 0)
    if version != VERSION:
        raise VersionUnsupported(f"container version {version}", path)
    if not lam > 0:
        raise CorruptPayload(f"lambda {lam} is not positive", path)
    n = T * C
    pos = _HEADER.size
    ds = WindowDataset(T, C, lam)
    try:
        for k in range(count):
            (id_len,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            sid = buf[pos:pos + id_len].decode("utf-8")
            pos += id_len
            (widx,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            if pos + 20 * n > len(buf):
                raise CorruptPayload(f"window {k} payload truncated", path)
            x = np.frombuffer(buf, "<f8", n, pos).reshape(T, C).astype(np.float64)
            p = np.frombuffer(buf, "<f8", n, pos + 8 * n).reshape(T, C).astype(np.float64)
            z = np.frombuffer(buf, "<i4", n, pos + 16 * n).reshape(T, C).astype(np.int64)
            pos += 20 * n
            bad = ~((p >= 0) & (p < lam))
            if bad.any():
                t, c = np.argwhere(bad)[0]
                raise CorruptPayload(f"window {k} cell (t={t}, c={c}) has p={p[t, c]!r} outside [0, {lam})", path)
            ds.signals.append(SignalWindow(x, sid, widx))
            ds.folded.append(FoldedWindow(p, lam, z, sid, widx))
    except (struct.error, UnicodeDecodeError):
        raise CorruptPayload("truncated or malformed window record", path) from None
    if pos != len(buf):
        raise CorruptPayload(f"{len(buf) - pos} trailing bytes", path)
    return ds


def export_plot_data(x, x_hat, p, path) -> None:
    """CSV with columns t, channel, x, p, x_hat (1-based t and channel)."""
    x, x_hat, p = (np.asarray(a, dtype=np.float64) for a in (x, x_hat, p))
    if not (x.shape == x_hat.shape == p.shape) or x.ndim != 2:
        raise ShapeMismatch(f"shapes differ: x {x.shape}, x_hat {x_hat.shape}, p {p.shape}")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "channel", "x", "p", "x_hat"])
        T, C = x.shape
        for t in range(T):
            for c in range(C):
                w.writerow([t + 1, c + 1, repr(float(x[t, c])), repr(float(p[t, c])), repr(float(x_hat[t, c]))])
