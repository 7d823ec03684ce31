"""Recovery metrics and paired significance testing."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConstantInput

log = logging.getLogger(__name__)


def pearson_r(a, b) -> float:
    """Sample Pearson correlation of two equal-length vectors."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape or a.size < 2:
        raise ValueError("pearson_r needs two vectors of equal length >= 2")
    da, db = a - a.mean(), b - b.mean()
    sa, sb = np.sqrt(da @ da), np.sqrt(db @ db)
    if sa == 0 or sb == 0:
        raise ConstantInput("Pearson correlation is undefined for a constant input")
    return float(np.clip((da @ db) / (sa * sb), -1.0, 1.0))


def _betacf(a: float, b: float, x: float) -> float:
    # modified Lentz evaluation of the incomplete-beta continued fraction
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, 10000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularised incomplete beta function I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    lbeta = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
    front = math.exp(lbeta + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_two_sided(t: float, df: float) -> float:
    if math.isinf(t):
        return 0.0
    return betainc_reg(df / 2.0, 0.5, df / (df + t * t))


def paired_ttest(a, b) -> tuple[float, float]:
    """Paired t statistic of ``a - b`` and its two-sided p-value.

    All-zero differences give ``(0.0, 1.0)``; constant non-zero differences
    give an infinite statistic and ``p = 0.0``.
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape or a.size < 2:
        raise ValueError("paired_ttest needs equal-length samples with n >= 2")
    d = a - b
    n = d.size
    mean = d.mean()
    sd = d.std(ddof=1)
    if sd == 0.0:
        if mean == 0.0:
            return 0.0, 1.0
        return math.copysign(math.inf, mean), 0.0
    t = mean / (sd / math.sqrt(n))
    return float(t), student_t_two_sided(float(t), n - 1)


def offset_correct(x_hat: np.ndarray, x_true: np.ndarray, lam: float) -> np.ndarray:
    """Shift each channel of ``x_hat`` by the integer multiple of ``lam`` that
    minimises its squared error (the unresolvable unwrapping offset)."""
    k = np.rint((x_true - x_hat).mean(axis=0) / lam)
    return x_hat + lam * k


@dataclass
class WindowMetrics:
    accuracy: float
    l1: float
    mse: float
    r: float  # nan when undefined
    mse_offset: float = float("nan")


@dataclass
class Metrics:
    accuracy: float
    l1: float
    mse: float
    r: float
    mse_offset: float = float("nan")
    per_window: list = field(default_factory=list)

    def row(self) -> dict:
        return {"accuracy": self.accuracy, "l1": self.l1, "mse": self.mse, "r": self.r}

    def per_window_values(self, name: str) -> np.ndarray:
        return np.array([getattr(w, name) for w in self.per_window])


def _safe_r(a, b) -> float:
    try:
        return pearson_r(a, b)
    except ConstantInput:
        log.warning("Pearson R undefined for a constant window; excluded")
        return float("nan")


def score(x_true, x_hat, z_true, z_pred, lam: float | None = None) -> Metrics:
    """Pool L1/MSE/R/accuracy over all windows, keeping per-window values.

    Each argument is a sequence of ``(T, C)`` arrays. ``lam`` enables the
    offset-corrected MSE.
    """
    per = []
    for xt, xh, zt, zp in zip(x_true, x_hat, z_true, z_pred):
        err = xh - xt
        mo = float("nan")
        if lam is not None:
            mo = float(((offset_correct(xh, xt, lam) - xt) ** 2).mean())
        per.append(WindowMetrics(100.0 * float(np.mean(zp == zt)), float(np.abs(err).mean()),
                                 float((err ** 2).mean()), _safe_r(xh, xt), mo))
    xt_all = np.concatenate([np.ravel(a) for a in x_true])
    xh_all = np.concatenate([np.ravel(a) for a in x_hat])
    zt_all = np.concatenate([np.ravel(a) for a in z_true])
    zp_all = np.concatenate([np.ravel(a) for a in z_pred])
    err = xh_all - xt_all
    mo = float(np.mean([w.mse_offset for w in per])) if lam is not None else float("nan")
    return Metrics(100.0 * float(np.mean(zp_all == zt_all)), float(np.abs(err).mean()),
                   float((err ** 2).mean()), _safe_r(xh_all, xt_all), mo, per)
