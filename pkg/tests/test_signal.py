import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from graphunwrap.errors import BadDelta, ConstantChannel, MissingFoldCounts, NonPositiveLambda, TooShort
from graphunwrap.signal import (
    FoldedWindow,
    Recording,
    SignalWindow,
    coarse_labels,
    fold,
    fold_array,
    normalize,
    segment,
    unfold_exact,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
lams = st.floats(0.05, 5.0)


def test_normalize_two_point():
    rec = Recording(np.array([[1.0], [3.0]]), "s1")
    out, stats = normalize(rec)
    np.testing.assert_allclose(out.samples[:, 0], [-1.0, 1.0])
    assert stats.mean[0] == 2.0 and stats.std[0] == 1.0


def test_normalize_idempotent():
    x = np.random.default_rng(0).normal(3, 2, size=(500, 4))
    once, _ = normalize(Recording(x, "s"))
    twice, _ = normalize(once)
    assert np.max(np.abs(once.samples - twice.samples)) < 1e-10
    assert np.all(np.abs(once.samples.mean(axis=0)) < 1e-10)


def test_normalize_constant_channel():
    x = np.ones((10, 3))
    x[:, 0] = np.arange(10)
    x[:, 2] = np.arange(10)
    with pytest.raises(ConstantChannel) as e:
        normalize(Recording(x, "s"))
    assert e.value.channel == 1


@pytest.mark.parametrize("n, expected", [(19200, 96), (450, 2), (200, 1)])
def test_segment_counts(n, expected):
    rec = Recording(np.arange(n * 2, dtype=float).reshape(n, 2), "s")
    wins = segment(rec, 200)
    assert len(wins) == expected
    assert all(w.x.shape == (200, 2) for w in wins)
    assert [w.window_index for w in wins] == list(range(expected))
    np.testing.assert_array_equal(wins[-1].x, rec.samples[(expected - 1) * 200:expected * 200])


def test_segment_too_short():
    with pytest.raises(TooShort):
        segment(Recording(np.zeros((199, 2)) + np.arange(2), "s"), 200)


@pytest.mark.parametrize("x, p, z", [(1.3, 0.3, 2), (-0.2, 0.3, -1), (0.25, 0.25, 0)])
def test_fold_examples(x, p, z):
    f = fold(SignalWindow(np.array([[x]])), 0.5)
    assert f.p[0, 0] == pytest.approx(p, abs=1e-12)
    assert f.z[0, 0] == z


def test_fold_rejects_nonpositive_lambda():
    with pytest.raises(NonPositiveLambda):
        fold(SignalWindow(np.zeros((2, 2))), 0.0)


def test_unfold_examples():
    f = FoldedWindow(np.array([[0.3]]), 0.5, np.array([[2]]))
    assert unfold_exact(f).x[0, 0] == pytest.approx(1.3)
    p = np.random.default_rng(1).uniform(0, 0.5, (5, 3))
    np.testing.assert_array_equal(unfold_exact(FoldedWindow(p, 0.5, np.zeros((5, 3), int))).x, p)
    with pytest.raises(MissingFoldCounts):
        unfold_exact(FoldedWindow(p, 0.5))


@given(arrays(np.float64, st.tuples(st.integers(1, 20), st.integers(1, 5)), elements=finite), lams)
def test_fold_roundtrip_and_range(x, lam):
    f = fold(SignalWindow(x), lam)
    assert np.all(f.p >= 0) and np.all(f.p < lam)
    assert np.max(np.abs(unfold_exact(f).x - x)) <= 1e-12 * max(1.0, np.max(np.abs(x)))
    # z is the mathematical floor: p differs from x - lam*floor(x/lam) only by rounding
    assert np.all(np.abs(f.z - np.floor(x / lam)) <= 1)


@given(st.lists(st.integers(-4000, 4000), min_size=1, max_size=30), st.integers(-20, 20))
def test_fold_translation_covariance(ticks, k):
    # dyadic values keep x + lam*k exact in floating point
    lam = 0.5
    x = np.array(ticks, dtype=float)[:, None] / 1024.0
    a = fold(SignalWindow(x), lam)
    b = fold(SignalWindow(x + lam * k), lam)
    np.testing.assert_array_equal(a.p, b.p)
    np.testing.assert_array_equal(a.z + k, b.z)


def test_fold_repairs_rounding_edge():
    lam = 0.1
    x = np.array([[-1e-18, 0.3, -0.3, 1e-300, -5e-324]])
    p, z = fold_array(x, lam)
    assert np.all((p >= 0) & (p < lam))
    assert np.max(np.abs(lam * z + p - x)) < 1e-15


@pytest.mark.parametrize("z, p, state", [(0, 0.25, 0), (2, 0.25, 2), (0, 0.01, 1), (-3, 0.49, 1)])
def test_coarse_label_examples(z, p, state):
    g = coarse_labels(FoldedWindow(np.array([[p]]), 0.5, np.array([[z]])), 0.1)
    assert g.labels[0, 0] == state


def test_coarse_labels_errors():
    f = FoldedWindow(np.zeros((2, 2)), 0.5, np.zeros((2, 2), int))
    with pytest.raises(BadDelta):
        coarse_labels(f, 0.5)
    with pytest.raises(MissingFoldCounts):
        coarse_labels(FoldedWindow(np.zeros((2, 2)), 0.5), 0.1)


@settings(max_examples=50)
@given(arrays(np.float64, (30, 3), elements=st.floats(-5, 5)), st.floats(0.1, 1.0), st.floats(0.01, 0.49))
def test_coarse_labels_total(x, lam, delta):
    g = coarse_labels(fold(SignalWindow(x), lam), delta)
    assert set(np.unique(g.labels)) <= {0, 1, 2}
    assert g.fractions().sum() == pytest.approx(1.0)
