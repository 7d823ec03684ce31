import numpy as np
import pytest

from graphunwrap import kernels
from graphunwrap.graph import build_graph, circle_montage
from graphunwrap.signal import FoldedWindow

BACKENDS = kernels.available()
needs_compiled = pytest.mark.skipif("compiled" not in BACKENDS, reason="compiled extension not built")


def test_selected_backend_is_listed():
    assert kernels.BACKEND in BACKENDS


def structure(T=7, C=5, k=2, seed=0):
    p = np.random.default_rng(seed).uniform(0, 0.5, (T, C))
    return build_graph(FoldedWindow(p, 0.5), circle_montage(C), k).structure


@needs_compiled
@pytest.mark.parametrize("seed", range(3))
def test_attention_kernels_agree(seed):
    py, cy = BACKENDS["python"], BACKENDS["compiled"]
    s = structure(seed=seed)
    rng = np.random.default_rng(seed)
    N, H, d = s.num_nodes, 2, 6
    q, k, v = (rng.normal(size=(N, d)) for _ in range(3))
    args = (s.att_ptr, s.att_src)
    sc_p = py.attn_scores(q, k, *args, H, 0.5)
    sc_c = cy.attn_scores(q, k, *args, H, 0.5)
    np.testing.assert_allclose(sc_c, sc_p, rtol=1e-12, atol=1e-12)
    a_p, a_c = py.segment_softmax(sc_p, s.att_ptr), cy.segment_softmax(sc_p, s.att_ptr)
    np.testing.assert_allclose(a_c, a_p, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(cy.attn_aggregate(a_p, v, *args), py.attn_aggregate(a_p, v, *args),
                               rtol=1e-12, atol=1e-12)
    g = rng.normal(size=(N, d))
    for x, y in zip(cy.attn_aggregate_grad(g, a_p, v, *args), py.attn_aggregate_grad(g, a_p, v, *args)):
        np.testing.assert_allclose(x, y, rtol=1e-11, atol=1e-12)
    ga = rng.normal(size=a_p.shape)
    np.testing.assert_allclose(cy.segment_softmax_grad(a_p, ga, s.att_ptr),
                               py.segment_softmax_grad(a_p, ga, s.att_ptr), rtol=1e-11, atol=1e-12)
    gs = rng.normal(size=sc_p.shape)
    for x, y in zip(cy.attn_scores_grad(gs, q, k, *args, H, 0.5), py.attn_scores_grad(gs, q, k, *args, H, 0.5)):
        np.testing.assert_allclose(x, y, rtol=1e-11, atol=1e-12)


@needs_compiled
def test_scatter_agrees():
    rng = np.random.default_rng(1)
    vals = rng.normal(size=(30, 4))
    idx = rng.integers(0, 7, 30).astype(np.int64)
    np.testing.assert_allclose(BACKENDS["compiled"].scatter_add_rows(vals, idx, 7),
                               BACKENDS["python"].scatter_add_rows(vals, idx, 7), atol=1e-12)


@needs_compiled
@pytest.mark.parametrize("seed", range(5))
def test_sweeps_agree(seed):
    s = structure(T=9, C=4, k=2, seed=seed)
    rng = np.random.default_rng(seed)
    p = rng.uniform(0, 0.5, s.num_nodes)
    z0 = rng.integers(-2, 3, s.num_nodes).astype(np.int64)
    za, zb = z0.copy(), z0.copy()
    ca = BACKENDS["python"].icm_sweep(za, p, 0.5, s.nbr_ptr, s.nbr, 8)
    cb = BACKENDS["compiled"].icm_sweep(zb, p, 0.5, s.nbr_ptr, s.nbr, 8)
    assert ca == cb
    np.testing.assert_array_equal(za, zb)
    ra, rb = z0.astype(float), z0.astype(float)
    da = BACKENDS["python"].median_sweep(ra, p, 0.5, s.nbr_ptr, s.nbr)
    db = BACKENDS["compiled"].median_sweep(rb, p, 0.5, s.nbr_ptr, s.nbr)
    assert da == pytest.approx(db, abs=1e-12)
    np.testing.assert_allclose(ra, rb, atol=1e-12)


def test_set_backend_roundtrip():
    before = kernels.BACKEND
    kernels.set_backend("python")
    assert kernels.backend is BACKENDS["python"]
    kernels.set_backend(before)
    with pytest.raises(ValueError):
        kernels.set_backend("gpu")
