import math
from dataclasses import replace

import numpy as np
import pytest

from graphunwrap import autodiff as ad
from graphunwrap.data import SynthConfig, prepare_windows, synth_generate
from graphunwrap.errors import EmptySplit
from graphunwrap.model import ModelConfig, init_params
from graphunwrap.train import (
    TrainConfig,
    composite_loss,
    evaluate,
    fit,
    make_samples,
    make_split,
    run_ablation,
    train,
)

TINY = ModelConfig(hidden_dim=8, num_layers=1, num_heads=2, z_max=4, pre_hidden=4)


@pytest.fixture(scope="module")
def tiny_ds():
    recs = synth_generate(SynthConfig(num_subjects=5, duration_s=2.0, num_channels=4, seed=1))
    return prepare_windows(recs, 64, 0.5)


def cfg(**kw):
    base = dict(lam=0.5, epochs=2, batch_size=2, test_subjects=1, val_subjects=1, folds=3, model=TINY)
    base.update(kw)
    return TrainConfig(**base)


def loss_of(logits, z, x, xh, config, pre=None, coarse=None, z_max=1):
    tape = ad.Tape()
    fl = tape.constant(logits)
    pl = None if pre is None else tape.constant(pre)
    return composite_loss(fl, pl, z, coarse, x, tape.constant(xh), config, z_max)


def test_loss_uniform_ce_is_ln3():
    c = TrainConfig(alpha=1, beta=0, gamma=0, pre_loss_weight=0)
    loss, parts = loss_of(np.zeros((6, 3)), np.array([-1, 0, 1, 1, 0, -1]), np.zeros((6, 1)),
                          np.zeros((6, 1)), c)
    assert loss.item() == pytest.approx(math.log(3), abs=1e-12)


def test_loss_constant_offset_l1():
    c = TrainConfig(alpha=0, beta=1, gamma=0, pre_loss_weight=0)
    x = np.random.default_rng(0).normal(size=(8, 1))
    loss, _ = loss_of(np.zeros((8, 3)), np.zeros(8, int), x, x + 0.1, c)
    assert loss.item() == pytest.approx(0.1, abs=1e-12)


def test_loss_perfect_prediction():
    z = np.array([-1, 0, 1, 0])
    logits = np.full((4, 3), -50.0)
    logits[np.arange(4), z + 1] = 50.0
    pre = np.full((4, 3), -50.0)
    coarse = np.array([0, 1, 2, 0])
    pre[np.arange(4), coarse] = 50.0
    x = np.arange(4.0)[:, None]
    loss, parts = loss_of(logits, z, x, x, TrainConfig(), pre, coarse)
    assert 0 <= loss.item() < 1e-6


def test_loss_clips_out_of_range_targets():
    _, parts = loss_of(np.zeros((3, 3)), np.array([5, 0, -7]), np.zeros((3, 1)), np.zeros((3, 1)),
                       TrainConfig())
    assert parts["clipped"] == 2


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(alpha=0, beta=0, gamma=0)
    with pytest.raises(ValueError):
        TrainConfig(lr=1e-3, lam=0.0)


def test_split_plan_partition():
    subjects = [f"s{i:02d}" for i in range(48)]
    plan = make_split(subjects)
    assert plan.test == tuple(subjects[-4:]) and plan.val == tuple(subjects[-8:-4])
    assert len(plan.folds) == 10 and all(len(f) == 4 for f in plan.folds)
    everything = list(plan.test) + list(plan.val) + [s for f in plan.folds for s in f]
    assert sorted(everything) == subjects
    assert len(plan.train_subjects(3)) == 36 and not set(plan.train_subjects(3)) & set(plan.folds[3])
    with pytest.raises(EmptySplit):
        make_split(subjects[:8])


def test_lr_zero_leaves_params_unchanged(tiny_ds):
    c = cfg(lr=0.0, weight_decay=0.0)
    p0 = init_params(c.model, c.seed)
    res = train(tiny_ds, c, params=p0.copy())
    assert res.params.checksum() == p0.checksum()


def test_training_is_deterministic(tiny_ds):
    c = cfg()
    a, b = train(tiny_ds, c), train(tiny_ds, c)
    assert [r.train_loss for r in a.history] == [r.train_loss for r in b.history]
    assert [r.val.mse for r in a.history] == [r.val.mse for r in b.history]
    assert a.params.checksum() == b.params.checksum()
    assert a.history[-1].train_loss < a.history[0].train_loss or len(a.history) == 1


def test_train_rejects_wrong_lambda_and_empty(tiny_ds):
    with pytest.raises(ValueError):
        train(tiny_ds, cfg(lam=0.6))
    with pytest.raises(EmptySplit):
        fit([], [], 0.5, cfg())


def test_evaluate_metric_ranges(tiny_ds):
    res = train(tiny_ds, cfg(epochs=1))
    m = evaluate(res.params, TINY, tiny_ds, 3)
    assert 0 <= m.accuracy <= 100 and m.l1 >= 0 and m.mse >= 0 and -1 <= m.r <= 1
    assert len(m.per_window) == len(tiny_ds)


def test_ablation_contract(tiny_ds):
    res = run_ablation(tiny_ds, cfg(epochs=1))
    assert res.shared_init_equal
    table = res.table()
    assert len(table) == 2 and [r["method"] for r in table] == ["Proposed", "Proposed (w/o PGFI)"]
    assert all(set(r) == {"lambda", "method", "accuracy", "l1", "mse", "r"} for r in table)


def test_make_samples_targets(tiny_ds):
    s = make_samples(tiny_ds)[0]
    np.testing.assert_array_equal(s.z, tiny_ds.folded[0].z)
    assert set(np.unique(s.coarse)) <= {0, 1, 2}
