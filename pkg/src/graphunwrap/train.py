"""Training, evaluation and ablation of GraphUnwrapNet."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import autodiff as ad
from .baselines import recover
from .data import WindowDataset
from .errors import EmptySplit
from .graph import build_graph
from .metrics import Metrics, score
from .model import ModelConfig, forward, init_params, predict_fold_class
from .rng import SplitMix64
from .signal import coarse_labels

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    pre_loss_weight: float = 0.5
    lr: float = 1e-3
    weight_decay: float = 5e-4
    batch_size: int = 16
    epochs: int = 100
    seed: int = 0
    lam: float = 0.5
    k: int = 3
    delta: float = 0.1
    test_subjects: int = 4
    val_subjects: int = 4
    folds: int = 10
    fold: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma, self.pre_loss_weight) < 0:
            raise ValueError("loss weights must be nonnegative")
        if max(self.alpha, self.beta, self.gamma) <= 0:
            raise ValueError("at least one of alpha, beta, gamma must be positive")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if not self.lam > 0:
            raise ValueError("lam must be positive")

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "model"}
        out.update({f"model.{k}": v for k, v in self.model.to_dict().items()})
        return out


# --------------------------------------------------------------------------
# splits


@dataclass(frozen=True)
class SplitPlan:
    test: tuple
    val: tuple
    folds: tuple  # tuple of tuples of subject ids

    def train_subjects(self, fold: int) -> list:
        """Subjects trained on in cross-validation run ``fold``: every fold but
        that one (all of them when there is a single fold)."""
        if len(self.folds) <= 1:
            return [s for f in self.folds for s in f]
        if not 0 <= fold < len(self.folds):
            raise ValueError(f"fold {fold} out of range for {len(self.folds)} folds")
        return [s for i, f in enumerate(self.folds) if i != fold for s in f]


def make_split(subjects, n_test: int = 4, n_val: int = 4, n_folds: int = 10) -> SplitPlan:
    """Last ``n_test`` subjects test, the ``n_val`` before them validation, the
    rest partitioned in order into ``n_folds`` contiguous folds."""
    subjects = list(subjects)
    if n_test + n_val >= len(subjects):
        raise EmptySplit(f"{len(subjects)} subjects leave none for training "
                         f"after {n_test} test and {n_val} validation")
    test = subjects[len(subjects) - n_test:]
    val = subjects[len(subjects) - n_test - n_val:len(subjects) - n_test]
    rest = subjects[:len(subjects) - n_test - n_val]
    n_folds = max(1, min(n_folds, len(rest)))
    folds = tuple(tuple(f.tolist()) for f in np.array_split(np.array(rest, dtype=object), n_folds))
    return SplitPlan(tuple(test), tuple(val), folds)


def split_for(dataset: WindowDataset, config: TrainConfig) -> SplitPlan:
    return make_split(dataset.subjects(), config.test_subjects, config.val_subjects, config.folds)


# --------------------------------------------------------------------------
# loss


def composite_loss(fold_logits: ad.Tensor, pre_logits, z_true, coarse_true, x_true, x_hat: ad.Tensor,
                   config: TrainConfig, z_max: int):
    """Weighted sum of fold-class CE, L1, MSE and the pre-estimator CE.

    Fold counts outside ``[-z_max, z_max]`` are clipped. Returns
    ``(loss, parts)`` where ``parts`` maps term names to floats and includes
    the number of clipped targets.
    """
    z = np.asarray(z_true).reshape(-1)
    clipped = int(np.count_nonzero(np.abs(z) > z_max))
    if clipped:
        log.warning("%d fold targets outside +-%d clipped", clipped, z_max)
    cls = np.clip(z, -z_max, z_max) + z_max
    x = np.asarray(x_true, dtype=np.float64).reshape(x_hat.shape)
    terms, parts = [], {"clipped": clipped}
    if config.alpha:
        t = ad.cross_entropy_rows(fold_logits, cls)
        terms.append((config.alpha, t))
        parts["ce"] = t.item()
    if config.beta:
        t = ad.l1_loss(x_hat, x)
        terms.append((config.beta, t))
        parts["l1"] = t.item()
    if config.gamma:
        t = ad.mse_loss(x_hat, x)
        terms.append((config.gamma, t))
        parts["mse"] = t.item()
    if pre_logits is not None and config.pre_loss_weight:
        t = ad.cross_entropy_rows(pre_logits, np.asarray(coarse_true).reshape(-1))
        terms.append((config.pre_loss_weight, t))
        parts["pre_ce"] = t.item()
    loss = ad.weighted_sum(terms)
    parts["total"] = loss.item()
    return loss, parts


# --------------------------------------------------------------------------
# training


@dataclass
class Sample:
    graph: object
    z: np.ndarray  # (T, C)
    coarse: np.ndarray  # (T, C)
    x: np.ndarray  # (T, C)


def make_samples(dataset: WindowDataset, k: int = 3, delta: float = 0.1, montage=None) -> list[Sample]:
    out = []
    for w, f in zip(dataset.signals, dataset.folded):
        out.append(Sample(build_graph(f, montage, k), f.require_z(), coarse_labels(f, delta).labels, w.x))
    return out


def sample_loss(sample: Sample, params: ad.ParamStore, config: TrainConfig, lam: float,
                mode: str = "train", rng=None):
    out = forward(sample.graph, lam, config.model, params, mode, rng)
    tr = out.trace
    loss, parts = composite_loss(tr.fold_logits, tr.pre_logits, sample.z, sample.coarse,
                                 sample.x.reshape(-1, 1), tr.x_hat, config, config.model.z_max)
    return tr.tape, loss, parts


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val: Metrics
    seconds: float = 0.0


@dataclass
class TrainResult:
    params: ad.ParamStore
    history: list
    best_epoch: int
    split: SplitPlan | None = None


def train_step(batch, params: ad.ParamStore, config: TrainConfig, lam: float, rngs) -> float:
    """Accumulate the mean batch gradient and apply one Adam update."""
    params.zero_grad()
    total = 0.0
    for sample, rng in zip(batch, rngs):
        tape, loss, parts = sample_loss(sample, params, config, lam, "train", rng)
        tape.backward(loss)
        total += parts["total"]
    params.scale_grads(1.0 / len(batch))
    ad.adam_step(params, lr=config.lr, weight_decay=config.weight_decay)
    return total / len(batch)


def fit(train_samples, val_samples, lam: float, config: TrainConfig, params=None,
        progress=None) -> TrainResult:
    """Mini-batch training; keeps the parameters with the best validation MSE."""
    if not train_samples:
        raise EmptySplit("no training windows")
    root = SplitMix64(config.seed)
    params = params if params is not None else init_params(config.model, config.seed)
    best, best_mse, best_epoch = params.copy(), np.inf, 0
    history = []
    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        order = root.spawn(f"shuffle/{epoch}").permutation(len(train_samples))
        losses = []
        for step, start in enumerate(range(0, len(order), config.batch_size)):
            idx = order[start:start + config.batch_size]
            rngs = [root.spawn(f"dropout/{epoch}/{step}/{j}") for j in range(len(idx))]
            losses.append(train_step([train_samples[i] for i in idx], params, config, lam, rngs))
        val = evaluate_samples(params, config.model, val_samples, lam) if val_samples else None
        rec = EpochRecord(epoch, float(np.mean(losses)), val, time.perf_counter() - t0)
        history.append(rec)
        if progress is not None:
            progress(rec)
        mse = val.mse if val is not None else rec.train_loss
        if mse < best_mse:
            best, best_mse, best_epoch = params.copy(), mse, epoch
    if config.epochs == 0:
        best = params
    return TrainResult(best, history, best_epoch)


def train(dataset: WindowDataset, config: TrainConfig, fold: int | None = None,
          montage=None, progress=None, params=None) -> TrainResult:
    """Train on one cross-validation fold of ``dataset`` (default ``config.fold``)."""
    if abs(dataset.lam - config.lam) > 1e-12:
        raise ValueError(f"dataset folded at lambda={dataset.lam}, config says {config.lam}")
    split = split_for(dataset, config)
    fold = config.fold if fold is None else fold
    train_ds = dataset.select(split.train_subjects(fold))
    val_ds = dataset.select(split.val)
    if len(train_ds) == 0 or len(val_ds) == 0:
        raise EmptySplit("training or validation split has no windows")
    train_s = make_samples(train_ds, config.k, config.delta, montage)
    val_s = make_samples(val_ds, config.k, config.delta, montage)
    result = fit(train_s, val_s, dataset.lam, config, params, progress)
    result.split = split
    return result


# --------------------------------------------------------------------------
# evaluation


def parallel_map(fn, items, threads: int = 1):
    items = list(items)
    if threads <= 1 or len(items) < 2:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def evaluate_samples(params, model_config: ModelConfig, samples, lam: float, threads: int = 1) -> Metrics:
    def run(s):
        out = forward(s.graph, lam, model_config, params, "eval")
        out.trace.tape.release()
        return out.x_hat, predict_fold_class(out.fold_logits, model_config.z_max, s.z.shape)

    preds = parallel_map(run, samples, threads)
    return score([s.x for s in samples], [p[0] for p in preds],
                 [s.z for s in samples], [p[1] for p in preds], lam)


def predict(params, model_config: ModelConfig, dataset: WindowDataset, k: int = 3, montage=None,
            threads: int = 1):
    """Eval-mode ``(x_hat, z_hat)`` for every window of ``dataset``."""
    def run(f):
        out = forward(build_graph(f, montage, k), dataset.lam, model_config, params, "eval")
        out.trace.tape.release()
        return out.x_hat, predict_fold_class(out.fold_logits, model_config.z_max, f.p.shape)

    return parallel_map(run, dataset.folded, threads)


def evaluate(params, model_config: ModelConfig, dataset: WindowDataset, k: int = 3, montage=None,
             threads: int = 1) -> Metrics:
    preds = predict(params, model_config, dataset, k, montage, threads)
    return score([w.x for w in dataset.signals], [p[0] for p in preds],
                 [f.z for f in dataset.folded], [p[1] for p in preds], dataset.lam)


def evaluate_baseline(method: str, dataset: WindowDataset, k: int = 3, montage=None, threads: int = 1,
                      **kw):
    """Run a classical method on every window; returns ``(Metrics, results)``."""
    def run(f):
        graph = None if method == "itoh" else build_graph(f, montage, k)
        return recover(method, f, graph, **kw)

    results = parallel_map(run, dataset.folded, threads)
    m = score([w.x for w in dataset.signals], [r.x_hat for r in results],
              [f.z for f in dataset.folded], [r.z_hat for r in results], dataset.lam)
    return m, results


# --------------------------------------------------------------------------
# ablation


@dataclass
class AblationResult:
    lam: float
    with_pgfi: Metrics
    without_pgfi: Metrics
    shared_init_equal: bool

    def table(self) -> list:
        return [
            {"lambda": self.lam, "method": "Proposed", **self.with_pgfi.row()},
            {"lambda": self.lam, "method": "Proposed (w/o PGFI)", **self.without_pgfi.row()},
        ]


def run_ablation(dataset: WindowDataset, config: TrainConfig, fold: int | None = None,
                 montage=None, progress=None) -> AblationResult:
    """Train with and without PGFI under identical seeds and splits; score both
    on the test subjects."""
    on_cfg = replace(config, model=replace(config.model, pgfi_enabled=True))
    off_cfg = replace(config, model=replace(config.model, pgfi_enabled=False))
    p_on = init_params(on_cfg.model, config.seed)
    p_off = init_params(off_cfg.model, config.seed)
    shared = [n for n in p_off.names() if n in p_on]
    shared_ok = p_on.checksum(shared) == p_off.checksum(shared)
    split = split_for(dataset, config)
    test = dataset.select(split.test)
    metrics = []
    for cfg, p0 in ((on_cfg, p_on), (off_cfg, p_off)):
        res = train(dataset, cfg, fold, montage, progress, params=p0)
        metrics.append(evaluate(res.params, cfg.model, test, cfg.k, montage))
    return AblationResult(dataset.lam, metrics[0], metrics[1], shared_ok)
