"""GraphUnwrapNet: attention message passing over window graphs.

Pipeline for one window::

    features (N x 4)
      -> [PGFI] pre-estimator MLP -> coarse state s = argmax
                h0 = W features + E[s]          (replaces the plain W0 projection)
      or        h0 = W0 features                 (PGFI disabled)
      -> L x (multi-head neighbourhood attention, output projection,
              residual, layer norm, relu, dropout)
      -> fold-class logits over z in {-z_max, ..., z_max}
      -> x_hat = lam * E[z] + p
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

from . import autodiff as ad
from .errors import ConfigMismatch
from .graph import WindowGraph
from .rng import SplitMix64

N_STATES = 3
N_FEATURES = 4


@dataclass(frozen=True)
class ModelConfig:
    hidden_dim: int = 64
    num_layers: int = 3
    num_heads: int = 4
    dropout_rate: float = 0.1
    z_max: int = 8
    pgfi_enabled: bool = True
    pre_hidden: int = 32

    def __post_init__(self):
        for name in ("hidden_dim", "num_layers", "num_heads", "z_max", "pre_hidden"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.hidden_dim % self.num_heads:
            raise ValueError("hidden_dim must be divisible by num_heads")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")

    @property
    def num_classes(self) -> int:
        return 2 * self.z_max + 1

    def class_values(self) -> np.ndarray:
        return np.arange(-self.z_max, self.z_max + 1, dtype=np.float64)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def param_shapes(config: ModelConfig) -> dict:
    d = config.hidden_dim
    shapes = {}
    if not config.pgfi_enabled:
        shapes["input.w0"] = (d, N_FEATURES)
    else:
        shapes.update({
            "pre.w1": (config.pre_hidden, N_FEATURES),
            "pre.b1": (config.pre_hidden,),
            "pre.w2": (N_STATES, config.pre_hidden),
            "pre.b2": (N_STATES,),
            "pgfi.w": (d, N_FEATURES),
            "pgfi.embed": (N_STATES, d),
        })
    for layer in range(config.num_layers):
        for w in ("wq", "wk", "wv", "wo"):
            shapes[f"layer{layer}.{w}"] = (d, d)
        shapes[f"layer{layer}.ln_gain"] = (d,)
        shapes[f"layer{layer}.ln_bias"] = (d,)
    shapes["head.w"] = (config.num_classes, d)
    shapes["head.b"] = (config.num_classes,)
    return shapes


def init_params(config: ModelConfig, seed: int) -> ad.ParamStore:
    """Seeded initialisation; each tensor draws from a stream keyed by its name,
    so parameters shared between configurations start out identical."""
    root = SplitMix64(seed)
    store = ad.ParamStore()
    for name, shape in param_shapes(config).items():
        rng = root.spawn(name)
        size = int(np.prod(shape))
        if name.endswith("ln_gain"):
            value = np.ones(shape)
        elif len(shape) == 1:
            value = np.zeros(shape)
        elif name == "pgfi.embed":
            value = rng.normal(size, 0.02).reshape(shape)
        else:
            bound = np.sqrt(6.0 / (shape[0] + shape[1]))
            value = rng.uniform(-bound, bound, size).reshape(shape)
        store.add(name, value)
    return store


def check_params(config: ModelConfig, params: ad.ParamStore) -> None:
    expected = param_shapes(config)
    for name, shape in expected.items():
        if name not in params:
            raise ConfigMismatch(f"parameter {name!r} missing for this config")
        if params[name].shape != tuple(shape):
            raise ConfigMismatch(f"parameter {name!r} has shape {params[name].shape}, expected {shape}")


@dataclass
class Trace:
    """Tape-level handles of one forward pass, for building a loss."""

    tape: ad.Tape
    fold_logits: ad.Tensor
    pre_logits: Optional[ad.Tensor]
    x_hat: ad.Tensor  # (N, 1)


@dataclass
class ModelOutput:
    fold_logits: np.ndarray  # (N, K)
    pre_logits: Optional[np.ndarray]  # (N, 3), None without PGFI
    x_hat: np.ndarray  # (T, C)
    expected_z: np.ndarray  # (T, C)
    trace: Optional[Trace] = None


def _linear(x, params_t, w, b=None):
    y = ad.matmul(x, params_t[w], transpose_b=True)
    return ad.add_bias(y, params_t[b]) if b else y


def pre_estimate(features, tape: ad.Tape, params: ad.ParamStore, p_t=None):
    """Two-layer MLP producing (N, 3) coarse-state logits."""
    p_t = p_t if p_t is not None else {n: tape.param(params, n) for n in params.names() if n.startswith("pre.")}
    f = features if isinstance(features, ad.Tensor) else tape.constant(features)
    hidden = ad.relu(_linear(f, p_t, "pre.w1", "pre.b1"))
    return _linear(hidden, p_t, "pre.w2", "pre.b2")


def coarse_state(pre_logits: np.ndarray) -> np.ndarray:
    """Row-wise argmax; ties go to the lowest state index."""
    return np.argmax(pre_logits, axis=1)


def pgfi_inject(features, pre_logits, tape: ad.Tape, p_t: dict):
    """``W f + E[s]`` with ``s`` the argmax state (no gradient through the argmax)."""
    f = features if isinstance(features, ad.Tensor) else tape.constant(features)
    logits = pre_logits.data if isinstance(pre_logits, ad.Tensor) else np.asarray(pre_logits)
    states = coarse_state(logits)
    return ad.add(_linear(f, p_t, "pgfi.w"), ad.gather_rows(p_t["pgfi.embed"], states))


def graph_attention_layer(h, structure, p_t: dict, layer: int, config: ModelConfig,
                          training: bool = False, rng=None):
    """One attention block; returns ``(h_next, attention_weights)``."""
    pre = f"layer{layer}."
    q = _linear(h, p_t, pre + "wq")
    k = _linear(h, p_t, pre + "wk")
    v = _linear(h, p_t, pre + "wv")
    msg, weights = ad.graph_attention(q, k, v, structure.att_ptr, structure.att_src, config.num_heads)
    r = ad.add(h, _linear(msg, p_t, pre + "wo"))
    n = ad.layer_norm_rows(r, p_t[pre + "ln_gain"], p_t[pre + "ln_bias"])
    out = ad.dropout(ad.relu(n), config.dropout_rate, rng, training)
    return out, weights


def forward(graph: WindowGraph, lam: float, config: ModelConfig, params: ad.ParamStore,
            mode: str = "eval", rng: SplitMix64 | None = None) -> ModelOutput:
    """Run the network on one window graph.

    ``mode="train"`` enables dropout (``rng`` required when the rate is
    non-zero). The returned output carries the tape in ``trace`` so a loss can
    be attached and back-propagated.
    """
    if mode not in ("train", "eval"):
        raise ValueError("mode must be 'train' or 'eval'")
    training = mode == "train"
    if training and config.dropout_rate > 0 and rng is None:
        raise ValueError("train mode with dropout needs an rng")
    check_params(config, params)
    tape = ad.Tape()
    p_t = {n: tape.param(params, n) for n in params.names()}
    feats = tape.constant(graph.features)

    pre_logits = None
    if config.pgfi_enabled:
        pre_logits = pre_estimate(feats, tape, params, p_t)
        h = pgfi_inject(feats, pre_logits, tape, p_t)
    else:
        h = _linear(feats, p_t, "input.w0")

    for layer in range(config.num_layers):
        h, _ = graph_attention_layer(h, graph.structure, p_t, layer, config, training, rng)

    logits = _linear(h, p_t, "head.w", "head.b")
    probs = ad.softmax_rows(logits)
    ez = ad.matmul(probs, tape.constant(config.class_values()[:, None]))
    p = graph.features[:, :1]
    x_hat = ad.shift(ad.scale(ez, lam), p)

    T, C = graph.T, graph.C
    return ModelOutput(
        fold_logits=logits.data,
        pre_logits=None if pre_logits is None else pre_logits.data,
        x_hat=x_hat.data.reshape(T, C),
        expected_z=ez.data.reshape(T, C),
        trace=Trace(tape, logits, pre_logits, x_hat),
    )


def predict_fold_class(fold_logits: np.ndarray, z_max: int, shape=None) -> np.ndarray:
    """Argmax class mapped to its fold count; ties go to the lowest value (-z_max)."""
    z = np.argmax(fold_logits, axis=1).astype(np.int64) - z_max
    return z if shape is None else z.reshape(shape)
