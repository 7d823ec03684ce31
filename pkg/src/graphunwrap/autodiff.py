"""Small reverse-mode autodiff over dense float64 arrays.

A :class:`Tape` records every primitive applied during one forward pass;
``tape.backward(loss)`` replays the records in reverse and accumulates
parameter gradients into the owning :class:`ParamStore`. Tapes are cheap
and meant to be rebuilt for each forward pass.

Only the primitives the model needs are provided. Shapes follow numpy;
linear layers store weights as ``(out, in)`` and use
``matmul(x, w, transpose_b=True)``.
"""

from __future__ import annotations

import hashlib
import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

from . import kernels
from .errors import (
    BadMagic,
    CorruptPayload,
    MissingGradients,
    NonFinite,
    NotScalarLoss,
    ShapeMismatch,
    VersionUnsupported,
)


class Tensor:
    __slots__ = ("data", "grad", "tape", "requires_grad", "name")

    def __init__(self, data, tape=None, requires_grad=False, name=None):
        self.data = data
        self.grad = None
        self.tape = tape
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, name={self.name!r})"


class Tape:
    def __init__(self):
        self.records = []
        self.params = []  # (Tensor, ParamStore, name)

    def constant(self, array) -> Tensor:
        return Tensor(np.asarray(array, dtype=np.float64), self)

    def param(self, store: "ParamStore", name: str) -> Tensor:
        t = Tensor(store.params[name], self, requires_grad=True, name=name)
        self.params.append((t, store, name))
        return t

    def _record(self, out: np.ndarray, inputs, backward, op: str) -> Tensor:
        if not np.all(np.isfinite(out)):
            raise NonFinite(f"{op} produced non-finite values")
        needs = any(t.requires_grad for t in inputs)
        t = Tensor(out, self, requires_grad=needs, name=op)
        if needs:
            self.records.append((t, inputs, backward))
        return t

    def backward(self, loss: Tensor) -> None:
        if loss.data.size != 1:
            raise NotScalarLoss(f"loss must be scalar, got shape {loss.data.shape}")
        loss.grad = np.ones_like(loss.data)
        for out, inputs, fn in reversed(self.records):
            if out.grad is None:
                continue
            grads = fn(out.grad)
            for t, g in zip(inputs, grads):
                if g is None or not t.requires_grad:
                    continue
                t.grad = g if t.grad is None else t.grad + g
        for t, store, name in self.params:
            if t.grad is not None:
                store.grads[name] += t.grad
                store.has_grads = True
        self.release()

    def release(self) -> None:
        """Drop recorded ops; tensors point back at the tape, so this breaks the cycle."""
        self.records = []
        self.params = []


def _tape_of(*ts):
    for t in ts:
        if isinstance(t, Tensor) and t.tape is not None:
            return t.tape
    raise ValueError("no tape among the operands")


def _as_tensor(x, tape):
    return x if isinstance(x, Tensor) else tape.constant(x)


# --------------------------------------------------------------------------
# primitives


def matmul(a: Tensor, b: Tensor, transpose_b: bool = False) -> Tensor:
    tape = _tape_of(a, b)
    a, b = _as_tensor(a, tape), _as_tensor(b, tape)
    A, B = a.data, b.data
    inner_b = B.shape[1] if transpose_b else B.shape[0]
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != inner_b:
        raise ShapeMismatch(f"matmul {A.shape} x {B.shape}{'^T' if transpose_b else ''}")
    out = A @ (B.T if transpose_b else B)

    def back(g):
        ga = g @ B if transpose_b else g @ B.T
        gb = g.T @ A if transpose_b else A.T @ g
        return ga, gb

    return tape._record(out, (a, b), back, "matmul")


def add(a: Tensor, b: Tensor) -> Tensor:
    tape = _tape_of(a, b)
    a, b = _as_tensor(a, tape), _as_tensor(b, tape)
    if a.shape != b.shape:
        raise ShapeMismatch(f"add {a.shape} + {b.shape}")
    return tape._record(a.data + b.data, (a, b), lambda g: (g, g), "add")


def add_bias(a: Tensor, bias: Tensor) -> Tensor:
    tape = _tape_of(a, bias)
    a, bias = _as_tensor(a, tape), _as_tensor(bias, tape)
    if a.data.ndim != 2 or bias.shape != (a.shape[1],):
        raise ShapeMismatch(f"add_bias {a.shape} + {bias.shape}")
    return tape._record(a.data + bias.data, (a, bias), lambda g: (g, g.sum(axis=0)), "add_bias")


def scale(a: Tensor, c: float) -> Tensor:
    return a.tape._record(a.data * c, (a,), lambda g: (g * c,), "scale")


def shift(a: Tensor, offset) -> Tensor:
    """``a + offset`` with a constant array/scalar offset."""
    offset = np.asarray(offset, dtype=np.float64)
    if offset.ndim and offset.shape != a.shape:
        raise ShapeMismatch(f"shift {a.shape} + {offset.shape}")
    return a.tape._record(a.data + offset, (a,), lambda g: (g,), "shift")


def weighted_sum(terms) -> Tensor:
    """``sum(w * t)`` over ``(weight, scalar tensor)`` pairs."""
    terms = [(float(w), t) for w, t in terms]
    tape = _tape_of(*(t for _, t in terms))
    out = sum(w * t.data for w, t in terms)
    return tape._record(np.asarray(out, dtype=np.float64), tuple(t for _, t in terms),
                        lambda g: tuple(w * g for w, _ in terms), "weighted_sum")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return a.tape._record(a.data * mask, (a,), lambda g: (g * mask,), "relu")


def softmax_rows(a: Tensor) -> Tensor:
    x = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(x)
    s = e / e.sum(axis=1, keepdims=True)

    def back(g):
        return (s * (g - (g * s).sum(axis=1, keepdims=True)),)

    return a.tape._record(s, (a,), back, "softmax_rows")


def layer_norm_rows(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    tape = _tape_of(a, gain, bias)
    x = a.data
    if x.ndim != 2 or gain.shape != (x.shape[1],) or bias.shape != (x.shape[1],):
        raise ShapeMismatch(f"layer_norm_rows {x.shape} with gain {gain.shape}")
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=1, keepdims=True) + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def back(g):
        gx_hat = g * gain.data
        d = x.shape[1]
        gx = inv / d * (d * gx_hat - gx_hat.sum(axis=1, keepdims=True)
                        - xhat * (gx_hat * xhat).sum(axis=1, keepdims=True))
        return gx, (g * xhat).sum(axis=0), g.sum(axis=0)

    return tape._record(out, (a, gain, bias), back, "layer_norm_rows")


def dropout(a: Tensor, rate: float, rng=None, training: bool = True) -> Tensor:
    """Inverted dropout; identity when not training or ``rate == 0``."""
    if not training or rate == 0.0:
        return a
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must lie in [0, 1)")
    keep = (rng.random(a.data.size).reshape(a.shape) >= rate) / (1.0 - rate)
    return a.tape._record(a.data * keep, (a,), lambda g: (g * keep,), "dropout")


def gather_rows(a: Tensor, index) -> Tensor:
    index = np.asarray(index, dtype=np.int64)
    n = a.shape[0]

    def back(g):
        return (kernels.backend.scatter_add_rows(g, index, n),)

    return a.tape._record(a.data[index], (a,), back, "gather_rows")


def scatter_add_rows(a: Tensor, index, n: int) -> Tensor:
    index = np.asarray(index, dtype=np.int64)
    if index.shape != (a.shape[0],):
        raise ShapeMismatch("scatter_add_rows index length must equal row count")
    out = kernels.backend.scatter_add_rows(a.data, index, n)
    return a.tape._record(out, (a,), lambda g: (g[index],), "scatter_add_rows")


def _log_softmax(x):
    m = x.max(axis=1, keepdims=True)
    lse = m + np.log(np.exp(x - m).sum(axis=1, keepdims=True))
    return x - lse


def cross_entropy_rows(logits: Tensor, targets) -> Tensor:
    """Mean over rows of ``-log softmax(logits)[target]``."""
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    n, k = logits.shape
    if targets.shape != (n,):
        raise ShapeMismatch(f"cross_entropy_rows: {n} rows, {targets.shape} targets")
    if targets.min(initial=0) < 0 or targets.max(initial=0) >= k:
        raise ShapeMismatch("cross_entropy_rows: target class out of range")
    logp = _log_softmax(logits.data)
    rows = np.arange(n)
    loss = np.array(-logp[rows, targets].mean())

    def back(g):
        d = np.exp(logp)
        d[rows, targets] -= 1.0
        return (d * (g / n),)

    return logits.tape._record(loss, (logits,), back, "cross_entropy_rows")


def l1_loss(a: Tensor, b) -> Tensor:
    tape = _tape_of(a, b)
    a, b = _as_tensor(a, tape), _as_tensor(b, tape)
    if a.shape != b.shape:
        raise ShapeMismatch(f"l1_loss {a.shape} vs {b.shape}")
    diff = a.data - b.data
    sgn = np.sign(diff) / diff.size
    return tape._record(np.array(np.abs(diff).mean()), (a, b),
                        lambda g: (g * sgn, -g * sgn), "l1_loss")


def mse_loss(a: Tensor, b) -> Tensor:
    tape = _tape_of(a, b)
    a, b = _as_tensor(a, tape), _as_tensor(b, tape)
    if a.shape != b.shape:
        raise ShapeMismatch(f"mse_loss {a.shape} vs {b.shape}")
    diff = a.data - b.data
    d = 2.0 * diff / diff.size
    return tape._record(np.array((diff * diff).mean()), (a, b),
                        lambda g: (g * d, -g * d), "mse_loss")


def graph_attention(q: Tensor, k: Tensor, v: Tensor, ptr, src, heads: int):
    """Multi-head neighbourhood attention.

    For receiving node ``u`` and each head, scores ``q_u . k_w / sqrt(d_head)``
    over the senders ``w`` listed in ``src[ptr[u]:ptr[u+1]]`` are softmax-
    normalised and used to average ``v_w``. Returns ``(messages, weights)``;
    ``weights`` is the ``(E, heads)`` attention array, not differentiable.
    """
    kb = kernels.backend
    N, d = q.shape
    if d % heads:
        raise ShapeMismatch(f"hidden size {d} not divisible by {heads} heads")
    if k.shape != q.shape or v.shape != q.shape or len(ptr) != N + 1:
        raise ShapeMismatch("graph_attention: q, k, v and ptr disagree")
    c = 1.0 / np.sqrt(d // heads)
    Q, K, V = (np.ascontiguousarray(t.data) for t in (q, k, v))
    s = kb.attn_scores(Q, K, ptr, src, heads, c)
    a = kb.segment_softmax(s, ptr)
    out = kb.attn_aggregate(a, V, ptr, src)

    def back(g):
        g = np.ascontiguousarray(g)
        da, dv = kb.attn_aggregate_grad(g, a, V, ptr, src)
        ds = kb.segment_softmax_grad(a, da, ptr)
        dq, dk = kb.attn_scores_grad(ds, Q, K, ptr, src, heads, c)
        return dq, dk, dv

    tape = _tape_of(q, k, v)
    return tape._record(out, (q, k, v), back, "graph_attention"), a


# --------------------------------------------------------------------------
# parameters and optimisation


class ParamStore:
    """Named parameters with gradient accumulators and Adam moments."""

    def __init__(self):
        self.params: "OrderedDict[str, np.ndarray]" = OrderedDict()
        self.grads: dict[str, np.ndarray] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step = 0
        self.has_grads = False

    def add(self, name: str, value) -> None:
        value = np.array(value, dtype=np.float64)
        self.params[name] = value
        self.grads[name] = np.zeros_like(value)
        self.m[name] = np.zeros_like(value)
        self.v[name] = np.zeros_like(value)

    def __getitem__(self, name):
        return self.params[name]

    def __contains__(self, name):
        return name in self.params

    def names(self):
        return list(self.params)

    def zero_grad(self) -> None:
        for g in self.grads.values():
            g.fill(0.0)
        self.has_grads = False

    def scale_grads(self, factor: float) -> None:
        for g in self.grads.values():
            g *= factor

    def copy(self) -> "ParamStore":
        out = ParamStore()
        for name, value in self.params.items():
            out.add(name, value.copy())
            out.m[name][...] = self.m[name]
            out.v[name][...] = self.v[name]
        out.step = self.step
        return out

    def checksum(self, names=None) -> str:
        h = hashlib.sha256()
        for name in (self.params if names is None else names):
            h.update(name.encode())
            h.update(np.ascontiguousarray(self.params[name], dtype="<f8").tobytes())
        return h.hexdigest()


def adam_step(store: ParamStore, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8, weight_decay: float = 0.0) -> None:
    """One Adam update with L2 weight decay folded into the gradient."""
    if not store.has_grads:
        raise MissingGradients("adam_step called before any backward pass")
    store.step += 1
    t = store.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, theta in store.params.items():
        g = store.grads[name]
        if weight_decay:
            g = g + weight_decay * theta
        m, v = store.m[name], store.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        theta -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


# --------------------------------------------------------------------------
# finite-difference check


def gradcheck(loss_fn, store: ParamStore, eps: float = 1e-4, names=None, floor: float = 1e-6):
    """Compare tape gradients with central differences.

    ``loss_fn(store)`` must build a fresh tape and return ``(tape, loss)``.
    Returns ``(max_rel_err, per_param)`` with the element-wise error
    ``|a - n| / max(|a|, |n|, floor)``.
    """
    store.zero_grad()
    tape, loss = loss_fn(store)
    tape.backward(loss)
    analytic = {n: g.copy() for n, g in store.grads.items()}
    report = {}
    worst = 0.0
    for name in (store.names() if names is None else names):
        theta = store.params[name]
        flat = theta.reshape(-1)
        num = np.empty(flat.size)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            fp = loss_fn(store)[1].item()
            flat[j] = orig - eps
            fm = loss_fn(store)[1].item()
            flat[j] = orig
            num[j] = (fp - fm) / (2 * eps)
        a = analytic[name].reshape(-1)
        rel = np.abs(a - num) / np.maximum(np.maximum(np.abs(a), np.abs(num)), floor)
        report[name] = float(rel.max(initial=0.0))
        worst = max(worst, report[name])
    store.zero_grad()
    return worst, report


# --------------------------------------------------------------------------
# checkpoint file

CHECKPOINT_MAGIC = b"MRCP"
CHECKPOINT_VERSION = 1


def save_params(store: ParamStore, path) -> None:
    """Write parameters as ``MRCP`` records (little-endian, f64 row-major)."""
    chunks = [CHECKPOINT_MAGIC, struct.pack("<I", CHECKPOINT_VERSION)]
    for name, value in store.params.items():
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)) + raw)
        chunks.append(struct.pack("<I", value.ndim))
        chunks.append(struct.pack(f"<{value.ndim}I", *value.shape))
        chunks.append(np.ascontiguousarray(value, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_params(path) -> ParamStore:
    buf = Path(path).read_bytes()
    if buf[:4] != CHECKPOINT_MAGIC:
        raise BadMagic("not an MRCP checkpoint", path)
    if len(buf) < 8:
        raise CorruptPayload("truncated header", path)
    (version,) = struct.unpack_from("<I", buf, 4)
    if version != CHECKPOINT_VERSION:
        raise VersionUnsupported(f"checkpoint version {version}", path)
    store = ParamStore()
    pos = 8
    try:
        while pos < len(buf):
            (n,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            name = buf[pos:pos + n].decode("utf-8")
            if len(name.encode()) != n:
                raise CorruptPayload("truncated name", path)
            pos += n
            (rank,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            dims = struct.unpack_from(f"<{rank}I", buf, pos)
            pos += 4 * rank
            count = int(np.prod(dims, dtype=np.int64))
            if pos + 8 * count > len(buf):
                raise CorruptPayload(f"truncated payload for {name!r}", path)
            store.add(name, np.frombuffer(buf, dtype="<f8", count=count, offset=pos).reshape(dims))
            pos += 8 * count
    except struct.error:
        raise CorruptPayload("truncated record", path) from None
    return store
