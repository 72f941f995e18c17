"""Dense float32 tensors with reverse-mode automatic differentiation.

A Tensor wraps a numpy array. While a Tape is active (``with Tape() as t:``),
every op appends a node (output, inputs, backward closure) to it; the append
order is a valid topological order because an op can only consume tensors that
already exist. ``backward(loss)`` sweeps the tape once in reverse from the loss
node, routing cotangents through the closures and accumulating into the
``.grad`` buffers of reachable leaves with ``requires_grad=True``.

Design constraints:
  * float32 everywhere; ops never silently upcast.
  * no active tape -> pure forward, nothing recorded (generation/eval path).
  * an op whose inputs live on a different live tape is an error.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf as _erf

_INV_SQRT2 = np.float32(0.7071067811865476)
_INV_SQRT_2PI = np.float32(0.3989422804014327)
_NEG_INF = np.float32(-1e9)


class ShapeMismatch(ValueError):
    """Raised when an op's input shapes are incompatible; names the op."""

    def __init__(self, op: str, detail: str):
        super().__init__(f"{op}: {detail}")


_TAPE_STACK: list["Tape | None"] = []


def _active_tape() -> "Tape | None":
    return _TAPE_STACK[-1] if _TAPE_STACK else None


class Tape:
    """Ordered record of forward ops for one backward sweep."""

    def __init__(self):
        # each node: (output tensor, tuple of input tensors, backward closure)
        self.nodes: list[tuple["Tensor", tuple["Tensor", ...], object]] = []

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc) -> bool:
        _TAPE_STACK.pop()
        return False

    def record(self, out: "Tensor", inputs: tuple["Tensor", ...], backward_fn) -> None:
        out.tape = self
        out.node_id = len(self.nodes)
        self.nodes.append((out, inputs, backward_fn))


class no_grad:
    """Context that suppresses recording even inside an active tape."""

    def __enter__(self):
        _TAPE_STACK.append(None)
        return self

    def __exit__(self, *exc) -> bool:
        _TAPE_STACK.pop()
        return False


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "tape", "node_id")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float32)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.tape: Tape | None = None
        self.node_id: int | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        """Value copy with no tape membership and no grad requirement."""
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    # operator sugar; constants are lifted to leaf tensors
    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _lift(other))

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={'set' if self.grad is not None else 'none'})"


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float32))


def _make(op: str, out_data: np.ndarray, inputs: tuple[Tensor, ...], backward_fn) -> Tensor:
    out = Tensor(out_data)
    tape = _active_tape()
    for t in inputs:
        if t.tape is not None and t.tape is not tape:
            raise ValueError(f"{op}: input belongs to a different live tape")
    if tape is not None:
        tape.record(out, inputs, backward_fn)
    return out


def backward(loss: Tensor) -> None:
    """Reverse sweep from ``loss``; accumulates into leaf ``.grad`` buffers.

    Repeated calls without zeroing accumulate. Visits each tape node at most
    once; nodes after the loss node or not on a path to it are skipped.
    """
    if loss.tape is None:
        raise ValueError("backward: loss is not attached to a tape")
    if loss.data.shape != ():
        raise ShapeMismatch("backward", f"loss must be scalar, got shape {loss.data.shape}")
    tape = loss.tape
    cotangents: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=np.float32)}
    leaves: dict[int, Tensor] = {}
    for out, inputs, fn in reversed(tape.nodes[: loss.node_id + 1]):
        g = cotangents.pop(id(out), None)
        if g is None:
            continue
        in_grads = fn(g)
        for t, ig in zip(inputs, in_grads):
            if ig is None:
                continue
            key = id(t)
            if key in cotangents:
                cotangents[key] = cotangents[key] + ig
            else:
                cotangents[key] = ig
            if t.tape is None:
                leaves[key] = t
    for key, t in leaves.items():
        if t.requires_grad:
            g = cotangents[key]
            t.grad = g.copy() if t.grad is None else t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.astype(np.float32, copy=False)


# ---------------------------------------------------------------------------
# elementwise / arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _lift(a), _lift(b)
    try:
        out = a.data + b.data
    except ValueError:
        raise ShapeMismatch("add", f"cannot broadcast {a.shape} with {b.shape}")
    return _make("add", out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _lift(a), _lift(b)
    try:
        out = a.data - b.data
    except ValueError:
        raise ShapeMismatch("sub", f"cannot broadcast {a.shape} with {b.shape}")
    return _make("sub", out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _lift(a), _lift(b)
    try:
        out = a.data * b.data
    except ValueError:
        raise ShapeMismatch("mul", f"cannot broadcast {a.shape} with {b.shape}")
    return _make(
        "mul",
        out,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def neg(a: Tensor) -> Tensor:
    return _make("neg", -a.data, (a,), lambda g: (-g,))


def scale(a: Tensor, s: float) -> Tensor:
    s32 = np.float32(s)
    return _make("scale", a.data * s32, (a,), lambda g: (g * s32,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeMismatch("matmul", f"inputs must have rank >= 2, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch("matmul", f"inner dims differ: {a.shape} @ {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeMismatch("matmul", f"batch dims do not broadcast: {a.shape} @ {b.shape}")

    def back(g):
        ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb

    return _make("matmul", out, (a, b), back)


# ---------------------------------------------------------------------------
# shape ops


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeMismatch("reshape", f"cannot reshape {a.shape} to {shape}")
    return _make("reshape", out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Tensor, axes: tuple[int, ...]) -> Tensor:
    if sorted(axes) != list(range(a.ndim)):
        raise ShapeMismatch("transpose", f"axes {axes} is not a permutation for rank {a.ndim}")
    inv = tuple(np.argsort(axes))
    return _make("transpose", a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def swap_axes(a: Tensor, i: int, j: int) -> Tensor:
    axes = list(range(a.ndim))
    axes[i], axes[j] = axes[j], axes[i]
    return transpose(a, tuple(axes))


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeMismatch("concat", "need at least one input")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeMismatch("concat", f"shapes {[t.shape for t in tensors]} on axis {axis}")
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make("concat", out, tuple(tensors), back)


# ---------------------------------------------------------------------------
# reductions


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims, dtype=np.float32)

    def back(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).astype(np.float32, copy=False),)
        g2 = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(g2, a.shape).astype(np.float32, copy=False),)

    return _make("sum", out, (a,), back)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        denom = a.size
    elif isinstance(axis, int):
        denom = a.shape[axis]
    else:
        denom = int(np.prod([a.shape[i] for i in axis]))
    inv = np.float32(1.0 / denom)
    out = a.data.mean(axis=axis, keepdims=keepdims, dtype=np.float32)

    def back(g):
        if axis is None:
            return (np.broadcast_to(g * inv, a.shape).astype(np.float32, copy=False),)
        g2 = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(g2 * inv, a.shape).astype(np.float32, copy=False),)

    return _make("mean", out, (a,), back)


# ---------------------------------------------------------------------------
# neural-net primitives


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup; gradient scatters back into the table with np.add.at."""
    ids = np.asarray(ids)
    if not np.issubdtype(ids.dtype, np.integer):
        raise ShapeMismatch("embedding", f"ids must be integers, got {ids.dtype}")
    if table.ndim != 2:
        raise ShapeMismatch("embedding", f"table must be rank 2, got {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ValueError(f"embedding: id out of range [0, {table.shape[0]})")
    out = table.data[ids]

    def back(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        return (gt,)

    return _make("embedding", out, (table,), back)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return ((y * (g - dot)).astype(np.float32, copy=False),)

    return _make("softmax", y.astype(np.float32, copy=False), (a,), back)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis, then scale and shift."""
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeMismatch("layer_norm", f"gain/bias must be ({d},), got {gain.shape}/{bias.shape}")
    mu = x.data.mean(axis=-1, keepdims=True, dtype=np.float32)
    var = ((x.data - mu) ** 2).mean(axis=-1, keepdims=True, dtype=np.float32)
    inv_std = (1.0 / np.sqrt(var + np.float32(eps))).astype(np.float32)
    xhat = (x.data - mu) * inv_std
    out = xhat * gain.data + bias.data

    def back(g):
        dgain = (g * xhat).reshape(-1, d).sum(axis=0)
        dbias = g.reshape(-1, d).sum(axis=0)
        dxhat = g * gain.data
        m1 = dxhat.mean(axis=-1, keepdims=True, dtype=np.float32)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True, dtype=np.float32)
        dx = inv_std * (dxhat - m1 - xhat * m2)
        return (
            dx.astype(np.float32, copy=False),
            dgain.astype(np.float32, copy=False),
            dbias.astype(np.float32, copy=False),
        )

    return _make("layer_norm", out.astype(np.float32, copy=False), (x, gain, bias), back)


def gelu(x: Tensor) -> Tensor:
    """Exact GELU: 0.5 * x * (1 + erf(x / sqrt(2)))."""
    cdf = 0.5 * (1.0 + _erf(x.data * _INV_SQRT2))
    out = x.data * cdf

    def back(g):
        pdf = _INV_SQRT_2PI * np.exp(np.float32(-0.5) * x.data * x.data)
        return ((g * (cdf + x.data * pdf)).astype(np.float32, copy=False),)

    return _make("gelu", out.astype(np.float32, copy=False), (x,), back)


def dropout(x: Tensor, p: float, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout. p == 0 or rng is None -> identity (no rng consumed)."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout: p must be in [0, 1), got {p}")
    if p == 0.0 or rng is None:
        return x
    keep = (rng.random(x.shape) >= p).astype(np.float32) / np.float32(1.0 - p)
    return _make("dropout", x.data * keep, (x,), lambda g: (g * keep,))


def masked_fill(x: Tensor, mask: np.ndarray, value: float) -> Tensor:
    """Set positions where ``mask`` is True to ``value``; grads flow elsewhere."""
    mask = np.asarray(mask, dtype=bool)
    try:
        out = np.where(mask, np.float32(value), x.data)
    except ValueError:
        raise ShapeMismatch("masked_fill", f"mask {mask.shape} does not broadcast to {x.shape}")
    keep = np.broadcast_to(~mask, x.shape)
    return _make("masked_fill", out.astype(np.float32, copy=False), (x,),
                 lambda g: ((g * keep).astype(np.float32, copy=False),))


def cross_entropy(logits: Tensor, targets: np.ndarray, weights: np.ndarray) -> Tensor:
    """Weighted mean negative log-likelihood over the last axis of ``logits``.

    targets holds class ids shaped like logits minus the last axis; weights is
    a float mask of the same shape (0 drops a position). The mean is taken per
    unit of weight, so padding never dilutes the loss.
    """
    targets = np.asarray(targets)
    weights = np.asarray(weights, dtype=np.float32)
    if targets.shape != logits.shape[:-1] or weights.shape != targets.shape:
        raise ShapeMismatch(
            "cross_entropy",
            f"logits {logits.shape} vs targets {targets.shape} vs weights {weights.shape}",
        )
    total_w = weights.sum(dtype=np.float32)
    if total_w <= 0:
        raise ValueError("cross_entropy: weights sum to zero, nothing to average")
    v = logits.shape[-1]
    if targets.size and (targets.min() < 0 or targets.max() >= v):
        raise ValueError(f"cross_entropy: target id out of range [0, {v})")
    flat = logits.data.reshape(-1, v)
    tgt = targets.reshape(-1)
    w = weights.reshape(-1)
    m = flat.max(axis=-1, keepdims=True)
    shifted = flat - m
    lse = np.log(np.exp(shifted).sum(axis=-1, dtype=np.float32)) + m[:, 0]
    picked = flat[np.arange(flat.shape[0]), tgt]
    loss = ((lse - picked) * w).sum(dtype=np.float32) / total_w

    def back(g):
        p = np.exp(shifted)
        p /= p.sum(axis=-1, keepdims=True)
        p[np.arange(flat.shape[0]), tgt] -= 1.0
        gl = p * (w / total_w)[:, None] * g
        return (gl.reshape(logits.shape).astype(np.float32, copy=False),)

    return _make("cross_entropy", np.float32(loss), (logits,), back)
