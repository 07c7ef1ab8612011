"""Small dense tensor kernel with reverse-mode autodiff.

Only what the forecasters need: elementwise arithmetic with numpy
broadcasting, matmul, causal dilated 1-D convolution, a few activations,
reductions, slicing and concatenation. Everything is float64.

Also hosts the optimizer pieces shared by the linear, neural and continual
models (Adam, global L2 clipping, cosine similarity) and a central
finite-difference oracle used by the tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class GraphError(ValueError):
    """Raised for malformed graphs: non-scalar outputs or unknown ops."""


class Tensor:
    """A node in the computation graph.

    ``op`` names the operation that produced the node ("leaf" for inputs),
    ``parents`` are its input nodes and ``ctx`` caches whatever the backward
    rule needs.
    """

    __slots__ = ("data", "op", "parents", "ctx")

    def __init__(self, data, op: str = "leaf", parents: tuple = (), ctx=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.op = op
        self.parents = parents
        self.ctx = ctx

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(op={self.op!r}, shape={self.shape})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# --------------------------------------------------------------------- ops


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor(a.data + b.data, "add", (a, b))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor(a.data - b.data, "sub", (a, b))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor(a.data * b.data, "mul", (a, b))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise GraphError("matmul expects 2-D operands")
    return Tensor(a.data @ b.data, "matmul", (a, b))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    return Tensor(np.tanh(a.data), "tanh", (a,))


def relu(a) -> Tensor:
    a = as_tensor(a)
    return Tensor(np.maximum(a.data, 0.0), "relu", (a,))


def absolute(a) -> Tensor:
    a = as_tensor(a)
    return Tensor(np.abs(a.data), "abs", (a,))


def mean(a) -> Tensor:
    """Mean over all entries (scalar result)."""
    a = as_tensor(a)
    return Tensor(np.mean(a.data), "mean", (a,))


def total(a) -> Tensor:
    a = as_tensor(a)
    return Tensor(np.sum(a.data), "sum", (a,))


def getitem(a, index) -> Tensor:
    a = as_tensor(a)
    return Tensor(a.data[index], "getitem", (a,), index)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return Tensor(a.data.reshape(shape), "reshape", (a,))


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    parts = tuple(as_tensor(t) for t in tensors)
    if not parts:
        raise GraphError("concat of nothing")
    sizes = [p.data.shape[axis] for p in parts]
    return Tensor(np.concatenate([p.data for p in parts], axis=axis), "concat", parts, (axis, sizes))


def _shifted_stack(xpad: np.ndarray, kernel: int, dilation: int, length: int) -> np.ndarray:
    # (B, T, K, C): tap k sees x[t - (K-1-k)*d]
    return np.stack([xpad[:, k * dilation : k * dilation + length, :] for k in range(kernel)], axis=2)


def conv1d(x, w, dilation: int = 1) -> Tensor:
    """Causal dilated convolution.

    ``x`` is (batch, time, in_channels), ``w`` is (kernel, in_channels,
    out_channels). Output step ``t`` only reads input steps ``<= t``; the
    past is zero-padded.
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.data.ndim != 3 or w.data.ndim != 3 or x.data.shape[2] != w.data.shape[1]:
        raise GraphError(f"conv1d shape mismatch: x{x.shape} w{w.shape}")
    k, cin, cout = w.data.shape
    b, t, _ = x.data.shape
    pad = (k - 1) * dilation
    xpad = np.pad(x.data, ((0, 0), (pad, 0), (0, 0)))
    cols = _shifted_stack(xpad, k, dilation, t).reshape(b * t, k * cin)
    out = (cols @ w.data.reshape(k * cin, cout)).reshape(b, t, cout)
    return Tensor(out, "conv1d", (x, w), (cols, dilation))


# ---------------------------------------------------------------- backward


def _bw_add(node, g):
    a, b = node.parents
    return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)


def _bw_sub(node, g):
    a, b = node.parents
    return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)


def _bw_mul(node, g):
    a, b = node.parents
    return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)


def _bw_matmul(node, g):
    a, b = node.parents
    return g @ b.data.T, a.data.T @ g


def _bw_tanh(node, g):
    return (g * (1.0 - node.data**2),)


def _bw_relu(node, g):
    (a,) = node.parents
    return (g * (a.data > 0.0),)


def _bw_abs(node, g):
    (a,) = node.parents
    return (g * np.sign(a.data),)


def _bw_mean(node, g):
    (a,) = node.parents
    return (np.full(a.shape, g / max(a.data.size, 1)),)


def _bw_sum(node, g):
    (a,) = node.parents
    return (np.full(a.shape, g),)


def _bw_getitem(node, g):
    (a,) = node.parents
    out = np.zeros(a.shape)
    np.add.at(out, node.ctx, g)
    return (out,)


def _bw_reshape(node, g):
    (a,) = node.parents
    return (g.reshape(a.shape),)


def _bw_concat(node, g):
    axis, sizes = node.ctx
    return tuple(np.split(g, np.cumsum(sizes)[:-1], axis=axis))


def _bw_conv1d(node, g):
    x, w = node.parents
    cols, dilation = node.ctx
    k, cin, cout = w.shape
    b, t, _ = x.shape
    g2 = g.reshape(b * t, cout)
    gw = (cols.T @ g2).reshape(k, cin, cout)
    gcols = (g2 @ w.data.reshape(k * cin, cout).T).reshape(b, t, k, cin)
    pad = (k - 1) * dilation
    gpad = np.zeros((b, t + pad, cin))
    for tap in range(k):
        gpad[:, tap * dilation : tap * dilation + t, :] += gcols[:, :, tap, :]
    return gpad[:, pad:, :], gw


BACKWARD: dict[str, Callable] = {
    "add": _bw_add,
    "sub": _bw_sub,
    "mul": _bw_mul,
    "matmul": _bw_matmul,
    "tanh": _bw_tanh,
    "relu": _bw_relu,
    "abs": _bw_abs,
    "mean": _bw_mean,
    "sum": _bw_sum,
    "getitem": _bw_getitem,
    "reshape": _bw_reshape,
    "concat": _bw_concat,
    "conv1d": _bw_conv1d,
}


def _topological_order(output: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(output, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def grad(output: Tensor, params: Sequence[Tensor]) -> list[np.ndarray]:
    """Gradients of a scalar ``output`` with respect to each of ``params``.

    Parameters the output does not depend on get zero arrays.
    """
    if output.data.size != 1:
        raise GraphError(f"grad needs a scalar output, got shape {output.shape}")
    grads: dict[int, np.ndarray] = {id(output): np.ones_like(output.data)}
    for node in reversed(_topological_order(output)):
        g = grads.get(id(node))
        if g is None or not node.parents:
            continue
        rule = BACKWARD.get(node.op)
        if rule is None:
            raise GraphError(f"no backward rule for op {node.op!r}")
        for parent, pg in zip(node.parents, rule(node, g)):
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    return [np.array(grads.get(id(p), np.zeros(p.shape)), dtype=np.float64).reshape(p.shape) for p in params]


def finite_diff(
    f: Callable[[list[np.ndarray]], float], params: Sequence[np.ndarray], h: float = 1e-4
) -> list[np.ndarray]:
    """Central-difference gradient of ``f`` at ``params`` (testing oracle)."""
    if h <= 0:
        raise ValueError("h must be positive")
    base = [np.array(p, dtype=np.float64, copy=True) for p in params]
    out = []
    for i, p in enumerate(base):
        g = np.zeros_like(p)
        flat = p.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            fp = float(f(base))
            flat[j] = orig - h
            fm = float(f(base))
            flat[j] = orig
            g.reshape(-1)[j] = (fp - fm) / (2.0 * h)
        out.append(g)
    return out


# --------------------------------------------------------------- optimizer


def global_norm(grads: Sequence[np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))


def clip_l2(grads: Sequence[np.ndarray], max_norm: float) -> list[np.ndarray]:
    """Rescale all gradients together so their joint L2 norm is <= max_norm."""
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    norm = global_norm(grads)
    if norm > max_norm:
        scale = max_norm / norm
        return [g * scale for g in grads]
    return list(grads)


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], lr: float, **kwargs) -> "AdamState":
        return cls(
            lr=lr,
            m=[np.zeros_like(p, dtype=np.float64) for p in params],
            v=[np.zeros_like(p, dtype=np.float64) for p in params],
            **kwargs,
        )


def adam_step(
    state: AdamState, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]
) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected Adam update. Returns new params and a new state."""
    if not state.m:
        state = AdamState.for_params(params, state.lr, beta1=state.beta1, beta2=state.beta2, eps=state.eps)
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state disagree in length")
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(f"shape mismatch {p.shape} vs {g.shape}")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        new_params.append(p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps))
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamState(state.lr, b1, b2, state.eps, t, new_m, new_v)


def cosine(u, v) -> float:
    """Cosine similarity; 0 when either vector is (numerically) zero."""
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise ValueError("cosine needs equal-length vectors")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu < 1e-12 or nv < 1e-12:
        return 0.0
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))
