"""Dense tensors on numpy with a reverse-mode gradient tape and Adam.

The tape is rebuilt per forward pass: ops append nodes in execution order
while a `Tape` context is active and any input requires grad, and
`backward` walks that list once in reverse. Gradients are returned as a
map instead of being accumulated on the tensors, so one forward pass can
be differentiated from several roots (the trainer uses this for the
simultaneous G/A update).

Float64 is used in tests so finite-difference checks are meaningful;
training runs float32.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "AdamState",
    "ShapeError",
    "NonFiniteError",
    "tensor",
    "constant",
    "param",
    "backward",
    "grad_check",
    "adam_update",
    "set_nan_guard",
    "add", "sub", "mul", "div", "neg", "matmul", "power",
    "relu", "leaky_relu", "sigmoid", "tanh", "log", "exp",
    "tsum", "tmean", "reshape", "transpose", "concat", "take",
    "broadcast_to", "clip", "avg_pool2d", "rot90",
]


class ShapeError(ValueError):
    """Operand shapes do not conform for an op."""


class NonFiniteError(FloatingPointError):
    """A NaN/Inf crossed the check barrier."""


_NAN_GUARD = False


def set_nan_guard(enabled: bool) -> None:
    """Toggle the per-op NaN/Inf check barrier (off by default: hot path)."""
    global _NAN_GUARD
    _NAN_GUARD = bool(enabled)


# ---------------------------------------------------------------------------
# tape machinery
# ---------------------------------------------------------------------------

class Node:
    """One recorded op: output, operand refs, and the backward rule."""

    __slots__ = ("out", "inputs", "vjp", "tape", "idx")

    def __init__(self, out, inputs, vjp, tape, idx):
        self.out = out
        self.inputs = inputs
        self.vjp = vjp  # vjp(grad_out) -> tuple of grads aligned with inputs (None for skip)
        self.tape = tape
        self.idx = idx


class Tape:
    """Ordered record of ops; forward execution order is topological order."""

    def __init__(self):
        self.nodes: list[Node] = []

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, *exc) -> None:
        popped = _TAPES.pop()
        assert popped is self

    def __len__(self) -> int:
        return len(self.nodes)


_TAPES: list[Tape] = []


def _active_tape() -> Tape | None:
    return _TAPES[-1] if _TAPES else None


class Tensor:
    """Dense n-d array, optionally tracked on the active tape."""

    __slots__ = ("data", "requires_grad", "tape_node")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.requires_grad = requires_grad
        self.tape_node: Node | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # arithmetic sugar; scalars are promoted to constants
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __truediv__(self, other):
        return div(self, _as_tensor(other))

    def __rtruediv__(self, other):
        return div(_as_tensor(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))

    def __pow__(self, p):
        return power(self, p)

    def __getitem__(self, idx):
        return take(self, idx)


def tensor(data, requires_grad: bool = False, dtype=None) -> Tensor:
    arr = np.asarray(data, dtype=dtype)
    if dtype is None and arr.dtype.kind in "iub":
        arr = arr.astype(np.float64)
    return Tensor(arr, requires_grad=requires_grad)


def constant(data, dtype=None) -> Tensor:
    return tensor(data, requires_grad=False, dtype=dtype)


def param(data, dtype=None) -> Tensor:
    return tensor(data, requires_grad=True, dtype=dtype)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def _record(op_name: str, data: np.ndarray, inputs: tuple[Tensor, ...], vjp) -> Tensor:
    if _NAN_GUARD and not np.all(np.isfinite(data)):
        raise NonFiniteError(f"{op_name}: non-finite values in output")
    requires = any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=requires)
    tape = _active_tape()
    if requires and tape is not None:
        node = Node(out, inputs, vjp, tape, len(tape.nodes))
        out.tape_node = node
        tape.nodes.append(node)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient down to `shape` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    keep = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if keep:
        grad = grad.sum(axis=keep, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# ops
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data

    def vjp(g):
        return (_unbroadcast(g, a.shape) if a.requires_grad else None,
                _unbroadcast(g, b.shape) if b.requires_grad else None)

    return _record("add", data, (a, b), vjp)


def sub(a: Tensor, b: Tensor) -> Tensor:
    data = a.data - b.data

    def vjp(g):
        return (_unbroadcast(g, a.shape) if a.requires_grad else None,
                _unbroadcast(-g, b.shape) if b.requires_grad else None)

    return _record("sub", data, (a, b), vjp)


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data

    def vjp(g):
        return (_unbroadcast(g * b.data, a.shape) if a.requires_grad else None,
                _unbroadcast(g * a.data, b.shape) if b.requires_grad else None)

    return _record("mul", data, (a, b), vjp)


def div(a: Tensor, b: Tensor) -> Tensor:
    data = a.data / b.data

    def vjp(g):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape) if b.requires_grad else None
        return (ga, gb)

    return _record("div", data, (a, b), vjp)


def neg(a: Tensor) -> Tensor:
    return _record("neg", -a.data, (a,), lambda g: (-g,))


def power(a: Tensor, p: float) -> Tensor:
    p = float(p)
    data = a.data ** p

    def vjp(g):
        return (g * p * a.data ** (p - 1.0),)

    return _record("power", data, (a,), vjp)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: shapes {a.shape} x {b.shape} do not conform")
    data = a.data @ b.data

    def vjp(g):
        return (g @ b.data.T if a.requires_grad else None,
                a.data.T @ g if b.requires_grad else None)

    return _record("matmul", data, (a, b), vjp)


def relu(a: Tensor) -> Tensor:
    data = np.maximum(a.data, 0)

    def vjp(g):
        return (g * (a.data > 0),)

    return _record("relu", data, (a,), vjp)


def leaky_relu(a: Tensor, alpha: float = 0.2) -> Tensor:
    data = np.where(a.data > 0, a.data, alpha * a.data)

    def vjp(g):
        return (g * np.where(a.data > 0, 1.0, alpha).astype(a.data.dtype),)

    return _record("leaky_relu", data, (a,), vjp)


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                    np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x)))).astype(x.dtype)

    def vjp(g):
        return (g * data * (1.0 - data),)

    return _record("sigmoid", data, (a,), vjp)


def tanh(a: Tensor) -> Tensor:
    data = np.tanh(a.data)

    def vjp(g):
        return (g * (1.0 - data * data),)

    return _record("tanh", data, (a,), vjp)


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise NonFiniteError("log: domain violation (non-positive input)")
    data = np.log(a.data)

    def vjp(g):
        return (g / a.data,)

    return _record("log", data, (a,), vjp)


def exp(a: Tensor) -> Tensor:
    data = np.exp(a.data)

    def vjp(g):
        return (g * data,)

    return _record("exp", data, (a,), vjp)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = a.data.sum(axis=axis, dtype=np.float64).astype(a.data.dtype) \
        if a.data.dtype == np.float32 else a.data.sum(axis=axis)
    if keepdims and axis is not None:
        data = np.expand_dims(data, axis)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).astype(a.data.dtype),)
        g2 = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(g2, a.shape).astype(a.data.dtype),)

    return _record("sum", data, (a,), vjp)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if a.size == 0:
        raise ShapeError("mean: empty tensor")
    n = a.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    data = a.data.mean(axis=axis, dtype=np.float64).astype(a.data.dtype) \
        if a.data.dtype == np.float32 else a.data.mean(axis=axis)
    if keepdims and axis is not None:
        data = np.expand_dims(data, axis)

    def vjp(g):
        if axis is None:
            return ((np.broadcast_to(g, a.shape) / n).astype(a.data.dtype),)
        g2 = g if keepdims else np.expand_dims(g, axis)
        return ((np.broadcast_to(g2, a.shape) / n).astype(a.data.dtype),)

    return _record("mean", data, (a,), vjp)


def reshape(a: Tensor, shape) -> Tensor:
    data = a.data.reshape(shape)

    def vjp(g):
        return (g.reshape(a.shape),)

    return _record("reshape", data, (a,), vjp)


def transpose(a: Tensor, axes=None) -> Tensor:
    data = a.data.transpose(axes)
    inv = None if axes is None else np.argsort(axes)

    def vjp(g):
        return (g.transpose(inv) if inv is not None else g.transpose(),)

    return _record("transpose", data, (a,), vjp)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat: empty input list")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        outs = []
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                outs.append(g[tuple(idx)])
            else:
                outs.append(None)
        return tuple(outs)

    return _record("concat", data, tuple(tensors), vjp)


def take(a: Tensor, idx) -> Tensor:
    """Slice / index (basic or integer-array indexing)."""
    data = a.data[idx]

    def vjp(g):
        out = np.zeros_like(a.data)
        np.add.at(out, idx, g)
        return (out,)

    return _record("slice", data, (a,), vjp)


def broadcast_to(a: Tensor, shape) -> Tensor:
    data = np.broadcast_to(a.data, shape)

    def vjp(g):
        return (_unbroadcast(g, a.shape),)

    return _record("broadcast", data, (a,), vjp)


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp; gradient is passed only where the input was inside [lo, hi]."""
    data = np.clip(a.data, lo, hi)

    def vjp(g):
        mask = (a.data >= lo) & (a.data <= hi)
        return (g * mask,)

    return _record("clip", data, (a,), vjp)


def avg_pool2d(a: Tensor, kernel: int = 2, stride: int | None = None) -> Tensor:
    """2D average pooling over the trailing two axes of a (B, C, H, W) tensor.

    Only stride == kernel (non-overlapping windows) is supported; the
    trailing remainder is cropped, matching pooling without padding.
    """
    stride = kernel if stride is None else stride
    if kernel < 1 or stride < 1:
        raise ShapeError("avg_pool2d: kernel/stride must be positive")
    if stride != kernel:
        raise ShapeError("avg_pool2d: only stride == kernel is supported")
    if a.data.ndim != 4:
        raise ShapeError(f"avg_pool2d: expected (B, C, H, W), got {a.shape}")
    b, c, h, w = a.shape
    ho, wo = h // kernel, w // kernel
    if ho < 1 or wo < 1:
        raise ShapeError(f"avg_pool2d: kernel {kernel} too large for input {a.shape}")
    x = a
    if h != ho * kernel or w != wo * kernel:
        x = take(a, (slice(None), slice(None), slice(0, ho * kernel), slice(0, wo * kernel)))
    x = reshape(x, (b, c, ho, kernel, wo, kernel))
    return tmean(x, axis=(3, 5))


def rot90(a: Tensor, k: int) -> Tensor:
    """Rotate (B, C, H, W) images by k * 90 degrees in the H-W plane."""
    if a.data.ndim != 4:
        raise ShapeError(f"rot90: expected (B, C, H, W), got {a.shape}")
    k = k % 4
    data = np.rot90(a.data, k, axes=(2, 3)).copy()

    def vjp(g):
        return (np.rot90(g, -k, axes=(2, 3)).copy(),)

    return _record("rot90", data, (a,), vjp)


# ---------------------------------------------------------------------------
# backward
# ---------------------------------------------------------------------------

def backward(loss: Tensor, wrt=None) -> dict[Tensor, np.ndarray]:
    """Reverse sweep from a scalar loss.

    Returns gradients keyed by tensor. With `wrt`, exactly those tensors
    are returned and non-participating ones get zeros; otherwise the map
    holds every requires_grad leaf the sweep reached. The tape is walked
    in reverse execution order, each node at most once, so the same tape
    may be swept again from a different root.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    by_id: dict[int, Tensor] = {id(loss): loss}
    node = loss.tape_node
    if node is not None:
        for nd in reversed(node.tape.nodes[: node.idx + 1]):
            g = grads.get(id(nd.out))
            if g is None:
                continue
            for inp, gin in zip(nd.inputs, nd.vjp(g)):
                if gin is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + gin
                else:
                    grads[key] = gin
                    by_id[key] = inp
    if wrt is None:
        return {by_id[key]: g for key, g in grads.items() if by_id[key].tape_node is None}
    out: dict[Tensor, np.ndarray] = {}
    for t in wrt:
        out[t] = grads.get(id(t), np.zeros_like(t.data))
    return out


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

@dataclass
class GradCheckReport:
    max_rel_err: float
    passed: bool
    worst: tuple[int, int] | None  # (tensor index, flat coordinate)

    def __bool__(self) -> bool:
        return self.passed


def grad_check(f, points, h: float = 1e-6, tol: float = 1e-4) -> GradCheckReport:
    """Compare tape gradients with central finite differences.

    `f` maps the list of tensors to a scalar Tensor; `points` is a list of
    float64 tensors. Relative error uses max(1, |a|, |b|) in the
    denominator so near-zero gradients are compared absolutely.
    """
    points = list(points)
    with Tape():
        loss = f(*points)
        grads = backward(loss, wrt=points)
    worst = None
    max_err = 0.0
    for ti, p in enumerate(points):
        g_tape = grads[p]
        flat = p.data.reshape(-1)
        g_fd = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = float(f(*points).data)
            flat[i] = orig - h
            f_minus = float(f(*points).data)
            flat[i] = orig
            g_fd[i] = (f_plus - f_minus) / (2.0 * h)
        gt = g_tape.reshape(-1)
        if not np.all(np.isfinite(gt)) or not np.all(np.isfinite(g_fd)):
            bad = int(np.argmax(~(np.isfinite(gt) & np.isfinite(g_fd))))
            return GradCheckReport(np.inf, False, (ti, bad))
        denom = np.maximum(1.0, np.maximum(np.abs(gt), np.abs(g_fd)))
        err = np.abs(gt - g_fd) / denom
        i = int(np.argmax(err)) if err.size else 0
        if err.size and err[i] > max_err:
            max_err = float(err[i])
            worst = (ti, i)
    return GradCheckReport(max_err, max_err < tol, worst)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    """Bias-corrected Adam state for one named parameter set."""

    alpha: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_update(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: AdamState) -> None:
    """One Adam step applied in place; the state's step counter advances."""
    state.t += 1
    t = state.t
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.data.shape:
            raise ShapeError(f"adam_update: grad shape {g.shape} != param shape {p.data.shape} for '{name}'")
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        step = (state.alpha / c1) * m / (np.sqrt(v / c2) + state.eps)
        p.data -= step.astype(p.data.dtype)
