# former/numerics.py — OneDF v1
"""
Dense float32 tensors with reverse-mode differentiation.

Every op appends one Node to the active Graph. Graph.backward walks that
record in exact reverse order of execution and accumulates gradients into
every input that requires them. A Graph is built fresh for each forward
pass and is consumed by its backward pass.

Public API:
  Tensor, Graph, inference(), precision(dtype), seeded_rng(seed)
  matmul, transpose, softmax, layer_norm, conv1d, conv2d, same_padding
  add, sub, mul, scale, relu, sigmoid, concat, stack, select, take,
  reshape, mean, sum_all, sum_sq
  check_gradient(fn, x, step, tol, max_coords)
"""
from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from former.errors import ConfigError, ContractError, NumericsError, ShapeError

LN_EPS = 1e-5

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence[float]]
BackwardFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


class _State(threading.local):
    def __init__(self) -> None:
        self.dtype = np.float32
        self.graphs: List["Graph"] = []
        self.recording = True


_STATE = _State()


def seeded_rng(seed: int) -> np.random.Generator:
    """Counter-based stream: identical seeds give identical draws everywhere."""
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))


@contextmanager
def precision(dtype) -> Iterator[None]:
    """Temporarily evaluate new tensors in another float dtype (float64 for checks)."""
    prev = _STATE.dtype
    _STATE.dtype = np.dtype(dtype).type
    try:
        yield
    finally:
        _STATE.dtype = prev


@contextmanager
def inference() -> Iterator[None]:
    """Evaluate ops without recording nodes (streaming tracking, validation)."""
    prev = _STATE.recording
    _STATE.recording = False
    try:
        yield
    finally:
        _STATE.recording = prev


# ─────────────────────────────────────────────────────────────────────────────
# Tensor / Graph
# ─────────────────────────────────────────────────────────────────────────────

class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: str = "") -> None:
        if isinstance(data, Tensor):
            data = data.data
        self.data: np.ndarray = np.asarray(data, dtype=_STATE.dtype)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError("item() needs a single-element tensor", self.shape)
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return f"Tensor{label}(dims={list(self.shape)}, requires_grad={self.requires_grad})"

    def __add__(self, other: ArrayLike) -> "Tensor":
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other: ArrayLike) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return sub(other, self)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)


@dataclass
class Node:
    index:    int
    op:       str
    inputs:   Tuple[Tensor, ...]
    output:   Tensor
    backward: BackwardFn

    @property
    def label(self) -> str:
        return f"#{self.index} '{self.op}'"


class Graph:
    """Ordered record of executed ops for one forward pass."""

    def __init__(self) -> None:
        self.nodes: List[Node] = []
        self.consumed = False

    def __enter__(self) -> "Graph":
        _STATE.graphs.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _STATE.graphs.remove(self)

    def __len__(self) -> int:
        return len(self.nodes)

    def leaves(self) -> List[Tensor]:
        produced = {id(n.output) for n in self.nodes}
        seen: dict = {}
        for n in self.nodes:
            for t in n.inputs:
                if id(t) not in produced and t.requires_grad:
                    seen.setdefault(id(t), t)
        return list(seen.values())

    def backward(self, loss: Tensor) -> None:
        if self.consumed:
            raise ContractError("graph already consumed by a backward pass")
        if loss.data.size != 1:
            raise ShapeError("backward needs a scalar loss", loss.shape)
        self.consumed = True
        loss.grad = np.ones_like(loss.data)
        for node in reversed(self.nodes):
            g = node.output.grad
            if g is None:
                continue
            grads = node.backward(g)
            for inp, gi in zip(node.inputs, grads):
                if gi is None or not inp.requires_grad:
                    continue
                if not np.all(np.isfinite(gi)):
                    raise NumericsError("non-finite gradient", node.label)
                gi = np.asarray(gi, dtype=inp.data.dtype).reshape(inp.shape)
                inp.grad = gi.copy() if inp.grad is None else inp.grad + gi
        # closures hold every intermediate; drop them once gradients are out
        self.nodes = []


def _active_graph() -> Optional[Graph]:
    if not _STATE.recording or not _STATE.graphs:
        return None
    return _STATE.graphs[-1]


def _as_tensor(x: ArrayLike) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(op: str, inputs: Tuple[Tensor, ...], out: np.ndarray, backward: BackwardFn) -> Tensor:
    graph = _active_graph()
    result = Tensor(np.asarray(out, dtype=_STATE.dtype))
    if not np.all(np.isfinite(result.data)):
        index = len(graph.nodes) if graph is not None else -1
        where = tuple(int(i) for i in np.argwhere(~np.isfinite(result.data))[0])
        raise NumericsError("non-finite value", f"#{index} '{op}'", where, result.shape)
    if graph is not None and any(t.requires_grad for t in inputs):
        result.requires_grad = True
        graph.nodes.append(Node(len(graph.nodes), op, inputs, result, backward))
    return result


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == tuple(shape):
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, dim in enumerate(shape):
        if dim == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


def _broadcast_dims(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible extents", a.shape, b.shape) from None


# ─────────────────────────────────────────────────────────────────────────────
# Linear algebra
# ─────────────────────────────────────────────────────────────────────────────

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched a @ b over the last two axes; leading axes broadcast."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul: inner extents differ", a.shape, b.shape)
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError("matmul: batch extents differ", a.shape, b.shape) from None
    ad, bd = a.data, b.data

    def backward(g: np.ndarray):
        ga = np.matmul(g, np.swapaxes(bd, -1, -2))
        gb = np.matmul(np.swapaxes(ad, -1, -2), g)
        return _unbroadcast(ga, ad.shape), _unbroadcast(gb, bd.shape)

    return _record("matmul", (a, b), out, backward)


def transpose(x: Tensor) -> Tensor:
    """Swap the last two axes."""
    x = _as_tensor(x)
    if x.ndim < 2:
        raise ShapeError("transpose needs at least two axes", x.shape)

    def backward(g: np.ndarray):
        return (np.swapaxes(g, -1, -2),)

    return _record("transpose", (x,), np.swapaxes(x.data, -1, -2), backward)


# ─────────────────────────────────────────────────────────────────────────────
# Normalisation
# ─────────────────────────────────────────────────────────────────────────────

def softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = _as_tensor(x)
    if x.shape[axis] < 1:
        raise ShapeError("softmax over an empty axis", x.shape)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g: np.ndarray):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _record("softmax", (x,), y, backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = LN_EPS) -> Tensor:
    """Normalise each slice along the last axis, then apply gain/bias."""
    x, gain, bias = _as_tensor(x), _as_tensor(gain), _as_tensor(bias)
    n = x.shape[-1]
    if n < 2:
        raise ConfigError(f"layer_norm needs a normalised extent >= 2, got {n}", "layer_norm")
    if gain.shape != (n,) or bias.shape != (n,):
        raise ShapeError("layer_norm affine extent", x.shape, gain.shape, bias.shape)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gd = gain.data
    out = xhat * gd + bias.data

    def backward(g: np.ndarray):
        lead = tuple(range(g.ndim - 1))
        dgain = (g * xhat).sum(axis=lead)
        dbias = g.sum(axis=lead)
        gx = g * gd
        dx = inv * (gx - gx.mean(axis=-1, keepdims=True)
                    - xhat * (gx * xhat).mean(axis=-1, keepdims=True))
        return dx, dgain, dbias

    return _record("layer_norm", (x, gain, bias), out, backward)


# ─────────────────────────────────────────────────────────────────────────────
# Convolutions (cross-correlation, no kernel flip)
# ─────────────────────────────────────────────────────────────────────────────

def same_padding(kernel_size: int) -> int:
    if kernel_size < 1 or kernel_size % 2 == 0:
        raise ConfigError(f"same padding needs an odd kernel, got {kernel_size}", "kernel_size")
    return kernel_size // 2


def conv1d(x: Tensor, kernels: Tensor, bias: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """x: [Cin, L] or [B, Cin, L]; kernels: [Cout, Cin, k]; returns [.., Cout, L']."""
    x, kernels, bias = _as_tensor(x), _as_tensor(kernels), _as_tensor(bias)
    squeeze = x.ndim == 2
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 3 or kernels.ndim != 3 or xd.shape[1] != kernels.shape[1]:
        raise ShapeError("conv1d: channel extents differ", x.shape, kernels.shape)
    cout, cin, k = kernels.shape
    if bias.shape != (cout,):
        raise ShapeError("conv1d: bias extent", bias.shape, (cout,))
    b, _, length = xd.shape
    out_len = (length + 2 * padding - k) // stride + 1
    if out_len <= 0:
        raise ShapeError("conv1d: output length <= 0", x.shape, kernels.shape)

    xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding))) if padding else xd
    cols = sliding_window_view(xp, k, axis=2)[:, :, ::stride][:, :, :out_len]   # [B, Cin, L', k]
    flat = cols.transpose(0, 2, 1, 3).reshape(b, out_len, cin * k)
    w2 = kernels.data.reshape(cout, cin * k)
    out = np.matmul(flat, w2.T).transpose(0, 2, 1) + bias.data[:, None]
    if squeeze:
        out = out[0]

    def backward(g: np.ndarray):
        g3 = g[None] if squeeze else g
        gt = g3.transpose(0, 2, 1)                                          # [B, L', Cout]
        dw = (gt.reshape(-1, cout).T @ flat.reshape(-1, cin * k)).reshape(cout, cin, k)
        db = g3.sum(axis=(0, 2))
        dcols = np.matmul(gt, w2).reshape(b, out_len, cin, k).transpose(0, 2, 1, 3)
        dxp = np.zeros_like(xp)
        span = stride * (out_len - 1) + 1
        for j in range(k):
            dxp[:, :, j:j + span:stride] += dcols[..., j]
        dx = dxp[:, :, padding:padding + length]
        return (dx[0] if squeeze else dx), dw, db

    return _record("conv1d", (x, kernels, bias), out, backward)


def conv2d(x: Tensor, kernels: Tensor, bias: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """x: [B, Cin, H, W]; kernels: [Cout, Cin, k, k]; returns [B, Cout, H', W']."""
    x, kernels, bias = _as_tensor(x), _as_tensor(kernels), _as_tensor(bias)
    if x.ndim != 4 or kernels.ndim != 4 or x.shape[1] != kernels.shape[1]:
        raise ShapeError("conv2d: channel extents differ", x.shape, kernels.shape)
    cout, cin, kh, kw = kernels.shape
    b, _, h, w = x.shape
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    if oh <= 0 or ow <= 0:
        raise ShapeError("conv2d: output extent <= 0", x.shape, kernels.shape)

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    cols = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :oh, :ow]
    flat = cols.transpose(0, 2, 3, 1, 4, 5).reshape(b * oh * ow, cin * kh * kw)
    w2 = kernels.data.reshape(cout, cin * kh * kw)
    out = (flat @ w2.T).reshape(b, oh, ow, cout).transpose(0, 3, 1, 2) + bias.data[:, None, None]

    def backward(g: np.ndarray):
        gt = g.transpose(0, 2, 3, 1).reshape(-1, cout)
        dw = (gt.T @ flat).reshape(cout, cin, kh, kw)
        db = g.sum(axis=(0, 2, 3))
        dcols = (gt @ w2).reshape(b, oh, ow, cin, kh, kw).transpose(0, 3, 1, 2, 4, 5)
        dxp = np.zeros_like(xp)
        sh, sw = stride * (oh - 1) + 1, stride * (ow - 1) + 1
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i:i + sh:stride, j:j + sw:stride] += dcols[..., i, j]
        return dxp[:, :, padding:padding + h, padding:padding + w], dw, db

    return _record("conv2d", (x, kernels, bias), out, backward)


# ─────────────────────────────────────────────────────────────────────────────
# Elementwise suite
# ─────────────────────────────────────────────────────────────────────────────

def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_dims("add", a, b)
    sa, sb = a.shape, b.shape

    def backward(g: np.ndarray):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return _record("add", (a, b), a.data + b.data, backward)


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_dims("sub", a, b)
    sa, sb = a.shape, b.shape

    def backward(g: np.ndarray):
        return _unbroadcast(g, sa), _unbroadcast(-g, sb)

    return _record("sub", (a, b), a.data - b.data, backward)


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_dims("mul", a, b)
    ad, bd = a.data, b.data

    def backward(g: np.ndarray):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return _record("mul", (a, b), ad * bd, backward)


def scale(x: ArrayLike, c: float) -> Tensor:
    x = _as_tensor(x)

    def backward(g: np.ndarray):
        return (g * c,)

    return _record("scale", (x,), x.data * c, backward)


def relu(x: ArrayLike) -> Tensor:
    x = _as_tensor(x)
    mask = x.data > 0

    def backward(g: np.ndarray):
        return (g * mask,)

    return _record("relu", (x,), np.where(mask, x.data, 0.0), backward)


def sigmoid(x: ArrayLike) -> Tensor:
    x = _as_tensor(x)
    y = np.exp(-np.logaddexp(0.0, -x.data))

    def backward(g: np.ndarray):
        return (g * y * (1.0 - y),)

    return _record("sigmoid", (x,), y, backward)


def concat(xs: Sequence[Tensor], axis: int = 0) -> Tensor:
    xs = tuple(_as_tensor(t) for t in xs)
    if not xs:
        raise ShapeError("concat of nothing")
    try:
        out = np.concatenate([t.data for t in xs], axis=axis)
    except ValueError:
        raise ShapeError("concat: extents differ", *[t.shape for t in xs]) from None
    bounds = np.cumsum([t.shape[axis] for t in xs])[:-1]

    def backward(g: np.ndarray):
        return tuple(np.split(g, bounds, axis=axis))

    return _record("concat", xs, out, backward)


def stack(xs: Sequence[Tensor], axis: int = 0) -> Tensor:
    xs = tuple(_as_tensor(t) for t in xs)
    if not xs:
        raise ShapeError("stack of nothing")
    try:
        out = np.stack([t.data for t in xs], axis=axis)
    except ValueError:
        raise ShapeError("stack: extents differ", *[t.shape for t in xs]) from None

    def backward(g: np.ndarray):
        return tuple(np.moveaxis(g, axis, 0))

    return _record("stack", xs, out, backward)


def select(x: Tensor, key) -> Tensor:
    """Basic slicing/indexing; the indices themselves carry no gradient."""
    x = _as_tensor(x)
    shape = x.shape

    def backward(g: np.ndarray):
        full = np.zeros(shape, dtype=g.dtype)
        np.add.at(full, key, g)
        return (full,)

    return _record("select", (x,), x.data[key], backward)


def take(x: Tensor, indices: Sequence[int], axis: int = 0) -> Tensor:
    x = _as_tensor(x)
    idx = np.asarray(indices, dtype=np.intp)
    shape = x.shape

    def backward(g: np.ndarray):
        full = np.zeros(shape, dtype=g.dtype)
        np.add.at(np.moveaxis(full, axis, 0), idx, np.moveaxis(g, axis, 0))
        return (full,)

    return _record("take", (x,), np.take(x.data, idx, axis=axis), backward)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    x = _as_tensor(x)
    orig = x.shape
    try:
        out = x.data.reshape(tuple(shape))
    except ValueError:
        raise ShapeError("reshape: element counts differ", orig, tuple(shape)) from None

    def backward(g: np.ndarray):
        return (g.reshape(orig),)

    return _record("reshape", (x,), out, backward)


def mean(x: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    shape = x.shape
    count = x.data.size if axis is None else shape[axis]

    def backward(g: np.ndarray):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, shape).copy(),)

    return _record("mean", (x,), x.data.mean(axis=axis, keepdims=keepdims), backward)


def sum_all(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    shape = x.shape

    def backward(g: np.ndarray):
        return (np.broadcast_to(g.reshape(()), shape).copy(),)

    return _record("sum_all", (x,), x.data.sum(), backward)


def sum_sq(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    xd = x.data

    def backward(g: np.ndarray):
        return (2.0 * g.reshape(()) * xd,)

    return _record("sum_sq", (x,), (xd * xd).sum(), backward)


# ─────────────────────────────────────────────────────────────────────────────
# Finite-difference verification harness
# ─────────────────────────────────────────────────────────────────────────────

def check_gradient(
    fn: Callable[[], Tensor],
    x: Tensor,
    step: float = 1e-3,
    tol: Optional[float] = None,
    max_coords: Optional[int] = None,
    seed: int = 0,
) -> float:
    """
    Compare reverse-mode dL/dx with central differences, coordinate by
    coordinate, and return the max relative error (absolute error where
    |analytic| < 1e-6). fn must rebuild its graph from x on every call.

    Evaluation runs in float64 so the comparison measures the gradient code,
    not float32 rounding. With tol set, exceeding it raises NumericsError.
    """
    if not 1e-4 <= step <= 1e-2:
        raise ConfigError(f"step must lie in [1e-4, 1e-2], got {step}", "step")

    saved_data, saved_flag, saved_grad = x.data, x.requires_grad, x.grad
    with precision(np.float64):
        x.data = saved_data.astype(np.float64)
        x.requires_grad = True
        x.grad = None
        try:
            with Graph() as graph:
                out = fn()
            leaves = [t for t in graph.leaves() if t is not x]
            held = [t.grad for t in leaves]
            if out.data.size != 1:
                raise ShapeError("check_gradient needs a scalar-valued fn", out.shape)
            graph.backward(out)
            analytic = x.grad.copy() if x.grad is not None else np.zeros_like(x.data)
            for t, g in zip(leaves, held):
                t.grad = g

            coords = np.arange(x.data.size)
            if max_coords is not None and max_coords < coords.size:
                coords = np.sort(seeded_rng(seed).choice(coords.size, size=max_coords, replace=False))

            flat = x.data.reshape(-1)
            worst = 0.0
            with inference():
                for i in coords:
                    orig = flat[i]
                    flat[i] = orig + step
                    fp = float(fn().data.sum())
                    flat[i] = orig - step
                    fm = float(fn().data.sum())
                    flat[i] = orig
                    numeric = (fp - fm) / (2.0 * step)
                    a = float(analytic.reshape(-1)[i])
                    err = abs(a - numeric) if abs(a) < 1e-6 else abs(a - numeric) / abs(a)
                    worst = max(worst, err)
        finally:
            x.data, x.requires_grad, x.grad = saved_data, saved_flag, saved_grad

    if tol is not None and worst > tol:
        raise NumericsError(f"gradient check failed: max relative error {worst:.3e} > {tol:.1e}")
    return worst
