"""Dense tensors with reverse-mode automatic differentiation.

Every numeric quantity in the model is a `Tensor`: a flat row-major numpy
buffer plus shape, an optional gradient buffer, and a `requires_grad` flag.
Differentiable primitives record nodes on a thread-local `Tape` whenever any
input requires a gradient; `backward(loss)` replays the tape in reverse and
then resets it.

Design rules (enforced, not conventions):
  - shapes must match exactly for elementwise ops; the only implicit
    broadcast is scalar-vs-tensor. Anything else goes through `expand`.
  - operands must share one dtype (float32 or float64). Python scalars adopt
    the tensor's dtype.
  - forward evaluation with `requires_grad=False` inputs records nothing and
    is pure, so frozen-parameter inference is safe across threads.
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy.special import erf as _erf

__all__ = [
    "Tensor", "Tape", "ShapeError", "no_grad", "backward",
    "add", "sub", "mul", "div", "neg", "matmul", "conv2d",
    "reshape", "transpose", "expand", "concat", "gather",
    "softmax", "layer_norm", "gelu", "relu", "sigmoid", "softplus",
    "exp", "log", "tsum", "tmean", "linear",
]

_INV_SQRT2 = 0.7071067811865476
_INV_SQRT_2PI = 0.3989422804014327


class ShapeError(ValueError):
    """Raised when operand shapes do not conform; names the op and shapes."""

    def __init__(self, op: str, *shapes):
        super().__init__(f"{op}: incompatible shapes {' vs '.join(str(tuple(s)) for s in shapes)}")
        self.op = op
        self.shapes = shapes


class _Node:
    """One executed differentiable op: output ref plus its backward rule."""

    __slots__ = ("output", "inputs", "backward_fn")

    def __init__(self, output: "Tensor", inputs: Sequence["Tensor"],
                 backward_fn: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]):
        self.output = output
        self.inputs = inputs
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of executed differentiable ops (topological by construction)."""

    def __init__(self):
        self.nodes: list[_Node] = []

    def record(self, node: _Node) -> None:
        self.nodes.append(node)

    def clear(self) -> None:
        self.nodes.clear()

    def __len__(self) -> int:
        return len(self.nodes)


class _TapeState(threading.local):
    def __init__(self):
        self.tape = Tape()
        self.enabled = True


_STATE = _TapeState()


def active_tape() -> Tape:
    return _STATE.tape


class no_grad:
    """Context manager that suspends tape recording."""

    def __enter__(self):
        self._prev = _STATE.enabled
        _STATE.enabled = False
        return self

    def __exit__(self, *exc):
        _STATE.enabled = self._prev
        return False


def _recording(inputs: Iterable["Tensor"]) -> bool:
    return _STATE.enabled and any(t.requires_grad for t in inputs)


class Tensor:
    """Dense n-dimensional array, optionally participating in the gradient tape."""

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str = ""):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def accumulate_grad(self, g: np.ndarray) -> None:
        if g.shape != self.data.shape:
            raise ShapeError("grad", g.shape, self.data.shape)
        if self.grad is None:
            # backward() hands over uniquely-owned arrays, so no copy here
            self.grad = g if g.dtype == self.data.dtype else g.astype(self.data.dtype)
        else:
            self.grad += g

    def backward(self) -> None:
        backward(self)

    # arithmetic sugar; python scalars adopt this tensor's dtype
    def __add__(self, other):
        return add(self, _coerce(other, self))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _coerce(other, self))

    def __rsub__(self, other):
        return sub(_coerce(other, self), self)

    def __mul__(self, other):
        return mul(self, _coerce(other, self))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, _coerce(other, self))

    def __rtruediv__(self, other):
        return div(_coerce(other, self), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _coerce(other, self))

    def __getitem__(self, key):
        return _getitem(self, key)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], (tuple, list)) else shape)

    def transpose(self, *axes):
        return transpose(self, axes[0] if len(axes) == 1 and isinstance(axes[0], (tuple, list)) else axes)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad}{tag})"


def _coerce(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.data.dtype))


def _check_dtypes(op: str, *tensors: Tensor) -> None:
    dtypes = {t.data.dtype for t in tensors}
    if len(dtypes) > 1:
        raise TypeError(f"{op}: mixed dtypes {sorted(str(d) for d in dtypes)}; cast explicitly")


def _make(op: str, out_data: np.ndarray, inputs: Sequence[Tensor],
          backward_fn: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]) -> Tensor:
    rec = _recording(inputs)
    out = Tensor(out_data, requires_grad=rec)
    if rec:
        _STATE.tape.record(_Node(out, inputs, backward_fn))
    return out


def backward(loss: Tensor, tape: Optional[Tape] = None) -> None:
    """Populate .grad on every requires_grad tensor reachable from `loss`.

    The tape is reset afterwards regardless of success, so one training step
    owns exactly one recorded graph.
    """
    if loss.ndim != 0:
        raise ShapeError("backward", loss.shape, ())
    tape = tape if tape is not None else _STATE.tape
    try:
        grads: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=loss.data.dtype)}
        # arrays already parked in `grads` get mutated by +=, so an incoming
        # gradient may be stored without copy only if it is a fresh owned
        # buffer not seen before; views (ig.base set) may alias a stored one
        stored: set[int] = set()
        for node in reversed(tape.nodes):
            g = grads.pop(id(node.output), None)
            if g is None:
                continue
            stored.discard(id(g))
            input_grads = node.backward_fn(g)
            for inp, ig in zip(node.inputs, input_grads):
                if ig is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] += ig
                elif ig.base is None and id(ig) not in stored and ig.dtype == inp.data.dtype:
                    grads[key] = ig
                    stored.add(id(ig))
                else:
                    arr = np.array(ig, dtype=inp.data.dtype)
                    grads[key] = arr
                    stored.add(id(arr))
        # flush leaf grads
        for node in tape.nodes:
            for inp in node.inputs:
                g = grads.pop(id(inp), None)
                if g is not None and inp.requires_grad:
                    inp.accumulate_grad(g)
        g = grads.pop(id(loss), None)
        if g is not None and loss.requires_grad:
            loss.accumulate_grad(g)
    finally:
        tape.clear()


# ---------------------------------------------------------------------------
# elementwise primitives
# ---------------------------------------------------------------------------

def _binary_shapes(op: str, a: Tensor, b: Tensor) -> None:
    _check_dtypes(op, a, b)
    if a.shape != b.shape and a.ndim != 0 and b.ndim != 0:
        raise ShapeError(op, a.shape, b.shape)


def _unbroadcast_scalar(g: np.ndarray, t: Tensor) -> np.ndarray:
    # only scalar-vs-tensor broadcasting exists, so the fixup is a full sum
    if t.ndim == 0 and g.ndim != 0:
        return g.sum()
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    _binary_shapes("add", a, b)
    return _make("add", a.data + b.data, (a, b),
                 lambda g: (_unbroadcast_scalar(g, a), _unbroadcast_scalar(g, b)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _binary_shapes("sub", a, b)
    return _make("sub", a.data - b.data, (a, b),
                 lambda g: (_unbroadcast_scalar(g, a), _unbroadcast_scalar(-g, b)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _binary_shapes("mul", a, b)
    return _make("mul", a.data * b.data, (a, b),
                 lambda g: (_unbroadcast_scalar(g * b.data, a), _unbroadcast_scalar(g * a.data, b)))


def div(a: Tensor, b: Tensor) -> Tensor:
    _binary_shapes("div", a, b)
    return _make("div", a.data / b.data, (a, b),
                 lambda g: (_unbroadcast_scalar(g / b.data, a),
                            _unbroadcast_scalar(-g * a.data / (b.data * b.data), b)))


def neg(a: Tensor) -> Tensor:
    return _make("neg", -a.data, (a,), lambda g: (-g,))


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)
    return _make("exp", out_data, (a,), lambda g: (g * out_data,))


def log(a: Tensor) -> Tensor:
    return _make("log", np.log(a.data), (a,), lambda g: (g / a.data,))


def relu(a: Tensor) -> Tensor:
    return _make("relu", np.maximum(a.data, 0), (a,),
                 lambda g: (g * (a.data > 0),))


def sigmoid(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        s = 1.0 / (1.0 + np.exp(-a.data))
    return _make("sigmoid", s, (a,), lambda g: (g * s * (1.0 - s),))


def softplus(a: Tensor) -> Tensor:
    out_data = np.logaddexp(np.zeros((), dtype=a.data.dtype), a.data)
    with np.errstate(over="ignore"):
        s = 1.0 / (1.0 + np.exp(-a.data))
    return _make("softplus", out_data, (a,), lambda g: (g * s,))


def gelu(a: Tensor) -> Tensor:
    x = a.data
    phi = 0.5 * (1.0 + _erf(x * _INV_SQRT2))
    out_data = (x * phi).astype(x.dtype)

    def bwd(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
        return (g * (phi + x * pdf),)

    return _make("gelu", out_data, (a,), bwd)


# ---------------------------------------------------------------------------
# shape primitives
# ---------------------------------------------------------------------------

def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    try:
        out_data = a.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", a.shape, shape) from None
    return _make("reshape", out_data, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Tensor, axes=None) -> Tensor:
    if axes is None or len(axes) == 0:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(int(ax) for ax in axes)
    inv = tuple(int(i) for i in np.argsort(axes))
    return _make("transpose", a.data.transpose(axes), (a,),
                 lambda g: (g.transpose(inv),))


def expand(a: Tensor, shape) -> Tensor:
    """Explicit broadcast of size-1 (or missing leading) axes to `shape`."""
    shape = tuple(int(s) for s in shape)
    try:
        out_data = np.broadcast_to(a.data, shape)
    except ValueError:
        raise ShapeError("expand", a.shape, shape) from None

    def bwd(g):
        extra = g.ndim - a.ndim
        if extra:
            g = g.sum(axis=tuple(range(extra)))
        keep = tuple(i for i, s in enumerate(a.shape) if s == 1 and g.shape[i] != 1)
        if keep:
            g = g.sum(axis=keep, keepdims=True)
        return (g,)

    return _make("expand", out_data, (a,), bwd)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = list(tensors)
    _check_dtypes("concat", *tensors)
    axis = axis % tensors[0].ndim
    base = list(tensors[0].shape)
    for t in tensors[1:]:
        s = list(t.shape)
        s[axis] = base[axis]
        if s != base:
            raise ShapeError("concat", tensors[0].shape, t.shape)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))

    return _make("concat", np.concatenate([t.data for t in tensors], axis=axis), tensors, bwd)


def _getitem(a: Tensor, key) -> Tensor:
    out_data = a.data[key]

    def bwd(g):
        dx = np.zeros_like(a.data)
        dx[key] += g
        return (dx,)

    return _make("slice", out_data, (a,), bwd)


def gather(a: Tensor, index: np.ndarray, axis: int = -1) -> Tensor:
    """take_along_axis; `index` is a constant integer array."""
    index = np.asarray(index)
    out_data = np.take_along_axis(a.data, index, axis=axis)

    def bwd(g):
        dx = np.zeros_like(a.data)
        idx = list(np.indices(index.shape, sparse=True))
        idx[axis % a.ndim] = index
        np.add.at(dx, tuple(idx), g)
        return (dx,)

    return _make("gather", out_data, (a,), bwd)


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def _norm_axis(a: Tensor, axis):
    if axis is None:
        return tuple(range(a.ndim))
    if isinstance(axis, int):
        return (axis % a.ndim,)
    return tuple(ax % a.ndim for ax in axis)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axis(a, axis)

    def bwd(g):
        if not keepdims:
            for ax in sorted(axes):
                g = np.expand_dims(g, ax)
        return (np.broadcast_to(g, a.shape).astype(a.data.dtype),)

    return _make("sum", a.data.sum(axis=axes, keepdims=keepdims), (a,), bwd)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axis(a, axis)
    count = int(np.prod([a.shape[ax] for ax in axes])) if a.ndim else 1

    def bwd(g):
        if not keepdims:
            for ax in sorted(axes):
                g = np.expand_dims(g, ax)
        return ((np.broadcast_to(g, a.shape) / count).astype(a.data.dtype),)

    return _make("mean", a.data.mean(axis=axes, keepdims=keepdims), (a,), bwd)


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product. Leading dims must match exactly, or an operand is 2-D."""
    _check_dtypes("matmul", a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul", a.shape, b.shape)
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", a.shape, b.shape)
    if a.ndim > 2 and b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise ShapeError("matmul", a.shape, b.shape)

    def _reduce_to(g, shape):
        extra = g.ndim - len(shape)
        if extra:
            g = g.sum(axis=tuple(range(extra)))
        return g

    need_a, need_b = a.requires_grad, b.requires_grad

    def bwd(g):
        da = _reduce_to(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape) if need_a else None
        db = _reduce_to(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape) if need_b else None
        return (da, db)

    return _make("matmul", np.matmul(a.data, b.data), (a, b), bwd)


def linear(x: Tensor, w: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """x @ w + b with the bias broadcast made explicit."""
    y = matmul(x, w)
    if b is not None:
        y = add(y, expand(b, y.shape))
    return y


def conv2d(x: Tensor, w: Tensor, b: Optional[Tensor] = None, stride: int = 1) -> Tensor:
    """2-D convolution, NHWC layout, "same" padding.

    x: (N, H, W, Cin); w: (kh, kw, Cin, Cout); b: (Cout,).
    Output spatial size is ceil(H/stride) x ceil(W/stride).
    """
    _check_dtypes("conv2d", *( (x, w) if b is None else (x, w, b) ))
    if x.ndim != 4 or w.ndim != 4 or x.shape[3] != w.shape[2]:
        raise ShapeError("conv2d", x.shape, w.shape)
    n, h, wid, cin = x.shape
    kh, kw, _, cout = w.shape
    ph, pw = kh // 2, kw // 2
    s = int(stride)
    xp = np.pad(x.data, ((0, 0), (ph, ph), (pw, pw), (0, 0)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    win = win[:, ::s, ::s]                        # (N, Ho, Wo, Cin, kh, kw)
    ho, wo = win.shape[1], win.shape[2]
    cols = np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(n * ho * wo, kh * kw * cin)
    out_data = cols @ w.data.reshape(kh * kw * cin, cout)
    if b is not None:
        if b.shape != (cout,):
            raise ShapeError("conv2d.bias", b.shape, (cout,))
        out_data += b.data
    out_data = out_data.reshape(n, ho, wo, cout)

    need_x = x.requires_grad

    def bwd(g):
        g2 = g.reshape(n * ho * wo, cout)
        dw = (cols.T @ g2).reshape(w.shape)
        dx = None
        if need_x:          # the first layer's input is data, not parameters
            dcols = (g2 @ w.data.reshape(kh * kw * cin, cout).T).reshape(n, ho, wo, kh, kw, cin)
            dxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, i:i + s * ho:s, j:j + s * wo:s, :] += dcols[:, :, :, i, j, :]
            dx = np.ascontiguousarray(dxp[:, ph:ph + h, pw:pw + wid, :])
        grads = [dx, dw]
        if b is not None:
            grads.append(g2.sum(axis=0))
        return tuple(grads)

    inputs = (x, w) if b is None else (x, w, b)
    return _make("conv2d", out_data, inputs, bwd)


# ---------------------------------------------------------------------------
# normalization / attention pieces
# ---------------------------------------------------------------------------

def softmax(a: Tensor) -> Tensor:
    """Numerically stable softmax over the last axis."""
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=-1, keepdims=True)

    def bwd(g):
        dot = (g * out_data).sum(axis=-1, keepdims=True)
        return ((g - dot) * out_data,)

    return _make("softmax", out_data, (a,), bwd)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale+shift."""
    _check_dtypes("layer_norm", x, gamma, beta)
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError("layer_norm", x.shape, gamma.shape, beta.shape)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out_data = xhat * gamma.data + beta.data

    def bwd(g):
        dgamma = (g * xhat).reshape(-1, d).sum(axis=0)
        dbeta = g.reshape(-1, d).sum(axis=0)
        gx = g * gamma.data
        dx = inv * (gx - gx.mean(axis=-1, keepdims=True)
                    - xhat * (gx * xhat).mean(axis=-1, keepdims=True))
        return (dx.astype(x.data.dtype), dgamma.astype(x.data.dtype), dbeta.astype(x.data.dtype))

    return _make("layer_norm", out_data.astype(x.data.dtype), (x, gamma, beta), bwd)
