"""Dense float64 tensors with reverse-mode differentiation recorded on a tape.

Operations executed while a :class:`GradTape` is active, and that touch a
tensor with ``requires_grad=True``, are appended to the tape together with a
vector-Jacobian closure. ``GradTape.gradient`` replays the tape in reverse.
"""
from __future__ import annotations

import numpy as np

CHECK_FINITE = True

_TAPES: list["GradTape"] = []


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "requires_grad", "name")

    def __init__(self, data, requires_grad=False, name=None):
        arr = np.array(data, dtype=np.float64) if not isinstance(data, np.ndarray) else data
        if arr.dtype != np.float64:
            arr = arr.astype(np.float64)
        if CHECK_FINITE and not np.isfinite(arr).all():
            raise FloatingPointError(f"non-finite values produced (tensor {name or ''} shape {arr.shape})")
        self.data = arr
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def values(self):
        """Row-major flat view of the buffer."""
        return self.data.reshape(-1)

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


class finite_checks:
    """Context manager toggling the per-tensor finiteness check."""

    def __init__(self, enabled):
        self.enabled = enabled

    def __enter__(self):
        global CHECK_FINITE
        self.saved, CHECK_FINITE = CHECK_FINITE, self.enabled
        return self

    def __exit__(self, *exc):
        global CHECK_FINITE
        CHECK_FINITE = self.saved
        return False


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


class GradTape:
    """Records differentiable operations for one backward pass.

    >>> w = Tensor([1.0, 2.0], requires_grad=True)
    >>> with GradTape() as tape:
    ...     loss = (w * w).sum()
    >>> tape.gradient(loss, [w])[0]
    array([2., 4.])
    """

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        _TAPES.append(self)
        return self

    def __exit__(self, *exc):
        _TAPES.remove(self)
        return False

    def gradient(self, loss, params):
        if loss.data.size != 1:
            raise ShapeError(f"loss must be scalar, got shape {loss.shape}")
        adj = {id(loss): np.ones_like(loss.data)}
        for outs, inputs, vjp, multi in reversed(self.nodes):
            if multi:
                gs = [adj.pop(id(o), None) for o in outs]
                if all(g is None for g in gs):
                    continue
                grads = vjp([np.zeros_like(o.data) if g is None else g for o, g in zip(outs, gs)])
            else:
                g = adj.pop(id(outs), None)
                if g is None:
                    continue
                grads = vjp(g)
            for inp, gi in zip(inputs, grads):
                if gi is None or not inp.requires_grad:
                    continue
                k = id(inp)
                if k in adj:
                    adj[k] = adj[k] + gi
                else:
                    adj[k] = gi
        out = []
        for p in params:
            g = adj.get(id(p))
            out.append(np.zeros_like(p.data) if g is None else g.reshape(p.shape))
        return out


def _record(out, inputs, vjp):
    if _TAPES and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        _TAPES[-1].nodes.append((out, inputs, vjp, False))
    return out


def record_multi(outs, inputs, vjp):
    """Record a node with several outputs; ``vjp`` gets one adjoint per output."""
    if _TAPES and any(t.requires_grad for t in inputs):
        for o in outs:
            o.requires_grad = True
        _TAPES[-1].nodes.append((tuple(outs), inputs, vjp, True))
    return outs


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _check_broadcast(a, b, op):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# elementwise binary

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    out = Tensor(a.data + b.data)
    return _record(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    out = Tensor(a.data - b.data)
    return _record(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    out = Tensor(a.data * b.data)
    return _record(
        out, (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "div")
    out = Tensor(a.data / b.data)
    return _record(
        out, (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        ),
    )


def neg(a):
    out = Tensor(-a.data)
    return _record(out, (a,), lambda g: (-g,))


def square(a):
    out = Tensor(a.data * a.data)
    return _record(out, (a,), lambda g: (2.0 * g * a.data,))


def matmul(a, b):
    """``a @ b`` with numpy batching rules over leading dimensions."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = Tensor(a.data @ b.data)

    def vjp(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _record(out, (a, b), vjp)


# elementwise unary

def sigmoid(a):
    s = 0.5 * (np.tanh(0.5 * a.data) + 1.0)
    out = Tensor(s)
    return _record(out, (a,), lambda g: (g * s * (1.0 - s),))


def tanh(a):
    t = np.tanh(a.data)
    out = Tensor(t)
    return _record(out, (a,), lambda g: (g * (1.0 - t * t),))


def relu(a):
    mask = a.data > 0
    out = Tensor(a.data * mask)
    return _record(out, (a,), lambda g: (g * mask,))


def silu(a):
    s = 0.5 * (np.tanh(0.5 * a.data) + 1.0)
    out = Tensor(a.data * s)
    return _record(out, (a,), lambda g: (g * (s + a.data * s * (1.0 - s)),))


def sqrt(a):
    r = np.sqrt(a.data)
    out = Tensor(r)
    return _record(out, (a,), lambda g: (g * 0.5 / r,))


def exp(a):
    e = np.exp(a.data)
    out = Tensor(e)
    return _record(out, (a,), lambda g: (g * e,))


def identity(a):
    return a


def softmax(a, axis=-1):
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(s)

    def vjp(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return _record(out, (a,), vjp)


# structural

def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    ax = axis % tensors[0].ndim
    for t in tensors[1:]:
        if t.ndim != tensors[0].ndim or any(
            t.shape[i] != tensors[0].shape[i] for i in range(t.ndim) if i != ax
        ):
            raise ShapeError(f"concat: incompatible shapes {tensors[0].shape} and {t.shape}")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=ax))
    bounds = np.cumsum([0] + [t.shape[ax] for t in tensors])

    def vjp(g):
        sl = [slice(None)] * g.ndim
        res = []
        for i in range(len(tensors)):
            sl[ax] = slice(bounds[i], bounds[i + 1])
            res.append(g[tuple(sl)])
        return tuple(res)

    return _record(out, tuple(tensors), vjp)


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    expanded = [reshape(t, t.shape[:axis % (t.ndim + 1)] + (1,) + t.shape[axis % (t.ndim + 1):]) for t in tensors]
    return concat(expanded, axis=axis)


def getitem(a, idx):
    out = Tensor(np.array(a.data[idx], dtype=np.float64))

    def vjp(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return (full,)

    return _record(out, (a,), vjp)


def transpose(a, axes=None):
    if axes is None:
        axes = tuple(range(a.ndim))[::-1]
    inv = np.argsort(axes)
    out = Tensor(np.transpose(a.data, axes))
    return _record(out, (a,), lambda g: (np.transpose(g, inv),))


def swapaxes(a, i, j):
    axes = list(range(a.ndim))
    axes[i], axes[j] = axes[j], axes[i]
    return transpose(a, tuple(axes))


def reshape(a, shape):
    try:
        data = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {a.shape} as {shape}") from None
    out = Tensor(data)
    return _record(out, (a,), lambda g: (g.reshape(a.shape),))


def reduce_sum(a, axis=None, keepdims=False):
    out = Tensor(np.asarray(a.data.sum(axis=axis, keepdims=keepdims), dtype=np.float64))

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _record(out, (a,), vjp)


def reduce_mean(a, axis=None, keepdims=False):
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return div(reduce_sum(a, axis, keepdims), float(n))


def reduce_max(a, axis=-1):
    m = a.data.max(axis=axis, keepdims=True)
    mask = a.data == m
    # split ties evenly so the adjoint sums to one per slice
    mask = mask / mask.sum(axis=axis, keepdims=True)
    out = Tensor(np.squeeze(m, axis=axis))
    return _record(out, (a,), lambda g: (np.expand_dims(g, axis) * mask,))


def maxpool1d(a, width=2):
    """Non-overlapping max pooling over axis 1 of a ``(batch, time, channels)`` tensor."""
    b, length, c = a.shape
    n = length // width
    if n == 0:
        raise ShapeError(f"maxpool1d: width {width} exceeds length {length}")
    blocks = a.data[:, : n * width].reshape(b, n, width, c)
    arg = blocks.argmax(axis=2)
    out = Tensor(np.take_along_axis(blocks, arg[:, :, None, :], axis=2)[:, :, 0, :])

    def vjp(g):
        gb = np.zeros_like(blocks)
        np.put_along_axis(gb, arg[:, :, None, :], g[:, :, None, :], axis=2)
        full = np.zeros_like(a.data)
        full[:, : n * width] = gb.reshape(b, n * width, c)
        return (full,)

    return _record(out, (a,), vjp)


def conv1d(x, weight, bias=None):
    """Valid cross-correlation over time.

    ``x``: (batch, time, in_ch); ``weight``: (width, in_ch, out_ch);
    returns (batch, time - width + 1, out_ch).
    """
    k, cin, cout = weight.shape
    if x.ndim != 3 or x.shape[2] != cin:
        raise ShapeError(f"conv1d: input {x.shape} does not match kernel {weight.shape}")
    if k > x.shape[1]:
        raise ShapeError(f"conv1d: kernel width {k} exceeds window length {x.shape[1]}")
    lout = x.shape[1] - k + 1
    win = np.lib.stride_tricks.sliding_window_view(x.data, k, axis=1)  # (b, lout, cin, k)
    y = np.einsum("blck,kco->blo", win, weight.data, optimize=True)
    if bias is not None:
        y = y + bias.data
    out = Tensor(y)
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def vjp(g):
        gw = np.einsum("blck,blo->kco", win, g, optimize=True)
        gx = np.zeros_like(x.data)
        for j in range(k):
            gx[:, j:j + lout] += g @ weight.data[j].T
        res = [gx, gw]
        if bias is not None:
            res.append(g.sum(axis=(0, 1)))
        return tuple(res)

    return _record(out, inputs, vjp)


def layer_norm(x, gamma, beta, eps=1e-5):
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = Tensor(xhat * gamma.data + beta.data)

    def vjp(g):
        gxhat = g * gamma.data
        gx = inv * (gxhat - gxhat.mean(axis=-1, keepdims=True)
                    - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True))
        red = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(axis=red), g.sum(axis=red)

    return _record(out, (x, gamma, beta), vjp)


def dropout(x, rate, rng, training=True):
    """Inverted dropout; the mask is drawn from ``rng`` so runs are reproducible."""
    if not training or rate <= 0.0:
        return x
    keep = (rng.uniform(size=x.shape) >= rate) / (1.0 - rate)
    return mul(x, Tensor(keep))


def mse(pred, target):
    diff = sub(pred, target)
    return reduce_mean(square(diff))


def unstack(a, axis=0):
    """Split along ``axis`` into a list of tensors with that axis removed."""
    moved = np.ascontiguousarray(np.moveaxis(a.data, axis, 0))
    parts = [Tensor(moved[i]) for i in range(moved.shape[0])]

    def vjp(gs):
        return (np.stack(gs, axis=axis),)

    return list(record_multi(parts, (a,), vjp))
