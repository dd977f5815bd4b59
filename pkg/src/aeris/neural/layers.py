"""Differentiable building blocks for the neural model zoo."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from aeris.numcore import tensor as T
from aeris.numcore.tensor import ShapeError, Tensor, _record, record_multi


def glorot(rng, shape, fan_in, fan_out, name=None):
    lim = math.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-lim, lim, size=shape), requires_grad=True, name=name)


def zeros(shape, name=None):
    return Tensor(np.zeros(shape), requires_grad=True, name=name)


def ones(shape, name=None):
    return Tensor(np.ones(shape), requires_grad=True, name=name)


class Layer:
    """Holds parameter tensors in ``self.params`` (including sub-layers)."""

    def __init__(self):
        self.params = []

    def add(self, *items):
        for item in items:
            if isinstance(item, Layer):
                self.params.extend(item.params)
            else:
                self.params.append(item)
        return items[0] if len(items) == 1 else items


class Dense(Layer):
    def __init__(self, n_in, n_out, rng):
        super().__init__()
        self.W = self.add(glorot(rng, (n_in, n_out), n_in, n_out, "W"))
        self.b = self.add(zeros((n_out,), "b"))

    def __call__(self, x):
        if x.ndim == 2:
            return T.add(T.matmul(x, self.W), self.b)
        lead = x.shape[:-1]
        flat = T.reshape(x, (-1, x.shape[-1]))
        out = T.add(T.matmul(flat, self.W), self.b)
        return T.reshape(out, lead + (self.W.shape[1],))


# KAN

def kan_knots(grid=5, degree=3, lo=-1.0, hi=1.0):
    return lo + (hi - lo) * np.arange(-degree, grid + degree + 1) / grid


def bspline_basis(x, knots, degree=3):
    """Cubic (by default) B-spline basis values and x-derivatives.

    Inputs outside ``[knots[degree], knots[-degree-1]]`` are clamped to the
    boundary, where the derivative is zero.
    """
    lo, hi = knots[degree], knots[-degree - 1]
    xc = np.clip(x, lo, hi)[..., None]
    inside = ((x >= lo) & (x <= hi))[..., None]
    t = knots
    B = ((xc >= t[:-1]) & (xc < t[1:])).astype(np.float64)
    prev = B
    for d in range(1, degree + 1):
        left = (xc - t[:-(d + 1)]) / (t[d:-1] - t[:-(d + 1)]) * prev[..., :-1]
        right = (t[d + 1:] - xc) / (t[d + 1:] - t[1:-d]) * prev[..., 1:]
        if d == degree:
            lower = prev
        prev = left + right
    dB = degree * (lower[..., :-1] / (t[degree:-1] - t[:-(degree + 1)])
                   - lower[..., 1:] / (t[degree + 1:] - t[1:-degree]))
    return prev, dB * inside


def spline_basis(x, knots, degree=3):
    """Tape op: ``(..., )`` -> ``(..., n_basis)``."""
    B, dB = bspline_basis(x.data, knots, degree)
    out = Tensor(B)
    return _record(out, (x,), lambda g: ((g * dB).sum(axis=-1),))


@dataclass
class KanEdge:
    coefs: np.ndarray
    w_base: float = 1.0
    w_spline: float = 1.0
    grid: int = 5
    degree: int = 3
    grid_range: tuple = (-1.0, 1.0)

    @property
    def knots(self):
        return kan_knots(self.grid, self.degree, *self.grid_range)


def kan_edge(x, coefs, w_base, w_spline, knots, degree=3):
    """Differentiable ``w_b * silu(x) + w_s * sum_i c_i B_i(x)``."""
    basis = spline_basis(x, knots, degree)
    spline = T.reduce_sum(T.mul(basis, coefs), axis=-1)
    return T.add(T.mul(w_base, T.silu(x)), T.mul(w_spline, spline))


def kan_edge_eval(x, edge):
    out = kan_edge(Tensor(np.asarray(x, dtype=np.float64)), Tensor(edge.coefs), Tensor(edge.w_base),
                   Tensor(edge.w_spline), edge.knots, edge.degree)
    return out.data if out.ndim else float(out.data)


class KANLayer(Layer):
    """Fully connected layer of learnable edge functions."""

    def __init__(self, n_in, n_out, rng, grid=5, degree=3, grid_range=(-1.0, 1.0)):
        super().__init__()
        self.knots = kan_knots(grid, degree, *grid_range)
        self.degree = degree
        nb = grid + degree
        self.n_basis = nb
        self.coef = self.add(Tensor(rng.normal(0.0, 0.1 / math.sqrt(n_in), size=(n_in, nb, n_out)),
                                    requires_grad=True, name="kan_coef"))
        self.w_base = self.add(glorot(rng, (n_in, n_out), n_in, n_out, "kan_base"))
        self.w_spline = self.add(ones((n_in, n_out), "kan_spline"))

    def __call__(self, x):
        b, n_in = x.shape
        base = T.matmul(T.silu(x), self.w_base)
        basis = T.reshape(spline_basis(x, self.knots, self.degree), (b, n_in * self.n_basis))
        eff = T.mul(self.coef, T.reshape(self.w_spline, (n_in, 1, -1)))
        eff = T.reshape(eff, (n_in * self.n_basis, -1))
        return T.add(base, T.matmul(basis, eff))


# recurrent cells

def lstm_pointwise(z, c_prev):
    """Gate nonlinearities of an LSTM step; ``z`` holds pre-activations [i, f, g, o]."""
    H = c_prev.shape[-1]
    zd = z.data
    sig = lambda a: 0.5 * (np.tanh(0.5 * a) + 1.0)  # noqa: E731
    i, f = sig(zd[:, :H]), sig(zd[:, H:2 * H])
    g, o = np.tanh(zd[:, 2 * H:3 * H]), sig(zd[:, 3 * H:])
    c = f * c_prev.data + i * g
    tc = np.tanh(c)
    h_out, c_out = Tensor(o * tc), Tensor(c)

    def vjp(gs):
        gh, gc = gs
        gc = gc + gh * o * (1.0 - tc * tc)
        dz = np.concatenate([
            gc * g * i * (1.0 - i),
            gc * c_prev.data * f * (1.0 - f),
            gc * i * (1.0 - g * g),
            gh * tc * o * (1.0 - o),
        ], axis=-1)
        return dz, gc * f

    return record_multi((h_out, c_out), (z, c_prev), vjp)


def lstm_cell_step(x_t, h_prev, c_prev, params):
    """One LSTM step. ``params`` = (W_x (in, 4H), W_h (H, 4H), b (4H,))."""
    Wx, Wh, b = params
    z = T.add(T.add(T.matmul(x_t, Wx), T.matmul(h_prev, Wh)), b)
    return lstm_pointwise(z, c_prev)


def gru_cell_step(x_t, h_prev, params, xproj=None):
    """One GRU step. ``params`` = (W_x (in, 3H), W_h (H, 2H), U_n (H, H), b (3H,)).

    Column blocks of ``W_x``/``b`` are [update z, reset r, candidate].
    """
    Wx, Wh, Un, b = params
    H = h_prev.shape[-1]
    if xproj is None:
        xproj = T.add(T.matmul(x_t, Wx), b)
    zr = T.sigmoid(T.add(xproj[:, :2 * H], T.matmul(h_prev, Wh)))
    z, r = zr[:, :H], zr[:, H:]
    cand = T.tanh(T.add(xproj[:, 2 * H:], T.matmul(T.mul(r, h_prev), Un)))
    return T.add(h_prev, T.mul(z, T.sub(cand, h_prev)))


def rnn_cell_step(x_t, h_prev, params, xproj=None):
    Wx, Wh, b = params
    if xproj is None:
        xproj = T.add(T.matmul(x_t, Wx), b)
    return T.tanh(T.add(xproj, T.matmul(h_prev, Wh)))


class RecurrentCell(Layer):
    GATES = {"lstm": 4, "gru": 3, "rnn": 1}

    def __init__(self, kind, n_in, hidden, rng):
        super().__init__()
        if kind not in self.GATES:
            raise ValueError(f"unknown cell {kind!r}")
        self.kind, self.hidden = kind, hidden
        G = self.GATES[kind] * hidden
        self.Wx = self.add(glorot(rng, (n_in, G), n_in, G, f"{kind}_Wx"))
        if kind == "gru":
            self.Wh = self.add(glorot(rng, (hidden, 2 * hidden), hidden, 2 * hidden, "gru_Wh"))
            self.Un = self.add(glorot(rng, (hidden, hidden), hidden, hidden, "gru_Un"))
        else:
            self.Wh = self.add(glorot(rng, (hidden, G), hidden, G, f"{kind}_Wh"))
        b = np.zeros(G)
        if kind == "lstm":
            b[hidden:2 * hidden] = 1.0  # forget-gate bias
        self.b = self.add(Tensor(b, requires_grad=True, name=f"{kind}_b"))

    def project(self, x):
        """Input projection for every time step: ``(B, L, in)`` -> ``(B, L, G)``."""
        b, length, n_in = x.shape
        z = T.add(T.matmul(T.reshape(x, (b * length, n_in)), self.Wx), self.b)
        return T.reshape(z, (b, length, -1))

    def initial_state(self, batch):
        h = Tensor(np.zeros((batch, self.hidden)))
        return (h, Tensor(np.zeros((batch, self.hidden)))) if self.kind == "lstm" else (h,)

    def step(self, xproj, state):
        if self.kind == "lstm":
            z = T.add(xproj, T.matmul(state[0], self.Wh))
            return lstm_pointwise(z, state[1])
        if self.kind == "gru":
            return (gru_cell_step(None, state[0], (self.Wx, self.Wh, self.Un, self.b), xproj),)
        return (rnn_cell_step(None, state[0], (self.Wx, self.Wh, self.b), xproj),)

    def run(self, x, state=None, reverse=False):
        """Unroll over ``(B, L, in)``; returns the hidden sequence ``(B, L, H)``
        (in time order) and the final state tuple."""
        state = state or self.initial_state(x.shape[0])
        weights = (self.Wh, self.Un) if self.kind == "gru" else (self.Wh,)
        outs = recurrent_sequence(self.kind, self.project(x), weights, state, reverse)
        return outs[0], tuple(outs[1:])


def _sig(a):
    return 0.5 * (np.tanh(0.5 * a) + 1.0)


def recurrent_sequence(kind, xproj, weights, state, reverse=False):
    """Run a whole recurrence as one tape node with hand-written BPTT.

    ``xproj`` holds the input projections ``(B, L, G)``. Returns
    ``(hidden sequence, final h[, final c])``; the step equations match
    :func:`lstm_cell_step`, :func:`gru_cell_step` and :func:`rnn_cell_step`.
    """
    xp = xproj.data
    b, length, _ = xp.shape
    Wh = weights[0].data
    h = state[0].data
    H = h.shape[-1]
    c = state[1].data if kind == "lstm" else None
    order = range(length - 1, -1, -1) if reverse else range(length)
    seq = np.empty((b, length, H))
    cache = []
    for t in order:
        if kind == "lstm":
            z = xp[:, t] + h @ Wh
            i, f = _sig(z[:, :H]), _sig(z[:, H:2 * H])
            g, o = np.tanh(z[:, 2 * H:3 * H]), _sig(z[:, 3 * H:])
            c_new = f * c + i * g
            tc = np.tanh(c_new)
            cache.append((h, c, i, f, g, o, tc))
            h, c = o * tc, c_new
        elif kind == "gru":
            Un = weights[1].data
            zr = _sig(xp[:, t, :2 * H] + h @ Wh)
            z, r = zr[:, :H], zr[:, H:]
            n = np.tanh(xp[:, t, 2 * H:] + (r * h) @ Un)
            cache.append((h, z, r, n))
            h = h + z * (n - h)
        else:
            h_new = np.tanh(xp[:, t] + h @ Wh)
            cache.append((h, h_new))
            h = h_new
        seq[:, t] = h
    outs = [Tensor(seq), Tensor(h)] + ([Tensor(c)] if kind == "lstm" else [])

    def vjp(gs):
        gseq, gh = gs[0], gs[1].copy()
        gc = gs[2].copy() if kind == "lstm" else None
        gxp = np.zeros_like(xp)
        gW = [np.zeros_like(w.data) for w in weights]
        for t, saved in zip(reversed(list(order)), reversed(cache)):
            gh = gh + gseq[:, t]
            if kind == "lstm":
                hp, cp, i, f, g, o, tc = saved
                gc = gc + gh * o * (1.0 - tc * tc)
                dz = np.concatenate([gc * g * i * (1.0 - i), gc * cp * f * (1.0 - f),
                                     gc * i * (1.0 - g * g), gh * tc * o * (1.0 - o)], axis=-1)
                gxp[:, t] = dz
                gW[0] += hp.T @ dz
                gh = dz @ Wh.T
                gc = gc * f
            elif kind == "gru":
                hp, z, r, n = saved
                dn = gh * z * (1.0 - n * n)
                gxp[:, t, 2 * H:] = dn
                grh = dn @ Un.T
                gW[1] += (r * hp).T @ dn
                da = np.concatenate([gh * (n - hp) * z * (1.0 - z), grh * hp * r * (1.0 - r)], axis=-1)
                gxp[:, t, :2 * H] = da
                gW[0] += hp.T @ da
                gh = gh * (1.0 - z) + grh * r + da @ Wh.T
            else:
                hp, hn = saved
                da = gh * (1.0 - hn * hn)
                gxp[:, t] = da
                gW[0] += hp.T @ da
                gh = da @ Wh.T
        g_state = (gh, gc) if kind == "lstm" else (gh,)
        return (gxp,) + tuple(gW) + g_state

    return record_multi(outs, (xproj,) + tuple(weights) + tuple(state), vjp)


class RecurrentLayer(Layer):
    """Uni- or bidirectional recurrent layer. Bidirectional outputs concatenate
    forward and backward states."""

    def __init__(self, kind, n_in, hidden, rng, bidirectional=False, share_weights=False):
        super().__init__()
        self.fwd = self.add(RecurrentCell(kind, n_in, hidden, rng))
        self.bidirectional = bidirectional
        if bidirectional:
            self.bwd = self.fwd if share_weights else self.add(RecurrentCell(kind, n_in, hidden, rng))
        self.out_size = hidden * (2 if bidirectional else 1)

    def __call__(self, x):
        seq, state = self.fwd.run(x)
        if not self.bidirectional:
            return seq, state
        bseq, bstate = self.bwd.run(x, reverse=True)
        final = tuple(T.concat([a, b], axis=-1) for a, b in zip(state, bstate))
        return T.concat([seq, bseq], axis=-1), final


# convolution

class Conv1D(Layer):
    def __init__(self, n_in, filters, width, rng):
        super().__init__()
        self.width = width
        self.W = self.add(glorot(rng, (width, n_in, filters), width * n_in, filters, "conv_W"))
        self.b = self.add(zeros((filters,), "conv_b"))

    def __call__(self, x):
        return T.conv1d(x, self.W, self.b)


def conv1d_forward(window, filters, width=None, bias=None, pool=False):
    """Valid cross-correlation of a ``(lookback, channels)`` (or batched)
    window with ``filters`` shaped ``(width, channels, n_filters)``, optionally
    max-pooled by 2."""
    x = window if isinstance(window, Tensor) else Tensor(window)
    w = filters if isinstance(filters, Tensor) else Tensor(filters)
    squeeze = x.ndim == 2
    if squeeze:
        x = T.reshape(x, (1,) + x.shape)
    if width is not None and width != w.shape[0]:
        raise ShapeError(f"kernel width {width} does not match filter shape {w.shape}")
    y = T.conv1d(x, w, bias)
    if pool:
        y = T.maxpool1d(y, 2)
    return T.reshape(y, y.shape[1:]) if squeeze else y


# attention

def scaled_dot_attention(Q, K, V, mode="full", top_u=1.0):
    """Softmax attention over the last two axes.

    ``mode="top-u"`` scores each query by ``max - mean`` of its scaled logits,
    runs full attention for the ``ceil(top_u * Lq)`` highest-scoring queries
    and returns the mean of ``V`` for the rest.
    """
    if Q.shape[-1] != K.shape[-1] or K.shape[-2] != V.shape[-2]:
        raise ShapeError(f"attention: incompatible shapes Q{Q.shape} K{K.shape} V{V.shape}")
    dk = Q.shape[-1]
    scores = T.div(T.matmul(Q, T.swapaxes(K, -1, -2)), math.sqrt(dk))
    full = T.matmul(T.softmax(scores, axis=-1), V)
    if mode == "full":
        return full
    if mode != "top-u":
        raise ValueError(f"unknown attention mode {mode!r}")
    lq = Q.shape[-2]
    n_top = min(lq, math.ceil(top_u * lq))
    if n_top >= lq:
        return full
    s = scores.data
    sparsity = s.max(axis=-1) - s.mean(axis=-1)
    rank = np.argsort(-sparsity, axis=-1, kind="stable")
    mask = np.zeros(sparsity.shape)
    np.put_along_axis(mask, rank[..., :n_top], 1.0, axis=-1)
    mask = mask[..., None]
    mean_v = T.reduce_mean(V, axis=-2, keepdims=True)
    return T.add(T.mul(full, Tensor(mask)), T.mul(mean_v, Tensor(1.0 - mask)))


class MultiHeadAttention(Layer):
    def __init__(self, d_model, n_heads, rng, mode="full", top_u=1.0):
        super().__init__()
        if d_model % n_heads:
            raise ValueError(f"d_model {d_model} not divisible by n_heads {n_heads}")
        self.h, self.dk = n_heads, d_model // n_heads
        self.mode, self.top_u = mode, top_u
        self.q = self.add(Dense(d_model, d_model, rng))
        self.k = self.add(Dense(d_model, d_model, rng))
        self.v = self.add(Dense(d_model, d_model, rng))
        self.o = self.add(Dense(d_model, d_model, rng))

    def _split(self, x):
        b, length, _ = x.shape
        return T.transpose(T.reshape(x, (b, length, self.h, self.dk)), (0, 2, 1, 3))

    def __call__(self, xq, xkv):
        b, lq, d = xq.shape
        ctx = scaled_dot_attention(self._split(self.q(xq)), self._split(self.k(xkv)),
                                   self._split(self.v(xkv)), self.mode, self.top_u)
        ctx = T.reshape(T.transpose(ctx, (0, 2, 1, 3)), (b, lq, d))
        return self.o(ctx)


class LayerNorm(Layer):
    def __init__(self, d):
        super().__init__()
        self.gamma = self.add(ones((d,), "ln_gamma"))
        self.beta = self.add(zeros((d,), "ln_beta"))

    def __call__(self, x):
        return T.layer_norm(x, self.gamma, self.beta)


class FeedForward(Layer):
    def __init__(self, d, width, rng):
        super().__init__()
        self.a = self.add(Dense(d, width, rng))
        self.b = self.add(Dense(width, d, rng))

    def __call__(self, x):
        return self.b(T.relu(self.a(x)))


class EncoderLayer(Layer):
    """Post-norm transformer encoder block."""

    def __init__(self, d, n_heads, ff, rng, dropout=0.0, mode="full", top_u=1.0):
        super().__init__()
        self.attn = self.add(MultiHeadAttention(d, n_heads, rng, mode, top_u))
        self.ln1 = self.add(LayerNorm(d))
        self.ff = self.add(FeedForward(d, ff, rng))
        self.ln2 = self.add(LayerNorm(d))
        self.dropout = dropout

    def __call__(self, x, training=False, rng=None):
        a = T.dropout(self.attn(x, x), self.dropout, rng, training)
        x = self.ln1(T.add(x, a))
        f = T.dropout(self.ff(x), self.dropout, rng, training)
        return self.ln2(T.add(x, f))


class DecoderLayer(Layer):
    def __init__(self, d, n_heads, ff, rng, dropout=0.0):
        super().__init__()
        self.self_attn = self.add(MultiHeadAttention(d, n_heads, rng))
        self.ln1 = self.add(LayerNorm(d))
        self.cross = self.add(MultiHeadAttention(d, n_heads, rng))
        self.ln2 = self.add(LayerNorm(d))
        self.ff = self.add(FeedForward(d, ff, rng))
        self.ln3 = self.add(LayerNorm(d))
        self.dropout = dropout

    def __call__(self, x, memory, training=False, rng=None):
        x = self.ln1(T.add(x, T.dropout(self.self_attn(x, x), self.dropout, rng, training)))
        x = self.ln2(T.add(x, T.dropout(self.cross(x, memory), self.dropout, rng, training)))
        return self.ln3(T.add(x, T.dropout(self.ff(x), self.dropout, rng, training)))


def sinusoidal_positions(length, d):
    pos = np.arange(length)[:, None]
    i = np.arange(d)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


def n_patches(length, patch_len, stride):
    if patch_len > length:
        raise ShapeError(f"patch length {patch_len} exceeds window length {length}")
    return (length - patch_len) // stride + 1


class PatchEmbed(Layer):
    """Channel-independent patching: ``(B, L, C)`` -> ``(B * C, n_patches, d)``."""

    def __init__(self, length, patch_len, stride, d, rng):
        super().__init__()
        self.n = n_patches(length, patch_len, stride)
        self.index = np.arange(self.n)[:, None] * stride + np.arange(patch_len)[None, :]
        self.proj = self.add(Dense(patch_len, d, rng))
        self.pos = self.add(Tensor(rng.normal(0.0, 0.02, size=(self.n, d)), requires_grad=True, name="patch_pos"))

    def __call__(self, x):
        b, length, c = x.shape
        series = T.reshape(T.transpose(x, (0, 2, 1)), (b * c, length))
        patches = T.getitem(series, (slice(None), self.index))  # (B*C, n, patch_len)
        return T.add(self.proj(patches), self.pos)


def patch_embed(window, patch_len, stride, d_emb, rng):
    """Embed one ``(L, channels)`` window; returns ``(channels, n_patches, d_emb)``."""
    x = window if isinstance(window, Tensor) else Tensor(window)
    layer = PatchEmbed(x.shape[0], patch_len, stride, d_emb, rng)
    return layer(T.reshape(x, (1,) + x.shape)), layer
