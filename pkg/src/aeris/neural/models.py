"""Architecture specs and the model zoo."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from aeris.neural import layers as L
from aeris.numcore import tensor as T
from aeris.numcore.rng import SeededRng
from aeris.numcore.tensor import Tensor

FEEDFORWARD = ("mlp", "kan", "mlp-kan", "kan-mlp")
_CELLS = ("rnn", "lstm", "gru")
RECURRENT = (_CELLS + tuple(f"stacked-{c}" for c in _CELLS) + tuple(f"bi-{c}" for c in _CELLS)
             + tuple(f"stacked-bi-{c}" for c in _CELLS))
SEQ2SEQ = ("seq2seq-lstm", "seq2seq-gru")
CONVOLUTIONAL = ("cnn", "cnn-lstm", "lstm-cnn", "cnn-gru", "cnn-lstm-seq2seq")
ATTENTION = ("transformer", "patchtst", "sparse-transformer")
ARCHITECTURES = FEEDFORWARD + RECURRENT + SEQ2SEQ + CONVOLUTIONAL + ATTENTION

FF_HORIZONS = (1, 2, 4, 8)
SEQ_HORIZONS = tuple(range(1, 9))


@dataclass
class AttentionConfig:
    d_model: int = 64
    n_heads: int = 4
    ff_width: int = 128
    n_layers: int = 3
    patch_len: int = 8
    stride: int = 8
    top_u: float = 0.5

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ValueError(f"d_model {self.d_model} must be divisible by n_heads {self.n_heads}")
        if not 0 < self.top_u <= 1:
            raise ValueError("top_u must be in (0, 1]")


@dataclass
class ModelSpec:
    """Everything needed to rebuild an architecture.

    ``hidden`` applies to the feed-forward family (default ``(2n, n // 2)``
    with ``n`` the input feature count); ``units`` and ``layers`` to the
    recurrent ones. ``horizons`` lists the hours ahead, one output per entry.
    """

    arch: str
    hidden: tuple | None = None
    units: int = 64
    layers: int | None = None
    dropout: float = 0.1
    lookback: int = 24
    horizons: tuple | None = None
    activation: str = "relu"
    filters: int = 64
    kernel: int = 3
    attention: AttentionConfig = field(default_factory=AttentionConfig)
    share_weights: bool = False
    instance_norm: bool = True
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 1e-3
    patience: int = 5
    seed: int = 0
    name: str | None = None

    def __post_init__(self):
        if self.arch not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.arch!r}; valid tags: {', '.join(ARCHITECTURES)}")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must be in [0, 1)")
        if isinstance(self.attention, dict):
            self.attention = AttentionConfig(**self.attention)
        if self.horizons is None:
            self.horizons = FF_HORIZONS if self.arch in FEEDFORWARD else SEQ_HORIZONS
        self.horizons = tuple(int(h) for h in self.horizons)
        if not self.horizons or min(self.horizons) < 1 or len(set(self.horizons)) != len(self.horizons):
            raise ValueError("horizons must be distinct positive integers")
        if self.hidden is not None:
            self.hidden = tuple(int(h) for h in self.hidden)
        if self.layers is None:
            self.layers = 3 if self.arch.startswith("stacked-") else 1
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError("epochs, batch_size and learning_rate must be positive")

    @property
    def label(self):
        return self.name or self.arch

    @property
    def input_kind(self):
        return "tabular" if self.arch in FEEDFORWARD else "sequence"

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden) if self.hidden is not None else None
        d["horizons"] = list(self.horizons)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


_ACTIVATIONS = {"relu": T.relu, "tanh": T.tanh, "identity": T.identity, "silu": T.silu}


class NeuralModel(L.Layer):
    """Base class: ``forward(X)`` maps a batch to ``(B, len(horizons))``."""

    def __init__(self, spec, n_features, target_index):
        super().__init__()
        self.spec = spec
        self.n_features = n_features
        self.target_index = target_index

    @property
    def n_outputs(self):
        return len(self.spec.horizons)

    def parameter_count(self):
        return int(sum(p.size for p in self.params))

    def _drop(self, x, training, rng):
        return T.dropout(x, self.spec.dropout, rng, training)

    def forward(self, X, training=False, rng=None):
        raise NotImplementedError

    def __call__(self, X, training=False, rng=None):
        x = X if isinstance(X, Tensor) else Tensor(np.asarray(X, dtype=np.float64))
        want = 2 if self.spec.input_kind == "tabular" else 3
        if x.ndim != want or x.shape[-1] != self.n_features:
            raise L.ShapeError(f"{self.spec.arch}: expected input (..., {self.n_features}) with {want} axes, "
                               f"got {x.shape}")
        return self.forward(x, training, rng)


class FeedForwardNet(NeuralModel):
    def __init__(self, spec, n_features, target_index, rng):
        super().__init__(spec, n_features, target_index)
        n = n_features
        hidden = spec.hidden if spec.hidden is not None else (2 * n, max(1, n // 2))
        kan_hidden = spec.arch in ("kan", "kan-mlp")
        kan_out = spec.arch in ("kan", "mlp-kan")
        sizes = (n,) + tuple(hidden)
        self.blocks = []
        for a, b in zip(sizes[:-1], sizes[1:]):
            self.blocks.append(self.add(L.KANLayer(a, b, rng) if kan_hidden else L.Dense(a, b, rng)))
        self.kinds = ["kan" if kan_hidden else "dense"] * len(hidden)
        self.blocks.append(self.add(L.KANLayer(sizes[-1], self.n_outputs, rng) if kan_out
                                    else L.Dense(sizes[-1], self.n_outputs, rng)))
        self.kinds.append("kan" if kan_out else "dense")
        self.act = _ACTIVATIONS[spec.activation]

    def forward(self, x, training=False, rng=None):
        for i, (block, kind) in enumerate(zip(self.blocks, self.kinds)):
            if kind == "kan" and i > 0:
                x = T.tanh(x)  # keep hidden activations inside the spline grid
            x = block(x)
            if i < len(self.blocks) - 1:
                if kind == "dense":
                    x = self.act(x)
                x = self._drop(x, training, rng)
        return x


def _cell_kind(arch):
    for c in ("lstm", "gru", "rnn"):
        if c in arch:
            return c
    raise ValueError(arch)


class RecurrentNet(NeuralModel):
    """Single, stacked and bidirectional RNN/LSTM/GRU with a dense head on the
    last hidden state."""

    def __init__(self, spec, n_features, target_index, rng):
        super().__init__(spec, n_features, target_index)
        kind = _cell_kind(spec.arch)
        bi = "bi-" in spec.arch
        self.stack_ = []
        width = n_features
        for _ in range(spec.layers):
            layer = self.add(L.RecurrentLayer(kind, width, spec.units, rng, bidirectional=bi,
                                              share_weights=spec.share_weights))
            self.stack_.append(layer)
            width = layer.out_size
        self.state_width = width
        self.head = self.add(L.Dense(width, self.n_outputs, rng))

    def encode(self, x, training=False, rng=None):
        """Final (decoder-facing) state of the top layer, ``(B, state_width)``."""
        final = None
        for i, layer in enumerate(self.stack_):
            seq, state = layer(x)
            final = state[0]
            if i < len(self.stack_) - 1:
                x = self._drop(seq, training, rng)
        # bidirectional: forward state after the last step, backward after step 0
        return final

    def forward(self, x, training=False, rng=None):
        return self.head(self._drop(self.encode(x, training, rng), training, rng))


class _Decoder(L.Layer):
    """Autoregressive decoder fed with its own previous prediction."""

    def __init__(self, kind, hidden, rng):
        super().__init__()
        self.cell = self.add(L.RecurrentCell(kind, 1, hidden, rng))
        self.out = self.add(L.Dense(hidden, 1, rng))

    def __call__(self, state, y0, steps):
        y, preds = y0, []
        for _ in range(steps):
            xproj = T.add(T.matmul(y, self.cell.Wx), self.cell.b)
            state = self.cell.step(xproj, state)
            y = self.out(state[0])
            preds.append(y)
        return T.concat(preds, axis=-1)


def _select_heads(seq, horizons):
    """Pick the columns of a ``(B, max_h)`` step sequence that match ``horizons``."""
    idx = [h - 1 for h in horizons]
    if idx == list(range(seq.shape[-1])):
        return seq
    return T.getitem(seq, (slice(None), np.array(idx)))


class Seq2SeqNet(NeuralModel):
    def __init__(self, spec, n_features, target_index, rng, conv=False):
        super().__init__(spec, n_features, target_index)
        kind = _cell_kind(spec.arch)
        width = n_features
        self.conv = None
        if conv:
            self.conv = self.add(L.Conv1D(n_features, spec.filters, spec.kernel, rng))
            width = spec.filters
        self.encoder = self.add(L.RecurrentCell(kind, width, spec.units, rng))
        self.decoder = self.add(_Decoder(kind, spec.units, rng))

    @property
    def decoder_steps(self):
        return max(self.spec.horizons)

    def forward(self, x, training=False, rng=None):
        y0 = T.getitem(x, (slice(None), -1, slice(self.target_index, self.target_index + 1)))
        h = x
        if self.conv is not None:
            h = self._drop(T.maxpool1d(T.relu(self.conv(h)), 2), training, rng)
        _, state = self.encoder.run(h)
        state = (self._drop(state[0], training, rng),) + tuple(state[1:])
        return _select_heads(self.decoder(state, y0, self.decoder_steps), self.spec.horizons)


class ConvNet(NeuralModel):
    """``cnn``, ``cnn-lstm``, ``cnn-gru`` and ``lstm-cnn``."""

    def __init__(self, spec, n_features, target_index, rng):
        super().__init__(spec, n_features, target_index)
        arch, lb = spec.arch, spec.lookback
        if spec.kernel > lb:
            raise L.ShapeError(f"kernel width {spec.kernel} exceeds lookback {lb}")
        self.rnn_first = arch == "lstm-cnn"
        if self.rnn_first:
            self.rnn = self.add(L.RecurrentCell("lstm", n_features, spec.units, rng))
            self.conv = self.add(L.Conv1D(spec.units, spec.filters, spec.kernel, rng))
            self.flat = ((lb - spec.kernel + 1) // 2) * spec.filters
            self.dense = self.add(L.Dense(self.flat, spec.units, rng))
            head_in = spec.units
        else:
            self.conv = self.add(L.Conv1D(n_features, spec.filters, spec.kernel, rng))
            if arch == "cnn":
                self.rnn = None
                self.flat = ((lb - spec.kernel + 1) // 2) * spec.filters
                self.dense = self.add(L.Dense(self.flat, spec.units, rng))
            else:
                self.rnn = self.add(L.RecurrentCell(_cell_kind(arch), spec.filters, spec.units, rng))
            head_in = spec.units
        self.head = self.add(L.Dense(head_in, self.n_outputs, rng))

    def _conv_block(self, x, training, rng):
        return self._drop(T.maxpool1d(T.relu(self.conv(x)), 2), training, rng)

    def forward(self, x, training=False, rng=None):
        if self.rnn_first:
            seq, _ = self.rnn.run(x)
            h = self._conv_block(seq, training, rng)
            h = T.relu(self.dense(T.reshape(h, (h.shape[0], -1))))
        elif self.rnn is None:
            h = self._conv_block(x, training, rng)
            h = T.relu(self.dense(T.reshape(h, (h.shape[0], -1))))
        else:
            _, state = self.rnn.run(self._conv_block(x, training, rng))
            h = state[0]
        return self.head(self._drop(h, training, rng))


class TransformerNet(NeuralModel):
    """Post-norm encoder-decoder with sinusoidal positions and one learned
    query per forecast horizon."""

    def __init__(self, spec, n_features, target_index, rng):
        super().__init__(spec, n_features, target_index)
        a = spec.attention
        mode = "top-u" if spec.arch == "sparse-transformer" else "full"
        self.embed = self.add(L.Dense(n_features, a.d_model, rng))
        self.pe = L.sinusoidal_positions(spec.lookback, a.d_model)
        self.enc = [self.add(L.EncoderLayer(a.d_model, a.n_heads, a.ff_width, rng, spec.dropout, mode, a.top_u))
                    for _ in range(a.n_layers)]
        self.queries = self.add(Tensor(rng.normal(0.0, 0.02, size=(self.n_outputs, a.d_model)),
                                       requires_grad=True, name="horizon_queries"))
        self.dec = [self.add(L.DecoderLayer(a.d_model, a.n_heads, a.ff_width, rng, spec.dropout))
                    for _ in range(a.n_layers)]
        self.out = self.add(L.Dense(a.d_model, 1, rng))

    def forward(self, x, training=False, rng=None):
        b, length, _ = x.shape
        h = T.add(self.embed(x), Tensor(self.pe[:length]))
        h = self._drop(h, training, rng)
        for layer in self.enc:
            h = layer(h, training, rng)
        q = T.add(Tensor(np.zeros((b,) + self.queries.shape)), self.queries)
        for layer in self.dec:
            q = layer(q, h, training, rng)
        return T.reshape(self.out(q), (b, self.n_outputs))


class PatchTSTNet(NeuralModel):
    """Channel-independent patch encoder; the flattened tokens of every
    channel feed one linear head."""

    def __init__(self, spec, n_features, target_index, rng):
        super().__init__(spec, n_features, target_index)
        a = spec.attention
        self.embed = self.add(L.PatchEmbed(spec.lookback, a.patch_len, a.stride, a.d_model, rng))
        self.enc = [self.add(L.EncoderLayer(a.d_model, a.n_heads, a.ff_width, rng, spec.dropout))
                    for _ in range(a.n_layers)]
        self.flat = n_features * self.embed.n * a.d_model
        self.head = self.add(L.Dense(self.flat, self.n_outputs, rng))

    def forward(self, x, training=False, rng=None):
        b = x.shape[0]
        if self.spec.instance_norm:
            # reversible instance normalisation: per-window, per-channel
            mu = T.reduce_mean(x, axis=1, keepdims=True)
            xc = T.sub(x, mu)
            sd = T.sqrt(T.add(T.reduce_mean(T.square(xc), axis=1, keepdims=True), 1e-5))
            x = T.div(xc, sd)
        h = self._drop(self.embed(x), training, rng)
        for layer in self.enc:
            h = layer(h, training, rng)
        out = self.head(self._drop(T.reshape(h, (b, self.flat)), training, rng))
        if self.spec.instance_norm:
            k = self.target_index
            out = T.add(T.mul(out, T.reshape(sd[:, :, k], (b, 1))), T.reshape(mu[:, :, k], (b, 1)))
        return out


def build_model(spec, n_features, target_index=0):
    """Instantiate the untrained network for ``spec`` with seeded weights."""
    if isinstance(spec, str):
        spec = ModelSpec(spec)
    rng = SeededRng(spec.seed).spawn(0)
    arch = spec.arch
    if arch in FEEDFORWARD:
        return FeedForwardNet(spec, n_features, target_index, rng)
    if arch in RECURRENT:
        return RecurrentNet(spec, n_features, target_index, rng)
    if arch in SEQ2SEQ:
        return Seq2SeqNet(spec, n_features, target_index, rng)
    if arch == "cnn-lstm-seq2seq":
        return Seq2SeqNet(spec, n_features, target_index, rng, conv=True)
    if arch in CONVOLUTIONAL:
        return ConvNet(spec, n_features, target_index, rng)
    if arch == "patchtst":
        return PatchTSTNet(spec, n_features, target_index, rng)
    return TransformerNet(spec, n_features, target_index, rng)


def mlp_parameter_count(n_in, hidden, n_out):
    sizes = [n_in] + list(hidden) + [n_out]
    return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))
