"""Mini-batch training, prediction and binary checkpoints."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from aeris.data import MinMaxScaler
from aeris.neural.models import ModelSpec, build_model
from aeris.numcore import tensor as T
from aeris.numcore.optim import Adam, EarlyStopping
from aeris.numcore.rng import SeededRng
from aeris.numcore.tensor import GradTape, Tensor

MAGIC = b"AERIS-NN 1\n"


class TrainingError(RuntimeError):
    pass


class NotFittedError(RuntimeError):
    pass


@dataclass
class TrainedModel:
    model: object
    scaler: MinMaxScaler | None
    target: str
    curve: list = field(default_factory=list)
    best_epoch: int = 0

    @property
    def spec(self):
        return self.model.spec

    @property
    def horizons(self):
        return list(self.model.spec.horizons)


def _batched_forward(model, X, batch=256, training=False, rng=None):
    outs = [model(X[i:i + batch], training, rng).data for i in range(0, X.shape[0], batch)]
    return np.concatenate(outs, axis=0) if outs else np.empty((0, model.n_outputs))


def evaluation_loss(model, X, y, training=False, rng=None):
    pred = _batched_forward(model, X, training=training, rng=rng)
    return float(np.mean((pred - y) ** 2))


def train_model(model, windows, epochs=None, batch_size=None, seed=None, val_fraction=0.1,
                learning_rate=None, patience=None, log=None, min_delta=1e-5):
    """Fit ``model`` on a scaled :class:`SupervisedWindowSet`.

    The last ``val_fraction`` of windows (in time order) drives early
    stopping; the best validation epoch's parameters are restored. An epoch
    counts as best only if it beats the previous best by more than
    ``min_delta``. Arguments left as ``None`` come from the model's spec.
    """
    spec = model.spec
    epochs = spec.epochs if epochs is None else epochs
    batch_size = spec.batch_size if batch_size is None else batch_size
    seed = spec.seed if seed is None else seed
    lr = spec.learning_rate if learning_rate is None else learning_rate
    patience = spec.patience if patience is None else patience
    if list(windows.horizons) != list(spec.horizons):
        raise ValueError(f"window horizons {windows.horizons} do not match model horizons {list(spec.horizons)}")
    X, y = windows.X, windows.y
    n = X.shape[0]
    n_val = int(round(n * val_fraction)) if val_fraction > 0 else 0
    if n - n_val < 1:
        raise ValueError("not enough windows to train")
    Xt, yt = X[: n - n_val], y[: n - n_val]
    Xv, yv = (X[n - n_val:], y[n - n_val:]) if n_val else (Xt, yt)

    master = SeededRng(seed)
    shuffle_rng, drop_rng = master.spawn(1), master.spawn(2)
    params = model.params
    opt = Adam(params, learning_rate=lr)
    stopper = EarlyStopping(patience=patience, min_delta=min_delta)
    curve = []
    for epoch in range(epochs):
        order = shuffle_rng.permutation(Xt.shape[0])
        total = 0.0
        for b, start in enumerate(range(0, order.size, batch_size)):
            idx = order[start:start + batch_size]
            with T.finite_checks(False), np.errstate(all="ignore"):
                with GradTape() as tape:
                    loss = T.mse(model(Xt[idx], True, drop_rng), Tensor(yt[idx]))
                grads = tape.gradient(loss, params)
            if not np.isfinite(loss.data) or not all(np.isfinite(g).all() for g in grads):
                what = "loss" if not np.isfinite(loss.data) else "gradient"
                raise TrainingError(f"{spec.label}: non-finite {what} at epoch {epoch + 1}, batch {b} "
                                    f"(learning rate {lr:g})")
            opt.step(grads)
            total += loss.item() * idx.size
        train_loss = total / order.size
        val_loss = evaluation_loss(model, Xv, yv)
        curve.append({"epoch": epoch + 1, "train_loss": train_loss, "val_loss": val_loss})
        if log:
            log(f"{spec.label} epoch {epoch + 1}: train {train_loss:.6f} val {val_loss:.6f}")
        if stopper.update(val_loss, params):
            break
    stopper.restore(params)
    return TrainedModel(model, windows.scaler, windows.target, curve, stopper.best_epoch)


def predict(trained, X):
    """Per-horizon forecasts in original units, shape ``(S, n_horizons)``."""
    if not isinstance(trained, TrainedModel):
        raise NotFittedError("predict needs a TrainedModel (train_model or load_checkpoint)")
    out = _batched_forward(trained.model, np.asarray(X, dtype=np.float64))
    if trained.scaler is not None:
        out = trained.scaler.inverse_column(trained.target, out)
    return out


def save_checkpoint(trained, path):
    """Magic line, one JSON header line, then the raw little-endian float64
    parameter buffers in model order."""
    model = trained.model
    header = {
        "spec": model.spec.to_dict(),
        "n_features": model.n_features,
        "target_index": model.target_index,
        "target": trained.target,
        "scaler": trained.scaler.to_dict() if trained.scaler is not None else None,
        "shapes": [list(p.shape) for p in model.params],
        "best_epoch": trained.best_epoch,
        "curve": trained.curve,
    }
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for p in model.params:
            fh.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        if fh.readline() != MAGIC:
            raise ValueError(f"{path}: not an aeris neural checkpoint")
        header = json.loads(fh.readline())
        blob = fh.read()
    spec = ModelSpec.from_dict(header["spec"])
    model = build_model(spec, header["n_features"], header["target_index"])
    shapes = [tuple(s) for s in header["shapes"]]
    if shapes != [p.shape for p in model.params]:
        raise ValueError(f"{path}: parameter shapes do not match the architecture")
    buf = np.frombuffer(blob, dtype="<f8")
    if buf.size != sum(p.size for p in model.params):
        raise ValueError(f"{path}: truncated parameter data")
    offset = 0
    for p in model.params:
        p.data[...] = buf[offset:offset + p.size].reshape(p.shape)
        offset += p.size
    scaler = MinMaxScaler.from_dict(header["scaler"]) if header["scaler"] else None
    return TrainedModel(model, scaler, header["target"], header["curve"], header["best_epoch"])
