"""Adam and early stopping."""
import numpy as np


class Adam:
    """Bias-corrected Adam over a fixed list of parameter tensors."""

    def __init__(self, params, learning_rate=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.step_count = 0

    def step(self, grads):
        if len(grads) != len(self.params):
            raise ValueError(f"expected {len(self.params)} gradients, got {len(grads)}")
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.learning_rate * (m / c1) / (np.sqrt(v / c2) + self.eps)


class EarlyStopping:
    """Track a validation loss stream and remember the best parameters.

    An epoch improves only if ``loss < best - min_delta``. ``update`` returns
    True once ``patience`` consecutive epochs fail to improve.
    """

    def __init__(self, patience=5, min_delta=1e-5):
        if patience < 1:
            raise ValueError("patience must be >= 1")
        self.patience = patience
        self.min_delta = min_delta
        self.best = np.inf
        self.best_epoch = 0
        self.epoch = 0
        self.wait = 0
        self.snapshot = None

    def update(self, loss, params=()):
        self.epoch += 1
        if loss < self.best - self.min_delta:
            self.best = loss
            self.best_epoch = self.epoch
            self.wait = 0
            self.snapshot = [p.data.copy() for p in params]
            return False
        self.wait += 1
        return self.wait >= self.patience

    def restore(self, params):
        if self.snapshot is None:
            return
        for p, s in zip(params, self.snapshot):
            p.data[...] = s
