"""Adam over a named, ordered parameter store."""

from __future__ import annotations

import numpy as np

from ..errors import DivergenceError, ShapeError


class ParamStore:
    """Named parameters plus their Adam moments, in a stable order."""

    def __init__(self, named_params):
        self.params = dict(named_params)
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.step = 0

    def names(self):
        return list(self.params)

    def grads(self):
        return {k: p.grad for k, p in self.params.items()}

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def state(self) -> dict:
        return {"step": self.step, "m": self.m, "v": self.v}

    def load_state(self, step, m, v):
        self.step = int(step)
        for k in self.params:
            self.m[k][...] = m[k]
            self.v[k][...] = v[k]


def adam_step(store: ParamStore, grads=None, lr=2e-4, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update.  Missing gradients count as zero."""
    grads = store.grads() if grads is None else grads
    for name, g in grads.items():
        if g is not None and not np.all(np.isfinite(g)):
            raise DivergenceError(f"diverged: non-finite gradient for {name}")
    store.step += 1
    t = store.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, p in store.params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        elif g.shape != p.data.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, expected {p.data.shape}")
        m, v = store.m[name], store.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        update = lr * (m / c1) / (np.sqrt(v / c2) + eps)
        p.data -= update.astype(p.data.dtype)
        if not np.all(np.isfinite(p.data)):
            raise DivergenceError(f"diverged: non-finite parameter {name}")
