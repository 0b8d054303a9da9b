"""Layers built on the autograd engine: dense, (bi)LSTM, conv2d, spectral norm."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError, SignalError
from . import autograd as ag
from .autograd import Tensor


class Module:
    """Minimal container: ordered parameters, buffers and child modules."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._buffers: dict[str, np.ndarray] = {}
        self._children: dict[str, Module] = {}
        self.training = True

    def add_param(self, name, value, dtype) -> Tensor:
        t = Tensor(np.asarray(value, dtype=dtype), requires_grad=True, name=name)
        self._params[name] = t
        return t

    def add_child(self, name, module):
        self._children[name] = module
        return module

    def named_parameters(self, prefix=""):
        for name, p in self._params.items():
            yield prefix + name, p
        for cname, child in self._children.items():
            yield from child.named_parameters(f"{prefix}{cname}.")

    def named_buffers(self, prefix=""):
        for name, b in self._buffers.items():
            yield prefix + name, b
        for cname, child in self._children.items():
            yield from child.named_buffers(f"{prefix}{cname}.")

    def set_buffer(self, dotted, value):
        head, _, rest = dotted.partition(".")
        if rest:
            self._children[head].set_buffer(rest, value)
        else:
            self._buffers[head][...] = value

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def train(self, mode=True):
        self.training = mode
        for child in self._children.values():
            child.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def xavier_uniform(rng, fan_in, fan_out, shape):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def orthogonal(rng, rows, cols):
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    return q if rows >= cols else q.T


def power_iteration(w2d: np.ndarray, u: np.ndarray, n_iter: int = 1):
    """Update left/right singular-vector estimates of ``w2d`` in place order (u, v)."""
    v = None
    for _ in range(n_iter):
        v = w2d.T @ u
        v /= np.linalg.norm(v) + 1e-12
        u = w2d @ v
        u /= np.linalg.norm(u) + 1e-12
    return u, v


def spectral_normalize(w: np.ndarray, u: np.ndarray, n_iter: int = 1):
    """Return (w / sigma_hat, u, v) using ``n_iter`` power-iteration steps from ``u``.

    Conv kernels are flattened to (out, in * kh * kw) first.
    """
    w2d = w.reshape(w.shape[0], -1)
    if not np.any(w2d):
        raise SignalError("zero weight matrix cannot be spectrally normalized")
    u, v = power_iteration(w2d, u.copy(), n_iter)
    sigma = float(u @ w2d @ v)
    return w / sigma, u, v


def top_singular_pair(w2d: np.ndarray, u_prev: np.ndarray):
    """Exact leading singular vectors, signed to agree with the previous estimate."""
    U, _, Vt = np.linalg.svd(w2d.astype(np.float64), full_matrices=False)
    u, v = U[:, 0], Vt[0]
    if u @ u_prev < 0:
        u, v = -u, -v
    return u, v


class SpectralNorm(Module):
    """Divides a weight by its estimated largest singular value.

    The singular-vector estimates persist between calls and are refreshed on
    every forward pass while training: by ``n_iter`` power-iteration steps
    (``method="power"``) or by an exact SVD (``method="svd"``), which keeps
    sigma exact when the top singular values are nearly tied.  Gradients flow
    through both the weight and sigma = u^T W v with u, v held constant.
    """

    def __init__(self, out_dim, in_dim, rng, n_iter=1, dtype=np.float64, method="power"):
        super().__init__()
        u = rng.standard_normal(out_dim)
        v = rng.standard_normal(in_dim)
        self._buffers["u"] = (u / np.linalg.norm(u)).astype(dtype)
        self._buffers["v"] = (v / np.linalg.norm(v)).astype(dtype)
        if method not in ("power", "svd"):
            raise ValueError(f"spectral norm method must be 'power' or 'svd', got {method!r}")
        self.n_iter = n_iter
        self.method = method

    def warm_start(self, w: np.ndarray, n_iter: int = 50):
        """Converge the estimates on the initial weight so sigma_hat starts accurate."""
        u, v = power_iteration(w.reshape(w.shape[0], -1), self._buffers["u"].astype(np.float64), n_iter)
        self._buffers["u"][...] = u
        self._buffers["v"][...] = v

    def __call__(self, w: Tensor) -> Tensor:
        w2d = w.data.reshape(w.shape[0], -1)
        if self.training:
            if not np.any(w2d):
                raise SignalError("zero weight matrix cannot be spectrally normalized")
            if self.method == "svd":
                u, v = top_singular_pair(w2d, self._buffers["u"])
            else:
                u, v = power_iteration(w2d, self._buffers["u"].copy(), self.n_iter)
            self._buffers["u"][...] = u
            self._buffers["v"][...] = v
        u, v = self._buffers["u"], self._buffers["v"]
        sigma = ag.tsum(ag.matmul(ag.reshape(w, w2d.shape), Tensor(v)) * Tensor(u))
        return w * ag.power(sigma, -1.0)


class Dense(Module):
    def __init__(self, n_in, n_out, rng, spectral_norm=False, dtype=np.float64, sn_method="power"):
        super().__init__()
        self.n_in, self.n_out = n_in, n_out
        self.weight = self.add_param("weight", xavier_uniform(rng, n_in, n_out, (n_in, n_out)), dtype)
        self.bias = self.add_param("bias", np.zeros(n_out), dtype)
        self.sn = None
        if spectral_norm:
            self.sn = self.add_child("sn", SpectralNorm(n_in, n_out, rng, dtype=dtype, method=sn_method))
        if self.sn is not None:
            self.sn.warm_start(self.weight.data)

    def effective_weight(self) -> Tensor:
        # stored (in, out); normalise the (out, in) operator, same singular values
        return self.sn(self.weight) if self.sn is not None else self.weight

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.n_in:
            raise ShapeError(f"dense expects last dim {self.n_in}, got {x.shape}")
        return ag.matmul(x, self.effective_weight()) + self.bias


def dense_forward(x, w, b):
    """Affine map ``x @ w + b`` on plain arrays or tensors."""
    return ag.matmul(ag.as_tensor(x), ag.as_tensor(w)) + ag.as_tensor(b)


class LSTM(Module):
    """Single-direction LSTM; ``reverse=True`` runs from the last frame to the first."""

    def __init__(self, n_in, hidden, rng, reverse=False, dtype=np.float64):
        super().__init__()
        self.n_in, self.hidden, self.reverse = n_in, hidden, reverse
        w_ih = xavier_uniform(rng, n_in, 4 * hidden, (n_in, 4 * hidden))
        w_hh = np.concatenate([orthogonal(rng, hidden, hidden) for _ in range(4)], axis=1)
        bias = np.zeros(4 * hidden)
        bias[hidden : 2 * hidden] = 1.0
        self.w_ih = self.add_param("w_ih", w_ih, dtype)
        self.w_hh = self.add_param("w_hh", w_hh, dtype)
        self.bias = self.add_param("bias", bias, dtype)

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ShapeError(f"LSTM expects (T, {self.n_in}) input, got {x.shape}")
        if self.reverse:
            x = x[::-1]
        h = ag.lstm_recurrence(ag.matmul(x, self.w_ih) + self.bias, self.w_hh)
        return h[::-1] if self.reverse else h


class BiLSTM(Module):
    def __init__(self, n_in, hidden, rng, dtype=np.float64):
        super().__init__()
        self.fwd = self.add_child("fwd", LSTM(n_in, hidden, rng, dtype=dtype))
        self.bwd = self.add_child("bwd", LSTM(n_in, hidden, rng, reverse=True, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        return ag.concat([self.fwd(x), self.bwd(x)], axis=1)


class Conv2d(Module):
    def __init__(self, c_in, c_out, kernel, rng, stride=(1, 1), spectral_norm=False, dtype=np.float64,
                 sn_method="power"):
        super().__init__()
        kf, kt = kernel
        self.c_in, self.c_out, self.kernel, self.stride = c_in, c_out, (kf, kt), tuple(stride)
        fan_in, fan_out = c_in * kf * kt, c_out * kf * kt
        self.weight = self.add_param("weight", xavier_uniform(rng, fan_in, fan_out, (c_out, c_in, kf, kt)), dtype)
        self.bias = self.add_param("bias", np.zeros(c_out), dtype)
        self.sn = None
        if spectral_norm:
            self.sn = self.add_child("sn", SpectralNorm(c_out, fan_in, rng, dtype=dtype, method=sn_method))
        if self.sn is not None:
            self.sn.warm_start(self.weight.data)

    def effective_weight(self) -> Tensor:
        return self.sn(self.weight) if self.sn is not None else self.weight

    def forward(self, x: Tensor) -> Tensor:
        return ag.conv2d(x, self.effective_weight(), self.bias, self.stride)


def global_avg_pool(x: Tensor) -> Tensor:
    """(C, F, T) -> (C,) channel means."""
    if x.ndim != 3 or x.shape[1] == 0 or x.shape[2] == 0:
        raise ShapeError(f"global average pooling needs a non-empty (C, F, T) map, got {x.shape}")
    return ag.mean(ag.reshape(x, (x.shape[0], -1)), axis=1)
