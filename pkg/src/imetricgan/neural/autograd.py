"""A small reverse-mode automatic differentiation engine on numpy arrays.

Each op builds the output ``Tensor`` and, when any input needs a gradient,
records a closure that pushes the output gradient back to its parents.
Broadcasting follows numpy; gradients are summed back to the input shape.
"""

from __future__ import annotations

import contextlib

import numpy as np

from ..errors import DivergenceError, ShapeError

_GRAD_ENABLED = True
CHECK_FINITE = True


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev, _GRAD_ENABLED = _GRAD_ENABLED, False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        if dtype is None:
            dtype = data.dtype if isinstance(data, np.ndarray) and data.dtype.kind == "f" else np.float64
        self.data = np.asarray(data, dtype=dtype)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self.name = name

    # -- bookkeeping -------------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data, dtype=self.data.dtype)

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ShapeError("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order, seen, stack = [], set(), [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.asarray(grad, dtype=self.data.dtype))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                # interior gradients are not needed once propagated
                node.grad = None

    # -- operator sugar ----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other, self.dtype)))

    def __rsub__(self, other):
        return add(as_tensor(other, self.dtype), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return mul(self, power(as_tensor(other, self.dtype), -1.0))

    def __rtruediv__(self, other):
        return mul(as_tensor(other, self.dtype), power(self, -1.0))

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 else shape)

    @property
    def T(self):
        return transpose(self)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype or np.float64), dtype=dtype)


def _make(data, parents, backward) -> Tensor:
    if CHECK_FINITE and not np.all(np.isfinite(data)):
        raise DivergenceError("non-finite value in forward pass")
    out = Tensor(data, dtype=data.dtype)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# -- elementwise -----------------------------------------------------------
def add(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, a.dtype)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), backward)


def neg(a) -> Tensor:
    def backward(g):
        a._accumulate(-g)

    return _make(-a.data, (a,), backward)


def mul(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, a.dtype)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), backward)


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    exponent = float(exponent)
    y = np.power(a.data, exponent)

    def backward(g):
        a._accumulate(g * exponent * np.power(a.data, exponent - 1.0))

    return _make(y, (a,), backward)


def exp(a) -> Tensor:
    y = np.exp(a.data)

    def backward(g):
        a._accumulate(g * y)

    return _make(y, (a,), backward)


def log(a) -> Tensor:
    def backward(g):
        a._accumulate(g / a.data)

    return _make(np.log(a.data), (a,), backward)


def tanh(a) -> Tensor:
    y = np.tanh(a.data)

    def backward(g):
        a._accumulate(g * (1.0 - y * y))

    return _make(y, (a,), backward)


def _sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ez = np.exp(x[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(a) -> Tensor:
    y = _sigmoid(a.data)

    def backward(g):
        a._accumulate(g * y * (1.0 - y))

    return _make(y, (a,), backward)


def leaky_relu(a, slope: float = 0.3) -> Tensor:
    pos = a.data > 0
    y = np.where(pos, a.data, slope * a.data)

    def backward(g):
        a._accumulate(np.where(pos, g, slope * g))

    return _make(y, (a,), backward)


def scale_activation(m) -> Tensor:
    """exp(1.5 + 4 tanh(m)): bounded multiplicative gains in [e^-2.5, e^5.5]."""
    return exp(tanh(m) * 4.0 + 1.5)


# -- reductions and shape ops ----------------------------------------------
def tsum(a, axis=None) -> Tensor:
    def backward(g):
        if axis is None:
            a._accumulate(np.broadcast_to(g, a.shape))
        else:
            a._accumulate(np.broadcast_to(np.expand_dims(g, axis), a.shape))

    return _make(np.asarray(a.data.sum(axis=axis)), (a,), backward)


def mean(a, axis=None) -> Tensor:
    n = a.data.size if axis is None else np.prod([a.shape[ax] for ax in np.atleast_1d(axis)])
    return tsum(a, axis) * (1.0 / n)


def reshape(a, shape) -> Tensor:
    def backward(g):
        a._accumulate(g.reshape(a.shape))

    return _make(a.data.reshape(shape), (a,), backward)


def transpose(a) -> Tensor:
    def backward(g):
        a._accumulate(g.T)

    return _make(a.data.T, (a,), backward)


def getitem(a, idx) -> Tensor:
    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        a._accumulate(full)

    return _make(a.data[idx], (a,), backward)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            if t.requires_grad:
                t._accumulate(piece)

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


def matmul(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, a.dtype)
    if a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch {a.shape} @ {b.shape}")

    def backward(g):
        if a.requires_grad:
            a._accumulate(np.outer(g, b.data) if b.ndim == 1 else g @ b.data.T)
        if b.requires_grad:
            b._accumulate(np.outer(a.data, g) if a.ndim == 1 else a.data.T @ g)

    return _make(a.data @ b.data, (a, b), backward)


# -- fused layers ----------------------------------------------------------
def _same_pad(size, k, stride):
    out = -(-size // stride)
    total = max((out - 1) * stride + k - size, 0)
    return out, total // 2, total - total // 2


IM2COL_MAX_ELEMENTS = 20_000_000


def _im2col(xp, kf, kt, f_out, t_out, sf, st):
    c, _, _ = xp.shape
    s0, s1, s2 = xp.strides
    view = np.lib.stride_tricks.as_strided(
        xp, (c, kf, kt, f_out, t_out), (s0, s1, s2, s1 * sf, s2 * st), writeable=False
    )
    return view.reshape(c * kf * kt, f_out * t_out)


def conv2d(x, w, b=None, stride=(1, 1)) -> Tensor:
    """'Same'-padded 2-D cross-correlation.

    x: (C_in, F, T); w: (C_out, C_in, kf, kt); b: (C_out,).  Small problems
    go through one im2col matrix product; large ones loop over kernel
    offsets to bound memory.
    """
    c_out, c_in, kf, kt = w.shape
    if x.ndim != 3 or x.shape[0] != c_in:
        raise ShapeError(f"conv2d expects ({c_in}, F, T) input, got {x.shape}")
    sf, st = stride
    _, f_in, t_in = x.shape
    f_out, f_lo, f_hi = _same_pad(f_in, kf, sf)
    t_out, t_lo, t_hi = _same_pad(t_in, kt, st)
    xp = np.pad(x.data, ((0, 0), (f_lo, f_hi), (t_lo, t_hi)))
    fspan, tspan = (f_out - 1) * sf + 1, (t_out - 1) * st + 1
    use_cols = c_in * kf * kt * f_out * t_out <= IM2COL_MAX_ELEMENTS
    w2 = w.data.reshape(c_out, -1)
    if use_cols:
        cols = _im2col(xp, kf, kt, f_out, t_out, sf, st)
        y = w2 @ cols
    else:
        cols = None
        y = np.zeros((c_out, f_out * t_out), dtype=x.data.dtype)
        for i in range(kf):
            for j in range(kt):
                patch = xp[:, i : i + fspan : sf, j : j + tspan : st].reshape(c_in, -1)
                y += w.data[:, :, i, j] @ patch
    if b is not None:
        y += b.data[:, None]
    y = y.reshape(c_out, f_out, t_out)

    def backward(g):
        g2 = g.reshape(c_out, -1)
        if b is not None and b.requires_grad:
            b._accumulate(g2.sum(axis=1))
        if w.requires_grad:
            if cols is not None:
                w._accumulate((g2 @ cols.T).reshape(w.shape))
            else:
                gw = np.zeros_like(w.data)
                for i in range(kf):
                    for j in range(kt):
                        patch = xp[:, i : i + fspan : sf, j : j + tspan : st].reshape(c_in, -1)
                        gw[:, :, i, j] = g2 @ patch.T
                w._accumulate(gw)
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            if cols is not None:
                gcols = (w2.T @ g2).reshape(c_in, kf, kt, f_out, t_out)
            for i in range(kf):
                for j in range(kt):
                    sl = (slice(None), slice(i, i + fspan, sf), slice(j, j + tspan, st))
                    if cols is not None:
                        gxp[sl] += gcols[:, i, j]
                    else:
                        gxp[sl] += (w.data[:, :, i, j].T @ g2).reshape(c_in, f_out, t_out)
            x._accumulate(gxp[:, f_lo : f_lo + f_in, t_lo : t_lo + t_in])

    parents = (x, w) if b is None else (x, w, b)
    return _make(y, parents, backward)


def lstm_recurrence(pre, w_hh) -> Tensor:
    """Run the LSTM cell over time given precomputed input projections.

    pre: (T, 4H) = x_t W_ih + b, gate order (input, forget, cell, output);
    w_hh: (H, 4H).  Zero initial state.  Returns hidden states (T, H).
    """
    n_steps, four_h = pre.shape
    hidden = four_h // 4
    if w_hh.shape != (hidden, four_h):
        raise ShapeError(f"recurrent weights {w_hh.shape} do not match {hidden} hidden units")
    dt = pre.data.dtype
    gates = np.zeros((n_steps, four_h), dtype=dt)
    cells = np.zeros((n_steps + 1, hidden), dtype=dt)
    hs = np.zeros((n_steps + 1, hidden), dtype=dt)
    W = w_hh.data
    for t in range(n_steps):
        z = pre.data[t] + hs[t] @ W
        gi = _sigmoid(z[:hidden])
        gf = _sigmoid(z[hidden : 2 * hidden])
        gg = np.tanh(z[2 * hidden : 3 * hidden])
        go = _sigmoid(z[3 * hidden :])
        gates[t] = np.concatenate([gi, gf, gg, go])
        cells[t + 1] = gf * cells[t] + gi * gg
        hs[t + 1] = go * np.tanh(cells[t + 1])

    def backward(g):
        dz = np.zeros_like(gates)
        dh_next = np.zeros(hidden, dtype=dt)
        dc_next = np.zeros(hidden, dtype=dt)
        for t in reversed(range(n_steps)):
            gi, gf, gg, go = np.split(gates[t], 4)
            tc = np.tanh(cells[t + 1])
            dh = g[t] + dh_next
            dc = dc_next + dh * go * (1.0 - tc * tc)
            dz[t] = np.concatenate([
                dc * gg * gi * (1.0 - gi),
                dc * cells[t] * gf * (1.0 - gf),
                dc * gi * (1.0 - gg * gg),
                dh * tc * go * (1.0 - go),
            ])
            dh_next = dz[t] @ W.T
            dc_next = dc * gf
        if pre.requires_grad:
            pre._accumulate(dz)
        if w_hh.requires_grad:
            w_hh._accumulate(hs[:-1].T @ dz)

    return _make(hs[1:].copy(), (pre, w_hh), backward)
