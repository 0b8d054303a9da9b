"""Central finite-difference check of autodiff gradients."""

from __future__ import annotations

import numpy as np


def grad_check(function, params, eps=1e-4, max_entries=None, rng=None):
    """Compare autodiff gradients of scalar ``function()`` with central differences.

    ``params`` is a dict name -> Tensor (float64).  Returns
    ``(max_relative_error, worst_parameter_name)``.  With ``max_entries``
    only a random subset of each parameter's entries is perturbed.
    """
    for p in params.values():
        p.grad = None
    loss = function()
    loss.backward()
    analytic = {k: (np.zeros_like(p.data) if p.grad is None else p.grad.copy()) for k, p in params.items()}

    worst, worst_name = 0.0, None
    rng = rng or np.random.default_rng(0)
    for name, p in params.items():
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = rng.choice(flat.size, size=max_entries, replace=False)
        numeric = np.empty(len(idx))
        for n, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + eps
            up = float(function().data)
            flat[i] = orig - eps
            down = float(function().data)
            flat[i] = orig
            numeric[n] = (up - down) / (2 * eps)
        ana = analytic[name].reshape(-1)[idx]
        scale = max(np.max(np.abs(numeric)), np.max(np.abs(ana)), 1e-8)
        err = float(np.max(np.abs(numeric - ana)) / scale)
        if err > worst:
            worst, worst_name = err, name
    return worst, worst_name
