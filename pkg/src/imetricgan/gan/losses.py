"""Discriminator and generator objectives (mean squared error on normalised scores)."""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from ..neural import autograd as ag


def _sq_err(pred, target):
    pred = ag.as_tensor(pred)
    diff = pred - ag.Tensor(np.asarray(target, dtype=pred.dtype))
    return ag.mean(diff * diff)


def _batch_mean(terms):
    if not terms:
        raise ValueError("empty batch")
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total * (1.0 / len(terms))


def d_loss_zero_knowledge(d_gen, q_gen):
    """Mean over the batch and metrics of (D(G(s,w),s,w) - Q(G(s,w),s,w))^2."""
    return _batch_mean([_sq_err(d, q) for d, q in zip(d_gen, q_gen, strict=True)])


def d_loss_with_examples(d_gen, q_gen, d_ex, q_ex):
    """Zero-knowledge term plus the same error on the rule-enhanced examples."""
    if d_ex is None or q_ex is None or any(v is None for v in (*d_ex, *q_ex)):
        raise ConfigError("variant requires enhanced examples")
    terms = [
        _sq_err(dg, qg) + _sq_err(de, qe)
        for dg, qg, de, qe in zip(d_gen, q_gen, d_ex, q_ex, strict=True)
    ]
    return _batch_mean(terms)


def g_loss(d_gen, t=1.0):
    """Mean of (D(G(s,w),s,w) - t)^2 with the target at the metric maximum."""
    return _batch_mean([_sq_err(d, np.full(ag.as_tensor(d).shape, t)) for d in d_gen])
