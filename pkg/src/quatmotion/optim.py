"""Adam optimizer with global-norm gradient clipping.

Operates on dicts of named numpy parameter arrays so that model parameters,
IK variables, and training state all share one code path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import NumericalError


def global_norm(grads: dict) -> float:
    # sorted so the accumulation order, and hence the exact float result,
    # does not depend on dict insertion order (fresh vs resumed nets)
    total = 0.0
    for name in sorted(grads):
        g = grads[name]
        total += float(np.sum(g * g))
    return float(np.sqrt(total))


def clip_global_norm(grads: dict, max_norm: float) -> dict:
    """Scale all gradients so their joint Euclidean norm is <= max_norm."""
    norm = global_norm(grads)
    if norm <= max_norm or norm == 0.0:
        return grads
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState, lr: float,
              clip_norm: float | None = 0.1) -> None:
    """One in-place Adam update after global-norm clipping.

    Raises :class:`NumericalError` on non-finite gradients instead of
    corrupting the parameters.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for parameter {name!r}")
    if clip_norm is not None:
        grads = clip_global_norm(grads, clip_norm)
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bias1 = 1.0 - b1 ** state.step
    bias2 = 1.0 - b2 ** state.step
    for name, g in grads.items():
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        v = state.v[name]
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        state.m[name] = m
        state.v[name] = v
        params[name] -= lr * (m / bias1) / (np.sqrt(v / bias2) + state.eps)
