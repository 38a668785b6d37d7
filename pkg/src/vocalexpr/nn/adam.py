"""Adam with bias correction. The 0.9 momentum is beta1."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeMismatchError


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0

    @classmethod
    def zeros(cls, params: dict) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()}, 0)


def adam_step(params: dict, grads: dict, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One update; returns (new_params, new_state) and leaves the inputs untouched."""
    if params.keys() != grads.keys():
        raise ShapeMismatchError("parameter and gradient names differ")
    t = state.t + 1
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    new_params, new_m, new_v = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ShapeMismatchError(f"{k}: gradient {g.shape} vs parameter {p.shape}")
        m = beta1 * state.m.get(k, 0.0) + (1.0 - beta1) * g
        v = beta2 * state.v.get(k, 0.0) + (1.0 - beta2) * (g * g)
        new_params[k] = p - lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
        new_m[k], new_v[k] = m, v
    return new_params, AdamState(new_m, new_v, t)
