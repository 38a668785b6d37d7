"""Central finite-difference check of analytic gradients."""

from __future__ import annotations

import numpy as np


def numerical_grads(net, inputs, targets, h: float = 1e-5) -> dict:
    grads = {}
    for name, p in net.params.items():
        g = np.zeros_like(p)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up, n = net.loss_sum(inputs, targets)
            flat[i] = old - h
            down, _ = net.loss_sum(inputs, targets)
            flat[i] = old
            gflat[i] = (up - down) / (2 * h * n)
        grads[name] = g
    return grads


def relative_errors(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> np.ndarray:
    """|a - n| / max(|a|, |n|, floor); the floor keeps near-zero entries from dominating."""
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)


def gradcheck(net, inputs, targets, h: float = 1e-5) -> dict:
    """Per-tensor maximum relative error between backprop and finite differences."""
    _, analytic = net.loss_and_grads(inputs, targets)
    numeric = numerical_grads(net, inputs, targets, h)
    return {k: float(relative_errors(analytic[k], numeric[k]).max()) for k in net.params}
