"""Common surface shared by the LSTM and feed-forward networks."""

from __future__ import annotations

import numpy as np


class Network:
    """Trainable parameters plus read-only buffers.

    ``params`` is what the optimiser updates. ``buffers`` holds fixed tensors,
    currently the optional input normalisation (``norm.mean``, ``norm.std``)
    applied to every input frame before the first layer.
    """

    net_type = "base"
    # Arithmetic precision of forward/backward passes. Parameters and
    # optimiser state stay float64; float32 roughly halves LSTM training time.
    compute_dtype = np.float64

    def __init__(self, params: dict, buffers: dict | None = None):
        shapes = self.param_shapes(self.config)
        if list(params) != list(shapes):
            missing = set(shapes) ^ set(params)
            raise ValueError(f"parameter names do not match architecture: {sorted(missing)}")
        for name, shape in shapes.items():
            if params[name].shape != tuple(shape):
                raise ValueError(f"{name}: shape {params[name].shape} != {tuple(shape)}")
        self.params = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}
        self.buffers = {k: np.asarray(v, dtype=np.float64) for k, v in (buffers or {}).items()}

    @classmethod
    def param_shapes(cls, config) -> dict:
        raise NotImplementedError

    def set_normalization(self, mean: np.ndarray, std: np.ndarray) -> None:
        self.buffers["norm.mean"] = np.asarray(mean, dtype=np.float64)
        self.buffers["norm.std"] = np.asarray(std, dtype=np.float64)

    def normalize(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if "norm.mean" in self.buffers:
            return (x - self.buffers["norm.mean"]) / self.buffers["norm.std"]
        return x

    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def copy_params(self) -> dict:
        return {k: v.copy() for k, v in self.params.items()}


def fit_normalization(frames: list[np.ndarray], floor: float = 1e-8) -> tuple[np.ndarray, np.ndarray]:
    """Per-dimension mean and std pooled over every frame of every sequence."""
    stacked = np.concatenate([np.atleast_2d(f) for f in frames], axis=0)
    mean = stacked.mean(axis=0)
    std = stacked.std(axis=0)
    return mean, np.where(std > floor, std, 1.0)
