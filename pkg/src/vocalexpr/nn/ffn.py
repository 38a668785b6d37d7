"""Feed-forward network: tanh hidden layers, softmax or linear output."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import DimMismatchError
from . import losses
from .network import Network


@dataclass(frozen=True)
class FFNConfig:
    input_dim: int
    hidden_dims: tuple
    output_dim: int
    output_kind: str = "softmax"

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if min((self.input_dim, self.output_dim, *self.hidden_dims)) < 1:
            raise ValueError(f"all FFN dimensions must be >= 1: {self}")
        if self.output_kind not in ("softmax", "linear"):
            raise ValueError(f"unknown output kind {self.output_kind!r}")


class FFNet(Network):
    net_type = "ffn"

    def __init__(self, config: FFNConfig, params: dict, buffers: dict | None = None):
        self.config = config
        super().__init__(params, buffers)

    @property
    def loss_kind(self) -> str:
        return losses.CROSS_ENTROPY if self.config.output_kind == "softmax" else losses.MSE

    @classmethod
    def param_shapes(cls, c: FFNConfig) -> dict:
        shapes = {}
        prev = c.input_dim
        for k, h in enumerate(c.hidden_dims):
            shapes[f"hidden{k}.W"] = (prev, h)
            shapes[f"hidden{k}.b"] = (h,)
            prev = h
        shapes["out.W"] = (prev, c.output_dim)
        shapes["out.b"] = (c.output_dim,)
        return shapes

    @classmethod
    def initialize(cls, config: FFNConfig, seed: int, scale: float = 0.05) -> "FFNet":
        rng = np.random.default_rng(seed)
        params = {
            name: rng.uniform(-scale, scale, size=shape) if len(shape) == 2 else np.zeros(shape)
            for name, shape in cls.param_shapes(config).items()
        }
        return cls(config, params)

    def arch(self) -> dict:
        d = asdict(self.config)
        d["hidden_dims"] = list(self.config.hidden_dims)
        return {"net": self.net_type, **d}

    def _forward(self, X):
        X = self.normalize(np.atleast_2d(np.asarray(X, dtype=np.float64)))
        if X.shape[1] != self.config.input_dim:
            raise DimMismatchError(f"expected {self.config.input_dim} inputs, got {X.shape[1]}")
        acts = [X]
        a = X
        for k in range(len(self.config.hidden_dims)):
            a = np.tanh(a @ self.params[f"hidden{k}.W"] + self.params[f"hidden{k}.b"])
            acts.append(a)
        return acts, a @ self.params["out.W"] + self.params["out.b"]

    def predict(self, X) -> np.ndarray:
        _, out = self._forward(X)
        return losses.softmax(out) if self.config.output_kind == "softmax" else out

    def hidden(self, X) -> np.ndarray:
        """Last hidden-layer activations."""
        acts, _ = self._forward(X)
        return acts[-1]

    def _loss(self, out, targets, need_grad):
        if self.config.output_kind == "softmax":
            classes = np.asarray(targets).astype(int)
            count = len(classes)
            total = losses.cross_entropy_sum(out, classes)
            dout = losses.cross_entropy_grad(out, classes, count) if need_grad else None
        else:
            Y = np.asarray(targets, dtype=np.float64).reshape(out.shape)
            count = out.size
            total = losses.mse_sum(out, Y)
            dout = losses.mse_grad(out, Y, count) if need_grad else None
        return total, count, dout

    def loss_sum(self, X, targets) -> tuple[float, int]:
        _, out = self._forward(X)
        total, count, _ = self._loss(out, targets, False)
        return total, count

    def loss_and_grads(self, X, targets) -> tuple[float, dict]:
        acts, out = self._forward(X)
        total, count, d = self._loss(out, targets, True)
        grads = {"out.W": acts[-1].T @ d, "out.b": d.sum(axis=0)}
        d = d @ self.params["out.W"].T
        for k in range(len(self.config.hidden_dims) - 1, -1, -1):
            a = acts[k + 1]
            d = d * (1.0 - a * a)
            grads[f"hidden{k}.W"] = acts[k].T @ d
            grads[f"hidden{k}.b"] = d.sum(axis=0)
            d = d @ self.params[f"hidden{k}.W"].T
        return total / count, {k: grads[k] for k in self.params}
