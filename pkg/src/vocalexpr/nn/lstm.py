"""Single-layer LSTM with a tanh embedding layer and a dense output head.

Sequences in a batch are packed time-major and sorted by decreasing length,
so at step t only a prefix of rows is active. Rows that have finished keep
their final state, which makes the "final" readout a plain read of h.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import expit

from ..errors import DimMismatchError, EmptySequenceError
from . import losses
from .network import Network

READOUTS = ("final", "mean", "frames")


@dataclass(frozen=True)
class LSTMConfig:
    input_dim: int
    hidden_dim: int
    embedding_dim: int | None
    output_dim: int
    output_kind: str = "softmax"  # or "linear"
    readout: str = "final"  # "final", "mean" or "frames" (per-frame output, no embedding)

    def __post_init__(self):
        dims = [self.input_dim, self.hidden_dim, self.output_dim]
        if self.readout != "frames":
            dims.append(self.embedding_dim or 0)
        if min(dims) < 1:
            raise ValueError(f"all LSTM dimensions must be >= 1: {self}")
        if self.output_kind not in ("softmax", "linear"):
            raise ValueError(f"unknown output kind {self.output_kind!r}")
        if self.readout not in READOUTS:
            raise ValueError(f"unknown readout {self.readout!r}")


def _pack(seqs, input_dim: int, dtype=np.float64):
    if len(seqs) == 0:
        raise EmptySequenceError("empty batch")
    lengths = np.array([s.shape[0] for s in seqs])
    if lengths.min() < 1:
        raise EmptySequenceError("zero-length sequence in batch")
    for s in seqs:
        if s.ndim != 2 or s.shape[1] != input_dim:
            raise DimMismatchError(f"expected (T, {input_dim}) input, got {s.shape}")
    order = np.argsort(-lengths, kind="stable")
    lengths = lengths[order]
    X = np.zeros((lengths[0], len(seqs), input_dim), dtype=dtype)
    for j, i in enumerate(order):
        X[: lengths[j], j] = seqs[i]
    # active[t] = number of rows still running at step t
    active = (lengths[None, :] > np.arange(lengths[0])[:, None]).sum(axis=1)
    return X, lengths, order, active


class LSTMNet(Network):
    net_type = "lstm"

    def __init__(self, config: LSTMConfig, params: dict, buffers: dict | None = None):
        self.config = config
        super().__init__(params, buffers)

    @property
    def loss_kind(self) -> str:
        return losses.CROSS_ENTROPY if self.config.output_kind == "softmax" else losses.MSE

    @classmethod
    def param_shapes(cls, c: LSTMConfig) -> dict:
        H = c.hidden_dim
        shapes = {"lstm.Wx": (c.input_dim, 4 * H), "lstm.Wh": (H, 4 * H), "lstm.b": (4 * H,)}
        if c.readout == "frames":
            shapes.update({"out.W": (H, c.output_dim), "out.b": (c.output_dim,)})
        else:
            E = c.embedding_dim
            shapes.update({"emb.W": (H, E), "emb.b": (E,), "out.W": (E, c.output_dim), "out.b": (c.output_dim,)})
        return shapes

    @classmethod
    def initialize(cls, config: LSTMConfig, seed: int, scale: float = 0.05) -> "LSTMNet":
        """Uniform(-scale, scale) weights, zero biases except forget gate = +1."""
        rng = np.random.default_rng(seed)
        params = {}
        for name, shape in cls.param_shapes(config).items():
            params[name] = rng.uniform(-scale, scale, size=shape) if len(shape) == 2 else np.zeros(shape)
        H = config.hidden_dim
        params["lstm.b"][H : 2 * H] = 1.0
        return cls(config, params)

    def arch(self) -> dict:
        return {"net": self.net_type, **asdict(self.config)}

    # -- forward ------------------------------------------------------------

    def _forward(self, seqs):
        c = self.config
        H = c.hidden_dim
        dt = self.compute_dtype
        p = {k: v.astype(dt, copy=False) for k, v in self.params.items()}
        X, lengths, order, active = _pack([self.normalize(s) for s in seqs], c.input_dim, dt)
        T, B, D = X.shape
        gates = (X.reshape(-1, D) @ p["lstm.Wx"] + p["lstm.b"]).reshape(T, B, 4 * H)
        h_all = np.zeros((T, B, H), dtype=dt)
        c_all = np.zeros((T, B, H), dtype=dt)
        tc_all = np.zeros((T, B, H), dtype=dt)
        h = np.zeros((B, H), dtype=dt)
        cell = np.zeros((B, H), dtype=dt)
        Wh = p["lstm.Wh"]
        for t in range(T):
            n = active[t]
            z = gates[t, :n] + h[:n] @ Wh
            z[:, : 3 * H] = expit(z[:, : 3 * H])
            z[:, 3 * H :] = np.tanh(z[:, 3 * H :])
            gates[t, :n] = z
            gates[t, n:] = 0.0
            i, f, o, g = z[:, :H], z[:, H : 2 * H], z[:, 2 * H : 3 * H], z[:, 3 * H :]
            cn = f * cell[:n] + i * g
            tc = np.tanh(cn)
            hn = o * tc
            cell[:n] = cn
            h[:n] = hn
            c_all[t, :n] = cn
            tc_all[t, :n] = tc
            h_all[t, :n] = hn
        cache = dict(p=p, X=X, lengths=lengths, order=order, active=active,
                     gates=gates, h_all=h_all, c_all=c_all, tc_all=tc_all)

        if c.readout == "frames":
            cache["out"] = (h_all @ p["out.W"] + p["out.b"]).astype(np.float64)
            return cache
        if c.readout == "final":
            r = h
        else:
            r = h_all.sum(axis=0) / lengths[:, None]
        emb = np.tanh(r @ p["emb.W"] + p["emb.b"])
        cache.update(r=r, emb=emb, out=(emb @ p["out.W"] + p["out.b"]).astype(np.float64))
        return cache

    def _unsort(self, rows: np.ndarray, order: np.ndarray) -> np.ndarray:
        out = np.empty_like(rows)
        out[order] = rows
        return out

    def predict(self, seqs) -> list | np.ndarray:
        """Softmax probabilities / regression outputs in input order.

        For the frames readout, returns a list of (T_i, output_dim) arrays.
        """
        cache = self._forward(seqs)
        out = cache["out"]
        if self.config.readout == "frames":
            result = [None] * len(seqs)
            for j, i in enumerate(cache["order"]):
                result[i] = out[: cache["lengths"][j], j]
            return result
        if self.config.output_kind == "softmax":
            out = losses.softmax(out)
        return self._unsort(out, cache["order"])

    def embed(self, seqs) -> np.ndarray:
        if self.config.readout == "frames":
            raise ValueError("per-frame networks have no embedding layer")
        cache = self._forward(seqs)
        return self._unsort(cache["emb"].astype(np.float64), cache["order"])

    def hidden_states(self, seq: np.ndarray) -> np.ndarray:
        """Per-frame hidden states (T x hidden) for one sequence."""
        return self._forward([seq])["h_all"][:, 0].astype(np.float64)

    # -- loss ---------------------------------------------------------------

    def _targets_sorted(self, targets, cache):
        order = cache["order"]
        if self.config.readout == "frames":
            T, B = cache["out"].shape[:2]
            Y = np.zeros((T, B, self.config.output_dim))
            for j, i in enumerate(order):
                Y[: cache["lengths"][j], j] = targets[i]
            return Y
        targets = np.asarray(targets)
        return targets[order]

    def _loss_and_dout(self, cache, targets, need_grad: bool):
        c = self.config
        out = cache["out"]
        Y = self._targets_sorted(targets, cache)
        if c.readout == "frames":
            mask = (np.arange(out.shape[0])[:, None] < cache["lengths"][None, :])[..., None]
            count = int(cache["lengths"].sum()) * c.output_dim
            if c.output_kind == "softmax":
                raise ValueError("per-frame readout supports linear outputs only")
            diff = (out - Y) * mask
            total = float(np.sum(diff * diff))
            dout = 2.0 * diff / count if need_grad else None
            return total, count, dout
        if c.output_kind == "softmax":
            classes = Y.astype(int)
            count = len(classes)
            total = losses.cross_entropy_sum(out, classes)
            dout = losses.cross_entropy_grad(out, classes, count) if need_grad else None
        else:
            Y = Y.reshape(out.shape)
            count = out.size
            total = losses.mse_sum(out, Y)
            dout = losses.mse_grad(out, Y, count) if need_grad else None
        return total, count, dout

    def loss_sum(self, seqs, targets) -> tuple[float, int]:
        total, count, _ = self._loss_and_dout(self._forward(seqs), targets, False)
        return total, count

    def loss_and_grads(self, seqs, targets) -> tuple[float, dict]:
        cache = self._forward(seqs)
        total, count, dout = self._loss_and_dout(cache, targets, True)
        return total / count, self._backward(cache, dout)

    # -- backward -----------------------------------------------------------

    def _backward(self, cache, dout) -> dict:
        c = self.config
        p = cache["p"]
        dt = self.compute_dtype
        dout = dout.astype(dt)
        H = c.hidden_dim
        X, lengths, active = cache["X"], cache["lengths"], cache["active"]
        gates, h_all, c_all, tc_all = cache["gates"], cache["h_all"], cache["c_all"], cache["tc_all"]
        T, B, D = X.shape
        grads = {}

        inject = None  # (T, B, H) gradient arriving at each hidden state from the head
        dr = None
        if c.readout == "frames":
            grads["out.W"] = h_all.reshape(-1, H).T @ dout.reshape(-1, c.output_dim)
            grads["out.b"] = dout.sum(axis=(0, 1))
            inject = dout @ p["out.W"].T
        else:
            emb = cache["emb"]
            grads["out.W"] = emb.T @ dout
            grads["out.b"] = dout.sum(axis=0)
            dpre = (dout @ p["out.W"].T) * (1.0 - emb * emb)
            grads["emb.W"] = cache["r"].T @ dpre
            grads["emb.b"] = dpre.sum(axis=0)
            dr = dpre @ p["emb.W"].T
            if c.readout == "mean":
                dr = dr / lengths[:, None]

        Wh_T = p["lstm.Wh"].T
        dh_carry = np.zeros((B, H), dtype=dt)
        dc_carry = np.zeros((B, H), dtype=dt)
        for t in range(T - 1, -1, -1):
            n = active[t]
            if inject is not None:
                dh_carry[:n] += inject[t, :n]
            elif c.readout == "mean":
                dh_carry[:n] += dr[:n]
            else:
                n_next = active[t + 1] if t + 1 < T else 0
                dh_carry[n_next:n] += dr[n_next:n]
            z = gates[t, :n]
            i, f, o, g = z[:, :H], z[:, H : 2 * H], z[:, 2 * H : 3 * H], z[:, 3 * H :]
            tc = tc_all[t, :n]
            dh = dh_carry[:n]
            dc = dc_carry[:n] + dh * o * (1.0 - tc * tc)
            c_prev = c_all[t - 1, :n] if t > 0 else 0.0
            dz = np.empty_like(z)
            dz[:, :H] = dc * g * i * (1.0 - i)
            dz[:, H : 2 * H] = dc * c_prev * f * (1.0 - f)
            dz[:, 2 * H : 3 * H] = dh * tc * o * (1.0 - o)
            dz[:, 3 * H :] = dc * i * (1.0 - g * g)
            dc_carry[:n] = dc * f
            dh_carry[:n] = dz @ Wh_T
            gates[t, :n] = dz  # gates buffer now holds dz; inactive rows are already 0

        dZ = gates.reshape(-1, 4 * H)
        grads["lstm.Wx"] = X.reshape(-1, D).T @ dZ
        grads["lstm.b"] = dZ.sum(axis=0)
        grads["lstm.Wh"] = h_all[:-1].reshape(-1, H).T @ gates[1:].reshape(-1, 4 * H)
        return {k: grads[k].astype(np.float64) for k in p}
