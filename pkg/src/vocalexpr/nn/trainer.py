"""Mini-batch Adam training with cross-validation back-off.

After every epoch the CV error (mean loss on the CV set) is compared with
the previous epoch. ``patience`` consecutive strict increases trigger a
back-off: the best weights so far are restored, the learning rate is
multiplied by ``lr_decay_on_backoff`` and the Adam moments are reset. A
back-off that fires again before any new best CV error, or one beyond
``max_backoffs``, ends training. The best weights are always returned.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import EmptyDatasetError, NumericalDivergenceError
from . import losses
from .adam import AdamState, adam_step
from .checkpoint import ModelCheckpoint, checkpoint_from_net

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    loss: str = losses.CROSS_ENTROPY
    batch_size: int = 200
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    max_epochs: int = 50
    patience: int = 5
    lr_decay_on_backoff: float = 0.9
    max_backoffs: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0 < self.lr_decay_on_backoff < 1:
            raise ValueError("lr_decay_on_backoff must lie in (0, 1)")
        if self.loss not in (losses.CROSS_ENTROPY, losses.MSE):
            raise ValueError(f"unknown loss {self.loss!r}")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    cv_error: float
    lr: float


def _take(data, idx):
    if isinstance(data, np.ndarray):
        return data[idx]
    return [data[i] for i in idx]


def evaluate_loss(net, inputs, targets, batch_size: int = 200) -> float:
    """Mean loss over a whole set, computed in chunks."""
    total, count = 0.0, 0
    n = len(inputs)
    for start in range(0, n, batch_size):
        idx = np.arange(start, min(n, start + batch_size))
        s, c = net.loss_sum(_take(inputs, idx), _take(targets, idx))
        total += s
        count += c
    return total / count


def _check_finite(value: float, what: str, epoch: int) -> None:
    if not math.isfinite(value):
        raise NumericalDivergenceError(f"{what} became {value} at epoch {epoch}")


def train(net, train_set, cv_set, config: TrainConfig, kind: str = "model",
          provenance: dict | None = None) -> ModelCheckpoint:
    """Train ``net`` in place and return a checkpoint of its best CV weights.

    ``train_set`` and ``cv_set`` are (inputs, targets) pairs; inputs are a
    list of (T, D) arrays for recurrent nets or an (N, D) array otherwise.
    """
    X, Y = train_set
    Xc, Yc = cv_set
    if len(X) == 0 or len(Xc) == 0:
        raise EmptyDatasetError("training and CV sets must be non-empty")
    if len(X) != len(Y) or len(Xc) != len(Yc):
        raise EmptyDatasetError("inputs and targets differ in length")
    if config.loss != net.loss_kind:
        raise ValueError(f"config loss {config.loss} does not match network output ({net.loss_kind})")

    rng = np.random.default_rng(config.seed)
    bs = config.batch_size
    lr = config.learning_rate
    lr_history = [lr]
    state = AdamState.zeros(net.params)

    cv = evaluate_loss(net, Xc, Yc, bs)
    _check_finite(cv, "CV error", 0)
    history = [EpochRecord(0, evaluate_loss(net, X, Y, bs), cv, lr)]
    best_cv, best_params, best_epoch = cv, net.copy_params(), 0
    prev_cv = cv
    streak = 0
    backoffs = 0
    improved_since_backoff = True
    stop_reason = "max_epochs"

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(X))
        loss_sum = 0.0
        for start in range(0, len(X), bs):
            idx = order[start : start + bs]
            loss, grads = net.loss_and_grads(_take(X, idx), _take(Y, idx))
            _check_finite(loss, "training loss", epoch)
            net.params, state = adam_step(
                net.params, grads, state, lr, config.beta1, config.beta2, config.epsilon
            )
            loss_sum += loss * len(idx)
        cv = evaluate_loss(net, Xc, Yc, bs)
        _check_finite(cv, "CV error", epoch)
        history.append(EpochRecord(epoch, loss_sum / len(X), cv, lr))
        log.debug("epoch %d train %.5f cv %.5f lr %g", epoch, loss_sum / len(X), cv, lr)

        if cv < best_cv:
            best_cv, best_params, best_epoch = cv, net.copy_params(), epoch
            improved_since_backoff = True
        streak = streak + 1 if cv > prev_cv else 0
        prev_cv = cv

        if streak >= config.patience:
            if backoffs >= config.max_backoffs or not improved_since_backoff:
                stop_reason = "backoff_failed"
                break
            net.params = {k: v.copy() for k, v in best_params.items()}
            lr = lr * config.lr_decay_on_backoff
            lr_history.append(lr)
            state = AdamState.zeros(net.params)
            backoffs += 1
            streak = 0
            prev_cv = best_cv
            improved_since_backoff = False
            log.info("back-off %d at epoch %d: restored epoch %d, lr -> %g", backoffs, epoch, best_epoch, lr)

    net.params = best_params
    prov = dict(provenance or {})
    prov.update(
        seed=config.seed,
        train_config=asdict(config),
        epochs_run=history[-1].epoch,
        best_epoch=best_epoch,
        best_cv_error=best_cv,
        backoffs=backoffs,
        stop_reason=stop_reason,
        lr_history=lr_history,
        history=[asdict(r) for r in history],
    )
    return checkpoint_from_net(net, kind, prov)


def write_training_log(path, history) -> None:
    """CSV with columns epoch, train_loss, cv_error, lr."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "cv_error", "lr"])
        for r in history:
            r = r if isinstance(r, dict) else asdict(r)
            w.writerow([r["epoch"], repr(r["train_loss"]), repr(r["cv_error"]), repr(r["lr"])])
