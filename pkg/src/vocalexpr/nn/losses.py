"""Output activations and losses. Losses are means; gradients are w.r.t. pre-activation outputs."""

import numpy as np

CROSS_ENTROPY = "cross_entropy"
MSE = "mse"


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def cross_entropy_sum(logits: np.ndarray, classes: np.ndarray) -> float:
    return float(-log_softmax(logits)[np.arange(len(classes)), classes].sum())


def cross_entropy_grad(logits: np.ndarray, classes: np.ndarray, count: int) -> np.ndarray:
    """d(mean CE)/d logits = (softmax - onehot) / count."""
    g = softmax(logits)
    g[np.arange(len(classes)), classes] -= 1.0
    return g / count


def mse_sum(pred: np.ndarray, target: np.ndarray) -> float:
    d = pred - target
    return float(np.sum(d * d))


def mse_grad(pred: np.ndarray, target: np.ndarray, count: int) -> np.ndarray:
    return 2.0 * (pred - target) / count
