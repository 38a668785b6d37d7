"""Detection and regression metrics: ROC/EER, WA/UWA/F-score, CCC, Pearson."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import (
    DegenerateVarianceError,
    LengthMismatchError,
    OneClassOnlyError,
    TooShortError,
)


def _scored(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    if s.shape != y.shape or s.ndim != 1:
        raise LengthMismatchError(f"{s.shape} scores vs {y.shape} labels")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    if y.all() or not y.any():
        raise OneClassOnlyError("need both positive and negative examples")
    return s, y


def roc_curve(scores, labels) -> list[tuple[float, float, float]]:
    """(threshold, FAR, FRR) rows for thresholds -inf, each unique score, +inf.

    A score >= threshold is accepted as positive.
    """
    s, y = _scored(scores, labels)
    thresholds = np.concatenate([[-np.inf], np.unique(s), [np.inf]])
    pos = np.sort(s[y])
    neg = np.sort(s[~y])
    # count of scores strictly below t
    pos_below = np.searchsorted(pos, thresholds, side="left")
    neg_below = np.searchsorted(neg, thresholds, side="left")
    far = (neg.size - neg_below) / neg.size
    frr = pos_below / pos.size
    return [(float(t), float(a), float(r)) for t, a, r in zip(thresholds, far, frr)]


def _eer_and_threshold(scores, labels) -> tuple[float, float]:
    roc = roc_curve(scores, labels)
    prev = roc[0]
    for point in roc[1:]:
        t, far, frr = point
        d = far - frr
        if d == 0.0:
            return far, t
        if d < 0.0:
            _, far0, frr0 = prev
            d0 = far0 - frr0
            alpha = d0 / (d0 - d)
            return far0 + alpha * (far - far0), t
        prev = point
    raise AssertionError("ROC must end at FAR=0, FRR=1")


def eer(scores, labels) -> float:
    """Equal error rate, linearly interpolated where FAR - FRR changes sign."""
    return _eer_and_threshold(scores, labels)[0]


def eer_threshold(scores, labels) -> float:
    """Smallest ROC threshold at or past the FAR = FRR crossing."""
    return _eer_and_threshold(scores, labels)[1]


def wa_uwa_f(predictions, labels) -> tuple[float, float, float]:
    p = np.asarray(predictions, dtype=bool)
    y = np.asarray(labels, dtype=bool)
    if p.shape != y.shape:
        raise LengthMismatchError(f"{p.shape} predictions vs {y.shape} labels")
    if y.all() or not y.any():
        raise OneClassOnlyError("UWA needs both classes in labels")
    tp = int(np.sum(p & y))
    tn = int(np.sum(~p & ~y))
    fp = int(np.sum(p & ~y))
    fn = int(np.sum(~p & y))
    wa = (tp + tn) / y.size
    uwa = 0.5 * (tp / (tp + fn) + tn / (tn + fp))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn)
    f = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return wa, uwa, f


def _paired(x, y, min_len: int) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(x, dtype=np.float64).ravel()
    b = np.asarray(y, dtype=np.float64).ravel()
    if a.size != b.size:
        raise LengthMismatchError(f"{a.size} vs {b.size} values")
    if a.size < min_len:
        raise TooShortError(f"need at least {min_len} values, got {a.size}")
    return a, b


def ccc(x, y) -> float:
    """Concordance correlation with population moments; 0 when undefined."""
    a, b = _paired(x, y, 2)
    ma, mb = a.mean(), b.mean()
    cov = np.mean((a - ma) * (b - mb))
    denom = a.var() + b.var() + (ma - mb) ** 2
    return float(2 * cov / denom) if denom > 0 else 0.0


def pearson(x, y) -> float:
    a, b = _paired(x, y, 3)
    da = a - a.mean()
    db = b - b.mean()
    sa = np.sqrt(np.dot(da, da))
    sb = np.sqrt(np.dot(db, db))
    if sa == 0 or sb == 0:
        raise DegenerateVarianceError("pearson undefined for a constant variable")
    return float(np.clip(np.dot(da, db) / (sa * sb), -1.0, 1.0))


@dataclass
class EvalReport:
    eer: float
    wa: float
    uwa: float
    f_score: float
    threshold: float
    wa_at_half: float | None = None
    uwa_at_half: float | None = None
    f_score_at_half: float | None = None
    ccc_valence: float | None = None
    ccc_arousal: float | None = None
    n_pos: int = 0
    n_neg: int = 0
    roc: list = field(default_factory=list)

    def to_dict(self) -> dict:
        """Fields as a dict; unset optional fields are left out."""
        return {k: v for k, v in asdict(self).items() if v is not None}


def evaluate_scores(scores, labels, *, include_roc: bool = True) -> EvalReport:
    """Detection report: EER plus WA/UWA/F at the EER threshold and at 0.5."""
    s, y = _scored(scores, labels)
    e, thr = _eer_and_threshold(s, y)
    wa, uwa, f = wa_uwa_f(s >= thr, y)
    wa5, uwa5, f5 = wa_uwa_f(s >= 0.5, y)
    return EvalReport(
        eer=e, wa=wa, uwa=uwa, f_score=f, threshold=thr,
        wa_at_half=wa5, uwa_at_half=uwa5, f_score_at_half=f5,
        n_pos=int(y.sum()), n_neg=int((~y).sum()),
        roc=[list(p) for p in roc_curve(s, y)] if include_roc else [],
    )


def write_roc_csv(path, roc) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold", "far", "frr"])
        for t, far, frr in roc:
            w.writerow([repr(float(t)), repr(float(far)), repr(float(frr))])
