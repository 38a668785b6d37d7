"""Tract-variable (TV) estimation by speech inversion, and TV/valence correlation.

Inversion input is the 39-d MFCC stream, normalised per utterance and
spliced with 5 frames of context on each side (429 dims). The network is a
single-layer LSTM with a linear 8-wide output at every frame.

No articulatory corpus ships with this package. ``ForwardMapOracle`` stands
in for one: smooth random TV trajectories pushed through a fixed, seeded
two-layer nonlinear map to 13 cepstrum-like statics, plus deltas and noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import butter, sosfiltfilt

from . import metrics
from .errors import (
    DegenerateVarianceError,
    EmptyDatasetError,
    ShapeMismatchError,
    TooFewQueriesError,
    WrongKindError,
)
from .features import FeatureKind, FeatureMatrix, add_deltas, cmvn, splice
from .nn import LSTMConfig, LSTMNet, ModelCheckpoint, TrainConfig, fit_normalization, net_from_checkpoint, train

TV_NAMES = ("GLO", "VEL", "LP", "LA", "TTCL", "TTCD", "TBCL", "TBCD")
SPLICE_CONTEXT = 5
INVERSION_HIDDEN = 128


def tv_matrix(data: np.ndarray, meta: dict | None = None) -> FeatureMatrix:
    return FeatureMatrix(data, FeatureKind.TV8, {"columns": list(TV_NAMES), **(meta or {})})


def inversion_input(mfcc39: FeatureMatrix) -> FeatureMatrix:
    """MFCC39 -> per-utterance CMVN -> splice(+-5) -> 429 dims."""
    if mfcc39.kind is not FeatureKind.MFCC39:
        raise WrongKindError(f"inversion needs MFCC39 input, got {mfcc39.kind.name}")
    if mfcc39.n_frames == 1:
        # one frame has zero variance everywhere: centring alone leaves zeros
        normed = FeatureMatrix(np.zeros_like(mfcc39.data), mfcc39.kind, dict(mfcc39.meta))
    else:
        normed = cmvn(mfcc39)
    return splice(normed, SPLICE_CONTEXT)


# -- synthetic forward map ----------------------------------------------------

class ForwardMapOracle:
    def __init__(self, seed: int = 0, hidden: int = 32, noise: float = 0.05, frame_rate: float = 100.0):
        rng = np.random.default_rng(seed)
        self.W1 = rng.normal(0, 1.0 / np.sqrt(8), size=(8, hidden))
        self.b1 = rng.normal(0, 0.3, size=hidden)
        self.W2 = rng.normal(0, 1.0 / np.sqrt(hidden), size=(hidden, 13))
        self.noise = noise
        self.sos = butter(4, 6.0, fs=frame_rate, output="sos")

    def trajectories(self, rng, n_frames: int) -> np.ndarray:
        """Band-limited (< 6 Hz at 100 frames/s) random TVs, z-scored per column."""
        raw = sosfiltfilt(self.sos, rng.standard_normal((n_frames + 100, 8)), axis=0)[50:-50]
        raw -= raw.mean(axis=0)
        return raw / raw.std(axis=0)

    def features(self, tvs: np.ndarray, rng=None) -> FeatureMatrix:
        statics = np.tanh(tvs @ self.W1 + self.b1) @ self.W2
        if rng is not None and self.noise > 0:
            statics = statics + self.noise * rng.standard_normal(statics.shape)
        return add_deltas(FeatureMatrix(statics, FeatureKind.MFCC13, {"extractor": "forward-map oracle"}))

    def dataset(self, n_utts: int, seed: int, min_frames: int = 100, max_frames: int = 300):
        """(MFCC39-like features, TV targets) pairs."""
        rng = np.random.default_rng(seed)
        pairs = []
        for _ in range(n_utts):
            tvs = self.trajectories(rng, int(rng.integers(min_frames, max_frames + 1)))
            pairs.append((self.features(tvs, rng), tv_matrix(tvs)))
        return pairs


# -- inversion model ----------------------------------------------------------

def default_inversion_config(seed: int = 0) -> TrainConfig:
    return TrainConfig(loss="mse", batch_size=8, learning_rate=3e-3, max_epochs=60, seed=seed)


def train_inversion(dataset, config: TrainConfig | None = None, cv_fraction: float = 0.1,
                    hidden_dim: int = INVERSION_HIDDEN) -> ModelCheckpoint:
    """Fit the inversion LSTM on (Spliced429, TV8) pairs; the last cv_fraction is held out for CV."""
    config = config or default_inversion_config()
    if len(dataset) < 2:
        raise EmptyDatasetError("inversion needs at least 2 utterances (train + CV)")
    feats, targets = [], []
    for x, y in dataset:
        xd = x.data if isinstance(x, FeatureMatrix) else np.asarray(x)
        yd = y.data if isinstance(y, FeatureMatrix) else np.asarray(y)
        if xd.ndim != 2 or xd.shape[1] != 429:
            raise ShapeMismatchError(f"inversion input must be 429 wide, got {xd.shape}")
        if yd.ndim != 2 or yd.shape[1] != 8:
            raise ShapeMismatchError(f"TV targets must be 8 wide, got {yd.shape}")
        if xd.shape[0] != yd.shape[0]:
            raise ShapeMismatchError(f"{xd.shape[0]} feature frames vs {yd.shape[0]} TV frames")
        feats.append(xd)
        targets.append(yd)
    n_cv = max(1, int(round(cv_fraction * len(feats))))
    n_tr = len(feats) - n_cv

    net = LSTMNet.initialize(LSTMConfig(429, hidden_dim, None, 8, "linear", "frames"), config.seed)
    net.set_normalization(*fit_normalization(feats[:n_tr]))
    net.compute_dtype = np.float32
    return train(
        net, (feats[:n_tr], targets[:n_tr]), (feats[n_tr:], targets[n_tr:]), config,
        kind="inversion", provenance={"tv_order": list(TV_NAMES), "splice_context": SPLICE_CONTEXT},
    )


def estimate_tvs(mfcc39: FeatureMatrix, model: ModelCheckpoint | LSTMNet) -> FeatureMatrix:
    if isinstance(model, ModelCheckpoint):
        model = net_from_checkpoint(model.require("inversion"))
    x = inversion_input(mfcc39)
    return tv_matrix(model.predict([x.data])[0])


# -- TV variation vs valence --------------------------------------------------

@dataclass
class TVCorrelationReport:
    r: dict
    n_utterances: int
    degenerate: dict = field(default_factory=dict)


def tv_variation(tvs) -> np.ndarray:
    """Per-TV temporal standard deviation of one utterance."""
    data = tvs.data if isinstance(tvs, FeatureMatrix) else np.asarray(tvs)
    return data.std(axis=0)


def tv_valence_correlation(queries) -> TVCorrelationReport:
    """Pearson r, across utterances, between each TV's temporal std and valence."""
    queries = list(queries)
    if len(queries) < 3:
        raise TooFewQueriesError(f"need at least 3 queries, got {len(queries)}")
    stats = np.array([tv_variation(tv) for tv, _ in queries])
    valence = np.array([float(v) for _, v in queries])
    r, flags = {}, {}
    for j, name in enumerate(TV_NAMES):
        try:
            r[name] = metrics.pearson(stats[:, j], valence)
            flags[name] = False
        except DegenerateVarianceError:
            r[name] = 0.0
            flags[name] = True
    return TVCorrelationReport(r, len(queries), flags)
