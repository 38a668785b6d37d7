"""Expression and emotion LSTMs, embedding extraction, embedding fusion and the BoW baseline.

Feature inputs are ``{query_id: (T, D) array}`` dicts; labels are
``{query_id: 0/1}`` and emotion targets ``{query_id: (valence, arousal)}``.
Every model normalises its input with training-set statistics stored in
the checkpoint, so inference needs nothing but the checkpoint.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    EmptyDatasetError,
    EmptyVocabularyError,
    ShapeMismatchError,
    SourceListMismatchError,
    WrongModelKindError,
)
from .features import FeatureKind, FeatureMatrix, read_feat, write_feat
from .nn import (
    FFNConfig,
    FFNet,
    LSTMConfig,
    LSTMNet,
    ModelCheckpoint,
    TrainConfig,
    checkpoint_from_net,
    fit_normalization,
    net_from_checkpoint,
    train,
)

EXPRESSION, EMOTION, FUSION, BOW = "expression", "emotion", "fusion", "bow"
INFER_BATCH = 256
TRAIN_DTYPE = np.float32


def _as_array(x) -> np.ndarray:
    return x.data if isinstance(x, FeatureMatrix) else np.asarray(x, dtype=np.float64)


def _gather(features: dict, ids) -> list[np.ndarray]:
    missing = [i for i in ids if i not in features]
    if missing:
        raise EmptyDatasetError(f"no features for {len(missing)} queries, e.g. {missing[0]!r}")
    return [_as_array(features[i]) for i in ids]


def _require_nonempty(**sets) -> None:
    for name, ids in sets.items():
        if len(ids) == 0:
            raise EmptyDatasetError(f"{name} set is empty")


# -- expression model ---------------------------------------------------------

@dataclass
class ExpressionConfig:
    hidden_dim: int = 128
    embedding_dim: int = 128
    batch_size: int = 200
    pretrain_lr: float = 1e-4
    finetune_lr: float = 1e-2
    pretrain_epochs: int = 60
    finetune_epochs: int = 10
    patience: int = 5
    seed: int = 0


def train_expression(features: dict, labels: dict, pretrain_ids, finetune_ids, cv_ids,
                     config: ExpressionConfig | None = None, provenance: dict | None = None,
                     on_stage=None) -> ModelCheckpoint:
    """Pre-train on ``pretrain_ids`` then fine-tune on the balanced ``finetune_ids``.

    Either stage is skipped when its id list is empty or its epoch budget is 0.
    ``on_stage(name, checkpoint)`` is called after each stage.
    """
    config = config or ExpressionConfig()
    _require_nonempty(cv=cv_ids)
    stages = [
        ("pretrain", list(pretrain_ids), config.pretrain_lr, config.pretrain_epochs),
        ("finetune", list(finetune_ids), config.finetune_lr, config.finetune_epochs),
    ]
    stages = [s for s in stages if s[1] and s[3] > 0]
    if not stages:
        raise EmptyDatasetError("both training stages are empty")

    first = _gather(features, stages[0][1])
    net = LSTMNet.initialize(
        LSTMConfig(first[0].shape[1], config.hidden_dim, config.embedding_dim, 2, "softmax", "final"),
        config.seed,
    )
    net.compute_dtype = TRAIN_DTYPE
    all_ids = list(dict.fromkeys(i for _, ids, _, _ in stages for i in ids))
    net.set_normalization(*fit_normalization(_gather(features, all_ids)))
    cv = (_gather(features, cv_ids), np.array([int(labels[i]) for i in cv_ids]))

    stage_log = []
    ckpt = None
    for k, (name, ids, lr, epochs) in enumerate(stages):
        tc = TrainConfig(
            loss="cross_entropy", batch_size=config.batch_size, learning_rate=lr,
            max_epochs=epochs, patience=config.patience, seed=config.seed + k,
        )
        ckpt = train(net, (_gather(features, ids), np.array([int(labels[i]) for i in ids])), cv, tc, kind=EXPRESSION)
        stage_log.append({"stage": name, "n_queries": len(ids), **ckpt.provenance})
        if on_stage is not None:
            on_stage(name, ckpt)
    ckpt.provenance = {**(provenance or {}), "config": asdict(config), "stages": stage_log,
                       "best_cv_error": stage_log[-1]["best_cv_error"]}
    return ckpt


def _predict_lstm(net: LSTMNet, seqs: list) -> np.ndarray:
    return np.vstack([net.predict(seqs[s : s + INFER_BATCH]) for s in range(0, len(seqs), INFER_BATCH)])


def expression_scores(ckpt: ModelCheckpoint, seqs) -> np.ndarray:
    """Positive-class (expressive) probability per sequence."""
    net = net_from_checkpoint(ckpt.require(EXPRESSION))
    return _predict_lstm(net, [_as_array(s) for s in seqs])[:, 1]


# -- emotion model ------------------------------------------------------------

@dataclass
class EmotionConfig:
    hidden_dim: int = 64
    embedding_dim: int = 64
    batch_size: int = 300
    learning_rate: float = 0.01
    max_epochs: int = 30
    patience: int = 5
    seed: int = 0


def train_emotion(features: dict, targets: dict, train_ids, cv_ids,
                  config: EmotionConfig | None = None, provenance: dict | None = None) -> ModelCheckpoint:
    """Joint valence/arousal regressor; targets are (valence, arousal) on the 1-7 scale."""
    config = config or EmotionConfig()
    _require_nonempty(train=train_ids, cv=cv_ids)
    X = _gather(features, train_ids)
    net = LSTMNet.initialize(
        LSTMConfig(X[0].shape[1], config.hidden_dim, config.embedding_dim, 2, "linear", "final"), config.seed
    )
    net.set_normalization(*fit_normalization(X))
    net.compute_dtype = TRAIN_DTYPE

    def ys(ids):
        Y = np.array([targets[i] for i in ids], dtype=np.float64)
        if Y.ndim != 2 or Y.shape[1] != 2:
            raise ShapeMismatchError(f"emotion targets must be (valence, arousal) pairs, got shape {Y.shape}")
        return Y

    Y = ys(train_ids)
    # start the output at the target mean so updates go to shape, not level
    net.params["out.b"][:] = Y.mean(axis=0)
    tc = TrainConfig(loss="mse", batch_size=config.batch_size, learning_rate=config.learning_rate,
                     max_epochs=config.max_epochs, patience=config.patience, seed=config.seed)
    prov = {**(provenance or {}), "config": asdict(config), "outputs": ["valence", "arousal"]}
    return train(net, (X, Y), (_gather(features, cv_ids), ys(cv_ids)), tc, kind=EMOTION, provenance=prov)


def predict_emotion(ckpt: ModelCheckpoint, seqs) -> np.ndarray:
    """(N, 2) array of (valence, arousal) predictions."""
    net = net_from_checkpoint(ckpt.require(EMOTION))
    return _predict_lstm(net, [_as_array(s) for s in seqs])


# -- embeddings ---------------------------------------------------------------

@dataclass
class Embedding:
    vector: np.ndarray
    source: str  # e.g. "AE:mfcc+f0v" or "EE:mfcc"

    @property
    def dim(self) -> int:
        return self.vector.shape[0]


def _embedding_net(ckpt: ModelCheckpoint) -> LSTMNet:
    if ckpt.kind not in (EXPRESSION, EMOTION):
        raise WrongModelKindError(f"embeddings come from expression or emotion checkpoints, got {ckpt.kind!r}")
    return net_from_checkpoint(ckpt)


def extract_embedding(ckpt: ModelCheckpoint, features, source: str | None = None) -> Embedding:
    """Embedding-layer activation at the final frame of one utterance."""
    net = _embedding_net(ckpt)
    prefix = "AE" if ckpt.kind == EXPRESSION else "EE"
    return Embedding(net.embed([_as_array(features)])[0], source or prefix)


@dataclass
class EmbeddingSet:
    """Embeddings of many queries from one source, row-aligned with ``ids``."""

    source: str
    ids: list
    vectors: np.ndarray

    def __post_init__(self):
        self.ids = list(self.ids)
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.shape[0] != len(self.ids):
            raise ShapeMismatchError(f"{self.vectors.shape[0]} vectors for {len(self.ids)} ids")

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def rows(self, ids) -> np.ndarray:
        pos = {q: k for k, q in enumerate(self.ids)}
        return self.vectors[[pos[q] for q in ids]]

    def save(self, path) -> None:
        """FEAT file (one row per query) plus a ``<path>.ids`` sidecar, one id per line."""
        write_feat(path, FeatureMatrix(self.vectors, FeatureKind.CUSTOM, {"source": self.source}))
        Path(str(path) + ".ids").write_text("".join(f"{q}\n" for q in self.ids), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "EmbeddingSet":
        f = read_feat(path)
        ids = Path(str(path) + ".ids").read_text(encoding="utf-8").splitlines()
        return cls(f.meta.get("source", "unknown"), ids, f.data)


def extract_embeddings(ckpt: ModelCheckpoint, features: dict, ids, source: str) -> EmbeddingSet:
    net = _embedding_net(ckpt)
    seqs = _gather(features, ids)
    vecs = np.vstack([net.embed(seqs[s : s + INFER_BATCH]) for s in range(0, len(seqs), INFER_BATCH)])
    return EmbeddingSet(source, ids, vecs)


# -- fusion -------------------------------------------------------------------

@dataclass
class FusionConfig:
    hidden_dim: int | None = None  # None: 128 when an emotion source is present, else 256
    batch_size: int = 200
    learning_rate: float = 1e-3
    max_epochs: int = 60
    patience: int = 5
    seed: int = 0


def _is_emotion_source(name: str) -> bool:
    return name.startswith("EE")


def _check_sources(sources) -> list:
    if not sources:
        raise SourceListMismatchError("no embedding sources given")
    ids = sources[0].ids
    for s in sources[1:]:
        if s.ids != ids:
            raise SourceListMismatchError(f"source {s.source!r} covers a different query list than {sources[0].source!r}")
    return ids


def _fuse(sources, ids) -> np.ndarray:
    return np.hstack([s.rows(ids) for s in sources])


def train_fusion(sources: list, labels: dict, train_ids, cv_ids,
                 config: FusionConfig | None = None, provenance: dict | None = None) -> ModelCheckpoint:
    """One-hidden-layer FFN over concatenated embeddings; source order is recorded."""
    config = config or FusionConfig()
    _check_sources(sources)
    _require_nonempty(train=train_ids, cv=cv_ids)
    hidden = config.hidden_dim or (128 if any(_is_emotion_source(s.source) for s in sources) else 256)
    X, Xc = _fuse(sources, train_ids), _fuse(sources, cv_ids)
    net = FFNet.initialize(FFNConfig(X.shape[1], (hidden,), 2, "softmax"), config.seed)
    net.set_normalization(*fit_normalization([X]))
    tc = TrainConfig(loss="cross_entropy", batch_size=config.batch_size, learning_rate=config.learning_rate,
                     max_epochs=config.max_epochs, patience=config.patience, seed=config.seed)
    y = np.array([int(labels[i]) for i in train_ids])
    yc = np.array([int(labels[i]) for i in cv_ids])
    ckpt = train(net, (X, y), (Xc, yc), tc, kind=FUSION, provenance={**(provenance or {}), "config": asdict(config)})
    ckpt.arch.update(sources=[s.source for s in sources], source_dims=[s.dim for s in sources])
    return ckpt


def fusion_scores(ckpt: ModelCheckpoint, sources: list, ids=None) -> np.ndarray:
    ckpt.require(FUSION)
    names = [s.source for s in sources]
    if names != ckpt.arch["sources"]:
        raise SourceListMismatchError(f"checkpoint expects sources {ckpt.arch['sources']}, got {names}")
    all_ids = _check_sources(sources)
    net = net_from_checkpoint(ckpt)
    return net.predict(_fuse(sources, all_ids if ids is None else ids))[:, 1]


# -- bag-of-words baseline ----------------------------------------------------

_PUNCT = re.compile(r"[^\w\s]")


def tokenize(text: str) -> list[str]:
    return _PUNCT.sub("", text.lower()).split()


@dataclass
class BowVocabulary:
    index: dict = field(default_factory=dict)
    min_count: int = 2

    @property
    def size(self) -> int:
        return len(self.index)

    def tokens(self) -> list[str]:
        return sorted(self.index, key=self.index.get)


def bow_fit(transcripts, min_count: int = 2) -> BowVocabulary:
    counts = Counter(tok for t in transcripts for tok in tokenize(t))
    kept = sorted(tok for tok, c in counts.items() if c >= min_count)
    if not kept:
        raise EmptyVocabularyError(f"no token occurs at least {min_count} times")
    return BowVocabulary({tok: k for k, tok in enumerate(kept)}, min_count)


def bow_vectorize(vocab: BowVocabulary, transcript: str) -> np.ndarray:
    v = np.zeros(vocab.size)
    for tok in tokenize(transcript):
        k = vocab.index.get(tok)
        if k is not None:
            v[k] += 1
    return v


@dataclass
class BowConfig:
    hidden_dims: tuple = (128, 128)
    batch_size: int = 200
    learning_rate: float = 1e-3
    max_epochs: int = 40
    patience: int = 5
    seed: int = 0


def train_bow_baseline(vocab: BowVocabulary, train_set, cv_set, config: BowConfig | None = None,
                       provenance: dict | None = None) -> ModelCheckpoint:
    """``train_set`` / ``cv_set`` are (count vectors (N, V), labels (N,)) pairs."""
    config = config or BowConfig()
    X, y = np.asarray(train_set[0], dtype=np.float64), np.asarray(train_set[1], dtype=int)
    Xc, yc = np.asarray(cv_set[0], dtype=np.float64), np.asarray(cv_set[1], dtype=int)
    if X.ndim != 2 or X.shape[1] != vocab.size:
        raise ShapeMismatchError(f"BoW vectors must be {vocab.size} wide, got {X.shape}")
    net = FFNet.initialize(FFNConfig(vocab.size, config.hidden_dims, 2, "softmax"), config.seed)
    tc = TrainConfig(loss="cross_entropy", batch_size=config.batch_size, learning_rate=config.learning_rate,
                     max_epochs=config.max_epochs, patience=config.patience, seed=config.seed)
    cfg = asdict(config)
    cfg["hidden_dims"] = list(config.hidden_dims)
    ckpt = train(net, (X, y), (Xc, yc), tc, kind=BOW, provenance={**(provenance or {}), "config": cfg})
    ckpt.arch.update(vocabulary=vocab.tokens(), min_count=vocab.min_count)
    return ckpt


def bow_scores(ckpt: ModelCheckpoint, transcripts) -> np.ndarray:
    ckpt.require(BOW)
    vocab = BowVocabulary({t: k for k, t in enumerate(ckpt.arch["vocabulary"])}, ckpt.arch["min_count"])
    X = np.array([bow_vectorize(vocab, t) for t in transcripts]).reshape(-1, vocab.size)
    return net_from_checkpoint(ckpt).predict(X)[:, 1]


# -- small seeded instances for gradient checks -------------------------------

def gradcheck_instances(seed: int = 0) -> dict:
    """Miniature versions of every trainable architecture, with random data.

    Returns ``{name: (net, inputs, targets)}``. Weights use a wide init so
    that no gradient is vanishingly small.
    """
    rng = np.random.default_rng(seed)
    seqs = lambda d: [rng.normal(size=(int(t), d)) for t in (6, 4, 9)]
    inst = {}

    net = LSTMNet.initialize(LSTMConfig(5, 4, 3, 2, "softmax", "final"), seed, scale=0.5)
    inst["expression_lstm"] = (net, seqs(5), np.array([1, 0, 1]))

    net = LSTMNet.initialize(LSTMConfig(5, 4, 3, 2, "linear", "final"), seed + 1, scale=0.5)
    inst["emotion_lstm"] = (net, seqs(5), rng.uniform(1, 7, size=(3, 2)))

    X = seqs(11)
    net = LSTMNet.initialize(LSTMConfig(11, 4, None, 8, "linear", "frames"), seed + 2, scale=0.5)
    inst["inversion_lstm"] = (net, X, [rng.normal(size=(x.shape[0], 8)) for x in X])

    net = FFNet.initialize(FFNConfig(7, (5,), 2, "softmax"), seed + 3, scale=0.5)
    inst["fusion_ffn"] = (net, rng.normal(size=(6, 7)), rng.integers(0, 2, size=6))

    net = FFNet.initialize(FFNConfig(9, (5, 4), 2, "softmax"), seed + 4, scale=0.5)
    inst["bow_dnn"] = (net, rng.poisson(1.0, size=(6, 9)).astype(float), rng.integers(0, 2, size=6))
    return inst
