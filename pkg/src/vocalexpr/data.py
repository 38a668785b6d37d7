"""Graded-query manifests, vote aggregation, splits and the synthetic corpus."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dsp import SAMPLE_RATE, write_wav
from .errors import (
    BadManifestError,
    BadVoteCountError,
    BadVoteValueError,
    InsufficientDataError,
)

YES, NOT_SURE, NO = "yes", "not_sure", "no"
EXPR_VOTES = (YES, NOT_SURE, NO)
VOTE_VALUE = {YES: 2, NOT_SURE: 1, NO: 0}

# Label categories, by grader agreement.
CAT_YES, CAT_MILD_YES, CAT_MILD_NO, CAT_NO = "Yes", "MildYes", "MildNo", "No"

DEFAULT_RATIOS = (60.0, 30.0, 4.0, 3.0)


@dataclass(frozen=True)
class QueryLabel:
    category: str
    numeric_grade: float
    binary_expressive: bool
    valence: float
    arousal: float


@dataclass
class GradedQuery:
    id: str
    audio: str
    transcript: str
    expr_votes: tuple
    valence_votes: tuple
    arousal_votes: tuple
    intent: str | None = None
    synth: dict | None = None  # generator latents, synthetic corpora only

    def __post_init__(self):
        self.expr_votes = tuple(self.expr_votes)
        self.valence_votes = tuple(int(v) for v in self.valence_votes)
        self.arousal_votes = tuple(int(v) for v in self.arousal_votes)

    @property
    def label(self) -> QueryLabel:
        category, grade, expressive = aggregate_expression(self.expr_votes)
        return QueryLabel(
            category, grade, expressive,
            scale_emotion(self.valence_votes), scale_emotion(self.arousal_votes),
        )

    def to_json(self) -> dict:
        d = {
            "id": self.id,
            "audio": self.audio,
            "transcript": self.transcript,
            "expr_votes": list(self.expr_votes),
            "valence_votes": list(self.valence_votes),
            "arousal_votes": list(self.arousal_votes),
        }
        if self.intent is not None:
            d["intent"] = self.intent
        if self.synth is not None:
            d["synth"] = self.synth
        return d


def aggregate_expression(votes) -> tuple[str, float, bool]:
    """Four Yes/NotSure/No votes -> (category, mean grade on 0..2, expressive flag).

    Overlapping agreement rules resolve with precedence Yes > No > MildYes > MildNo.
    """
    votes = tuple(votes)
    if len(votes) != 4:
        raise BadVoteCountError(f"expected 4 expression votes, got {len(votes)}")
    for v in votes:
        if v not in VOTE_VALUE:
            raise BadVoteValueError(f"bad expression vote {v!r}")
    n = Counter(votes)
    if n[YES] >= 2:
        category = CAT_YES
    elif n[NO] >= 2:
        category = CAT_NO
    elif n[YES] == 1 and n[NOT_SURE] >= 2:
        category = CAT_MILD_YES
    elif n[NOT_SURE] >= 2 and n[YES] == 0:
        category = CAT_MILD_NO
    else:  # pragma: no cover - the four rules cover every 4-vote multiset
        raise AssertionError(f"uncategorised votes {votes}")
    grade = sum(VOTE_VALUE[v] for v in votes) / 4.0
    return category, grade, category == CAT_YES


def scale_emotion(votes) -> float:
    """Mean of four 1..3 Likert votes mapped affinely onto 1..7."""
    votes = tuple(votes)
    if len(votes) != 4:
        raise BadVoteCountError(f"expected 4 emotion votes, got {len(votes)}")
    for v in votes:
        if isinstance(v, bool) or v not in (1, 2, 3):
            raise BadVoteValueError(f"emotion vote {v!r} outside 1..3")
    return 3.0 * (sum(votes) / 4.0) - 2.0


def filter_all_not_sure(queries):
    return [q for q in queries if any(v != NOT_SURE for v in q.expr_votes)]


# -- manifests ----------------------------------------------------------------

def _query_from_json(obj: dict, lineno: int) -> GradedQuery:
    try:
        q = GradedQuery(
            id=str(obj["id"]),
            audio=str(obj["audio"]),
            transcript=str(obj.get("transcript", "")),
            expr_votes=obj["expr_votes"],
            valence_votes=obj["valence_votes"],
            arousal_votes=obj["arousal_votes"],
            intent=obj.get("intent"),
            synth=obj.get("synth"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise BadManifestError(f"line {lineno}: {exc}") from exc
    q.label  # validates vote counts and domains
    return q


def read_manifest(path) -> list[GradedQuery]:
    queries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                queries.append(_query_from_json(json.loads(line), lineno))
    return queries


def write_manifest(path, queries) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for q in queries:
            fh.write(json.dumps(q.to_json(), sort_keys=True) + "\n")


def resolve_audio(manifest_path, query: GradedQuery) -> Path:
    p = Path(query.audio)
    return p if p.is_absolute() else Path(manifest_path).parent / p


# -- splits -------------------------------------------------------------------

@dataclass
class DatasetSplit:
    pretrain: list
    balanced_train: list
    dev: list
    eval: list

    def to_json(self) -> dict:
        return asdict(self)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "DatasetSplit":
        d = json.loads(Path(path).read_text())
        return cls(d["pretrain"], d["balanced_train"], d["dev"], d["eval"])


def make_splits(queries, ratios=DEFAULT_RATIOS, seed: int = 0) -> DatasetSplit:
    """Seeded 4-way split: dev and eval held out, then a class-balanced block, rest to pretrain.

    The balanced block takes up to half its allocation from each class; the
    majority-class surplus stays in the pretraining pool.
    """
    r_pre, r_bal, r_dev, r_eval = (float(r) for r in ratios)
    total = r_pre + r_bal + r_dev + r_eval
    labels = {q.id: q.label.binary_expressive for q in queries}
    if not any(labels.values()) or all(labels.values()):
        raise InsufficientDataError("both expressive and non-expressive queries are required")

    ids = [q.id for q in queries]
    order = np.random.default_rng(seed).permutation(len(ids))
    shuffled = [ids[i] for i in order]
    n = len(ids)
    n_dev = int(round(n * r_dev / total))
    n_eval = int(round(n * r_eval / total))
    dev = shuffled[:n_dev]
    ev = shuffled[n_dev : n_dev + n_eval]
    pool = shuffled[n_dev + n_eval :]

    half = int(round(n * r_bal / total)) // 2
    pos = [i for i in pool if labels[i]]
    neg = [i for i in pool if not labels[i]]
    k = min(half, len(pos), len(neg))
    if k == 0 and half > 0:
        raise InsufficientDataError("training pool lacks one of the classes")
    chosen = set(pos[:k]) | set(neg[:k])
    balanced = [i for i in pool if i in chosen]
    pretrain = [i for i in pool if i not in chosen]
    return DatasetSplit(pretrain, balanced, dev, ev)


# -- synthetic corpus -----------------------------------------------------------

_VERBS = ["find", "call", "play", "show", "open", "text", "get", "tell me", "set", "check"]
_OBJECTS = [
    "the nearest police station", "my mom", "some jazz", "the weather", "directions home",
    "a timer for ten minutes", "the score of the game", "my calendar", "a pizza place",
    "the news", "my sister", "the gas station", "a joke", "traffic on the highway",
    "the pharmacy", "an alarm for seven", "my messages", "the closest hospital",
    "a coffee shop", "the lights in the kitchen",
]
_TAILS = ["", "", "", "please", "right now", "now", "for me", "quickly"]


@dataclass
class SynthConfig:
    p_expressive: float = 0.3
    min_duration_s: float = 1.0
    max_duration_s: float = 3.0
    sample_rate: int = SAMPLE_RATE
    vote_noise: float = 0.12
    emotion_vote_noise: float = 0.12
    yes_threshold: float = 0.6
    no_threshold: float = 0.35
    max_semitone_std: float = 5.5
    am_weight: float = 0.9
    am_noise: float = 0.1
    valence_coupling: float = 0.3
    valence_noise: float = 0.25
    affect_weight: float = 0.3
    formant_gain: float = 1.4
    tilt_gain: float = 0.4
    register_gain: float = 0.3


def _transcript(rng) -> str:
    words = [_VERBS[rng.integers(len(_VERBS))], _OBJECTS[rng.integers(len(_OBJECTS))]]
    tail = _TAILS[rng.integers(len(_TAILS))]
    if tail:
        words.append(tail)
    return " ".join(words)


def _smooth_curve(rng, t: np.ndarray, lo_hz: float, hi_hz: float, n: int = 3) -> np.ndarray:
    """Zero-mean, unit-std sum of a few slow sinusoids."""
    y = np.zeros_like(t)
    for _ in range(n):
        y += rng.normal() * np.sin(2 * np.pi * rng.uniform(lo_hz, hi_hz) * t + rng.uniform(0, 2 * np.pi))
    y -= y.mean()
    sd = y.std()
    return y / sd if sd > 0 else y


def _syllable_envelope(rng, n: int, sr: int) -> np.ndarray:
    env = np.zeros(n)
    pos = int(rng.uniform(0.02, 0.08) * sr)
    while pos < n:
        length = int(rng.uniform(0.15, 0.4) * sr)
        seg = np.hanning(length) ** 0.5 * rng.uniform(0.7, 1.0)
        end = min(n, pos + length)
        env[pos:end] = np.maximum(env[pos:end], seg[: end - pos])
        pos = end - int(0.03 * sr) + int(rng.uniform(0.0, 0.1) * sr)
    return 0.03 + env


def synthesize_utterance(rng, duration_s: float, sr: int, *, semitone_std: float,
                         am_depth: float, tilt: float, base_f0: float, formant_scale: float = 1.0) -> np.ndarray:
    """Harmonic-plus-noise voice with a random pitch contour, moving formants and spectral tilt.

    ``formant_scale`` multiplies the extent of formant movement (articulation range).
    """
    n = int(duration_s * sr)
    t = np.arange(n) / sr
    contour = semitone_std * _smooth_curve(rng, t, 0.5, 3.0) - 1.0 * t / max(duration_s, 1e-9)
    f0 = base_f0 * 2.0 ** (contour / 12.0)
    phase = 2 * np.pi * np.cumsum(f0) / sr

    step = 32
    tc = t[::step]
    f0c = f0[::step]
    formants = [
        (500 + 150 * formant_scale * _smooth_curve(rng, tc, 1.0, 4.0), 90.0),
        (1500 + 400 * formant_scale * _smooth_curve(rng, tc, 1.0, 4.0), 130.0),
        (2500 + 200 * formant_scale * _smooth_curve(rng, tc, 0.5, 2.0), 180.0),
    ]
    n_harm = int(7000.0 / f0.min())
    x = np.zeros(n)
    for k in range(1, n_harm + 1):
        fk = k * f0c
        amp = sum(1.0 / (1.0 + ((fk - fj) / bj) ** 2) for fj, bj in formants) + 0.02
        amp *= k ** (-tilt)
        amp[fk > 7500.0] = 0.0
        x += np.interp(t, tc, amp) * np.sin(k * phase)

    envelope = _syllable_envelope(rng, n, sr)
    envelope *= 1.0 + am_depth * np.sin(2 * np.pi * rng.uniform(3.0, 7.0) * t + rng.uniform(0, 2 * np.pi))
    x = x / (np.abs(x).max() + 1e-12)
    x = envelope * (x + 0.03 * rng.standard_normal(n))
    x += 0.002 * rng.standard_normal(n)
    return 0.5 * x / (np.abs(x).max() + 1e-12)


def _quantile_ranks(values: np.ndarray) -> np.ndarray:
    ranks = np.argsort(np.argsort(values, kind="stable"), kind="stable")
    return ranks / max(len(values) - 1, 1)


def _likert_votes(rng, q: float, noise: float) -> list[int]:
    return [int(np.clip(math.floor(3 * (q + rng.normal(0, noise))), 0, 2)) + 1 for _ in range(4)]


def synth_corpus(n: int, seed: int, out_dir, config: SynthConfig | None = None) -> list[GradedQuery]:
    """Generate n graded queries as WAV files plus ``manifest.jsonl`` under out_dir.

    Expressive queries get wide pitch contours and amplitude modulation; arousal
    votes follow the pitch-variability quantile. A valence latent, loosely tied
    to expressiveness, sets the formant-movement range plus a little spectral
    tilt and pitch register, and also sways the expression votes. Transcripts
    come from one pool shared by both classes.
    """
    if n < 100:
        raise ValueError("synthetic corpus needs n >= 100")
    cfg = config or SynthConfig()
    out = Path(out_dir)
    (out / "wav").mkdir(parents=True, exist_ok=True)
    children = np.random.SeedSequence(seed).spawn(n)
    text_rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7e47]))

    latents = []
    for i in range(n):
        rng = np.random.default_rng(children[i])
        expressive = bool(rng.random() < cfg.p_expressive)
        intensity = rng.uniform(0.5, 1.0) if expressive else rng.uniform(0.0, 0.5)
        pitch_x = float(np.clip(intensity + rng.normal(0, 0.08), 0, 1))
        valence_x = float(np.clip(
            0.5 + cfg.valence_coupling * (intensity - 0.5) + rng.normal(0, cfg.valence_noise), 0, 1))
        latents.append(dict(
            expressive=expressive,
            intensity=float(intensity),
            semitone_std=0.25 + cfg.max_semitone_std * pitch_x**2,
            am_depth=float(np.clip(cfg.am_weight * intensity + rng.normal(0, cfg.am_noise), 0.0, 0.8)),
            valence=valence_x,
            tilt=1.3 - cfg.tilt_gain * valence_x,
            formant_scale=0.3 + cfg.formant_gain * valence_x,
            base_f0=float(110.0 * 2.0 ** (rng.uniform(0.0, 0.8) + cfg.register_gain * valence_x)),
            duration=float(rng.uniform(cfg.min_duration_s, cfg.max_duration_s)),
            rng=rng,
        ))

    arousal_q = _quantile_ranks(np.array([d["semitone_std"] for d in latents]))
    valence_q = _quantile_ranks(np.array([d["valence"] for d in latents]))

    queries = []
    width = len(str(n - 1))
    for i, d in enumerate(latents):
        rng = d.pop("rng")
        qid = f"q{i:0{width}d}"
        audio = synthesize_utterance(
            rng, d["duration"], cfg.sample_rate, semitone_std=d["semitone_std"],
            am_depth=d["am_depth"], tilt=d["tilt"], base_f0=d["base_f0"],
            formant_scale=d["formant_scale"],
        )
        rel = f"wav/{qid}.wav"
        write_wav(out / rel, audio, cfg.sample_rate)

        perceived = (d["intensity"] + cfg.affect_weight * (d["valence"] - 0.5)
                     + rng.normal(0, cfg.vote_noise, size=4))
        votes = [YES if u > cfg.yes_threshold else NO if u < cfg.no_threshold else NOT_SURE
                 for u in perceived]
        queries.append(GradedQuery(
            id=qid,
            audio=rel,
            transcript=_transcript(text_rng),
            expr_votes=votes,
            valence_votes=_likert_votes(rng, valence_q[i], cfg.emotion_vote_noise),
            arousal_votes=_likert_votes(rng, arousal_q[i], cfg.emotion_vote_noise),
            synth={k: (round(v, 6) if isinstance(v, float) else v) for k, v in d.items()},
        ))

    write_manifest(out / "manifest.jsonl", queries)
    return queries
