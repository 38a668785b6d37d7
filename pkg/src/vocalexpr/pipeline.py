"""Feature recipes and corpus-wide extraction.

A recipe is a base stream (``mfcc``, ``gcc``, ``nmcc``, ``f0v``, ``mfcc39``),
or ``concat:a,b,...`` joining base streams column-wise, optionally followed
by ``+tv`` to append the 8 estimated tract variables (which needs an
inversion checkpoint).
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from .articulatory import estimate_tvs
from .data import resolve_audio
from .dsp import load_wav
from .errors import BadConfigError
from .features import BASE_STREAMS, FeatureMatrix, concat, extract, mfcc39
from .nn import ModelCheckpoint


@dataclass(frozen=True)
class Recipe:
    streams: tuple
    with_tv: bool = False

    @classmethod
    def parse(cls, text: str) -> "Recipe":
        body, with_tv = text, False
        if body.endswith("+tv"):
            body, with_tv = body[: -len("+tv")], True
        streams = tuple(body[len("concat:"):].split(",")) if body.startswith("concat:") else (body,)
        bad = [s for s in streams if s not in BASE_STREAMS]
        if bad or not streams:
            raise BadConfigError(f"bad feature recipe {text!r}: unknown streams {bad}")
        return cls(streams, with_tv)

    def __str__(self) -> str:
        body = self.streams[0] if len(self.streams) == 1 else "concat:" + ",".join(self.streams)
        return body + ("+tv" if self.with_tv else "")


def compute_features(audio, recipe: Recipe | str, inversion: ModelCheckpoint | None = None) -> FeatureMatrix:
    recipe = Recipe.parse(recipe) if isinstance(recipe, str) else recipe
    if recipe.with_tv and inversion is None:
        raise BadConfigError(f"recipe {recipe} needs an inversion checkpoint")
    out = None
    for name in recipe.streams:
        f = extract(audio, name)
        out = f if out is None else concat(out, f)
    if recipe.with_tv:
        out = concat(out, estimate_tvs(mfcc39(audio), inversion))
    out.meta["recipe"] = str(recipe)
    return out


def _work(args):
    path, recipe, inversion = args
    return compute_features(load_wav(path), recipe, inversion)


def worker_count() -> int:
    env = os.environ.get("XPRS_THREADS")
    return max(1, int(env)) if env else max(1, os.cpu_count() or 1)


def extract_corpus(manifest_path, queries, recipe: Recipe | str, inversion: ModelCheckpoint | None = None,
                   workers: int | None = None) -> dict:
    """``{query id: FeatureMatrix}``; results do not depend on the worker count."""
    recipe = Recipe.parse(recipe) if isinstance(recipe, str) else recipe
    jobs = [(resolve_audio(manifest_path, q), recipe, inversion) for q in queries]
    workers = workers or worker_count()
    if workers == 1 or len(jobs) < 2:
        results = [_work(j) for j in jobs]
    else:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_work, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    return {q.id: f for q, f in zip(queries, results)}
