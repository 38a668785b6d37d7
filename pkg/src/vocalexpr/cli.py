"""``vocalexpr`` command line: synth -> extract -> train -> embed -> fuse -> eval.

Every subcommand resolves one RunConfig (defaults, then ``--config`` JSON,
then ``--override a.b=value`` flags) and stores it in each artifact it
writes. Failures exit nonzero with ``error=<Code> <detail>`` on stderr.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import metrics
from . import models as M
from .articulatory import ForwardMapOracle, inversion_input, train_inversion
from .data import DEFAULT_RATIOS, DatasetSplit, SynthConfig, make_splits, read_manifest, synth_corpus
from .errors import BadConfigError, VocalExprError
from .features import read_feat, write_feat
from .nn import ModelCheckpoint, TrainConfig, gradcheck, write_training_log
from .pipeline import Recipe, extract_corpus

log = logging.getLogger("vocalexpr")

GRADCHECK_TOL = 1e-4


class GradcheckFailedError(VocalExprError):
    code = "GradcheckFailed"


# -- configuration ------------------------------------------------------------

def default_config() -> dict:
    return {
        "seed": 0,
        "feature": "mfcc",
        "synth": {"n": 2000, **asdict(SynthConfig())},
        "split": {"ratios": list(DEFAULT_RATIOS), "seed": 1},
        "inversion": {"n_utts": 50, "oracle_seed": 0, "data_seed": 1, "cv_fraction": 0.1,
                      **{k: v for k, v in asdict(TrainConfig(loss="mse", batch_size=8, learning_rate=3e-3,
                                                             max_epochs=60)).items() if k != "seed"}},
        "expression": {k: v for k, v in asdict(M.ExpressionConfig()).items() if k != "seed"},
        "emotion": {k: v for k, v in asdict(M.EmotionConfig()).items() if k != "seed"},
        "fusion": {k: v for k, v in asdict(M.FusionConfig()).items() if k != "seed"},
        "bow": {**{k: v for k, v in asdict(M.BowConfig()).items() if k != "seed"},
                "hidden_dims": [128, 128], "min_count": 2},
    }


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _merge(base: dict, update: dict, path: str = "") -> None:
    for k, v in update.items():
        where = f"{path}{k}"
        if k not in base:
            raise BadConfigError(f"unknown config key {where!r}")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise BadConfigError(f"config key {where!r} must be an object")
            _merge(base[k], v, where + ".")
        else:
            base[k] = v


def resolve_config(args) -> dict:
    cfg = default_config()
    if args.config:
        try:
            _merge(cfg, json.loads(Path(args.config).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise BadConfigError(f"cannot read config {args.config}: {exc}") from exc
    for item in args.override or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise BadConfigError(f"override {item!r} is not of the form key=value")
        node = cfg
        parts = key.split(".")
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                raise BadConfigError(f"unknown config key {key!r}")
            node = node[p]
        if parts[-1] not in node or isinstance(node[parts[-1]], dict):
            raise BadConfigError(f"unknown config key {key!r}")
        node[parts[-1]] = _parse_value(value)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if getattr(args, "feature", None):
        cfg["feature"] = args.feature
    return cfg


def _build(cls, section: dict, seed: int, **extra):
    names = {f.name for f in fields(cls)}
    kwargs = {k: v for k, v in section.items() if k in names}
    kwargs.update(extra)
    if "seed" in names:
        kwargs["seed"] = seed
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise BadConfigError(f"bad {cls.__name__}: {exc}") from exc


# -- shared helpers -----------------------------------------------------------

def _require(args, *names) -> None:
    missing = [f"--{n.replace('_', '-')}" for n in names if not getattr(args, n, None)]
    if missing:
        raise BadConfigError(f"{args.command} needs {', '.join(missing)}")


def _load_corpus(args):
    _require(args, "manifest")
    queries = read_manifest(args.manifest)
    return queries, {q.id: q for q in queries}


def _load_split(args) -> DatasetSplit:
    _require(args, "split")
    return DatasetSplit.load(args.split)


def _load_features(directory, ids) -> dict:
    d = Path(directory)
    return {i: read_feat(d / f"{i}.feat").data for i in ids}


def _save_checkpoint(ckpt: ModelCheckpoint, out: Path) -> None:
    out.parent.mkdir(parents=True, exist_ok=True)
    ckpt.save(out)
    ModelCheckpoint.load(out)  # validate what was written


def _labels(by_id: dict) -> dict:
    return {i: int(q.label.binary_expressive) for i, q in by_id.items()}


# -- subcommands --------------------------------------------------------------

def cmd_synth(args, cfg):
    _require(args, "out")
    out = Path(args.out)
    sc = _build(SynthConfig, cfg["synth"], cfg["seed"])
    queries = synth_corpus(int(cfg["synth"]["n"]), cfg["seed"], out, sc)
    split = make_splits(queries, cfg["split"]["ratios"], cfg["split"]["seed"])
    split.save(out / "split.json")
    (out / "run_config.json").write_text(json.dumps(cfg, indent=1, sort_keys=True) + "\n")
    print(f"wrote {len(queries)} queries to {out}")


def cmd_extract(args, cfg):
    _require(args, "out")
    recipe = Recipe.parse(cfg["feature"])
    queries, _ = _load_corpus(args)
    inversion = ModelCheckpoint.load(args.inversion).require("inversion") if args.inversion else None
    feats = extract_corpus(args.manifest, queries, recipe, inversion)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for qid, f in feats.items():
        f.meta["run_config"] = cfg
        write_feat(out / f"{qid}.feat", f)
    (out / "run_config.json").write_text(json.dumps(cfg, indent=1, sort_keys=True) + "\n")
    print(f"wrote {len(feats)} {recipe} feature files to {out}")


def cmd_train_inversion(args, cfg):
    _require(args, "out")
    ic = cfg["inversion"]
    oracle = ForwardMapOracle(ic["oracle_seed"])
    pairs = [(inversion_input(f), tv) for f, tv in oracle.dataset(ic["n_utts"], ic["data_seed"])]
    ckpt = train_inversion(pairs, _build(TrainConfig, ic, cfg["seed"]), ic["cv_fraction"])
    ckpt.provenance["run_config"] = cfg
    out = Path(args.out)
    _save_checkpoint(ckpt, out)
    write_training_log(str(out) + ".log.csv", ckpt.provenance["history"])
    print(f"inversion best_cv_error={ckpt.provenance['best_cv_error']:.6f}")


def cmd_train_expr(args, cfg):
    _require(args, "out", "features")
    _, by_id = _load_corpus(args)
    split = _load_split(args)
    ids = split.pretrain + split.balanced_train + split.dev
    ckpt = M.train_expression(
        _load_features(args.features, ids), _labels(by_id), split.pretrain, split.balanced_train, split.dev,
        _build(M.ExpressionConfig, cfg["expression"], cfg["seed"]),
        provenance={"run_config": cfg, "feature": cfg["feature"]},
    )
    out = Path(args.out)
    _save_checkpoint(ckpt, out)
    for stage in ckpt.provenance["stages"]:
        write_training_log(f"{out}.{stage['stage']}.log.csv", stage["history"])
    print(f"expression best_cv_error={ckpt.provenance['best_cv_error']:.6f}")


def cmd_train_emo(args, cfg):
    _require(args, "out", "features")
    _, by_id = _load_corpus(args)
    split = _load_split(args)
    train_ids = split.pretrain + split.balanced_train
    targets = {i: (q.label.valence, q.label.arousal) for i, q in by_id.items()}
    ckpt = M.train_emotion(
        _load_features(args.features, train_ids + split.dev), targets, train_ids, split.dev,
        _build(M.EmotionConfig, cfg["emotion"], cfg["seed"]),
        provenance={"run_config": cfg, "feature": cfg["feature"]},
    )
    out = Path(args.out)
    _save_checkpoint(ckpt, out)
    write_training_log(str(out) + ".log.csv", ckpt.provenance["history"])
    print(f"emotion best_cv_error={ckpt.provenance['best_cv_error']:.6f}")


def cmd_embed(args, cfg):
    _require(args, "out", "model", "features")
    queries, _ = _load_corpus(args)
    ckpt = ModelCheckpoint.load(args.model)
    ids = [q.id for q in queries]
    prefix = "AE" if ckpt.kind == M.EXPRESSION else "EE"
    source = args.source or f"{prefix}:{ckpt.provenance.get('feature', 'unknown')}"
    emb = M.extract_embeddings(ckpt, _load_features(args.features, ids), ids, source)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    emb.save(out)
    f = read_feat(out)
    f.meta["run_config"] = cfg
    write_feat(out, f)
    print(f"wrote {len(ids)} x {emb.dim} {source} embeddings to {out}")


def cmd_train_fusion(args, cfg):
    _require(args, "out", "embeddings")
    _, by_id = _load_corpus(args)
    split = _load_split(args)
    sources = [M.EmbeddingSet.load(p) for p in args.embeddings]
    ckpt = M.train_fusion(
        sources, _labels(by_id), split.pretrain + split.balanced_train, split.dev,
        _build(M.FusionConfig, cfg["fusion"], cfg["seed"]), provenance={"run_config": cfg},
    )
    out = Path(args.out)
    _save_checkpoint(ckpt, out)
    write_training_log(str(out) + ".log.csv", ckpt.provenance["history"])
    print(f"fusion over {ckpt.arch['sources']} best_cv_error={ckpt.provenance['best_cv_error']:.6f}")


def cmd_train_bow(args, cfg):
    _require(args, "out")
    _, by_id = _load_corpus(args)
    split = _load_split(args)
    bc = cfg["bow"]
    vocab = M.bow_fit([by_id[i].transcript for i in split.pretrain], bc["min_count"])
    labels = _labels(by_id)

    def xy(ids):
        return np.array([M.bow_vectorize(vocab, by_id[i].transcript) for i in ids]), [labels[i] for i in ids]

    ckpt = M.train_bow_baseline(
        vocab, xy(split.balanced_train), xy(split.dev),
        _build(M.BowConfig, bc, cfg["seed"], hidden_dims=tuple(bc["hidden_dims"])),
        provenance={"run_config": cfg},
    )
    out = Path(args.out)
    _save_checkpoint(ckpt, out)
    write_training_log(str(out) + ".log.csv", ckpt.provenance["history"])
    print(f"bow vocabulary={vocab.size} best_cv_error={ckpt.provenance['best_cv_error']:.6f}")


def _read_scores_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "score" not in rows[0] or "label" not in rows[0]:
        raise BadConfigError(f"{path}: expected a CSV with 'score' and 'label' columns")
    return np.array([float(r["score"]) for r in rows]), np.array([int(r["label"]) for r in rows])


def _model_scores(args):
    """(scores, labels, kind) for the eval subset, or a scores CSV."""
    if args.scores:
        s, y = _read_scores_csv(args.scores)
        return s, y, "scores"
    _require(args, "model")
    ckpt = ModelCheckpoint.load(args.model)
    _, by_id = _load_corpus(args)
    ids = getattr(_load_split(args), args.subset)
    if ckpt.kind == M.EXPRESSION:
        _require(args, "features")
        feats = _load_features(args.features, ids)
        scores = M.expression_scores(ckpt, [feats[i] for i in ids])
    elif ckpt.kind == M.FUSION:
        _require(args, "embeddings")
        scores = M.fusion_scores(ckpt, [M.EmbeddingSet.load(p) for p in args.embeddings], ids)
    elif ckpt.kind == M.BOW:
        scores = M.bow_scores(ckpt, [by_id[i].transcript for i in ids])
    elif ckpt.kind == M.EMOTION:
        _require(args, "features")
        feats = _load_features(args.features, ids)
        pred = M.predict_emotion(ckpt, [feats[i] for i in ids])
        truth = np.array([(by_id[i].label.valence, by_id[i].label.arousal) for i in ids])
        return pred, truth, M.EMOTION
    else:
        ckpt.require(M.EXPRESSION, M.FUSION, M.BOW, M.EMOTION)
    return scores, np.array([int(by_id[i].label.binary_expressive) for i in ids]), ckpt.kind


def cmd_eval(args, cfg):
    _require(args, "out")
    scores, labels, kind = _model_scores(args)
    if kind == M.EMOTION:
        report = {
            "ccc_valence": metrics.ccc(scores[:, 0], labels[:, 0]),
            "ccc_arousal": metrics.ccc(scores[:, 1], labels[:, 1]),
            "n": int(len(labels)),
        }
    else:
        report = metrics.evaluate_scores(scores, labels, include_roc=False).to_dict()
        del report["roc"]
    doc = {"kind": kind, "report": report, "run_config": cfg}
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    print(" ".join(f"{k}={v:.6g}" for k, v in report.items() if isinstance(v, float)))


def cmd_roc(args, cfg):
    _require(args, "out")
    scores, labels, kind = _model_scores(args)
    if kind == M.EMOTION:
        raise BadConfigError("ROC needs a detection model, not an emotion regressor")
    metrics.write_roc_csv(args.out, metrics.roc_curve(scores, labels))
    print(f"eer={metrics.eer(scores, labels):.6g}")


def cmd_gradcheck(args, cfg):
    worst = 0.0
    failed = []
    for name, (net, x, y) in M.gradcheck_instances(cfg["seed"]).items():
        err = max(gradcheck(net, x, y).values())
        worst = max(worst, err)
        ok = err < GRADCHECK_TOL
        print(f"{name} max_rel_err={err:.3e} {'PASS' if ok else 'FAIL'}")
        if not ok:
            failed.append(name)
    print(f"max_rel_err={worst:.3e}")
    if failed:
        raise GradcheckFailedError(f"relative error >= {GRADCHECK_TOL} in {', '.join(failed)}")


COMMANDS = {
    "synth": cmd_synth,
    "extract": cmd_extract,
    "train-inversion": cmd_train_inversion,
    "train-expr": cmd_train_expr,
    "train-emo": cmd_train_emo,
    "embed": cmd_embed,
    "train-fusion": cmd_train_fusion,
    "train-bow": cmd_train_bow,
    "eval": cmd_eval,
    "roc": cmd_roc,
    "gradcheck": cmd_gradcheck,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON RunConfig file")
    common.add_argument("--override", action="append", metavar="KEY=VALUE",
                        help="set a config field by dotted path; VALUE is parsed as JSON when possible")
    common.add_argument("--seed", type=int)
    common.add_argument("--manifest", help="corpus manifest.jsonl")
    common.add_argument("--split", help="split.json written by synth")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("--feature", help="feature recipe, e.g. mfcc, concat:mfcc,f0v or concat:mfcc,f0v+tv")
    common.add_argument("--features", help="directory of per-query .feat files")
    common.add_argument("--inversion", help="inversion checkpoint (for +tv recipes)")
    common.add_argument("--model", help="XPRS checkpoint")
    common.add_argument("--embeddings", nargs="+", help="embedding .feat files, in fusion source order")
    common.add_argument("--source", help="embedding source name (default AE:<feature> or EE:<feature>)")
    common.add_argument("--scores", help="CSV with score,label columns (eval/roc without a model)")
    common.add_argument("--subset", default="eval", choices=["pretrain", "balanced_train", "dev", "eval"])
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="vocalexpr", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = resolve_config(args)
        COMMANDS[args.command](args, copy.deepcopy(cfg))
    except VocalExprError as exc:
        print(f"error={exc.code} {exc}", file=sys.stderr)
        return 2
    except (OSError, KeyError) as exc:
        print(f"error=IOError {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error=InvalidInput {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
