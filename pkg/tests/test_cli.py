import json
import subprocess
import sys

import pytest

from vocalexpr.cli import main
from vocalexpr.features import read_feat
from vocalexpr.nn import ModelCheckpoint

SMALL = [
    "--override", "synth.n=120",
    "--override", "split.ratios=[50,30,10,10]",
    "--override", "expression.hidden_dim=6",
    "--override", "expression.embedding_dim=5",
    "--override", "expression.pretrain_epochs=2",
    "--override", "expression.finetune_epochs=1",
    "--override", "expression.pretrain_lr=0.01",
    "--override", "emotion.hidden_dim=4",
    "--override", "emotion.embedding_dim=3",
    "--override", "emotion.max_epochs=1",
    "--override", "fusion.max_epochs=2",
    "--override", "bow.max_epochs=2",
    "--override", "inversion.n_utts=4",
    "--override", "inversion.max_epochs=1",
]


def run(*argv):
    return main([*argv, *SMALL])


def test_eval_on_separated_scores(tmp_path, capsys):
    (tmp_path / "s.csv").write_text("score,label\n0.9,1\n0.8,1\n0.2,0\n0.1,0\n")
    assert main(["eval", "--scores", str(tmp_path / "s.csv"), "--out", str(tmp_path / "r.json")]) == 0
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc["report"]["eer"] == 0.0 and doc["kind"] == "scores"
    assert main(["roc", "--scores", str(tmp_path / "s.csv"), "--out", str(tmp_path / "roc.csv")]) == 0
    assert (tmp_path / "roc.csv").read_text().startswith("threshold,far,frr\n")


def test_gradcheck_subcommand(capsys):
    assert main(["gradcheck"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 5
    worst = float(out.strip().splitlines()[-1].split("=")[1])
    assert worst < 1e-4


@pytest.mark.parametrize("argv, code", [
    (["eval", "--out", "x.json"], "BadConfig"),
    (["eval", "--scores", "nope.csv", "--out", "x.json"], "IOError"),
    (["extract", "--override", "nosuch.key=1", "--out", "x"], "BadConfig"),
    (["extract", "--feature", "plp", "--manifest", "m.jsonl", "--out", "x"], "BadConfig"),
])
def test_errors_are_one_line_codes(argv, code, tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == 2
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith(f"error={code} ")


def test_console_script_entry_point():
    r = subprocess.run([sys.executable, "-m", "vocalexpr.cli", "gradcheck"], capture_output=True, text=True)
    assert r.returncode == 0 and "max_rel_err=" in r.stdout


@pytest.fixture(scope="module")
def smoke(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    man, split = str(d / "corpus/manifest.jsonl"), str(d / "corpus/split.json")
    assert run("synth", "--seed", "5", "--out", str(d / "corpus")) == 0
    for rec, name in [("concat:mfcc,f0v", "mf"), ("mfcc", "m")]:
        assert run("extract", "--manifest", man, "--feature", rec, "--out", str(d / name)) == 0
    assert run("train-expr", "--manifest", man, "--split", split, "--features", str(d / "mf"),
               "--feature", "concat:mfcc,f0v", "--out", str(d / "expr.xprs")) == 0
    assert run("eval", "--manifest", man, "--split", split, "--features", str(d / "mf"),
               "--model", str(d / "expr.xprs"), "--out", str(d / "expr.json")) == 0
    return d, man, split


def test_smoke_pipeline_report(smoke):
    d, _, _ = smoke
    doc = json.loads((d / "expr.json").read_text())
    assert doc["kind"] == "expression"
    assert all(v is not None for v in doc["report"].values())
    assert doc["run_config"]["synth"]["n"] == 120
    ck = ModelCheckpoint.load(d / "expr.xprs")
    assert ck.provenance["run_config"]["feature"] == "concat:mfcc,f0v"
    assert (d / "expr.xprs.pretrain.log.csv").read_text().startswith("epoch,train_loss,cv_error,lr\n")
    f = read_feat(next((d / "mf").glob("*.feat")))
    assert f.data.shape[1] == 23 and f.meta["run_config"]["feature"] == "concat:mfcc,f0v"


def test_smoke_rest_of_pipeline(smoke):
    d, man, split = smoke
    common = ["--manifest", man, "--split", split]
    assert run("train-emo", *common, "--features", str(d / "m"), "--out", str(d / "emo.xprs")) == 0
    assert run("eval", *common, "--features", str(d / "m"), "--model", str(d / "emo.xprs"),
               "--out", str(d / "emo.json")) == 0
    assert set(json.loads((d / "emo.json").read_text())["report"]) == {"ccc_valence", "ccc_arousal", "n"}
    assert run("embed", *common, "--model", str(d / "expr.xprs"), "--features", str(d / "mf"),
               "--out", str(d / "ae.feat")) == 0
    assert run("embed", *common, "--model", str(d / "emo.xprs"), "--features", str(d / "m"),
               "--out", str(d / "ee.feat")) == 0
    assert run("train-fusion", *common, "--embeddings", str(d / "ae.feat"), str(d / "ee.feat"),
               "--out", str(d / "fus.xprs")) == 0
    assert ModelCheckpoint.load(d / "fus.xprs").arch["sources"] == ["AE:concat:mfcc,f0v", "EE:mfcc"]
    assert run("eval", *common, "--model", str(d / "fus.xprs"), "--embeddings", str(d / "ee.feat"),
               str(d / "ae.feat"), "--out", str(d / "bad.json")) == 2
    assert run("eval", *common, "--model", str(d / "fus.xprs"), "--embeddings", str(d / "ae.feat"),
               str(d / "ee.feat"), "--out", str(d / "fus.json")) == 0
    assert run("train-bow", *common, "--out", str(d / "bow.xprs")) == 0
    assert run("roc", *common, "--model", str(d / "bow.xprs"), "--out", str(d / "bow_roc.csv")) == 0
    assert run("train-inversion", "--out", str(d / "inv.xprs")) == 0
    assert run("extract", "--manifest", man, "--feature", "mfcc+tv", "--inversion", str(d / "inv.xprs"),
               "--out", str(d / "mtv")) == 0
    assert read_feat(next((d / "mtv").glob("*.feat"))).data.shape[1] == 28
    # wrong checkpoint kind for TV estimation
    assert run("extract", "--manifest", man, "--feature", "mfcc+tv", "--inversion", str(d / "emo.xprs"),
               "--out", str(d / "x")) == 2


def test_stages_are_bitwise_repeatable(smoke):
    d, man, split = smoke
    common = ["--manifest", man, "--split", split]
    assert run("extract", "--manifest", man, "--feature", "concat:mfcc,f0v", "--out", str(d / "mf2")) == 0
    for f in (d / "mf").glob("*.feat"):
        assert (d / "mf2" / f.name).read_bytes() == f.read_bytes()
    assert run("train-expr", *common, "--features", str(d / "mf2"), "--feature", "concat:mfcc,f0v",
               "--out", str(d / "expr2.xprs")) == 0
    assert (d / "expr2.xprs").read_bytes() == (d / "expr.xprs").read_bytes()
    assert run("eval", *common, "--features", str(d / "mf"), "--model", str(d / "expr2.xprs"),
               "--out", str(d / "expr2.json")) == 0
    assert (d / "expr2.json").read_bytes() == (d / "expr.json").read_bytes()
