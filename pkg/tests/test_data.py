import itertools
import json
from collections import Counter

import numpy as np
import pytest
from scipy.stats import chi2_contingency

from vocalexpr.data import (
    CAT_MILD_NO,
    CAT_MILD_YES,
    CAT_NO,
    CAT_YES,
    EXPR_VOTES,
    NO,
    NOT_SURE,
    YES,
    GradedQuery,
    aggregate_expression,
    filter_all_not_sure,
    make_splits,
    read_manifest,
    resolve_audio,
    scale_emotion,
    synth_corpus,
    write_manifest,
)
from vocalexpr.dsp import load_wav
from vocalexpr.errors import BadManifestError, BadVoteCountError, BadVoteValueError, InsufficientDataError
from vocalexpr.features import f0v

from oracles import category_matches, category_oracle, emotion_scale_oracle, grade_oracle


def test_aggregate_examples():
    assert aggregate_expression((YES, YES, NO, NOT_SURE)) == (CAT_YES, 1.25, True)
    assert aggregate_expression((YES, NOT_SURE, NOT_SURE, NO)) == (CAT_MILD_YES, 1.0, False)
    assert aggregate_expression((NO, NO, NO, NO)) == (CAT_NO, 0.0, False)
    # overlap: Yes wins over No
    assert aggregate_expression((YES, YES, NO, NO))[0] == CAT_YES


def test_aggregate_all_81_vote_tuples():
    for votes in itertools.product(EXPR_VOTES, repeat=4):
        assert category_matches(votes), votes
        cat, grade, expressive = aggregate_expression(votes)
        assert cat == category_oracle(votes)
        assert grade == grade_oracle(votes)
        assert grade * 4 == int(grade * 4)
        assert expressive == (cat == CAT_YES)
        for perm in itertools.permutations(votes):
            assert aggregate_expression(perm) == (cat, grade, expressive)


def test_aggregate_errors():
    with pytest.raises(BadVoteCountError):
        aggregate_expression((YES, NO, NO))
    with pytest.raises(BadVoteValueError):
        aggregate_expression((YES, NO, NO, "maybe"))


def test_scale_emotion():
    assert scale_emotion((1, 1, 1, 1)) == 1.0
    assert scale_emotion((3, 3, 3, 3)) == 7.0
    assert scale_emotion((1, 2, 2, 3)) == 4.0
    for votes in itertools.product((1, 2, 3), repeat=4):
        base = scale_emotion(votes)
        assert abs(base - emotion_scale_oracle(votes)) < 1e-12
        assert 1.0 <= base <= 7.0
        for i in range(4):
            if votes[i] < 3:
                bumped = list(votes)
                bumped[i] += 1
                assert scale_emotion(bumped) > base
    for bad in [(0, 1, 1, 1), (1, 1, 1, 4), (1, 1, 1, True)]:
        with pytest.raises(BadVoteValueError):
            scale_emotion(bad)
    with pytest.raises(BadVoteCountError):
        scale_emotion((1, 2))


def _q(i, expr):
    return GradedQuery(f"q{i}", f"wav/q{i}.wav", "", expr, (2, 2, 2, 2), (2, 2, 2, 2))


def test_filter_all_not_sure():
    a = _q(0, (NOT_SURE,) * 4)
    b = _q(1, (NOT_SURE, NOT_SURE, NOT_SURE, NO))
    assert filter_all_not_sure([a, b]) == [b]
    assert filter_all_not_sure([]) == []


def _population(n_pos=300, n_neg=700):
    qs = [_q(i, (YES, YES, YES, NO)) for i in range(n_pos)]
    qs += [_q(n_pos + i, (NO, NO, NO, YES)) for i in range(n_neg)]
    return qs


def test_splits_balanced_disjoint_deterministic():
    qs = _population()
    s = make_splits(qs, (60, 30, 4, 3), seed=7)
    labels = {q.id: q.label.binary_expressive for q in qs}
    pos = sum(labels[i] for i in s.balanced_train)
    assert abs(pos - (len(s.balanced_train) - pos)) <= 1
    groups = [set(s.pretrain), set(s.balanced_train), set(s.dev), set(s.eval)]
    for a, b in itertools.combinations(groups, 2):
        assert not a & b
    assert set().union(*groups) <= set(labels)
    assert make_splits(qs, (60, 30, 4, 3), seed=7) == s
    assert make_splits(qs, (60, 30, 4, 3), seed=8) != s


def test_split_roundtrip_and_errors(tmp_path):
    s = make_splits(_population(), seed=0)
    s.save(tmp_path / "split.json")
    assert type(s).load(tmp_path / "split.json") == s
    with pytest.raises(InsufficientDataError):
        make_splits([_q(i, (NO,) * 4) for i in range(50)])


def test_manifest_roundtrip_and_rejects(tmp_path):
    qs = [_q(0, (YES, NO, NO, NO)), _q(1, (YES, YES, NO, NO))]
    write_manifest(tmp_path / "m.jsonl", qs)
    assert read_manifest(tmp_path / "m.jsonl") == qs
    assert resolve_audio(tmp_path / "m.jsonl", qs[0]) == tmp_path / "wav/q0.wav"
    bad = qs[0].to_json()
    bad["expr_votes"] = ["yes", "no"]
    (tmp_path / "bad.jsonl").write_text(json.dumps(bad) + "\n")
    with pytest.raises(BadVoteCountError):
        read_manifest(tmp_path / "bad.jsonl")
    del bad["expr_votes"]
    (tmp_path / "bad.jsonl").write_text(json.dumps(bad) + "\n")
    with pytest.raises(BadManifestError):
        read_manifest(tmp_path / "bad.jsonl")


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    return out, synth_corpus(300, seed=3, out_dir=out)


def test_synth_is_deterministic(corpus, tmp_path):
    out, qs = corpus
    again = tmp_path / "again"
    synth_corpus(300, seed=3, out_dir=again)
    assert (again / "manifest.jsonl").read_bytes() == (out / "manifest.jsonl").read_bytes()
    for q in qs[:40]:
        assert (again / q.audio).read_bytes() == (out / q.audio).read_bytes()


def test_synth_audio_and_labels(corpus):
    out, qs = corpus
    assert read_manifest(out / "manifest.jsonl") == qs
    for q in qs[:20]:
        a = load_wav(out / q.audio)
        assert 1.0 <= a.duration_s <= 3.0 + 1e-9
    labels = [q.label.binary_expressive for q in qs]
    assert 0 < sum(labels) < len(labels)
    with pytest.raises(ValueError):
        synth_corpus(99, seed=0, out_dir=out / "tiny")


def test_expressive_pitch_varies_twice_as_much(corpus):
    out, qs = corpus
    stds = {True: [], False: []}
    for q in qs:
        f = f0v(load_wav(out / q.audio)).data
        voiced = f[:, 2] > 0.5
        if voiced.sum() > 10:
            stds[q.label.binary_expressive].append(np.std(f[voiced, 0]))
    assert np.mean(stds[True]) > 2 * np.mean(stds[False])


def test_transcripts_independent_of_class(corpus):
    _, qs = corpus
    counts = {True: Counter(), False: Counter()}
    for q in qs:
        counts[q.label.binary_expressive].update(q.transcript.split())
    vocab = sorted(set(counts[True]) | set(counts[False]))
    table = np.array([[counts[c][w] for w in vocab] for c in (True, False)])
    table = table[:, table.min(axis=0) >= 5]  # chi-square needs reasonable cell counts
    assert table.shape[1] >= 5
    assert chi2_contingency(table).pvalue > 0.01
