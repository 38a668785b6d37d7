import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vocalexpr import metrics
from vocalexpr.errors import DegenerateVarianceError, LengthMismatchError, OneClassOnlyError, TooShortError

from oracles import ccc_oracle, counts_oracle, eer_oracle, pearson_oracle, roc_oracle


def _random_scored(rng, n=None):
    n = n or int(rng.integers(4, 60))
    labels = rng.random(n) < 0.4
    labels[0], labels[1] = True, False
    # coarse grid so that ties are common
    scores = np.round(rng.normal(size=n) + labels * rng.uniform(0, 2), int(rng.integers(0, 3)))
    return scores.tolist(), labels.tolist()


# -- worked examples -----------------------------------------------------------

def test_worked_eer_example_is_exactly_one_third():
    scores = [0.9, 0.8, 0.4, 0.1, 0.2, 0.6]
    labels = [1, 1, 1, 0, 0, 0]
    assert metrics.eer(scores, labels) == 1 / 3
    assert 0.4 < metrics.eer_threshold(scores, labels) <= 0.6


def test_separated_and_tied_scores():
    assert metrics.eer([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0]) == 0.0
    roc = metrics.roc_curve([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0])
    assert any(far == 0 and frr == 0 for _, far, frr in roc)
    tied = metrics.roc_curve([0.5] * 4, [1, 0, 1, 0])
    assert {(far, frr) for _, far, frr in tied} == {(1.0, 0.0), (0.0, 1.0)}


def test_chance_labels_give_chance_eer():
    rng = np.random.default_rng(0)
    e = metrics.eer(rng.random(10_000), rng.random(10_000) < 0.5)
    assert 0.47 <= e <= 0.53


def test_wa_uwa_f_worked_examples():
    labels = [True] * 90 + [False] * 10
    pred = [True] * 81 + [False] * 9 + [False] * 5 + [True] * 5
    wa, uwa, _ = metrics.wa_uwa_f(pred, labels)
    assert wa == pytest.approx(0.86) and uwa == pytest.approx(0.70)
    # TP 2, FP 1, FN 1, TN 6
    pred = [1, 1, 1, 0] + [0] * 6
    labels = [1, 1, 0, 1] + [0] * 6
    assert metrics.wa_uwa_f(pred, labels)[2] == pytest.approx(2 / 3)
    assert metrics.wa_uwa_f([1, 0, 1], [1, 0, 1]) == (1.0, 1.0, 1.0)


def test_ccc_and_pearson_examples():
    x = np.array([1.0, 2.0, 4.0, 7.0])
    assert metrics.ccc(x, x) == pytest.approx(1.0)
    assert metrics.ccc(x - x.mean(), -(x - x.mean())) == pytest.approx(-1.0)
    assert metrics.ccc(x, np.full(4, 3.0)) == 0.0
    assert metrics.pearson(x, 2 * x + 3) == pytest.approx(1.0)
    assert metrics.pearson(x, -x) == pytest.approx(-1.0)


def test_errors():
    with pytest.raises(OneClassOnlyError):
        metrics.eer([0.1, 0.2], [1, 1])
    with pytest.raises(LengthMismatchError):
        metrics.eer([0.1, 0.2], [1, 0, 1])
    with pytest.raises(TooShortError):
        metrics.pearson([1.0, 2.0], [2.0, 1.0])
    with pytest.raises(DegenerateVarianceError):
        metrics.pearson([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])


# -- oracle sweeps ---------------------------------------------------------------

def test_roc_and_eer_match_oracles_on_1000_inputs():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        s, y = _random_scored(rng)
        assert metrics.roc_curve(s, y) == roc_oracle(s, y)
        assert abs(metrics.eer(s, y) - eer_oracle(s, y)) < 1e-9


def test_counts_match_oracle_on_1000_inputs():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        n = int(rng.integers(2, 50))
        y = rng.random(n) < 0.5
        y[0], y[1] = True, False
        p = rng.random(n) < 0.5
        tp, fp, fn, tn = counts_oracle(p, y)
        wa, uwa, f = metrics.wa_uwa_f(p, y)
        assert wa == (tp + tn) / n
        assert uwa == 0.5 * (tp / (tp + fn) + tn / (tn + fp))
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn)
        assert f == (2 * prec * rec / (prec + rec) if prec + rec else 0.0)


def test_ccc_pearson_match_oracles_on_1000_inputs():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        n = int(rng.integers(3, 200))
        x = rng.normal(size=n)
        y = 0.5 * x + rng.normal(size=n) + rng.normal()
        assert abs(metrics.pearson(x, y) - pearson_oracle(x.tolist(), y.tolist())) < 1e-12
        assert abs(metrics.ccc(x, y) - ccc_oracle(x.tolist(), y.tolist())) < 1e-12


# -- properties -------------------------------------------------------------------

scored = st.integers(0, 2**32 - 1).map(lambda seed: _random_scored(np.random.default_rng(seed)))


@settings(max_examples=200, deadline=None)
@given(scored)
def test_eer_rank_invariance_and_symmetry(data):
    s, y = data
    s = np.array(s)
    e = metrics.eer(s, y)
    assert 0.0 <= e <= 1.0
    assert metrics.eer(np.exp(s) * 3 + 1, y) == pytest.approx(e, abs=1e-12)
    assert metrics.eer(-s, [not v for v in y]) == pytest.approx(e, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_ccc_bounded_by_abs_pearson(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=20)
    y = rng.normal(size=20) * rng.uniform(0.1, 3) + rng.normal() + x * rng.normal()
    assert abs(metrics.ccc(x, y)) <= abs(metrics.pearson(x, y)) + 1e-12


def test_wa_equals_uwa_on_balanced_classes():
    rng = np.random.default_rng(4)
    y = np.array([True] * 25 + [False] * 25)
    p = rng.random(50) < 0.5
    wa, uwa, _ = metrics.wa_uwa_f(p, y)
    assert wa == pytest.approx(uwa, abs=1e-15)


def test_report_and_roc_csv(tmp_path):
    r = metrics.evaluate_scores([0.9, 0.8, 0.4, 0.1, 0.2, 0.6], [1, 1, 1, 0, 0, 0])
    assert r.eer == 1 / 3 and r.n_pos == 3 and r.n_neg == 3
    assert None not in (r.wa, r.uwa, r.f_score, r.wa_at_half, r.uwa_at_half, r.f_score_at_half)
    metrics.write_roc_csv(tmp_path / "roc.csv", r.roc)
    lines = (tmp_path / "roc.csv").read_text().splitlines()
    assert lines[0] == "threshold,far,frr" and len(lines) == len(r.roc) + 1
