import numpy as np
import pytest

from vocalexpr.articulatory import (
    TV_NAMES,
    ForwardMapOracle,
    default_inversion_config,
    estimate_tvs,
    inversion_input,
    train_inversion,
    tv_matrix,
    tv_valence_correlation,
    tv_variation,
)
from vocalexpr.errors import EmptyDatasetError, ShapeMismatchError, TooFewQueriesError, WrongKindError, WrongModelKindError
from vocalexpr.features import FeatureKind, FeatureMatrix, read_feat, write_feat
from vocalexpr.nn.checkpoint import checkpoint_from_net, net_from_checkpoint
from vocalexpr.nn.lstm import LSTMConfig, LSTMNet
from vocalexpr.nn.trainer import TrainConfig


def _pearson_oracle(x, y):
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(x, y))
    return cov / (sum((a - mx) ** 2 for a in x) * sum((b - my) ** 2 for b in y)) ** 0.5


def _spliced(pairs):
    return [(inversion_input(x), y) for x, y in pairs]


@pytest.fixture(scope="module")
def small_model():
    pairs = _spliced(ForwardMapOracle(seed=0).dataset(6, seed=1, min_frames=30, max_frames=40))
    cfg = TrainConfig(loss="mse", batch_size=3, learning_rate=3e-3, max_epochs=2)
    return train_inversion(pairs, cfg, hidden_dim=8)


def test_oracle_shapes_and_smoothness():
    x, y = ForwardMapOracle(seed=0).dataset(1, seed=0)[0]
    assert x.kind is FeatureKind.MFCC39 and x.data.shape[1] == 39
    assert y.kind is FeatureKind.TV8 and y.data.shape == (x.n_frames, 8)
    assert y.meta["columns"] == list(TV_NAMES)
    assert np.allclose(y.data.mean(axis=0), 0, atol=1e-9) and np.allclose(y.data.std(axis=0), 1)
    # 6 Hz band limit at 100 frames/s: frame-to-frame steps are small relative to the unit std
    assert np.abs(np.diff(y.data, axis=0)).mean() < 0.2


def test_inversion_input_is_spliced_cmvn():
    x, _ = ForwardMapOracle(seed=0).dataset(1, seed=2, min_frames=20, max_frames=20)[0]
    s = inversion_input(x)
    assert s.kind is FeatureKind.SPLICED429 and s.data.shape == (20, 429)
    assert np.allclose(s.data[:, 5 * 39 : 6 * 39].mean(axis=0), 0, atol=1e-9)
    with pytest.raises(WrongKindError):
        inversion_input(FeatureMatrix(np.zeros((20, 20)), FeatureKind.MFCC20))


def test_train_inversion_rejects_bad_pairs():
    good = (np.zeros((10, 429)), np.zeros((10, 8)))
    with pytest.raises(ShapeMismatchError):
        train_inversion([good, (np.zeros((10, 429)), np.zeros((10, 7)))])
    with pytest.raises(ShapeMismatchError):
        train_inversion([good, (np.zeros((10, 429)), np.zeros((9, 8)))])
    with pytest.raises(ShapeMismatchError):
        train_inversion([good, (np.zeros((10, 39)), np.zeros((10, 8)))])
    with pytest.raises(EmptyDatasetError):
        train_inversion([good])


def test_zero_targets_shrink_output_variance():
    rng = np.random.default_rng(0)
    pairs = [(rng.normal(size=(25, 429)), np.zeros((25, 8))) for _ in range(6)]
    cfg = TrainConfig(loss="mse", batch_size=3, learning_rate=1e-2, max_epochs=5)
    init = LSTMNet.initialize(LSTMConfig(429, 8, None, 8, "linear", "frames"), cfg.seed)
    before = np.var(np.concatenate(init.predict([p[0] for p in pairs])))
    net = net_from_checkpoint(train_inversion(pairs, cfg, hidden_dim=8))
    after = np.var(np.concatenate(net.predict([p[0] for p in pairs])))
    assert after < before


def test_estimate_tvs_shape_determinism_and_kind(small_model):
    assert small_model.kind == "inversion"
    assert small_model.provenance["tv_order"] == list(TV_NAMES)
    x, _ = ForwardMapOracle(seed=0).dataset(1, seed=9, min_frames=17, max_frames=17)[0]
    a = estimate_tvs(x, small_model)
    b = estimate_tvs(x, small_model)
    assert a.kind is FeatureKind.TV8 and a.data.shape == (17, 8)
    assert np.array_equal(a.data, b.data)
    other = checkpoint_from_net(net_from_checkpoint(small_model), "expression")
    with pytest.raises(WrongModelKindError):
        estimate_tvs(x, other)


def test_tv_feat_roundtrip_keeps_column_order(tmp_path):
    tv = tv_matrix(np.random.default_rng(1).normal(size=(12, 8)).astype(np.float32))
    write_feat(tmp_path / "tv.feat", tv)
    back = read_feat(tmp_path / "tv.feat")
    assert back.meta["columns"] == list(TV_NAMES) and np.array_equal(back.data, tv.data)


def test_default_inversion_config_is_mse():
    assert default_inversion_config().loss == "mse"


def test_correlation_identity_and_degenerate():
    rng = np.random.default_rng(2)
    valence = [2.0, 3.5, 5.0, 6.5]
    queries = []
    for v in valence:
        tv = rng.normal(size=(50, 8))
        tv[:, 0] = (tv[:, 0] - tv[:, 0].mean()) / tv[:, 0].std() * v  # GLO std == valence
        queries.append((tv, v))
    rep = tv_valence_correlation(queries)
    assert rep.r["GLO"] == pytest.approx(1.0, abs=1e-12) and rep.n_utterances == 4
    flat = tv_valence_correlation([(tv, 4.0) for tv, _ in queries])
    assert all(flat.degenerate.values()) and all(r == 0.0 for r in flat.r.values())
    with pytest.raises(TooFewQueriesError):
        tv_valence_correlation(queries[:2])


def test_correlation_matches_oracle_and_affine_invariance():
    rng = np.random.default_rng(3)
    queries = [(rng.normal(size=(int(rng.integers(20, 60)), 8)) * rng.uniform(0.5, 2, 8), rng.uniform(1, 7))
               for _ in range(100)]
    rep = tv_valence_correlation(queries)
    stats = [tv_variation(tv) for tv, _ in queries]
    vals = [v for _, v in queries]
    for j, name in enumerate(TV_NAMES):
        assert abs(rep.r[name] - _pearson_oracle([s[j] for s in stats], vals)) < 1e-12
        assert abs(rep.r[name]) <= 1
    scaled = tv_valence_correlation([(tv, 2.5 * v + 1) for tv, v in queries])
    for name in TV_NAMES:
        assert scaled.r[name] == pytest.approx(rep.r[name], abs=1e-12)
