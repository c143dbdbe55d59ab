import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mime_rl.intrinsic import (
    IntrinsicMethod,
    RunningStd,
    VisitCounter,
    count_reward,
    make_frozen_features,
    mime_reward,
    pred_improve_reward,
    rnd_reward,
    surprisal_reward,
    update_world_model,
)
from mime_rl.ndmath import Layer, Mlp, ShapeError, mlp_forward


def linear_net(weight, bias):
    return Mlp([Layer(np.asarray(weight, float), np.asarray(bias, float), "linear")])


def method(kind, obs_dim=2, act_dim=2, seed=0, **kw):
    return IntrinsicMethod(kind, obs_dim, act_dim, rng=np.random.default_rng(seed), **kw)


# --- counts -----------------------------------------------------------------


def test_count_reward_sequence():
    c = VisitCounter(0.05)
    assert [count_reward(c, [0.01, 0.01]) for _ in range(4)] == [1.0, 0.5, 1.0 / 3.0, 0.25]


def test_states_in_one_bin_share_a_count():
    c = VisitCounter(0.05)
    count_reward(c, [0.001, 0.002])
    assert count_reward(c, [0.049, 0.03]) == 0.5
    assert count_reward(c, [0.051, 0.03]) == 1.0
    assert c.count([0.02, 0.02]) == 2


def test_count_method_uses_next_state():
    m = method("count", bin_width=0.05)
    s = np.zeros((2, 2))
    r = m.reward(s, np.zeros((2, 2)), np.array([[0.5, 0.5], [0.5, 0.5]]))
    assert r.tolist() == [1.0, 0.5]


# --- surprisal and MIME -----------------------------------------------------


def mime_with_output(out):
    """A raw-mode MIME method whose model returns a constant."""
    m = method("mime")
    w = np.zeros((2, 4))
    m.world_model = linear_net(w, out)
    return m


def test_surprisal_squared_norm():
    m = method("surprisal")
    m.world_model = linear_net(np.zeros((2, 4)), [0.0, 0.0])
    assert surprisal_reward(m, [0.3, 0.3], [0.0, 0.0], [1.0, 1.0]) == 2.0


def test_surprisal_zero_for_perfect_prediction():
    m = method("surprisal")
    # M(s, a) = s + a
    m.world_model = linear_net(np.hstack([np.eye(2), np.eye(2)]), [0.0, 0.0])
    assert surprisal_reward(m, [0.25, -0.5], [0.01, 0.0], [0.26, -0.5]) == pytest.approx(0.0, abs=1e-30)


def test_surprisal_matches_manual_forward():
    m = method("surprisal", seed=4)
    s, a, s2 = np.array([0.1, -0.2]), np.array([0.01, 0.005]), np.array([0.11, -0.195])
    x = np.concatenate([s, a])
    h = x
    for layer in m.world_model.layers:
        h = layer.weight @ h + layer.bias
        h = np.maximum(h, 0) if layer.activation == "relu" else h
    assert surprisal_reward(m, s, a, s2) == pytest.approx(float(np.sum((h - s2) ** 2)), rel=1e-12)


def test_mime_squared_norm():
    assert mime_reward(mime_with_output([0.5, 0.5]), [0.0, 0.0], [0.003, 0.0]) == 0.5


def test_mime_learned_identity_gives_zero():
    m = method("mime")
    m.world_model = linear_net(np.hstack([np.eye(2), np.zeros((2, 2))]), [0.0, 0.0])
    for a in ([0.01, 0.0], [-0.01, 0.004]):
        assert mime_reward(m, [0.7, -1.2], a) == 0.0


def test_mime_ignores_next_state():
    m = method("mime", seed=1)
    s, a = np.array([[0.2, 0.4]]), np.array([[0.01, -0.01]])
    r1 = m.reward(s, a, np.array([[5.0, 5.0]]))
    r2 = m.reward(s, a, np.array([[-9.0, 0.0]]))
    assert r1.tobytes() == r2.tobytes()


def test_mime_has_a_bottleneck():
    for obs_dim, act_dim in [(2, 2), (3, 2), (8, 4)]:
        m = method("mime", obs_dim, act_dim)
        in_dim = obs_dim + act_dim
        assert min(m.world_model.sizes[1:-1]) <= -(-in_dim // 2)
        assert m.world_model.out_dim == obs_dim
    with pytest.raises(ValueError):
        method("mime", 2, 2, bottleneck=3)


def test_reward_shape_errors():
    with pytest.raises(ShapeError):
        method("mime").reward(np.zeros((1, 3)), np.zeros((1, 2)), None)
    with pytest.raises(ShapeError):
        method("surprisal").reward(np.zeros((1, 2)), np.zeros((1, 2)), np.zeros((1, 5)))


def test_discrete_actions_are_one_hot():
    m = IntrinsicMethod("surprisal", 3, 4, discrete=True, rng=np.random.default_rng(0))
    np.testing.assert_array_equal(m.encode_action([2, 0]), [[0, 0, 1, 0], [1, 0, 0, 0]])
    assert m.world_model.in_dim == 7


# --- prediction improvement --------------------------------------------------


def test_pred_improve_zero_before_k_updates_and_when_equal():
    m = method("pred-improve", k=2)
    s, a, s2 = np.ones((3, 2)), np.zeros((3, 2)), np.zeros((3, 2))
    assert np.all(m.reward(s, a, s2) == 0)
    m.update(s, a, s2)
    assert m.snapshot is None
    m.update(s, a, s2)
    assert m.snapshot is not None
    m.world_model = m.snapshot.copy(frozen=False)
    assert np.all(pred_improve_reward(m, s, a, s2) == 0.0)


def test_pred_improve_fixture_value():
    m = method("pred-improve")
    m.update(np.zeros((1, 2)), np.zeros((1, 2)), np.zeros((1, 2)))
    # snapshot predicts (2, 0), current predicts (1, 0), target 0: 0.5 * (4 - 1)
    m._history[0] = linear_net(np.zeros((2, 4)), [2.0, 0.0])
    m.world_model = linear_net(np.zeros((2, 4)), [1.0, 0.0])
    assert pred_improve_reward(m, [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]) == 1.5


def test_pred_improve_positive_after_learning():
    m = method("pred-improve", learning_rate=1e-2)
    rng = np.random.default_rng(0)
    s = rng.normal(size=(64, 2))
    a = rng.normal(size=(64, 2)) * 0.01
    s2 = s + a
    m.update(s, a, s2)
    assert np.mean(m.reward(s, a, s2)) > 0


# --- RND and frozen features -----------------------------------------------


def test_rnd_zero_when_predictor_matches_target():
    m = method("rnd")
    m.world_model = m.target_net.copy(frozen=False)
    assert rnd_reward(m, [0.4, -0.1]) == 0.0


def test_rnd_ignores_action():
    m = method("rnd", seed=3)
    s2 = np.array([[0.3, 0.9]])
    r1 = m.reward(np.zeros((1, 2)), np.array([[0.01, 0.0]]), s2)
    r2 = m.reward(np.ones((1, 2)), np.array([[-0.01, 0.01]]), s2)
    assert r1.tobytes() == r2.tobytes()


def test_rnd_matches_manual_distance():
    m = method("rnd", seed=5)
    s2 = np.array([0.25, -0.75])
    expected = np.sum((mlp_forward(m.world_model, s2) - mlp_forward(m.target_net, s2)) ** 2)
    assert rnd_reward(m, s2) == pytest.approx(expected, rel=1e-12)


def test_frozen_features_seeded():
    a, b, c = make_frozen_features(1, 3, 16), make_frozen_features(1, 3, 16), make_frozen_features(2, 3, 16)
    assert a.frozen and a.out_dim == 16
    assert a.digest() == b.digest() != c.digest()


@pytest.mark.parametrize("kind", ["surprisal", "mime", "rnd"])
@pytest.mark.parametrize("mode", ["frozen-features", "trainable-model-frozen-target"])
def test_frozen_target_never_changes(kind, mode):
    m = method(kind, feature_mode=mode, feat_dim=6)
    digest = m.target_net.digest()
    rng = np.random.default_rng(0)
    s, a = rng.normal(size=(20, 2)), rng.normal(size=(20, 2))
    probe = mlp_forward(m.target_net, s)
    for _ in range(5):
        m.update(s, a, s + a)
    assert m.target_net.digest() == digest
    assert mlp_forward(m.target_net, s).tobytes() == probe.tobytes()


def test_feature_mode_shapes():
    m = method("mime", feature_mode="frozen-features", feat_dim=16)
    assert m.world_model.in_dim == 16 + 2 and m.world_model.out_dim == 16
    m = method("mime", feature_mode="trainable-model-frozen-target", feat_dim=16)
    assert m.world_model.in_dim == 2 + 2 and m.world_model.out_dim == 16


# --- training ---------------------------------------------------------------


@pytest.mark.parametrize("kind", ["surprisal", "mime", "rnd"])
def test_overfit_single_transition(kind):
    m = method(kind, learning_rate=1e-3)
    s, a, s2 = np.array([[0.3, -0.6]]), np.array([[0.01, 0.01]]), np.array([[0.31, -0.59]])
    for _ in range(5000):
        m.update(s, a, s2)
    assert m.reward(s, a, s2)[0] < 1e-3


def test_update_returns_pre_update_mean_reward():
    m = method("mime", seed=2)
    rng = np.random.default_rng(2)
    s, a = rng.normal(size=(10, 2)), rng.normal(size=(10, 2))
    expected = float(np.mean(m.reward(s, a, None)))
    assert update_world_model(m, s, a, None) == pytest.approx(expected, rel=1e-12)


def test_update_rejects_empty_batch_and_modelless_methods():
    with pytest.raises(ValueError):
        method("mime").update(np.zeros((0, 2)), np.zeros((0, 2)), None)
    with pytest.raises(ValueError):
        method("count").update(np.zeros((1, 2)), np.zeros((1, 2)), np.zeros((1, 2)))


def test_surprisal_decreases_on_fixed_distribution():
    m = method("surprisal", learning_rate=1e-3, seed=7)
    rng = np.random.default_rng(7)
    s = rng.uniform(-1, 1, size=(500, 2))
    a = rng.uniform(-0.01, 0.01, size=(500, 2))
    means = []
    for _ in range(5):
        window = [m.update(s, a, s + a) for _ in range(100)]
        means.append(np.mean(window))
    assert all(x > y for x, y in zip(means, means[1:]))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_squared_error_rewards_non_negative(seed):
    rng = np.random.default_rng(seed)
    s, a, s2 = rng.normal(size=(3, 8, 2))
    for kind in ("surprisal", "mime", "rnd"):
        assert np.all(method(kind, seed=seed).reward(s, a, s2) >= 0)
    r = method("count").reward(s, a, s2)
    assert np.all((r > 0) & (r <= 1))


def test_running_std_matches_numpy():
    rng = np.random.default_rng(0)
    data = rng.normal(3.0, 2.0, size=1000)
    rs = RunningStd()
    for chunk in np.array_split(data, 7):
        rs.update(chunk)
    assert rs.mean == pytest.approx(data.mean(), rel=1e-12)
    assert rs.var == pytest.approx(data.var(), rel=1e-10)


def test_normalization_divides_by_running_std():
    m = method("mime", normalize=True)
    r = m.normalize(np.array([1.0, 3.0]))
    np.testing.assert_allclose(r, np.array([1.0, 3.0]) / np.sqrt(1.0 + 1e-8))
