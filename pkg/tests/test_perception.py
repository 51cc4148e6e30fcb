import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fdpolicy.params import ParamStore
from fdpolicy.perception import (ConditionPair, Feature, Observation, ObservationPair, PerceptionConfig,
                                 build_constructor, build_frame_encoder, construct_future, encode_future_target,
                                 encode_observation, encode_pair, encode_points, init_perception, make_conditions)
from fdpolicy.policy import PolicyNet
from fdpolicy.tensor import Graph, grad_check, sinusoid_table

from helpers import tiny_denoiser, tiny_perception

CFG = PerceptionConfig()
PARAMS = init_perception(CFG, np.random.default_rng(0))
coords = st.floats(-2, 2, allow_nan=False, width=64)


def _obs(rng, n=16, d=5):
    return Observation(rng.uniform(-1, 1, (n, 3)), rng.uniform(-1, 1, d))


# --- point encoder -------------------------------------------------------------------

def test_point_encoder_output_width():
    out = encode_points(np.random.default_rng(0).standard_normal((512, 3)), PARAMS)
    assert out.shape == (64,)


@given(arrays(np.float64, st.tuples(st.integers(1, 40), st.just(3)), elements=coords), st.randoms(use_true_random=False))
def test_point_encoder_permutation_invariant(points, rnd):
    perm = list(range(len(points)))
    rnd.shuffle(perm)
    assert encode_points(points[perm], PARAMS).tobytes() == encode_points(points, PARAMS).tobytes()


@given(arrays(np.float64, st.tuples(st.integers(1, 20), st.just(3)), elements=coords))
def test_point_encoder_ignores_duplicates(points):
    # a different row count can change the BLAS kernel, hence ulp-level slack
    np.testing.assert_allclose(encode_points(np.concatenate([points, points]), PARAMS),
                               encode_points(points, PARAMS), rtol=0, atol=1e-12)


def test_point_encoder_rejects_empty_and_wrong_width():
    with pytest.raises(ValueError):
        encode_points(np.zeros((0, 3)), PARAMS)
    with pytest.raises(ValueError):
        encode_points(np.zeros((4, 2)), PARAMS)


# --- frame and pair encoders ------------------------------------------------------------

def test_constant_observation_gives_fixed_vector():
    obs = Observation(np.zeros((8, 3)), np.zeros(5))
    a = encode_observation(obs, PARAMS)
    b = encode_observation(Observation(np.zeros((30, 3)), np.zeros(5)), PARAMS)
    np.testing.assert_array_equal(a, b)
    assert a.shape == (64,)


def test_proprio_width_mismatch_errors():
    with pytest.raises(ValueError, match="proprio"):
        encode_observation(Observation(np.zeros((4, 3)), np.zeros(3)), PARAMS)


def test_observation_validation():
    with pytest.raises(ValueError):
        Observation(np.zeros((0, 3)), np.zeros(5))
    with pytest.raises(ValueError):
        Observation(np.full((2, 3), np.nan), np.zeros(5))
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        ObservationPair(_obs(rng, n=4), _obs(rng, n=5))


def test_pair_halves_and_width():
    rng = np.random.default_rng(1)
    a, b = _obs(rng), _obs(rng)
    same = encode_pair(ObservationPair(a, a), PARAMS)
    assert same.vec.shape == (128,) and same.role == "current"
    np.testing.assert_array_equal(same.vec[:64], same.vec[64:])
    ab, ba = encode_pair(ObservationPair(a, b), PARAMS).vec, encode_pair(ObservationPair(b, a), PARAMS).vec
    np.testing.assert_array_equal(ab[:64], ba[64:])
    np.testing.assert_array_equal(ab[64:], ba[:64])


def test_frame_encoder_gradcheck():
    cfg = tiny_perception()
    params = init_perception(cfg, np.random.default_rng(2))
    rng = np.random.default_rng(3)
    pts, prop = rng.uniform(-1, 1, (2, 6, 3)), rng.uniform(-1, 1, (2, 3))

    def build(g):
        out = build_frame_encoder(g, g.const(pts), g.const(prop), params)
        return g.sum(g.mul(out, g.const(np.linspace(-1, 1, 8).reshape(2, 4))))

    assert grad_check(build) <= 1e-4


# --- constructor -----------------------------------------------------------------------

def test_constructor_is_deterministic_and_tagged():
    f = encode_pair(ObservationPair(*(_obs(np.random.default_rng(4)),) * 2), PARAMS)
    a, b = construct_future(f, PARAMS), construct_future(f, PARAMS)
    assert a.role == "constructed" and a.vec.shape == (128,)
    np.testing.assert_array_equal(a.vec, b.vec)


def test_zero_final_layer_returns_bias():
    params = init_perception(CFG, np.random.default_rng(5), zero_constructor_out=True)
    params["cons.2.b"] = np.arange(128.0)
    rng = np.random.default_rng(6)
    for _ in range(3):
        out = construct_future(Feature(rng.standard_normal(128), "current"), params)
        np.testing.assert_array_equal(out.vec, np.arange(128.0))


def test_constructor_role_check():
    with pytest.raises(ValueError, match="current"):
        construct_future(Feature(np.zeros(128), "target"), PARAMS)


def test_constructor_gradcheck():
    cfg = tiny_perception()
    params = init_perception(cfg, np.random.default_rng(7))
    f = np.random.default_rng(8).standard_normal((3, cfg.feature_dim))
    target = np.random.default_rng(9).standard_normal((3, cfg.feature_dim))
    assert grad_check(lambda g: g.mse(build_constructor(g, g.const(f), params), g.const(target))) <= 1e-4


def test_constructor_regresses_constant_target():
    # fixed F_cur, fixed F_gt: a plain gradient loop on the MLP alone must close the gap
    cfg = tiny_perception()
    store = ParamStore(init_perception(cfg, np.random.default_rng(10)))
    f = np.random.default_rng(11).standard_normal((4, cfg.feature_dim))
    target = np.tile(np.random.default_rng(12).standard_normal(cfg.feature_dim), (4, 1))
    g = Graph()
    loss = g.mse(build_constructor(g, g.const(f), store), g.const(target))
    g.forward({})
    start = float(g.value(loss))
    for _ in range(3000):
        g.forward({})
        grads = g.backward(loss)
        store.flat -= 0.05 * store.flatten_grads(grads)
    g.forward({})
    assert float(g.value(loss)) < 1e-4 * start


# --- target path -----------------------------------------------------------------------

def test_target_matches_current_on_static_scene():
    obs = _obs(np.random.default_rng(13))
    f_cur = encode_pair(ObservationPair(obs, obs), PARAMS)
    f_gt = encode_future_target([obs, obs, obs], 1, PARAMS)
    assert f_gt.role == "target"
    np.testing.assert_array_equal(f_gt.vec, f_cur.vec)


def test_target_equals_pair_encoding_of_shifted_frames():
    rng = np.random.default_rng(14)
    frames = [_obs(rng) for _ in range(4)]
    np.testing.assert_array_equal(encode_future_target(frames, 2, PARAMS).vec,
                                  encode_pair(ObservationPair(frames[2], frames[3]), PARAMS).vec)


def test_target_at_episode_end_errors():
    frames = [_obs(np.random.default_rng(15)) for _ in range(3)]
    with pytest.raises(IndexError):
        encode_future_target(frames, 2, PARAMS)


def _train_batch(rng, B=3, N=6, D=3, A=2, H=4):
    return {
        "pts_prev": rng.uniform(-1, 1, (B, N, 3)), "prop_prev": rng.uniform(-1, 1, (B, D)),
        "pts_curr": rng.uniform(-1, 1, (B, N, 3)), "prop_curr": rng.uniform(-1, 1, (B, D)),
        "pts_next": rng.uniform(-1, 1, (B, N, 3)), "prop_next": rng.uniform(-1, 1, (B, D)),
        "next_mask": np.ones(B), "k": rng.integers(1, 11, B),
        "a_noisy": rng.standard_normal((B, H, A)), "eps": rng.standard_normal((B, H, A)),
    }


def test_no_gradient_through_target_path():
    pcfg = tiny_perception()
    dcfg = tiny_denoiser(cond_width=pcfg.cond_dim)
    from fdpolicy.denoiser import init_denoiser
    rng = np.random.default_rng(16)
    store = ParamStore({**init_perception(pcfg, rng), **init_denoiser(dcfg, rng)})
    net = PolicyNet(pcfg, dcfg, store)
    batch = _train_batch(rng)
    _, grads = net.loss_and_grads(batch, beta=1.0, loss="l_cons", wrt=("pts_next", "prop_next", "pts_curr"))
    assert not np.any(grads["pts_next"]) and not np.any(grads["prop_next"])
    assert np.any(grads["pts_curr"])

    detached = PolicyNet(pcfg, dcfg, store, detach_current=True)
    _, grads = detached.loss_and_grads(batch, beta=1.0, loss="l_cons")
    assert all(not np.any(v) for n, v in grads.items() if n.startswith("enc."))
    assert any(np.any(v) for n, v in grads.items() if n.startswith("cons."))


# --- conditions ------------------------------------------------------------------------

def test_conditions_share_embedding():
    rng = np.random.default_rng(17)
    f_cur = Feature(rng.standard_normal(128), "current")
    f_cons = Feature(rng.standard_normal(128), "constructed")
    c = make_conditions(f_cur, f_cons, 37, CFG)
    assert isinstance(c, ConditionPair)
    assert c.G.shape == c.G_hat.shape == (192,)
    np.testing.assert_array_equal(c.G[128:], c.G_hat[128:])
    np.testing.assert_array_equal(c.G[:128], f_cur.vec)


def test_step_zero_embedding_is_sin0_cos0():
    c = make_conditions(Feature(np.zeros(128), "current"), Feature(np.zeros(128), "constructed"), 0, CFG)
    np.testing.assert_array_equal(c.G[128:], sinusoid_table(CFG.max_step, 64)[0])
    np.testing.assert_array_equal(c.G[128:160], 0.0)
    np.testing.assert_array_equal(c.G[160:], 1.0)


@pytest.mark.parametrize("k", [-1, 101])
def test_condition_step_out_of_range(k):
    z = Feature(np.zeros(128), "current")
    with pytest.raises(ValueError):
        make_conditions(z, Feature(np.zeros(128), "constructed"), k, CFG)
