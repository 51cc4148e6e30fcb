import numpy as np
import pytest

from fdpolicy.denoiser import (DenoiserConfig, DenoiserNet, build_denoiser, count_params, ddim_sample,
                               film_modulate, init_denoiser, predict_noise)
from fdpolicy.perception import ConditionPair
from fdpolicy.schedule import make_schedule
from fdpolicy.tensor import Graph, grad_check

from helpers import tiny_denoiser

# pinned so silent architecture drift shows up; recompute deliberately when the net changes
GOLDEN_COUNTS = {
    ("mid", 2): 1_812_738,
    ("none", 2): 1_254_274,
    ("early", 3): 1_426_563,
}


def _closed_form_count(cfg):
    c1, c2 = cfg.down_channels
    cb, k, A = cfg.bottleneck_channels, cfg.kernel_size, cfg.action_dim
    fut = cfg.cond_dim_up if cfg.injection == "mid" else 0

    def block(cin, cout, cond, extra=0):
        n = cout * cin * k + cout + 2 * cout + (cond + 1) * 2 * cout
        return n + ((extra + 1) * 2 * cout if extra else 0)

    width = cfg.film_input_width
    n = (width + 1) * (cfg.cond_dim_down + cfg.cond_dim_up)
    n += (cfg.cond_width + 1) * fut if fut else 0
    n += block(A, c1, cfg.cond_dim_down) + c1 * c1 * 3 + c1
    n += block(c1, c2, cfg.cond_dim_down) + c2 * c2 * 3 + c2
    n += block(c2, cb, cfg.cond_dim_up, fut) + cb * c2 * 4 + c2
    n += block(2 * c2, c2, cfg.cond_dim_up, fut) + c2 * c1 * 4 + c1
    n += block(2 * c1, c1, cfg.cond_dim_up, fut) + c1 * A + A
    return n


def _inputs(cfg, rng, B=2):
    return (rng.standard_normal((B, cfg.horizon, cfg.action_dim)),
            rng.standard_normal((B, cfg.cond_width)), rng.standard_normal((B, cfg.cond_width)))


# --- FiLM ---------------------------------------------------------------------------

def test_film_zero_projection_is_identity():
    params = {"film.W": np.zeros((5, 6)), "film.b": np.zeros(6)}
    h = np.random.default_rng(0).standard_normal((3, 4))
    np.testing.assert_array_equal(film_modulate(h, np.ones(5), params), h)


def test_film_arithmetic():
    params = {"film.W": np.zeros((1, 2)), "film.b": np.array([2.0, -1.0])}
    assert film_modulate(np.array([[2.0]]), np.zeros(1), params)[0, 0] == 5.0


def test_film_width_mismatch():
    params = {"film.W": np.zeros((5, 6)), "film.b": np.zeros(6)}
    with pytest.raises(ValueError, match="width"):
        film_modulate(np.zeros((3, 4)), np.ones(4), params)


def test_film_gradcheck():
    rng = np.random.default_rng(1)
    h, cond = rng.standard_normal((2, 3, 4)), rng.standard_normal((2, 5))
    W, b = rng.standard_normal((5, 6)) * 0.3, rng.standard_normal(6) * 0.3

    def build(g):
        ss = g.affine(g.const(cond), g.param("W", W), g.param("b", b))
        s, t = g.split(ss, [3, 3])
        out = g.film(g.param("h", h), s, t)
        return g.sum(g.mul(out, g.const(np.cos(np.arange(24.0)).reshape(2, 3, 4))))

    assert grad_check(build) <= 1e-4


# --- config ---------------------------------------------------------------------------

@pytest.mark.parametrize("kw", [dict(horizon=6), dict(horizon=0), dict(injection="late"),
                                dict(action_dim=0), dict(down_channels=(64,)), dict(groups=7)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        DenoiserConfig(**{"action_dim": 2, **kw})


@pytest.mark.parametrize("injection,action_dim", list(GOLDEN_COUNTS))
def test_parameter_count_is_pinned(injection, action_dim):
    cfg = DenoiserConfig(action_dim=action_dim, injection=injection)
    assert count_params(cfg) == GOLDEN_COUNTS[(injection, action_dim)] == _closed_form_count(cfg)
    assert count_params(cfg) == count_params(DenoiserConfig(action_dim=action_dim, injection=injection))


# --- routing ----------------------------------------------------------------------------

def test_none_injection_ignores_future_condition():
    cfg = tiny_denoiser("none")
    params = init_denoiser(cfg, np.random.default_rng(2))
    a, G, G_hat = _inputs(cfg, np.random.default_rng(3))
    net = DenoiserNet(cfg, params)
    out1 = net(a, G, G_hat).copy()
    out2 = net(a, G, G_hat * 5 + 1)
    assert out1.tobytes() == out2.tobytes()


def test_none_injection_has_exactly_zero_future_gradient():
    cfg = tiny_denoiser("none")
    params = init_denoiser(cfg, np.random.default_rng(4))
    a, G, G_hat = _inputs(cfg, np.random.default_rng(5))
    g = Graph()
    out = build_denoiser(g, g.input("a"), g.input("G"), g.input("G_hat"), cfg, params)
    loss = g.sum(g.mul(out, g.const(np.ones_like(a))))
    g.forward({"a": a, "G": G, "G_hat": G_hat})
    grads = g.backward(loss, wrt=("G_hat", "G"))
    assert np.all(grads["G_hat"] == 0.0)
    assert np.any(grads["G"] != 0.0)


@pytest.mark.parametrize("injection", ["early", "mid"])
def test_injected_modes_feel_the_future_condition(injection):
    cfg = tiny_denoiser(injection)
    params = init_denoiser(cfg, np.random.default_rng(6))
    a, G, G_hat = _inputs(cfg, np.random.default_rng(7))
    net = DenoiserNet(cfg, params)
    out1 = net(a, G, G_hat).copy()
    assert not np.allclose(out1, net(a, G, G_hat + 1.0))


def test_mid_injection_leaves_down_path_bitwise_unchanged():
    cfg = tiny_denoiser("mid")
    params = init_denoiser(cfg, np.random.default_rng(8))
    a, G, G_hat = _inputs(cfg, np.random.default_rng(9))
    net = DenoiserNet(cfg, params)
    net(a, G, G_hat)
    base = {k: v.copy() for k, v in net.activations().items()}
    net(a, G, -3.0 * G_hat)
    moved = net.activations()
    for tap in ("down1", "down2"):
        assert base[tap].tobytes() == moved[tap].tobytes()
    for tap in ("mid", "up1", "up2"):
        assert not np.array_equal(base[tap], moved[tap])


def test_early_injection_changes_down_path():
    cfg = tiny_denoiser("early")
    params = init_denoiser(cfg, np.random.default_rng(10))
    a, G, G_hat = _inputs(cfg, np.random.default_rng(11))
    net = DenoiserNet(cfg, params)
    net(a, G, G_hat)
    before = net.activations()["down1"].copy()
    net(a, G, G_hat + 1.0)
    assert not np.array_equal(before, net.activations()["down1"])


def test_zeroed_bottleneck_leaves_only_skip_paths():
    cfg = tiny_denoiser("mid")
    params = init_denoiser(cfg, np.random.default_rng(12))
    a, G, G_hat = _inputs(cfg, np.random.default_rng(13))
    net = DenoiserNet(cfg, params)
    mid = net.graph.node_id("mid")
    net(a, G, G_hat)
    zeros = np.zeros_like(net.graph.value(mid))
    out1 = net(a, G, G_hat, overrides={mid: zeros}).copy()
    # with the bottleneck forced to zero, weights that only feed it stop mattering
    p2 = dict(params)
    p2["den.pool2.W"] = params["den.pool2.W"] + 1.0
    net2 = DenoiserNet(cfg, p2)
    out2 = net2(a, G, G_hat, overrides={net2.graph.node_id("mid"): zeros})
    assert out1.tobytes() == out2.tobytes()
    assert not np.array_equal(out1, net(a, G, G_hat))


def test_all_zero_parameters_give_zero_output():
    cfg = tiny_denoiser("mid")
    params = {k: np.zeros_like(v) for k, v in init_denoiser(cfg, np.random.default_rng(14)).items()}
    a, G, G_hat = _inputs(cfg, np.random.default_rng(15))
    np.testing.assert_array_equal(DenoiserNet(cfg, params)(a, G, G_hat), 0.0)


def test_missing_future_condition_errors():
    cfg = tiny_denoiser("mid")
    params = init_denoiser(cfg, np.random.default_rng(16))
    g = Graph()
    with pytest.raises(ValueError, match="future"):
        build_denoiser(g, g.input("a"), g.input("G"), None, cfg, params)
    with pytest.raises(ValueError, match="future"):
        predict_noise(np.zeros((cfg.horizon, cfg.action_dim)), ConditionPair(np.zeros(cfg.cond_width), None),
                      cfg, params)


def test_predict_noise_shapes():
    cfg = tiny_denoiser("none")
    params = init_denoiser(cfg, np.random.default_rng(17))
    cond = ConditionPair(np.zeros(cfg.cond_width), None)
    assert predict_noise(np.zeros((cfg.horizon, cfg.action_dim)), cond, cfg, params).shape == (4, 2)
    with pytest.raises(ValueError):
        predict_noise(np.zeros((cfg.horizon + 4, cfg.action_dim)), cond, cfg, params)


@pytest.mark.parametrize("injection", ["none", "early", "mid"])
def test_full_denoiser_gradcheck(injection):
    cfg = DenoiserConfig(action_dim=2, horizon=4, down_channels=(8, 16), bottleneck_channels=16,
                         cond_dim_down=6, cond_dim_up=10, cond_width=5, injection=injection, groups=4)
    params = init_denoiser(cfg, np.random.default_rng(18))
    a, G, G_hat = _inputs(cfg, np.random.default_rng(19))
    target = np.random.default_rng(20).standard_normal(a.shape)

    def build(g):
        out = build_denoiser(g, g.const(a), g.const(G), g.const(G_hat), cfg, params)
        return g.mse(out, g.const(target))

    assert grad_check(build, max_coords=6) <= 1e-4


# --- sampling -----------------------------------------------------------------------------

def test_ddim_sample_deterministic_and_shaped():
    sched = make_schedule("cosine", 100)
    cfg = tiny_denoiser("mid")
    params = init_denoiser(cfg, np.random.default_rng(21))
    G, G_hat = np.random.default_rng(22).standard_normal((2, 3, cfg.cond_width))
    net = DenoiserNet(cfg, params)

    def eps_fn(a, t):
        return net(a, G, G_hat)

    shape = (3, cfg.horizon, cfg.action_dim)
    x = ddim_sample(eps_fn, shape, sched, 10, rng=np.random.default_rng(5))
    y = ddim_sample(eps_fn, shape, sched, 10, rng=np.random.default_rng(5))
    assert x.shape == shape
    assert x.tobytes() == y.tobytes()


def test_ddim_sample_with_exact_noise_oracle_lands_on_target():
    sched = make_schedule("cosine", 100)
    c = np.full((1, 8, 1), 0.37)

    def eps_fn(a, t):
        ab = sched.alpha_bar(t)
        return (a - np.sqrt(ab) * c) / np.sqrt(1 - ab)

    out = ddim_sample(eps_fn, c.shape, sched, 10, rng=np.random.default_rng(0))
    np.testing.assert_allclose(out, c, atol=1e-9)
