import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fdpolicy.tensor import (Graph, GraphError, NonFiniteError, ShapeError, dumps_array, grad_check,
                             load_array, loads_array, save_array, sinusoid_table)

from helpers import op_grad_error

finite = st.floats(-5, 5, allow_nan=False, width=64)


def _eval(build, inputs=None):
    g = Graph()
    out = build(g)
    g.forward(inputs or {})
    return g.value(out)


# --- concrete values ------------------------------------------------------------

def test_affine_identity_passes_input_through():
    x = np.array([[1.0, 2.0]])
    y = _eval(lambda g: g.affine(g.const(x), g.const(np.eye(2)), g.const(np.zeros(2))))
    np.testing.assert_array_equal(y, x)


def test_relu_clamps_negatives():
    y = _eval(lambda g: g.relu(g.const(np.array([[-1.0, 0.0, 2.5]]))))
    np.testing.assert_array_equal(y, [[0.0, 0.0, 2.5]])


def test_max_pool_takes_channelwise_max():
    y = _eval(lambda g: g.max_pool_set(g.const(np.array([[[1.0, 5.0], [4.0, 2.0]]]))))
    np.testing.assert_array_equal(y, [[4.0, 5.0]])


def test_mse_gradient_matches_hand_value():
    g = Graph()
    x = g.param("x", np.array([[3.0]]))
    loss = g.mse(x, g.const(np.zeros((1, 1))))
    g.forward({})
    assert float(g.value(loss)) == 9.0
    assert g.backward(loss)["x"][0, 0] == pytest.approx(6.0)


def test_sum_of_linear_map_gradient_is_input_outer_ones():
    x = np.array([[1.0, -2.0, 0.5]])
    g = Graph()
    W = g.param("W", np.ones((3, 2)))
    loss = g.sum(g.affine(g.const(x), W, g.const(np.zeros(2))))
    g.forward({})
    np.testing.assert_allclose(g.backward(loss)["W"], np.repeat(x.T, 2, axis=1))


def test_masked_mse_ignores_zero_weight_rows():
    a = np.array([[1.0], [100.0]])
    y = _eval(lambda g: g.mse(g.const(a), g.const(np.zeros((2, 1))), mask=g.const(np.array([1.0, 0.0]))))
    assert float(y) == 1.0
    y0 = _eval(lambda g: g.mse(g.const(a), g.const(np.zeros((2, 1))), mask=g.const(np.zeros(2))))
    assert float(y0) == 0.0


def test_film_applies_one_plus_scale():
    h = np.ones((1, 2, 3))
    y = _eval(lambda g: g.film(g.const(h), g.const(np.array([[1.0, -1.0]])), g.const(np.array([[0.5, 0.0]]))))
    np.testing.assert_allclose(y[0, 0], 2.5)
    np.testing.assert_allclose(y[0, 1], 0.0)


def test_sinusoid_rows_come_from_table():
    table = sinusoid_table(10, 6)
    y = _eval(lambda g: g.sinusoid(g.input("k"), 6, 10), {"k": np.array([0, 7])})
    np.testing.assert_array_equal(y, table[[0, 7]])
    assert table.shape == (11, 6)


# --- analytic gradients -----------------------------------------------------------

def test_mlp_gradcheck():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((4, 3))
    t = rng.standard_normal((4, 2))
    init = {f"W{i}": rng.standard_normal(s) * 0.5 for i, s in enumerate([(3, 5), (5, 5), (5, 2)])}
    init.update({f"b{i}": rng.standard_normal(s[1]) * 0.1 for i, s in enumerate([(3, 5), (5, 5), (5, 2)])})

    def build(g):
        h = g.const(x)
        for i in range(3):
            h = g.affine(h, g.param(f"W{i}", init[f"W{i}"]), g.param(f"b{i}", init[f"b{i}"]))
            if i < 2:
                h = g.mish(h)
        return g.mse(h, g.const(t))

    assert grad_check(build) <= 1e-6


def test_quadratic_form_gradcheck():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((4, 4))
    A = A @ A.T
    x0 = rng.standard_normal((1, 4))

    def build(g):
        x = g.param("x", x0)
        return g.sum(g.mul(g.affine(x, g.const(A), g.const(np.zeros(4))), x))

    assert grad_check(build) <= 1e-8


def test_constant_function_has_zero_gradient():
    def build(g):
        g.param("unused", np.ones(3))
        return g.sum(g.const(np.array([[2.0]])))

    g = Graph()
    out = build(g)
    g.forward({})
    np.testing.assert_array_equal(g.backward(out)["unused"], 0.0)
    assert grad_check(build) == 0.0


def _random_op(kind, rng):
    """A graph fragment for one op with random shapes; params carry the values under test."""
    B = int(rng.integers(1, 3))
    C = int(rng.integers(1, 4))
    L = int(rng.integers(2, 6))

    rng_vals: dict = {}

    def val(name, shape, scale=1.0):
        rng_vals[name] = rng.standard_normal(shape) * scale
        return name

    if kind == "affine":
        d_in, d_out = C + 1, int(rng.integers(1, 4))
        names = val("x", (B, d_in)), val("W", (d_in, d_out)), val("b", (d_out,))
        return lambda g: g.affine(*[g.param(n, rng_vals[n]) for n in names])
    if kind == "conv1d":
        k = int(rng.choice([1, 3]))
        stride = int(rng.choice([1, 2]))
        cout = int(rng.integers(1, 4))
        names = val("x", (B, C, L + 2)), val("W", (cout, C, k)), val("b", (cout,))
        return lambda g: g.conv1d(*[g.param(n, rng_vals[n]) for n in names], stride=stride)
    if kind == "conv_transpose1d":
        cout = int(rng.integers(1, 4))
        names = val("x", (B, C, L)), val("W", (C, cout, 4)), val("b", (cout,))
        return lambda g: g.conv_transpose1d(*[g.param(n, rng_vals[n]) for n in names])
    if kind in ("add", "sub", "mul"):
        shape = (B, C, L)
        names = val("a", shape), val("b", shape)
        return lambda g: getattr(g, kind)(*[g.param(n, rng_vals[n]) for n in names])
    if kind == "scale":
        c = float(rng.uniform(-3, 3))
        val("x", (B, C))
        return lambda g: g.scale(g.param("x", rng_vals["x"]), c)
    if kind in ("relu", "mish"):
        val("x", (B, C, L))
        # keep relu inputs away from the kink so central differences are exact
        if kind == "relu":
            x = rng_vals["x"]
            rng_vals["x"] = np.where(np.abs(x) < 1e-3, 0.5, x)
        return lambda g: getattr(g, kind)(g.param("x", rng_vals["x"]))
    if kind == "group_norm":
        groups = int(rng.choice([1, 2]))
        chans = 2 * C
        names = val("x", (B, chans, L)), val("gamma", (chans,)), val("beta", (chans,))
        return lambda g: g.group_norm(*[g.param(n, rng_vals[n]) for n in names], groups=groups)
    if kind == "concat":
        axis = int(rng.integers(0, 2))
        names = val("a", (B, C)), val("b", (B, C) if axis == 1 else (B + 1, C))
        return lambda g: g.concat([g.param(n, rng_vals[n]) for n in names], axis=axis)
    if kind == "slice":
        val("x", (B, C + 2))
        return lambda g: g.slice(g.param("x", rng_vals["x"]), 1, C + 1)
    if kind == "reshape":
        val("x", (B, C, L))
        return lambda g: g.reshape(g.param("x", rng_vals["x"]), (C * L,))
    if kind == "transpose":
        val("x", (B, C, L))
        return lambda g: g.transpose(g.param("x", rng_vals["x"]), (0, 2, 1))
    if kind == "max_pool_set":
        val("x", (B, L, C))
        return lambda g: g.max_pool_set(g.param("x", rng_vals["x"]))
    if kind == "mse":
        names = val("a", (B, C)), val("b", (B, C))
        return lambda g: g.mse(*[g.param(n, rng_vals[n]) for n in names])
    if kind == "mse_masked":
        names = val("a", (B, C)), val("b", (B, C))
        mask = rng.uniform(0.1, 1.0, B)
        return lambda g: g.mse(*[g.param(n, rng_vals[n]) for n in names], mask=g.const(mask))
    if kind == "sum":
        val("x", (B, C, L))
        return lambda g: g.sum(g.param("x", rng_vals["x"]))
    if kind == "film":
        names = val("h", (B, C, L)), val("s", (B, C)), val("t", (B, C))
        return lambda g: g.film(*[g.param(n, rng_vals[n]) for n in names])
    if kind == "stop_gradient":
        names = val("x", (B, C)), val("y", (B, C))
        # the detached branch is frozen: finite differences would see it, backward must not
        return lambda g: g.add(g.stop_gradient(g.param("x", rng_vals["x"], trainable=False)),
                               g.param("y", rng_vals["y"]))
    raise AssertionError(kind)


OPS = ["affine", "conv1d", "conv_transpose1d", "add", "sub", "mul", "scale", "relu", "mish",
       "group_norm", "concat", "slice", "reshape", "transpose", "max_pool_set", "mse", "mse_masked",
       "sum", "film", "stop_gradient"]


@pytest.mark.parametrize("kind", OPS)
def test_every_op_gradient_over_random_trials(kind):
    rng = np.random.default_rng(OPS.index(kind))
    worst = max(op_grad_error(_random_op(kind, rng)) for _ in range(100))
    assert worst <= 1e-4


def test_stop_gradient_blocks_flow():
    g = Graph()
    x = g.param("x", np.ones((1, 2)))
    out = g.sum(g.stop_gradient(x))
    g.forward({})
    np.testing.assert_array_equal(g.backward(out)["x"], 0.0)


def test_shared_parameter_accumulates():
    g = Graph()
    x = g.param("x", np.array([[2.0]]))
    out = g.sum(g.mul(x, x))
    g.forward({})
    assert g.backward(out)["x"][0, 0] == pytest.approx(4.0)


def test_input_gradients_on_request():
    g = Graph()
    x = g.input("x")
    out = g.sum(g.scale(x, 3.0))
    g.forward({"x": np.ones((2, 2))})
    np.testing.assert_array_equal(g.backward(out, wrt=("x",))["x"], 3.0)


# --- properties -------------------------------------------------------------------

@given(arrays(np.float64, st.tuples(st.integers(1, 3), st.integers(1, 5)), elements=finite),
       arrays(np.float64, st.tuples(st.just(1), st.integers(1, 4)), elements=finite))
def test_concat_then_split_is_exact(a, b_row):
    b = np.repeat(b_row, a.shape[0], axis=0)
    g = Graph()
    left, right = g.split(g.concat([g.const(a), g.const(b)], axis=-1), [a.shape[1], b.shape[1]])
    g.forward({})
    np.testing.assert_array_equal(g.value(left), a)
    np.testing.assert_array_equal(g.value(right), b)


@given(arrays(np.float64, st.tuples(st.just(1), st.integers(1, 8), st.integers(1, 4)), elements=finite),
       st.randoms(use_true_random=False))
def test_max_pool_is_permutation_invariant(x, rnd):
    perm = list(range(x.shape[1]))
    rnd.shuffle(perm)
    a = _eval(lambda g: g.max_pool_set(g.const(x)))
    b = _eval(lambda g: g.max_pool_set(g.const(x[:, perm])))
    np.testing.assert_array_equal(a, b)


@given(arrays(np.float64, st.tuples(st.integers(0, 3), st.integers(0, 3), st.integers(0, 2)), elements=finite))
def test_array_container_roundtrip(a):
    buf = dumps_array(a)
    back, end = loads_array(buf)
    assert end == len(buf)
    assert back.shape == a.shape
    np.testing.assert_array_equal(back, a)
    assert dumps_array(back) == buf


def test_array_file_roundtrip(tmp_path):
    a = np.arange(12.0).reshape(3, 4)
    save_array(tmp_path / "a.fdar", a)
    np.testing.assert_array_equal(load_array(tmp_path / "a.fdar"), a)


def test_array_container_rejects_garbage():
    with pytest.raises(ValueError):
        loads_array(b"NOPE" + bytes(16))
    with pytest.raises(ValueError):
        loads_array(dumps_array(np.ones(4))[:-8])


# --- error paths ------------------------------------------------------------------

def test_backward_before_forward_errors():
    g = Graph()
    out = g.sum(g.param("x", np.ones(2)))
    with pytest.raises(GraphError, match="before forward"):
        g.backward(out)


def test_non_scalar_loss_errors():
    g = Graph()
    out = g.relu(g.param("x", np.ones((1, 2))))
    g.forward({})
    with pytest.raises(GraphError, match="not scalar"):
        g.backward(out)


def test_unbound_input_errors():
    g = Graph()
    g.relu(g.input("x"))
    with pytest.raises(GraphError, match="unbound"):
        g.forward({})


def test_shape_mismatch_names_the_node():
    g = Graph()
    g.add(g.const(np.ones((1, 2))), g.const(np.ones((1, 3))), name="bad_add")
    with pytest.raises(ShapeError, match="bad_add"):
        g.forward({})


def test_non_finite_values_are_reported():
    g = Graph()
    g.scale(g.input("x"), 2.0)
    with pytest.raises(NonFiniteError):
        g.forward({"x": np.array([[np.inf]])})
    g.forward({"x": np.array([[np.inf]])}, check_finite=False)


def test_gradcheck_rejects_bad_eps():
    with pytest.raises(ValueError):
        grad_check(lambda g: g.sum(g.param("x", np.ones(1))), eps=0.5)
