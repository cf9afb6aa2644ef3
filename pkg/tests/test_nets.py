import numpy as np
import pytest

from conftest import gradcheck, rel_err
from structnode import tape
from structnode.errors import ConfigError
from structnode.nets import (
    GRUParams,
    MLPParams,
    gru_init,
    gru_step,
    mlp_forward,
    mlp_init,
    mlp_input_gradient,
)
from structnode.tape import Node, backward


def test_silu_values():
    assert tape.silu(0.0) == 0.0
    assert tape.silu(1.0) == pytest.approx(0.7310586, abs=1e-7)
    assert tape.silu(-20.0) == pytest.approx(-20.0 / (1.0 + np.exp(20.0)), rel=1e-9)
    assert abs(tape.silu(-20.0) + 4.1e-8) < 1e-8


def _const_mlp(mats):
    weights = [Node(np.asarray(w, dtype=float)) for w, _ in mats]
    biases = [Node(np.asarray(b, dtype=float)) for _, b in mats]
    return MLPParams(weights, biases)


def test_mlp_zero_params_collapse():
    params = _const_mlp([(np.zeros((3, 4)), np.zeros(4)), (np.zeros((4, 2)), np.zeros(2))])
    out = mlp_forward(params, np.array([1.0, -2.0, 0.5]))
    assert np.array_equal(out.value, np.zeros(2))


def test_mlp_single_layer_identity():
    params = _const_mlp([(np.eye(2), np.zeros(2))])
    out = mlp_forward(params, np.array([1.0, 2.0]))
    assert np.array_equal(out.value, np.array([1.0, 2.0]))


def test_mlp_one_hidden_unit_chain():
    params = _const_mlp([(np.ones((1, 1)), np.zeros(1)), (np.ones((1, 1)), np.zeros(1))])
    out = mlp_forward(params, np.array([1.0]))
    assert out.value.item() == pytest.approx(0.7310586, abs=1e-7)


def test_mlp_dimension_mismatch():
    params = _const_mlp([(np.eye(2), np.zeros(2))])
    with pytest.raises(ConfigError):
        mlp_forward(params, np.ones(3))


def test_mlp_param_count():
    rng = np.random.default_rng(0)
    params = mlp_init([3, 50, 50, 2], rng)
    assert params.param_count() == (3 + 1) * 50 + (50 + 1) * 50 + (50 + 1) * 2


def test_mlp_batch_matches_loop():
    rng = np.random.default_rng(1)
    params = mlp_init([2, 8, 3], rng)
    xs = rng.normal(size=(5, 2))
    batch = mlp_forward(params, xs).value
    rows = [mlp_forward(params, x).value for x in xs]
    assert np.allclose(batch, np.stack(rows), atol=1e-14)


def test_mlp_gradcheck():
    rng = np.random.default_rng(2)
    params = mlp_init([3, 6, 4, 1], rng)
    x = rng.normal(size=(4, 3))

    def loss():
        return tape.asum(mlp_forward(params, x) ** 2)

    worst = gradcheck(loss, params.parameters(), tol=1e-5)
    assert worst < 1e-5


def test_mlp_input_gradient_matches_backward():
    rng = np.random.default_rng(3)
    params = mlp_init([3, 7, 5, 1], rng)
    x = Node(rng.normal(size=(3,)))
    y = mlp_forward(params, x)
    backward(y)
    direct = mlp_input_gradient(params, x.value)
    assert rel_err(direct.value, x.grad) < 1e-10


def test_mlp_input_gradient_batch_and_weight_grads():
    rng = np.random.default_rng(4)
    params = mlp_init([2, 6, 1], rng)
    xs = rng.normal(size=(5, 2))

    def loss():
        g = mlp_input_gradient(params, xs)
        return tape.asum(g * g)

    worst = gradcheck(loss, params.parameters(), tol=1e-5)
    assert worst < 1e-5


def test_gru_zero_params_halves_state():
    p = gru_init(2, 2, np.random.default_rng(0))
    for node in p.parameters():
        node.value[...] = 0.0
    h = np.array([1.0, -2.0])
    out = gru_step(p, h, np.zeros(2))
    assert np.allclose(out.value, [0.5, -1.0], atol=1e-14)


def test_gru_zero_state_fixed_point():
    p = gru_init(3, 4, np.random.default_rng(1))
    for node in p.parameters():
        node.value[...] = 0.0
    out = gru_step(p, np.zeros(4), np.zeros(3))
    assert np.array_equal(out.value, np.zeros(4))


def test_gru_scalar_candidate_path():
    p = gru_init(1, 1, np.random.default_rng(2))
    for node in p.parameters():
        node.value[...] = 0.0
    p.w_h.value[...] = 1.0
    out = gru_step(p, np.zeros(1), np.ones(1))
    assert out.value.item() == pytest.approx(0.5 * np.tanh(1.0), abs=1e-12)
    assert out.value.item() == pytest.approx(0.3807970, abs=1e-7)


def test_gru_dimension_mismatch():
    p = gru_init(2, 3, np.random.default_rng(3))
    with pytest.raises(ConfigError):
        gru_step(p, np.zeros(4), np.zeros(2))
    with pytest.raises(ConfigError):
        gru_step(p, np.zeros(3), np.zeros(1))


def test_gru_gradcheck():
    rng = np.random.default_rng(5)
    p = gru_init(2, 3, rng)
    xs = rng.normal(size=(4, 2))

    def loss():
        h = np.zeros((1, 3))
        for x in xs:
            h = gru_step(p, h, x.reshape(1, 2))
        return tape.asum(h * h)

    worst = gradcheck(loss, p.parameters(), tol=1e-5)
    assert worst < 1e-5


def test_xavier_init_bounds_and_seeding():
    rng = np.random.default_rng(11)
    params = mlp_init([4, 10, 2], rng)
    bound0 = np.sqrt(6.0 / (4 + 10))
    assert np.max(np.abs(params.weights[0].value)) <= bound0
    assert np.all(params.biases[0].value == 0)
    again = mlp_init([4, 10, 2], np.random.default_rng(11))
    assert np.array_equal(params.weights[0].value, again.weights[0].value)
