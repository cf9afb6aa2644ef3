import numpy as np
import pytest

from structnode.errors import TrainingError
from structnode.optim import Adam
from structnode.tape import Node


def adam_oracle(grads, lr, beta1=0.9, beta2=0.999, eps=1e-8, theta0=0.0):
    """Independent scalar Adam recursion for freezing expected values."""
    m = v = 0.0
    theta = theta0
    for t, g in enumerate(grads, start=1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        theta -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return theta


def test_first_step_magnitude():
    p = Node(np.zeros(1), name="theta")
    opt = Adam([p], lr=0.005)
    p.grad = np.ones(1)
    opt.step()
    assert p.value.item() == pytest.approx(-0.005, rel=1e-6)
    assert p.value.item() == pytest.approx(adam_oracle([1.0], lr=0.005), abs=1e-15)


def test_zero_gradient_leaves_params():
    p = Node(np.array([1.0, -2.0]))
    opt = Adam([p], lr=0.01)
    p.grad = np.zeros(2)
    opt.step()
    assert np.array_equal(p.value, [1.0, -2.0])


def test_two_identical_gradients_step_size():
    p = Node(np.zeros(1))
    opt = Adam([p], lr=0.005)
    prev = 0.0
    for t in range(1, 3):
        p.grad = np.ones(1)
        opt.step()
        moved = abs(p.value.item() - prev)
        assert moved == pytest.approx(0.005, rel=1e-6)
        prev = p.value.item()
    assert p.value.item() == pytest.approx(adam_oracle([1.0, 1.0], lr=0.005), abs=1e-15)


def test_first_step_opposes_gradient_sign():
    rng = np.random.default_rng(0)
    p = Node(rng.normal(size=(10,)))
    start = p.value.copy()
    opt = Adam([p], lr=0.001)
    g = rng.normal(size=(10,))
    g[np.abs(g) < 0.1] = 0.5  # keep signs well defined
    p.grad = g.copy()
    opt.step()
    moved = p.value - start
    assert np.all(np.sign(moved) == -np.sign(g))


def test_missing_grad_is_skipped():
    p = Node(np.ones(2))
    q = Node(np.ones(2), name="q")
    opt = Adam([p, q], lr=0.1)
    q.grad = np.ones(2)
    opt.step()
    assert np.array_equal(p.value, np.ones(2))
    assert not np.array_equal(q.value, np.ones(2))


def test_nonfinite_gradient_names_parameter():
    p = Node(np.zeros(2), name="psi.w0")
    opt = Adam([p], lr=0.1)
    p.grad = np.array([np.nan, 1.0])
    with pytest.raises(TrainingError, match="psi.w0"):
        opt.step()


def test_step_counter_and_state_shapes():
    p = Node(np.zeros((3, 2)))
    opt = Adam([p], lr=0.01)
    assert opt.t == 0
    for _ in range(4):
        p.grad = np.ones((3, 2))
        opt.step()
    assert opt.t == 4
    assert opt.m[0].shape == (3, 2) and opt.v[0].shape == (3, 2)
