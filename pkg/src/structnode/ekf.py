"""Discrete-time Extended Kalman Filter over any model field.

Predict propagates the mean with one RK4 step and the covariance with the
first-order transition Phi = I + A dt, A being the field Jacobian at the
prior mean; update is the standard linear correction for a coordinate-
selector output map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FilterDivergenceError
from . import tape
from .ode import rk4_step
from .priors import eval_field
from .tape import Node


@dataclass
class EKFState:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.cov = np.asarray(self.cov, dtype=np.float64)


@dataclass
class EKFConfig:
    Q: np.ndarray          # process noise covariance (continuous-time rate)
    R: np.ndarray          # measurement noise covariance
    dt: float
    output_idx: tuple

    def __post_init__(self):
        self.Q = np.atleast_2d(np.asarray(self.Q, dtype=np.float64))
        self.R = np.atleast_2d(np.asarray(self.R, dtype=np.float64))

    def selector(self, d_x):
        h = np.zeros((len(self.output_idx), d_x))
        for row, col in enumerate(self.output_idx):
            h[row, col] = 1.0
        return h


def default_config(d_x, output_idx, dt, sigma2=1e-3, q=1e-4):
    return EKFConfig(Q=q * np.eye(d_x), R=sigma2 * np.eye(len(output_idx)),
                     dt=dt, output_idx=tuple(output_idx))


def field_jacobian(model, t, x, u=None, fd_step=1e-6):
    """Jacobian of the model field at x, by one backward pass per row.

    Falls back to central differences if the field does not trace.
    """
    d = x.shape[-1]
    try:
        xn = Node(np.asarray(x, dtype=np.float64))
        f = eval_field(model, t, xn, u)
        if not isinstance(f, Node):
            raise TypeError("field not on tape")
        graph = list(_walk_nodes(f)) + [xn]
        jac = np.zeros((d, d))
        for i in range(d):
            for p in graph:
                p.zero_grad()
            tape.backward(tape.take(f, i))
            jac[i] = xn.grad if xn.grad is not None else 0.0
        for p in graph:
            p.zero_grad()
        return jac
    except TypeError:
        jac = np.zeros((d, d))
        with tape.no_grad():
            for j in range(d):
                e = np.zeros(d)
                e[j] = fd_step
                hi = tape.value_of(eval_field(model, t, x + e, u))
                lo = tape.value_of(eval_field(model, t, x - e, u))
                jac[:, j] = (hi - lo) / (2 * fd_step)
        return jac


def _walk_nodes(root):
    seen = set()
    stack = [root]
    while stack:
        node = stack.pop()
        if id(node) in seen or not isinstance(node, Node):
            continue
        seen.add(id(node))
        yield node
        stack.extend(p for p in node.parents if isinstance(p, Node))


def ekf_predict(model, state, u, cfg):
    """Propagate mean and covariance one step under the model field."""
    with tape.no_grad():
        mean = rk4_step(lambda t, x: tape.value_of(eval_field(model, t, x, u)),
                        0.0, state.mean, cfg.dt)
    if not np.all(np.isfinite(mean)):
        raise FilterDivergenceError("non-finite mean in EKF predict")
    a = field_jacobian(model, 0.0, state.mean, u)
    phi = np.eye(len(state.mean)) + a * cfg.dt
    cov = phi @ state.cov @ phi.T + cfg.Q * cfg.dt
    if not np.all(np.isfinite(cov)):
        raise FilterDivergenceError("non-finite covariance in EKF predict")
    return EKFState(mean=mean, cov=cov)


def ekf_update(state, y, cfg):
    """Measurement correction; covariance re-symmetrized."""
    h = cfg.selector(len(state.mean))
    y = np.asarray(y, dtype=np.float64)
    innovation = y - h @ state.mean
    s = h @ state.cov @ h.T + cfg.R
    try:
        gain = np.linalg.solve(s, h @ state.cov).T
    except np.linalg.LinAlgError as exc:
        raise FilterDivergenceError(f"singular innovation covariance: {exc}") from exc
    mean = state.mean + gain @ innovation
    cov = (np.eye(len(state.mean)) - gain @ h) @ state.cov
    cov = 0.5 * (cov + cov.T)
    return EKFState(mean=mean, cov=cov)


def run_ekf(model, cfg, y_seq, u_seq=None, x0=None, P0=None):
    """Filter a measurement stream; returns the post-update means (n, d_x)."""
    d_x = model.d_x
    state = EKFState(mean=np.zeros(d_x) if x0 is None else np.asarray(x0, float),
                     cov=np.eye(d_x) * 0.1 if P0 is None else np.asarray(P0, float))
    means = [state.mean.copy()]
    n = len(y_seq)
    for i in range(1, n):
        u = None if u_seq is None else u_seq[i - 1]
        state = ekf_predict(model, state, u, cfg)
        state = ekf_update(state, y_seq[i], cfg)
        means.append(state.mean.copy())
    return np.stack(means), state
