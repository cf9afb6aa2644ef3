"""Fixed-step RK4 integration, forward and in reversed time, differentiable.

Fields are callables field(t, x, u) -> dx/dt; u is the interpolated value
of an exogenous signal (None for autonomous fields). Everything runs on
plain arrays or on the tape depending on what the field returns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, IntegrationError
from . import tape
from .tape import Node


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_i = t0 + i * dt, i = 0..n-1."""

    t0: float
    dt: float
    n: int

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigError("grid dt must be positive")
        if self.n < 2:
            raise ConfigError("grid needs at least two samples")

    def times(self):
        return self.t0 + self.dt * np.arange(self.n)

    @property
    def t_end(self):
        return self.t0 + self.dt * (self.n - 1)


@dataclass
class SampledSignal:
    """Signal samples on a grid; values are time-major, (n, ...) shaped."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape[0] != self.grid.n:
            raise ConfigError(
                f"signal rows {self.values.shape[0]} != grid n {self.grid.n}")
        if not np.all(np.isfinite(self.values)):
            raise ConfigError("signal contains non-finite values")


def interpolate(sig, t):
    """Piecewise-linear value at time t; exact at grid points."""
    g = sig.grid
    slack = 1e-9 * max(1.0, abs(g.t_end))
    if t < g.t0 - slack or t > g.t_end + slack:
        raise ValueError(f"t={t} outside signal domain [{g.t0}, {g.t_end}]")
    pos = (t - g.t0) / g.dt
    nearest = int(round(pos))
    if 0 <= nearest < g.n and abs(pos - nearest) < 1e-9:
        return sig.values[nearest]
    k = int(np.clip(np.floor(pos), 0, g.n - 2))
    w = pos - k
    return (1.0 - w) * sig.values[k] + w * sig.values[k + 1]


def _check_finite(dx, t):
    v = dx.value if isinstance(dx, Node) else dx
    if not np.all(np.isfinite(v)):
        raise IntegrationError(f"non-finite field output at t={t:.6g}")


def rk4_step(field, t, x, dt):
    """Classical 4-stage Runge-Kutta update; dt may be negative."""
    if dt == 0:
        raise ConfigError("rk4_step needs dt != 0")
    k1 = field(t, x)
    _check_finite(k1, t)
    k2 = field(t + dt / 2, x + (dt / 2) * k1)
    _check_finite(k2, t + dt / 2)
    k3 = field(t + dt / 2, x + (dt / 2) * k2)
    _check_finite(k3, t + dt / 2)
    k4 = field(t + dt, x + dt * k3)
    _check_finite(k4, t + dt)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(field, x0, grid, u=None, substeps=1):
    """Roll the field over the grid; returns states stacked time-major.

    Row 0 is x0; row i comes from rk4 stepping across each grid interval,
    with the exogenous signal linearly interpolated at stage times. With
    substeps > 1 each interval is covered by that many internal RK4 steps
    (stiff fields); recorded rows stay on the grid. The result is a Node
    when anything on the tape feeds the computation.
    """
    xv = x0.value if isinstance(x0, Node) else np.asarray(x0, dtype=np.float64)
    if not np.all(np.isfinite(xv)):
        raise IntegrationError("non-finite initial state")
    if substeps < 1:
        raise ConfigError("substeps must be >= 1")

    if u is None:
        f = lambda t, x: field(t, x, None)
    else:
        f = lambda t, x: field(t, x, interpolate(u, t))

    h = grid.dt / substeps
    rows = [x0]
    x = x0
    for i in range(grid.n - 1):
        t = grid.t0 + i * grid.dt
        for k in range(substeps):
            x = rk4_step(f, t + k * h, x, h)
        rows.append(x)
    return tape.stack(rows, axis=0)


def integrate_backward(field, x_end, grid, driver=None):
    """Integrate the field against the time-reversed driver.

    Solves w'(s) = field(t_end - s, w, driver(t_end - s)) for s in
    [0, t_end - t0] from w(0) = x_end. Rows come back in sweep order:
    row 0 at t_end down to the last row at t0. The field itself is not
    sign-flipped; a stable filter stays stable along the sweep.
    """
    def reversed_field(s, w, _unused):
        t = grid.t_end - s
        uval = interpolate(driver, t) if driver is not None else None
        return field(t, w, uval)

    rgrid = TimeGrid(0.0, grid.dt, grid.n)
    return integrate(reversed_field, x_end, rgrid)
