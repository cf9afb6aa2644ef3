"""KKL observer gains, backward-time observer runs, and recognition inputs.

The observer is a stable linear filter z' = D z + F y. Recognition feeds a
network psi a summary of the first observation window: the raw window
(direct), a GRU pass over it, or the observer state after a backward-time
sweep (KKL, and the functional variant driven by (y, u)).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ConfigError
from . import tape
from .nets import GRUParams, MLPParams, gru_init, gru_step, mlp_forward, mlp_init
from .ode import SampledSignal, TimeGrid, integrate_backward
from .tape import Node

HURWITZ_MARGIN = 1e-3


def butterworth_poles(order, omega_c):
    """Left-half-plane poles of a Butterworth filter, cutoff 2*pi*omega_c."""
    if order < 1:
        raise ConfigError("filter order must be >= 1")
    if omega_c <= 0:
        raise ConfigError("cutoff frequency must be positive")
    omega0 = 2 * np.pi * omega_c
    k = np.arange(1, order + 1)
    return omega0 * np.exp(1j * np.pi * (2 * k + order - 1) / (2 * order))


def group_poles(poles, tol=1e-9):
    """Blocks ('r', a) for real poles, ('c', re, im) per conjugate pair."""
    blocks = []
    upper = []
    lower = []
    for p in np.asarray(poles, dtype=complex):
        if abs(p.imag) <= tol * max(1.0, abs(p)):
            blocks.append(("r", p.real))
        elif p.imag > 0:
            upper.append(p)
        else:
            lower.append(p)
    for p in upper:
        match = None
        for i, q in enumerate(lower):
            if abs(np.conj(p) - q) <= 1e-6 * max(1.0, abs(p)):
                match = i
                break
        if match is None:
            raise ConfigError(f"complex pole {p} has no conjugate partner")
        lower.pop(match)
        blocks.append(("c", p.real, abs(p.imag)))
    if lower:
        raise ConfigError(f"complex pole {lower[0]} has no conjugate partner")
    return blocks


def build_D(poles):
    """Block-diagonal real matrix whose eigenvalues are the given poles.

    Each real pole becomes a 1x1 block; each conjugate pair (re, im) a
    2x2 block [[re, im], [-im, re]].
    """
    blocks = group_poles(poles)
    params, basis, kinds = _block_parametrization(blocks)
    return tape.block_embed(params, basis)


def _block_parametrization(blocks):
    """Flat parameter vector, embedding basis, and per-entry kind labels.

    Kinds mark which entries are real parts (clamped to stay Hurwitz).
    """
    d_z = sum(1 if b[0] == "r" else 2 for b in blocks)
    params = []
    kinds = []
    mats = []
    pos = 0
    for b in blocks:
        if b[0] == "r":
            e = np.zeros((d_z, d_z))
            e[pos, pos] = 1.0
            mats.append(e)
            params.append(b[1])
            kinds.append("re")
            pos += 1
        else:
            re_mat = np.zeros((d_z, d_z))
            re_mat[pos, pos] = 1.0
            re_mat[pos + 1, pos + 1] = 1.0
            im_mat = np.zeros((d_z, d_z))
            im_mat[pos, pos + 1] = 1.0
            im_mat[pos + 1, pos] = -1.0
            mats.extend([re_mat, im_mat])
            params.extend([b[1], b[2]])
            kinds.extend(["re", "im"])
            pos += 2
    return np.asarray(params), np.stack(mats), kinds


@dataclass
class KKLGains:
    """Observer pair (D, F) with D in its block-diagonal parametrization."""

    d_params: Node
    basis: np.ndarray
    kinds: list
    F: np.ndarray
    d_z: int
    trainable: bool = False

    @property
    def D(self):
        return tape.block_embed(self.d_params.value, self.basis)

    def D_matrix(self):
        """D for the observer field; a tape Node while trainable."""
        if self.trainable:
            return tape.block_embed(self.d_params, self.basis)
        return self.D

    def parameters(self):
        return [self.d_params] if self.trainable else []

    def clamp_hurwitz(self, margin=HURWITZ_MARGIN):
        """Project real parts back to <= -margin after an update."""
        for i, kind in enumerate(self.kinds):
            if kind == "re":
                self.d_params.value[i] = min(self.d_params.value[i], -margin)


def make_gains(d_z, d_in, omega_c=1.0, init="butterworth", trainable=False):
    """Gain pair with F = ones(d_z, d_in) and D from the chosen initializer."""
    if init == "butterworth":
        blocks = group_poles(butterworth_poles(d_z, omega_c))
    elif init == "diag":
        blocks = [("r", -float(i)) for i in range(1, d_z + 1)]
    else:
        raise ConfigError(f"unknown D initializer {init!r}")
    params, basis, kinds = _block_parametrization(blocks)
    return KKLGains(
        d_params=Node(params, name="kkl.D"),
        basis=basis,
        kinds=kinds,
        F=np.ones((d_z, d_in)),
        d_z=d_z,
        trainable=trainable,
    )


def check_gains(gains):
    """Hurwitz from the parametrized real parts; controllability by rank.

    The Krylov blocks are built with D scaled by its spectral radius
    (rank-preserving) so the tolerance is not consumed by |D|^k growth.
    """
    real_parts = [gains.d_params.value[i] for i, k in enumerate(gains.kinds) if k == "re"]
    hurwitz = all(r < 0 for r in real_parts)
    d = gains.D
    scale = max(1.0, np.max(np.abs(np.linalg.eigvals(d))))
    blocks_cols = [gains.F]
    for _ in range(gains.d_z - 1):
        blocks_cols.append((d @ blocks_cols[-1]) / scale)
    ctrb = np.hstack(blocks_cols)
    sv = np.linalg.svd(ctrb, compute_uv=False)
    rank = int(np.sum(sv > 1e-8 * sv[0])) if sv[0] > 0 else 0
    return {"hurwitz": hurwitz, "controllable": rank == gains.d_z}


@dataclass
class SylvesterSolution:
    """T solving T A - D T = F C for a linear plant (A, C)."""

    T: np.ndarray
    A: np.ndarray
    C: np.ndarray

    def left_inverse(self):
        return np.linalg.pinv(self.T)

    def rank(self):
        sv = np.linalg.svd(self.T, compute_uv=False)
        return int(np.sum(sv > 1e-10 * max(sv[0], 1.0)))


def solve_sylvester(A, C, gains):
    """Vectorized linear solve of T A - D T = F C."""
    A = np.asarray(A, dtype=np.float64)
    C = np.atleast_2d(np.asarray(C, dtype=np.float64))
    D = gains.D
    eig_a = np.linalg.eigvals(A)
    eig_d = np.linalg.eigvals(D)
    if np.min(np.abs(eig_a[:, None] - eig_d[None, :])) < 1e-9:
        raise np.linalg.LinAlgError("A and D share an eigenvalue; system singular")
    # scipy solves M X + X N = Q; here M = -D, N = A, Q = F C
    T = scipy.linalg.solve_sylvester(-D, A, gains.F @ C)
    return SylvesterSolution(T=T, A=A, C=C)


def simulate_observer_backward(gains, driver, t_c):
    """Observer state at time 0 after the backward sweep over [0, t_c].

    The observer starts from z = 0 at t_c and integrates z' = D z + F y
    along the time-reversed driver. The driver must cover [0, t_c] on its
    own grid; for the functional variant it carries (y, u) stacked.
    """
    g = driver.grid
    n_c = int(round(t_c / g.dt)) + 1
    if n_c > g.n or abs((n_c - 1) * g.dt - t_c) > 1e-9:
        raise ConfigError(f"driver does not cover a window of t_c={t_c}")
    if n_c == 1:
        # degenerate t_c = 0 window: the observer never leaves its start
        return np.zeros(driver.values.shape[1:-1] + (gains.d_z,))
    window = SampledSignal(TimeGrid(g.t0, g.dt, n_c), driver.values[:n_c])

    d = gains.D_matrix()
    f_t = gains.F.T

    def obs_field(t, z, y):
        return tape.matmul(z, tape.transpose(d)) + y @ f_t

    batch_shape = driver.values.shape[1:-1]
    z0 = np.zeros(batch_shape + (gains.d_z,))
    zs = integrate_backward(obs_field, z0, window.grid, driver=window)
    return tape.take(zs, -1) if isinstance(zs, Node) else zs[-1]


@dataclass
class RecognitionVariant:
    """One recognition method with its window geometry and trainables."""

    kind: str  # direct | rnn | kkl | kklu
    t_c: float
    dt: float
    d_y: int
    d_u: int  # input channels used by recognition; 0 if treated autonomous
    d_x: int
    psi: MLPParams
    gains: KKLGains = None
    gru: GRUParams = None
    d_omega: int = 0

    @property
    def n_c(self):
        return int(round(self.t_c / self.dt)) + 1

    def input_width(self):
        if self.gains is not None:
            d_z = self.gains.d_z
        elif self.gru is not None:
            d_z = self.gru.hidden
        else:
            d_z = None
        return recognition_input_width(
            self.kind, d_y=self.d_y, d_u=self.d_u, d_x=self.d_x,
            n_c=self.n_c, d_omega=self.d_omega, d_z=d_z)

    def parameters(self):
        params = self.psi.parameters()
        if self.gru is not None:
            params += self.gru.parameters()
        if self.gains is not None:
            params += self.gains.parameters()
        return params


def default_d_z(kind, d_x, d_y, d_u, d_omega=0):
    if kind == "kklu":
        return (d_y + d_u) * (d_x + d_omega + 1)
    return d_y * (d_x + 1)


def recognition_input_width(kind, *, d_y, d_u, d_x, n_c, d_omega=0, d_z=None):
    if kind == "direct":
        return n_c * (d_y + d_u)
    if kind == "rnn":
        return d_z if d_z is not None else default_d_z("kkl" if d_u == 0 else "kklu",
                                                       d_x, d_y, d_u, d_omega)
    if kind == "kkl":
        return (d_z if d_z is not None else default_d_z("kkl", d_x, d_y, d_u)) + n_c * d_u
    if kind == "kklu":
        if d_u == 0:
            raise ConfigError("kklu needs an exogenous input")
        return d_z if d_z is not None else default_d_z("kklu", d_x, d_y, d_u, d_omega)
    raise ConfigError(f"unknown recognition kind {kind!r}")


def make_recognition(kind, *, d_x, d_y, d_u, t_c, dt, rng, hidden=(50, 50),
                     d_z=None, omega_c=1.0, d_omega=3, d_init="butterworth",
                     train_D=True):
    """Build a recognition variant with a fresh psi network.

    d_u counts only channels the recognition consumes; pass 0 for systems
    treated as autonomous by the protocol even when the dynamics take an
    input. The RNN hidden size matches the corresponding KKL/KKLu size.
    """
    n_c = int(round(t_c / dt)) + 1
    gains = None
    gru = None
    if kind in ("kkl", "kklu"):
        d_drive = d_y if kind == "kkl" else d_y + d_u
        dz = d_z if d_z is not None else default_d_z(kind, d_x, d_y, d_u, d_omega)
        gains = make_gains(dz, d_drive, omega_c=omega_c, init=d_init, trainable=train_D)
    elif kind == "rnn":
        dz = d_z if d_z is not None else default_d_z(
            "kklu" if d_u > 0 else "kkl", d_x, d_y, d_u, d_omega)
        gru = gru_init(d_y + d_u, dz, rng)
    elif kind != "direct":
        raise ConfigError(f"unknown recognition kind {kind!r}")

    width = recognition_input_width(
        kind, d_y=d_y, d_u=d_u, d_x=d_x, n_c=n_c, d_omega=d_omega,
        d_z=gains.d_z if gains is not None else (gru.hidden if gru is not None else None))
    psi = mlp_init([width] + list(hidden) + [d_x], rng, name="psi")
    return RecognitionVariant(kind=kind, t_c=t_c, dt=dt, d_y=d_y, d_u=d_u,
                              d_x=d_x, psi=psi, gains=gains, gru=gru,
                              d_omega=d_omega if kind == "kklu" else 0)


def _flatten_window(values):
    """(n_c, ..., c) samples -> (..., n_c * c), time-major per sample."""
    moved = np.moveaxis(values, 0, -2)
    return moved.reshape(moved.shape[:-2] + (-1,))


def assemble_recognition_input(variant, y_win, u_win=None):
    """Summary vector fed to psi, per recognition kind.

    y_win/u_win are SampledSignals over at least [0, t_c]; batched signals
    carry trajectories on the middle axes. Returns a tape Node whenever a
    trainable component (GRU, D) processes the window.
    """
    n_c = variant.n_c
    if y_win.grid.n < n_c:
        raise ConfigError("observation window shorter than t_c")
    if variant.d_u > 0 and u_win is None:
        raise ConfigError(f"recognition kind {variant.kind!r} needs the input window")
    y = y_win.values[:n_c]
    u = u_win.values[:n_c] if (u_win is not None and variant.d_u > 0) else None

    if variant.kind == "direct":
        parts = [_flatten_window(y)]
        if u is not None:
            parts.append(_flatten_window(u))
        return np.concatenate(parts, axis=-1)

    if variant.kind == "rnn":
        h = np.zeros(y.shape[1:-1] + (variant.gru.hidden,))
        for i in range(n_c - 1, -1, -1):
            step_in = y[i] if u is None else np.concatenate([y[i], u[i]], axis=-1)
            h = gru_step(variant.gru, h, step_in)
        return h

    if variant.kind == "kkl":
        win = SampledSignal(TimeGrid(y_win.grid.t0, y_win.grid.dt, n_c), y)
        z0 = simulate_observer_backward(variant.gains, win, variant.t_c)
        if u is None:
            return z0
        return tape.concat([z0, _flatten_window(u)], axis=-1)

    if variant.kind == "kklu":
        stacked = np.concatenate([y, u], axis=-1)
        win = SampledSignal(TimeGrid(y_win.grid.t0, y_win.grid.dt, n_c), stacked)
        return simulate_observer_backward(variant.gains, win, variant.t_c)

    raise ConfigError(f"unknown recognition kind {variant.kind!r}")


def estimate_x0(variant, y_win, u_win=None):
    """psi applied to the assembled window summary; stays on the tape."""
    zbar = assemble_recognition_input(variant, y_win, u_win)
    return mlp_forward(variant.psi, zbar)
