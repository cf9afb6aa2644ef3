"""Ground-truth benchmark systems, input generators, and dataset synthesis.

Four plants: a harmonic oscillator with unknown frequency, the Van der Pol
oscillator under sinusoidal forcing, the FitzHugh-Nagumo neuron under a
constant stimulus, and a linear two-story building driven by a ground
acceleration. Outputs are single measured coordinates plus Gaussian noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .ode import SampledSignal, TimeGrid, integrate


@dataclass(frozen=True)
class BenchmarkSystem:
    kind: str
    d_x: int
    d_y: int
    d_u: int
    output_idx: tuple
    params: dict
    recog_uses_u: bool  # whether the recognition window includes u

    @property
    def selector(self):
        """Output map y = S x as a constant matrix."""
        s = np.zeros((self.d_y, self.d_x))
        for row, col in enumerate(self.output_idx):
            s[row, col] = 1.0
        return s


def harmonic_oscillator(omega_sq=1.0):
    return BenchmarkSystem("harmonic", d_x=2, d_y=1, d_u=0, output_idx=(0,),
                           params={"omega_sq": float(omega_sq)}, recog_uses_u=False)


def van_der_pol(mu=1.0):
    return BenchmarkSystem("vdp", d_x=2, d_y=1, d_u=1, output_idx=(0,),
                           params={"mu": float(mu)}, recog_uses_u=True)


def fitzhugh_nagumo(eps=0.1, gamma=1.5, beta=0.8):
    return BenchmarkSystem("fhn", d_x=2, d_y=1, d_u=1, output_idx=(0,),
                           params={"eps": float(eps), "gamma": float(gamma),
                                   "beta": float(beta)}, recog_uses_u=True)


def earthquake(k_m=10.0):
    """Two-story building; the ground forcing is a known disturbance during
    simulation but is kept out of the recognition window."""
    return BenchmarkSystem("earthquake", d_x=4, d_y=1, d_u=1, output_idx=(0,),
                           params={"k_m": float(k_m)}, recog_uses_u=False)


SYSTEMS = {
    "harmonic": harmonic_oscillator,
    "vdp": van_der_pol,
    "fhn": fitzhugh_nagumo,
    "earthquake": earthquake,
}


def true_field(sys, t, x, u=None):
    """Published dynamics of the benchmark plant; u is the current input value."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != sys.d_x:
        raise ConfigError(f"{sys.kind} expects d_x={sys.d_x}, got {x.shape[-1]}")
    if sys.kind == "harmonic":
        w2 = sys.params["omega_sq"]
        return np.stack([x[..., 1], -w2 * x[..., 0]], axis=-1)
    if sys.kind == "vdp":
        mu = sys.params["mu"]
        uval = 0.0 if u is None else np.asarray(u)[..., 0]
        acc = mu * (1 - x[..., 0] ** 2) * x[..., 1] - x[..., 0] + uval
        return np.stack([x[..., 1], acc], axis=-1)
    if sys.kind == "fhn":
        p = sys.params
        i_ext = 0.0 if u is None else np.asarray(u)[..., 0]
        v, w = x[..., 0], x[..., 1]
        dv = (v - v**3 - w) / p["eps"] + i_ext
        dw = p["gamma"] * v - w + p["beta"]
        return np.stack([dv, dw], axis=-1)
    if sys.kind == "earthquake":
        k_m = sys.params["k_m"]
        force = 0.0 if u is None else np.asarray(u)[..., 0]
        return np.stack([
            x[..., 1],
            k_m * (x[..., 2] - 2 * x[..., 0]) - force,
            x[..., 3],
            k_m * (x[..., 0] - x[..., 2]) - force,
        ], axis=-1)
    raise ConfigError(f"unknown system kind {sys.kind!r}")


@dataclass(frozen=True)
class InputSpec:
    """Exogenous input: none, a constant level, or a sinusoid.

    value/amplitude/omega_u may be (lo, hi) ranges, in which case dataset
    generation draws one value per trajectory.
    """

    kind: str = "none"  # none | constant | sinusoid
    value: object = None
    amplitude: object = None
    omega_u: object = None


@dataclass(frozen=True)
class NoiseSpec:
    sigma2: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.sigma2 < 0:
            raise ConfigError("noise variance must be nonnegative")


def _scalar(v, what):
    if isinstance(v, (tuple, list)):
        raise ConfigError(f"{what} must be a scalar here, got a range {v}")
    return float(v)


def input_signal(spec, grid):
    """Sample the configured input on the grid (scalar parameters only)."""
    t = grid.times()
    if spec.kind == "none":
        raise ConfigError("no signal to sample for InputSpec kind 'none'")
    if spec.kind == "constant":
        vals = np.full((grid.n, 1), _scalar(spec.value, "constant value"))
    elif spec.kind == "sinusoid":
        a = _scalar(spec.amplitude, "amplitude")
        w = _scalar(spec.omega_u, "omega_u")
        vals = (a * np.sin(w * t))[:, None]
    else:
        raise ConfigError(f"unknown input kind {spec.kind!r}")
    return SampledSignal(grid, vals)


def sinusoid_generator_field(t, w, u=None):
    """Auxiliary system whose first coordinate reproduces a sinusoid:
    w1' = w2, w2' = -w3 w1, w3' = 0."""
    w = np.asarray(w)
    return np.stack([w[..., 1], -w[..., 2] * w[..., 0],
                     np.zeros_like(w[..., 2])], axis=-1)


@dataclass
class Trajectory:
    """One rollout: outputs on the grid, optional inputs and true states."""

    grid: TimeGrid
    y: np.ndarray          # (n, d_y) measured outputs
    u: np.ndarray = None   # (n, d_u) inputs, if the system has any
    x: np.ndarray = None   # (n, d_x) true states, for diagnostics
    meta: dict = field(default_factory=dict)


def _draw(rng, v):
    if isinstance(v, (tuple, list)):
        return float(rng.uniform(v[0], v[1]))
    return float(v)


DEFAULT_INPUTS = {
    "harmonic": InputSpec(kind="none"),
    "vdp": InputSpec(kind="sinusoid", amplitude=1.2, omega_u=(1.0, 3.0)),
    "fhn": InputSpec(kind="constant", value=(0.0, 1.0)),
    # earthquake forcing is synthesized below with F0 in [0.5, 1.5],
    # omega in [1, 3]: u(t) = F0 omega^2 cos(omega t)
    "earthquake": InputSpec(kind="none"),
}

EARTHQUAKE_F0_RANGE = (0.5, 1.5)
EARTHQUAKE_OMEGA_RANGE = (1.0, 3.0)


def _trajectory_input(sys, spec, grid, rng):
    """Per-trajectory input samples on the grid, plus drawn parameters."""
    t = grid.times()
    if sys.kind == "earthquake":
        f0 = _draw(rng, EARTHQUAKE_F0_RANGE)
        om = _draw(rng, EARTHQUAKE_OMEGA_RANGE)
        u = (f0 * om**2 * np.cos(om * t))[:, None]
        return u, {"F0": f0, "omega": om}
    if spec is None or spec.kind == "none":
        return None, {}
    if spec.kind == "constant":
        val = _draw(rng, spec.value)
        return np.full((grid.n, 1), val), {"value": val}
    if spec.kind == "sinusoid":
        a = _draw(rng, spec.amplitude)
        w = _draw(rng, spec.omega_u)
        return (a * np.sin(w * t))[:, None], {"amplitude": a, "omega_u": w}
    raise ConfigError(f"unknown input kind {spec.kind!r}")


def generate_dataset(sys, input_spec, noise, n_traj, grid, x0_sampler=None,
                     substeps=10, threads=1):
    """Simulate n_traj rollouts on a finer solver grid, then subsample.

    Each trajectory gets its own child generator of noise.seed, so results
    do not depend on generation order (or thread count). Outputs receive
    i.i.d. Gaussian noise of variance noise.sigma2; true states are kept.
    """
    if n_traj < 1:
        raise ConfigError("need at least one trajectory")
    if sys.kind == "earthquake" and input_spec is not None and input_spec.kind != "none":
        raise ConfigError("the earthquake forcing is built in; pass no input spec")
    if x0_sampler is None:
        x0_sampler = lambda rng: rng.uniform(-1.0, 1.0, size=sys.d_x)

    def one(j):
        rng = np.random.default_rng([noise.seed, j])
        x0 = np.asarray(x0_sampler(rng), dtype=np.float64)
        u_coarse, input_meta = _trajectory_input(sys, input_spec, grid, rng)

        fine = TimeGrid(grid.t0, grid.dt / substeps, (grid.n - 1) * substeps + 1)
        if u_coarse is None:
            u_sig = None
        else:
            u_fine, _ = _trajectory_input_resampled(sys, input_meta, fine)
            u_sig = SampledSignal(fine, u_fine)
        states_fine = integrate(lambda t, x, u: true_field(sys, t, x, u),
                                x0, fine, u=u_sig)
        states = states_fine[::substeps]
        y = states[:, list(sys.output_idx)].copy()
        if noise.sigma2 > 0:
            y = y + rng.normal(0.0, np.sqrt(noise.sigma2), size=y.shape)
        return Trajectory(grid=grid, y=y, u=u_coarse, x=states.copy(),
                          meta={"x0": x0.tolist(), **input_meta})

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, range(n_traj)))
    return [one(j) for j in range(n_traj)]


def _trajectory_input_resampled(sys, meta, grid):
    """Re-evaluate the analytic input on another grid from drawn parameters."""
    t = grid.times()
    if sys.kind == "earthquake":
        f0, om = meta["F0"], meta["omega"]
        return (f0 * om**2 * np.cos(om * t))[:, None], meta
    if "value" in meta:
        return np.full((grid.n, 1), meta["value"]), meta
    if "amplitude" in meta:
        return (meta["amplitude"] * np.sin(meta["omega_u"] * t))[:, None], meta
    raise ConfigError("cannot resample input without parameters")


def stack_trajectories(trajs):
    """Batch a list of same-grid trajectories into time-major arrays.

    Returns (grid, Y, U, X) with Y of shape (n, N, d_y); U/X are None when
    absent from every trajectory.
    """
    grid = trajs[0].grid
    for tr in trajs:
        if tr.grid != grid:
            raise ConfigError("trajectories must share one time grid")
    y = np.stack([tr.y for tr in trajs], axis=1)
    u = None
    if trajs[0].u is not None:
        u = np.stack([tr.u for tr in trajs], axis=1)
    x = None
    if trajs[0].x is not None:
        x = np.stack([tr.x for tr in trajs], axis=1)
    return grid, y, u, x
