"""Structural priors for the learned vector field.

The ladder runs from a free neural field to fully parametric dynamics:
free, general Hamiltonian, second-order Hamiltonian (positions/velocities
imposed), explicit position/velocity pairs with a learned remainder,
parametric templates with free physical scalars, extended state with
constant unknown coordinates, and a learned residual on a linear prior.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from . import tape
from .nets import MLPParams, mlp_forward, mlp_init, mlp_input_gradient
from .tape import Node

KINDS = ("free", "hamiltonian_general", "hamiltonian_second_order",
         "second_order_pairs", "parametric", "extended_state",
         "residual_on_prior")

TEMPLATES = ("harmonic", "vdp", "fhn", "earthquake")

# initialization ranges for the free physical scalars, seeded per run
PARAM_INIT_RANGES = {
    "harmonic": {"omega": (0.5, 2.0)},
    "earthquake": {"k_m": (8.0, 12.0)},
    "vdp": {"mu": (0.5, 1.5)},
    "fhn": {"eps": (0.05, 0.15), "gamma": (0.75, 2.25), "beta": (0.4, 1.2)},
}


@dataclass
class ModelSpec:
    """A structural prior bound to its trainable pieces.

    d_x is the model's state dimension (including appended constant
    coordinates for the extended kind); d_u the input channels the field
    consumes.
    """

    kind: str
    d_x: int
    d_u: int = 0
    f_net: MLPParams = None
    h_net: MLPParams = None  # learned potential for the Hamiltonian kinds
    params: dict = field(default_factory=dict)
    template: str = None
    prior: tuple = None  # (A_prior, B_prior) for residual_on_prior
    lambda_res: float = 0.0
    pair_map: list = field(default_factory=list)

    def parameters(self):
        out = []
        if self.f_net is not None:
            out += self.f_net.parameters()
        if self.h_net is not None:
            out += self.h_net.parameters()
        out += list(self.params.values())
        return out

    def scalar_values(self):
        return {k: float(v.value) for k, v in self.params.items()}


def make_model(kind, *, d_x, d_u=0, rng=None, hidden=(50, 50), template=None,
               prior=None, lambda_res=0.0, pair_map=None, init_params=None):
    """Build a ModelSpec with freshly initialized networks and scalars.

    For the parametric and extended kinds, template names the physical
    system form; free scalars start uniformly in their documented ranges
    unless init_params pins them.
    """
    if kind not in KINDS:
        raise ConfigError(f"unknown model kind {kind!r}")
    rng = rng if rng is not None else np.random.default_rng(0)
    f_net = h_net = None
    params = {}
    pair_map = list(pair_map) if pair_map else []

    if kind == "free":
        f_net = mlp_init([d_x + d_u] + list(hidden) + [d_x], rng, name="f")
    elif kind == "hamiltonian_general":
        if d_x % 2:
            raise ConfigError("Hamiltonian dynamics need an even state dimension")
        h_net = mlp_init([d_x] + list(hidden) + [1], rng, name="H")
    elif kind == "hamiltonian_second_order":
        if d_x % 2:
            raise ConfigError("Hamiltonian dynamics need an even state dimension")
        h_net = mlp_init([d_x // 2] + list(hidden) + [1], rng, name="H")
    elif kind == "second_order_pairs":
        if not pair_map:
            pair_map = [(i, i + 1) for i in range(0, d_x - 1, 2)]
        n_free = d_x - len(pair_map)
        f_net = mlp_init([d_x + d_u] + list(hidden) + [n_free], rng, name="f")
    elif kind in ("parametric", "extended_state"):
        if kind == "extended_state":
            template = template or "harmonic"
            if template != "harmonic":
                raise ConfigError("extended state is defined for the oscillator template")
        if template not in TEMPLATES:
            raise ConfigError(f"unknown parametric template {template!r}")
        if kind == "parametric":
            ranges = PARAM_INIT_RANGES[template]
            for name, (lo, hi) in ranges.items():
                start = (init_params or {}).get(name, rng.uniform(lo, hi))
                params[name] = Node(np.asarray(float(start)), name=f"param.{name}")
    elif kind == "residual_on_prior":
        if prior is None:
            raise ConfigError("residual_on_prior needs (A_prior, B_prior)")
        a_p = np.asarray(prior[0], dtype=np.float64)
        b_p = np.asarray(prior[1], dtype=np.float64) if prior[1] is not None else None
        if a_p.shape != (d_x, d_x):
            raise ConfigError("A_prior must be d_x x d_x")
        prior = (a_p, b_p)
        f_net = mlp_init([d_x + d_u] + list(hidden) + [d_x], rng, name="f_res")

    return ModelSpec(kind=kind, d_x=d_x, d_u=d_u, f_net=f_net, h_net=h_net,
                     params=params, template=template, prior=prior,
                     lambda_res=lambda_res, pair_map=pair_map)


def _net_input(x, u, d_u):
    if d_u == 0 or u is None:
        return x
    return tape.concat([x, u], axis=-1)


def eval_field(spec, t, x, u=None):
    """Structured vector field at (t, x, u); batched over leading axes."""
    xv = tape.value_of(x)
    if xv.shape[-1] != spec.d_x:
        raise ConfigError(f"state width {xv.shape[-1]} != d_x {spec.d_x}")

    if spec.kind == "free":
        return mlp_forward(spec.f_net, _net_input(x, u, spec.d_u))

    if spec.kind == "hamiltonian_general":
        half = spec.d_x // 2
        g = mlp_input_gradient(spec.h_net, x)
        dq = tape.take(g, (..., slice(half, None)))
        dp = -tape.take(g, (..., slice(0, half)))
        return tape.concat([dq, dp], axis=-1)

    if spec.kind == "hamiltonian_second_order":
        half = spec.d_x // 2
        q = tape.take(x, (..., slice(0, half)))
        v = tape.take(x, (..., slice(half, None)))
        g = mlp_input_gradient(spec.h_net, q)
        return tape.concat([v, -g], axis=-1)

    if spec.kind == "second_order_pairs":
        f_out = mlp_forward(spec.f_net, _net_input(x, u, spec.d_u))
        copied = {pos: vel for pos, vel in spec.pair_map}
        rows = []
        free_col = 0
        for i in range(spec.d_x):
            if i in copied:
                rows.append(tape.take(x, (..., slice(copied[i], copied[i] + 1))))
            else:
                rows.append(tape.take(f_out, (..., slice(free_col, free_col + 1))))
                free_col += 1
        return tape.concat(rows, axis=-1)

    if spec.kind == "parametric":
        return _parametric_field(spec, t, x, u)

    if spec.kind == "extended_state":
        x1 = tape.take(x, (..., slice(0, 1)))
        x2 = tape.take(x, (..., slice(1, 2)))
        x3 = tape.take(x, (..., slice(2, 3)))
        zero = np.zeros(xv.shape[:-1] + (1,))
        return tape.concat([x2, -(x3 * x1), zero], axis=-1)

    if spec.kind == "residual_on_prior":
        a_p, b_p = spec.prior
        lin = tape.matmul(x, a_p.T)
        if b_p is not None and u is not None:
            lin = lin + u @ b_p.T
        return lin + mlp_forward(spec.f_net, _net_input(x, u, spec.d_u))

    raise ConfigError(f"unknown model kind {spec.kind!r}")


def _parametric_field(spec, t, x, u):
    def col(arr, i):
        if isinstance(arr, Node):
            return tape.take(arr, (..., slice(i, i + 1)))
        return arr[..., i:i + 1]

    if spec.template == "harmonic":
        omega = spec.params["omega"]
        return tape.concat([col(x, 1), -(omega * omega) * col(x, 0)], axis=-1)
    if spec.template == "vdp":
        mu = spec.params["mu"]
        x1, x2 = col(x, 0), col(x, 1)
        acc = mu * (1.0 - x1 * x1) * x2 - x1
        if u is not None:
            acc = acc + u
        return tape.concat([x2, acc], axis=-1)
    if spec.template == "fhn":
        eps, gamma, beta = spec.params["eps"], spec.params["gamma"], spec.params["beta"]
        v, w = col(x, 0), col(x, 1)
        dv = (v - v ** 3 - w) / eps
        if u is not None:
            dv = dv + u
        dw = gamma * v - w + beta
        return tape.concat([dv, dw], axis=-1)
    if spec.template == "earthquake":
        k_m = spec.params["k_m"]
        x1, x2, x3, x4 = (col(x, i) for i in range(4))
        force = u if u is not None else 0.0
        return tape.concat([
            x2,
            k_m * (x3 - 2.0 * x1) - force,
            x4,
            k_m * (x1 - x3) - force,
        ], axis=-1)
    raise ConfigError(f"unknown parametric template {spec.template!r}")


def residual_penalty(spec, states, inputs=None):
    """lambda_res times the mean squared residual-field norm over a batch."""
    if spec.kind != "residual_on_prior":
        raise ValueError("residual penalty only applies to residual_on_prior models")
    if spec.lambda_res == 0.0:
        return 0.0
    res = mlp_forward(spec.f_net, _net_input(states, inputs, spec.d_u))
    sq = tape.asum(res * res, axis=-1)
    return spec.lambda_res * tape.amean(sq)


def hamiltonian_value(spec, x):
    """The conserved quantity of a Hamiltonian-kind field.

    For the general kind this is the learned H itself; for the
    second-order kind the kinetic term is explicit: H = |v|^2/2 + H_net(q).
    """
    if spec.kind == "hamiltonian_general":
        return tape.take(mlp_forward(spec.h_net, x), (..., 0))
    if spec.kind == "hamiltonian_second_order":
        half = spec.d_x // 2
        q = tape.take(x, (..., slice(0, half)))
        v = tape.take(x, (..., slice(half, None)))
        kinetic = 0.5 * tape.asum(v * v, axis=-1)
        pot = tape.take(mlp_forward(spec.h_net, q), (..., 0))
        return kinetic + pot
    raise ValueError("conserved quantity defined for Hamiltonian kinds only")


def hamiltonian_gradient(spec, x):
    """Gradient of the conserved quantity w.r.t. the state."""
    if spec.kind == "hamiltonian_general":
        return mlp_input_gradient(spec.h_net, x)
    if spec.kind == "hamiltonian_second_order":
        half = spec.d_x // 2
        q = tape.take(x, (..., slice(0, half)))
        v = tape.take(x, (..., slice(half, None)))
        gq = mlp_input_gradient(spec.h_net, q)
        return tape.concat([gq, v], axis=-1)
    raise ValueError("conserved quantity defined for Hamiltonian kinds only")
