"""MLP and GRU function approximators built on the tape.

Weights live in leaf Nodes so the optimizer can update them in place
between passes. Layout follows x @ W + b with W of shape (fan_in, fan_out).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from . import tape
from .tape import Node


def xavier_uniform(rng, fan_in, fan_out):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


@dataclass
class MLPParams:
    """Stack of affine layers; SiLU on hidden layers, identity output."""

    weights: list
    biases: list

    @property
    def sizes(self):
        dims = [self.weights[0].value.shape[0]]
        dims += [w.value.shape[1] for w in self.weights]
        return dims

    def parameters(self):
        return list(self.weights) + list(self.biases)

    def param_count(self):
        return sum((w.value.shape[0] + 1) * w.value.shape[1] for w in self.weights)


def mlp_init(sizes, rng, name="mlp"):
    """Seeded Xavier-uniform weights, zero biases; sizes = [in, h1, ..., out]."""
    if len(sizes) < 2:
        raise ConfigError("an MLP needs at least input and output sizes")
    weights, biases = [], []
    for i, (fin, fout) in enumerate(zip(sizes[:-1], sizes[1:])):
        weights.append(Node(xavier_uniform(rng, fin, fout), name=f"{name}.w{i}"))
        biases.append(Node(np.zeros(fout), name=f"{name}.b{i}"))
    return MLPParams(weights, biases)


def mlp_forward(params, x):
    """Alternate affine maps and SiLU; final layer affine only."""
    xv = tape.value_of(x)
    if xv.shape[-1] != params.weights[0].value.shape[0]:
        raise ConfigError(
            f"MLP expects input width {params.weights[0].value.shape[0]}, "
            f"got {xv.shape[-1]}")
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = tape.matmul(h, w) + b
        if i != last:
            h = tape.silu(h)
    return h


def mlp_input_gradient(params, x):
    """Gradient of a scalar-output MLP w.r.t. its input.

    Written as an explicit reverse sweep in primitive ops, so the result is
    itself differentiable w.r.t. the weights (needed when the vector field
    is the gradient of a learned potential).
    """
    if params.weights[-1].value.shape[1] != 1:
        raise ConfigError("input gradient requires a scalar-output MLP")
    xv = tape.value_of(x)
    if xv.shape[-1] != params.weights[0].value.shape[0]:
        raise ConfigError("MLP input width mismatch")
    pre = []  # pre-activations of hidden layers
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = tape.matmul(h, w) + b
        if i != last:
            pre.append(h)
            h = tape.silu(h)
    # pull the unit output adjoint back through the layers
    v = None
    for i in range(last, -1, -1):
        wt = tape.transpose(params.weights[i])
        if v is None:
            v = tape.take(wt, 0) if isinstance(wt, Node) else wt[0]
        else:
            v = tape.matmul(v, wt)
        if i > 0:
            v = v * tape.silu_prime(pre[i - 1])
    return v


@dataclass
class GRUParams:
    """Gate weights for one GRU cell of hidden width d_z."""

    w_z: Node
    u_z: Node
    b_z: Node
    w_r: Node
    u_r: Node
    b_r: Node
    w_h: Node
    u_h: Node
    b_h: Node
    hidden: int = field(default=0)

    def parameters(self):
        return [self.w_z, self.u_z, self.b_z, self.w_r, self.u_r, self.b_r,
                self.w_h, self.u_h, self.b_h]


def gru_init(d_in, d_hidden, rng, name="gru"):
    def w(fin, fout, tag):
        return Node(xavier_uniform(rng, fin, fout), name=f"{name}.{tag}")

    def b(tag):
        return Node(np.zeros(d_hidden), name=f"{name}.{tag}")

    return GRUParams(
        w_z=w(d_in, d_hidden, "w_z"), u_z=w(d_hidden, d_hidden, "u_z"), b_z=b("b_z"),
        w_r=w(d_in, d_hidden, "w_r"), u_r=w(d_hidden, d_hidden, "u_r"), b_r=b("b_r"),
        w_h=w(d_in, d_hidden, "w_h"), u_h=w(d_hidden, d_hidden, "u_h"), b_h=b("b_h"),
        hidden=d_hidden)


def gru_step(params, h, x_in):
    """One cell update: h' = (1 - z) * h_cand + z * h."""
    hv, xv = tape.value_of(h), tape.value_of(x_in)
    if hv.shape[-1] != params.hidden:
        raise ConfigError(f"GRU hidden width {params.hidden}, got {hv.shape[-1]}")
    if xv.shape[-1] != params.w_z.value.shape[0]:
        raise ConfigError(
            f"GRU input width {params.w_z.value.shape[0]}, got {xv.shape[-1]}")
    z = tape.sigmoid(tape.matmul(x_in, params.w_z) + tape.matmul(h, params.u_z) + params.b_z)
    r = tape.sigmoid(tape.matmul(x_in, params.w_r) + tape.matmul(h, params.u_r) + params.b_r)
    cand = tape.tanh(tape.matmul(x_in, params.w_h) + tape.matmul(r * h, params.u_h) + params.b_h)
    return (1.0 - z) * cand + z * h
