"""Joint training of dynamics, recognition, and observer gains.

Each step assembles the recognition input from the first observation
window, estimates x(0), rolls the structured field over the full horizon,
and scores the normalized output loss on scaled channels. All trainable
parameters (field nets, physical scalars, psi, GRU, D entries) update with
Adam; D real parts are clamped back into the Hurwitz region afterwards.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, IntegrationError, TrainingError
from . import tape
from .nets import mlp_forward
from .observers import assemble_recognition_input
from .ode import SampledSignal, TimeGrid, integrate
from .optim import Adam
from .priors import eval_field, residual_penalty
from .systems import stack_trajectories
from .tape import Node

log = logging.getLogger("structnode")

STD_FLOOR = 1e-8


@dataclass
class Scaler:
    """Channel-wise affine scalers for outputs, inputs, and states.

    Measured state channels reuse the matching output scaler; the rest use
    the mean of the output scalers.
    """

    mean_y: np.ndarray
    std_y: np.ndarray
    mean_u: np.ndarray
    std_u: np.ndarray
    mean_x: np.ndarray
    std_x: np.ndarray

    def scale_y(self, y):
        return (y - self.mean_y) / self.std_y

    def unscale_y(self, y):
        return y * self.std_y + self.mean_y

    def scale_u(self, u):
        return (u - self.mean_u) / self.std_u

    def scale_x(self, x):
        return (x - self.mean_x) / self.std_x

    def unscale_x(self, x):
        return x * self.std_x + self.mean_x


def fit_scaler(dataset, output_idx, d_x):
    """Population moments over all samples of all trajectories."""
    if not dataset:
        raise ConfigError("cannot fit a scaler on an empty dataset")
    ys = np.concatenate([tr.y for tr in dataset], axis=0)
    mean_y = ys.mean(axis=0)
    std_y = np.maximum(ys.std(axis=0), STD_FLOOR)
    if dataset[0].u is not None:
        us = np.concatenate([tr.u for tr in dataset], axis=0)
        mean_u = us.mean(axis=0)
        std_u = np.maximum(us.std(axis=0), STD_FLOOR)
    else:
        mean_u = np.zeros(0)
        std_u = np.ones(0)
    mean_x = np.full(d_x, mean_y.mean())
    std_x = np.full(d_x, std_y.mean())
    for row, col in enumerate(output_idx):
        if col < d_x:
            mean_x[col] = mean_y[row]
            std_x[col] = std_y[row]
    return Scaler(mean_y, std_y, mean_u, std_u, mean_x, std_x)


def output_loss(pred, measured):
    """Sum of squared output residuals over 2 * d_y * n * N."""
    meas = np.asarray(measured, dtype=np.float64)
    pv = tape.value_of(pred)
    if pv.shape != meas.shape:
        raise ValueError(f"prediction shape {pv.shape} != measured {meas.shape}")
    n = meas.shape[0]
    d_y = meas.shape[-1]
    n_traj = meas.shape[1] if meas.ndim == 3 else 1
    diff = pred - meas
    return tape.asum(diff * diff) * (1.0 / (2.0 * d_y * n * n_traj))


@dataclass
class TrainingConfig:
    epochs: int
    t_c: float
    lr: float = 0.005
    decay: float = None          # multiplicative per-epoch factor
    batch_size: int = None       # whole trajectories; None = full batch
    train_D: bool = True
    val_fraction: float = 0.1
    patience: int = None         # early stopping on validation loss
    solver_substeps: int = 1     # internal RK4 steps per grid interval
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError("learning rate must be positive")
        if self.epochs < 0:
            raise ConfigError("epoch count must be nonnegative")


@dataclass
class MetricsReport:
    """Per-trajectory RMSE plus aggregates and training diagnostics."""

    rmse: list = field(default_factory=list)
    median: float = None
    iqr: float = None
    train_curve: list = field(default_factory=list)
    val_curve: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    @classmethod
    def from_rmse(cls, values, **extras):
        values = [float(v) for v in values]
        finite = [v for v in values if np.isfinite(v)]
        src = finite if finite else values
        q25, q50, q75 = np.percentile(src, [25, 50, 75])
        return cls(rmse=values, median=float(q50), iqr=float(q75 - q25),
                   extras=extras)

    def to_dict(self):
        return {
            "rmse": self.rmse,
            "median": self.median,
            "iqr": self.iqr,
            "train_curve": self.train_curve,
            "val_curve": self.val_curve,
            "extras": self.extras,
        }


def selector_matrix(output_idx, d_x):
    sel = np.zeros((len(output_idx), d_x))
    for row, col in enumerate(output_idx):
        sel[row, col] = 1.0
    return sel


def _window_signals(recog, grid, y_scaled, u_scaled):
    if recog.n_c > grid.n:
        raise ConfigError(f"recognition window t_c={recog.t_c} exceeds the horizon")
    y_win = SampledSignal(grid, y_scaled)
    u_win = None
    if recog.d_u > 0:
        if u_scaled is None:
            raise ConfigError("recognition expects an input window")
        u_win = SampledSignal(grid, u_scaled)
    return y_win, u_win


def estimate_initial_state(recog, scaler, grid, y_scaled, u_scaled):
    """Physical-coordinate x(0) estimate for a (batched) window."""
    y_win, u_win = _window_signals(recog, grid, y_scaled, u_scaled)
    zbar = assemble_recognition_input(recog, y_win, u_win)
    x0_scaled = mlp_forward(recog.psi, zbar)
    return x0_scaled * scaler.std_x + scaler.mean_x


def pipeline_loss(model, recog, grid, y_raw, u_raw, scaler, selector,
                  include_penalty=True, substeps=1):
    """Recognition -> rollout -> scaled output loss, on the tape.

    y_raw/u_raw are time-major stacks (n, N, channels) in physical units.
    """
    y_scaled = scaler.scale_y(y_raw)
    u_scaled = scaler.scale_u(u_raw) if (u_raw is not None and u_raw.shape[-1]) else None
    x0 = estimate_initial_state(recog, scaler, grid, y_scaled, u_scaled)
    u_sig = SampledSignal(grid, u_raw) if (u_raw is not None and model.d_u > 0) else None
    states = integrate(lambda t, x, u: eval_field(model, t, x, u), x0, grid,
                       u=u_sig, substeps=substeps)
    pred = tape.matmul(states, selector.T)
    pred_scaled = (pred - scaler.mean_y) / scaler.std_y
    loss = output_loss(pred_scaled, y_scaled)
    if include_penalty and model.kind == "residual_on_prior" and model.lambda_res > 0:
        loss = loss + residual_penalty(model, states, u_raw)
    return loss


@dataclass
class TrainResult:
    model: object
    recog: object
    scaler: Scaler
    report: MetricsReport


def train(model, recog, dataset, cfg, output_idx, scaler=None):
    """Fit all trainable parameters on a dataset of trajectories.

    Batches are whole trajectories. With cfg.patience set, 10% of the
    trajectories are held out and the best-validation parameters are
    restored at the end. Raises TrainingError on a non-finite loss, naming
    the epoch and batch.
    """
    grid, y_all, u_all, _ = stack_trajectories(dataset)
    if abs(round(cfg.t_c / grid.dt) * grid.dt - cfg.t_c) > 1e-9:
        raise ConfigError(f"t_c={cfg.t_c} is not a multiple of dt={grid.dt}")
    if scaler is None:
        scaler = fit_scaler(dataset, output_idx, model.d_x)
    sel = selector_matrix(output_idx, model.d_x)

    rng = np.random.default_rng([cfg.seed, 101])
    n_traj = y_all.shape[1]
    idx = np.arange(n_traj)
    val_idx = np.array([], dtype=int)
    if cfg.patience is not None and n_traj >= 2:
        n_val = max(1, int(round(cfg.val_fraction * n_traj)))
        perm = rng.permutation(n_traj)
        val_idx, idx = perm[:n_val], np.sort(perm[n_val:])

    params = model.parameters() + recog.parameters()
    opt = Adam(params, lr=cfg.lr)
    report = MetricsReport(extras={})
    best_val = np.inf
    best_snapshot = None
    stale = 0

    def batch_loss(batch, on_tape=True):
        y = y_all[:, batch]
        u = u_all[:, batch] if u_all is not None else None
        if on_tape:
            return pipeline_loss(model, recog, grid, y, u, scaler, sel,
                                 substeps=cfg.solver_substeps)
        with tape.no_grad():
            return float(pipeline_loss(model, recog, grid, y, u, scaler, sel,
                                       substeps=cfg.solver_substeps))

    batch_size = cfg.batch_size or len(idx)
    for epoch in range(cfg.epochs):
        order = rng.permutation(idx) if batch_size < len(idx) else idx
        epoch_losses = []
        for start in range(0, len(order), batch_size):
            batch = order[start:start + batch_size]
            tape.zero_grads(params)
            try:
                loss = batch_loss(batch)
            except IntegrationError as exc:
                raise TrainingError(
                    f"rollout diverged at epoch {epoch}, batch {start // batch_size}: {exc}"
                ) from exc
            lv = float(loss.value) if isinstance(loss, Node) else float(loss)
            if not np.isfinite(lv):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch {start // batch_size}")
            tape.backward(loss)
            opt.step()
            if recog.gains is not None and recog.gains.trainable and cfg.train_D:
                recog.gains.clamp_hurwitz()
            epoch_losses.append(lv)
        report.train_curve.append(float(np.mean(epoch_losses)))

        if len(val_idx):
            val_loss = batch_loss(val_idx, on_tape=False)
            report.val_curve.append(val_loss)
            if val_loss < best_val - 1e-12:
                best_val = val_loss
                best_snapshot = [p.value.copy() for p in params]
                stale = 0
            else:
                stale += 1
                if cfg.patience is not None and stale > cfg.patience:
                    log.info("early stop at epoch %d (best val %.3e)", epoch, best_val)
                    break
        if cfg.decay is not None:
            opt.decay_lr(cfg.decay)

    if best_snapshot is not None:
        for p, v in zip(params, best_snapshot):
            p.value[...] = v
    report.extras["scalars"] = model.scalar_values()
    report.extras["epochs_run"] = len(report.train_curve)
    return TrainResult(model=model, recog=recog, scaler=scaler, report=report)


def predict_outputs(model, recog, scaler, traj, output_idx, substeps=1):
    """Scaled predicted outputs for one trajectory, off the tape."""
    sel = selector_matrix(output_idx, model.d_x)
    with tape.no_grad():
        y_scaled = scaler.scale_y(traj.y)
        u_scaled = scaler.scale_u(traj.u) if (traj.u is not None and recog.d_u > 0) else None
        x0 = estimate_initial_state(recog, scaler, traj.grid, y_scaled, u_scaled)
        u_sig = SampledSignal(traj.grid, traj.u) if (traj.u is not None and model.d_u > 0) else None
        states = integrate(lambda t, x, u: eval_field(model, t, x, u),
                           x0, traj.grid, u=u_sig, substeps=substeps)
        pred_scaled = (states @ sel.T - scaler.mean_y) / scaler.std_y
    return pred_scaled, states


def evaluate_rmse(model, recog, dataset, output_idx, scaler, substeps=1):
    """Prediction RMSE per trajectory on scaled output channels.

    The window at the start of each trajectory feeds recognition; the
    rollout covers the whole horizon. Diverging rollouts count as inf.
    """
    values = []
    for traj in dataset:
        try:
            pred_scaled, _ = predict_outputs(model, recog, scaler, traj, output_idx,
                                             substeps=substeps)
            meas_scaled = scaler.scale_y(traj.y)
            err = pred_scaled - meas_scaled
            rmse = float(np.sqrt(np.mean(err * err)))
        except (IntegrationError, FloatingPointError):
            rmse = np.inf
        values.append(rmse if np.isfinite(rmse) else np.inf)
    return MetricsReport.from_rmse(values)


def zero_predictor_rmse(dataset, scaler):
    """Baseline: predict the scaled output as identically zero."""
    values = []
    for traj in dataset:
        meas = scaler.scale_y(traj.y)
        values.append(float(np.sqrt(np.mean(meas * meas))))
    return MetricsReport.from_rmse(values)
