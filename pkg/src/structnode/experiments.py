"""End-to-end experiment drivers: generate, train, evaluate, ablate, filter.

These functions wire the configuration onto the library pieces and handle
file I/O; the CLI is a thin wrapper around them. Seeds derive from the
config seed with fixed offsets so each stage is reproducible on its own.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from . import tape
from .config import RESIDUAL_PRIORS, ExperimentConfig
from .ekf import default_config as ekf_default_config
from .ekf import run_ekf
from .errors import ConfigError, PreconditionError
from .io import read_dataset, save_params, load_params, write_dataset, write_trajectory_csv
from .observers import make_recognition
from .ode import SampledSignal, TimeGrid, integrate
from .priors import eval_field, make_model
from .systems import (
    DEFAULT_INPUTS,
    NoiseSpec,
    SYSTEMS,
    Trajectory,
    generate_dataset,
    stack_trajectories,
    true_field,
)
from .training import (
    TrainingConfig,
    evaluate_rmse,
    predict_outputs,
    train,
    zero_predictor_rmse,
)

log = logging.getLogger("structnode")

TEST_SEED_OFFSET = 9000
EKF_SEED_OFFSET = 13000


def build_system(cfg):
    return SYSTEMS[cfg.system]()


def model_state_dim(cfg, sys):
    return sys.d_x + 1 if cfg.structure == "extended_state" else sys.d_x


def build_model(cfg, sys, rng):
    d_x = model_state_dim(cfg, sys)
    prior = None
    if cfg.structure == "residual_on_prior":
        a = cfg.prior_A if cfg.prior_A is not None else RESIDUAL_PRIORS[cfg.system][0]
        b = cfg.prior_B if cfg.prior_B is not None else RESIDUAL_PRIORS[cfg.system][1]
        prior = (np.asarray(a, float), None if b is None else np.asarray(b, float))
    template = cfg.system if cfg.structure in ("parametric", "extended_state") else None
    if cfg.structure == "extended_state" and cfg.system != "harmonic":
        raise ConfigError("extended state is defined for the harmonic system")
    return make_model(cfg.structure, d_x=d_x, d_u=sys.d_u, rng=rng,
                      hidden=tuple(cfg.f_hidden), template=template, prior=prior,
                      lambda_res=cfg.lambda_res, init_params=cfg.init_params)


def build_recognition(cfg, sys, rng):
    d_x = model_state_dim(cfg, sys)
    d_u = sys.d_u if sys.recog_uses_u else 0
    return make_recognition(cfg.recognition, d_x=d_x, d_y=sys.d_y, d_u=d_u,
                            t_c=cfg.t_c, dt=cfg.dt, rng=rng,
                            hidden=tuple(cfg.psi_hidden), d_z=cfg.d_z,
                            omega_c=cfg.omega_c, d_omega=cfg.d_omega,
                            d_init=cfg.d_init, train_D=cfg.train_D)


def make_trajectories(cfg, sys, n_traj, n_samples, seed, threads=1):
    grid = TimeGrid(0.0, cfg.dt, n_samples)
    input_spec = DEFAULT_INPUTS[cfg.system]
    return generate_dataset(sys, input_spec, NoiseSpec(sigma2=cfg.sigma2, seed=seed),
                            n_traj, grid, substeps=cfg.substeps, threads=threads)


def run_generate(cfg, threads=1):
    """Write the training dataset (one CSV per trajectory plus manifest)."""
    sys = build_system(cfg)
    trajs = make_trajectories(cfg, sys, cfg.n_train, cfg.n_samples, cfg.seed,
                              threads=threads)
    manifest = write_dataset(cfg.dataset_path, trajs,
                             manifest_extra={"config": cfg.to_dict(),
                                             "seed": cfg.seed})
    log.info("wrote %d trajectories to %s", len(trajs), cfg.dataset_path)
    return manifest


def run_train(cfg):
    """Train on the generated dataset; writes params and training metrics."""
    trajs, _ = read_dataset(cfg.dataset_path)
    sys = build_system(cfg)
    rng = np.random.default_rng([cfg.seed, 1])
    model = build_model(cfg, sys, rng)
    recog = build_recognition(cfg, sys, rng)
    tcfg = TrainingConfig(epochs=cfg.epochs, t_c=cfg.t_c, lr=cfg.lr,
                          decay=cfg.decay, batch_size=cfg.batch_size,
                          train_D=cfg.train_D, patience=cfg.patience,
                          solver_substeps=cfg.train_substeps, seed=cfg.seed)
    result = train(model, recog, trajs, tcfg, sys.output_idx)
    save_params(cfg.params_path, model, recog, result.scaler)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "metrics_train.json", "w") as fh:
        json.dump(result.report.to_dict(), fh, indent=1)
    log.info("trained %s/%s/%s: final loss %.3e", cfg.system, cfg.structure,
             cfg.recognition, result.report.train_curve[-1]
             if result.report.train_curve else float("nan"))
    return result


def run_eval(cfg, write_predictions=True):
    """Evaluate a trained model on fresh test trajectories; writes metrics."""
    model, recog, scaler = load_params(cfg.params_path)
    sys = build_system(cfg)
    horizon = (cfg.n_test_samples - 1) * cfg.dt
    if recog.t_c > horizon + 1e-9:
        raise PreconditionError(
            f"t_c={recog.t_c} exceeds the test horizon {horizon}")
    test = make_trajectories(cfg, sys, cfg.n_test, cfg.n_test_samples,
                             cfg.seed + TEST_SEED_OFFSET)
    report = evaluate_rmse(model, recog, test, sys.output_idx, scaler,
                           substeps=cfg.train_substeps)
    baseline = zero_predictor_rmse(test, scaler)
    report.extras["zero_predictor_median"] = baseline.median
    report.extras["scalars"] = model.scalar_values()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "metrics_eval.json", "w") as fh:
        json.dump(report.to_dict(), fh, indent=1)
    if write_predictions:
        pred_dir = out / "predictions"
        pred_dir.mkdir(exist_ok=True)
        for j, traj in enumerate(test[:20]):
            pred_scaled, states = predict_outputs(model, recog, scaler, traj,
                                                  sys.output_idx,
                                                  substeps=cfg.train_substeps)
            pred = scaler.unscale_y(pred_scaled)
            rec = Trajectory(grid=traj.grid, y=pred,
                             u=traj.u, x=None, meta={})
            write_trajectory_csv(pred_dir / f"pred_{j:04d}.csv", rec)
    log.info("eval median RMSE %.4f (IQR %.4f)", report.median, report.iqr)
    return report


def run_train_eval(cfg):
    """Generate + train + evaluate in memory; returns the eval report."""
    sys = build_system(cfg)
    trajs = make_trajectories(cfg, sys, cfg.n_train, cfg.n_samples, cfg.seed)
    rng = np.random.default_rng([cfg.seed, 1])
    model = build_model(cfg, sys, rng)
    recog = build_recognition(cfg, sys, rng)
    tcfg = TrainingConfig(epochs=cfg.epochs, t_c=cfg.t_c, lr=cfg.lr,
                          decay=cfg.decay, batch_size=cfg.batch_size,
                          train_D=cfg.train_D, patience=cfg.patience,
                          solver_substeps=cfg.train_substeps, seed=cfg.seed)
    result = train(model, recog, trajs, tcfg, sys.output_idx)
    test = make_trajectories(cfg, sys, cfg.n_test, cfg.n_test_samples,
                             cfg.seed + TEST_SEED_OFFSET)
    report = evaluate_rmse(model, recog, test, sys.output_idx, result.scaler,
                           substeps=cfg.train_substeps)
    baseline = zero_predictor_rmse(test, result.scaler)
    report.extras["zero_predictor_median"] = baseline.median
    report.extras["scalars"] = model.scalar_values()
    report.train_curve = result.report.train_curve
    report.val_curve = result.report.val_curve
    return report, result


def ablate(axis, values, base_cfg):
    """One full train+evaluate per axis value, sharing base seed offsets."""
    if not values:
        raise ConfigError("ablation needs at least one value")
    reports = []
    for i, value in enumerate(values):
        overrides = {axis: value}
        data = dict(base_cfg.to_dict())
        data.update(overrides)
        cfg = ExperimentConfig.from_dict(data)
        report, _ = run_train_eval(cfg)
        report.extras["axis"] = axis
        report.extras["value"] = value
        reports.append(report)
        log.info("ablate %s=%s -> median RMSE %.4f", axis, value, report.median)
    return reports


def run_ablate(cfg):
    if cfg.ablate_axis is None or not cfg.ablate_values:
        raise ConfigError("config needs ablate_axis and ablate_values")
    reports = ablate(cfg.ablate_axis, cfg.ablate_values, cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "metrics_ablate.json", "w") as fh:
        json.dump([r.to_dict() for r in reports], fh, indent=1)
    return reports


def run_ekf_eval(cfg, write_estimates=True):
    """Run the EKF with a trained (or true parametric) model on test streams.

    Compares filtered state RMSE against the open-loop rollout from the
    same perturbed initial state; writes estimated-state CSVs.
    """
    sys = build_system(cfg)
    model, recog, scaler = load_params(cfg.params_path)
    if model.d_x != sys.d_x:
        raise ConfigError("EKF evaluation needs a model in the plant's coordinates")
    n = int(round(cfg.ekf_horizon / cfg.dt)) + 1
    ekf_cfg = ekf_default_config(model.d_x, sys.output_idx, cfg.dt,
                                 sigma2=cfg.ekf_r if cfg.ekf_r is not None else cfg.sigma2,
                                 q=cfg.ekf_q)
    streams = make_trajectories(cfg, sys, cfg.ekf_streams, n,
                                cfg.seed + EKF_SEED_OFFSET)
    rows = []
    out = Path(cfg.out_dir)
    est_dir = out / "ekf_estimates"
    if write_estimates:
        est_dir.mkdir(parents=True, exist_ok=True)
    for j, traj in enumerate(streams):
        rng = np.random.default_rng([cfg.seed, EKF_SEED_OFFSET, j])
        x0 = traj.x[0] + rng.normal(0.0, cfg.ekf_perturb, size=sys.d_x)
        means, _ = run_ekf(model, ekf_cfg, traj.y, u_seq=traj.u, x0=x0,
                           P0=np.eye(model.d_x) * max(cfg.ekf_perturb ** 2, 1e-4))
        ekf_rmse = float(np.sqrt(np.mean((means[:, :sys.d_x] - traj.x) ** 2)))
        u_sig = SampledSignal(traj.grid, traj.u) if traj.u is not None else None
        with tape.no_grad():
            open_states = integrate(lambda t, x, u: eval_field(model, t, x, u),
                                    x0, traj.grid, u=u_sig)
        open_states = tape.value_of(open_states)
        open_rmse = float(np.sqrt(np.mean((open_states[:, :sys.d_x] - traj.x) ** 2)))
        rows.append({"stream": j, "ekf_rmse": ekf_rmse, "open_loop_rmse": open_rmse})
        if write_estimates:
            rec = Trajectory(grid=traj.grid, y=traj.y, u=traj.u,
                             x=means, meta={})
            write_trajectory_csv(est_dir / f"ekf_{j:04d}.csv", rec)
    summary = {
        "streams": rows,
        "ekf_median": float(np.median([r["ekf_rmse"] for r in rows])),
        "open_loop_median": float(np.median([r["open_loop_rmse"] for r in rows])),
        "wins": sum(1 for r in rows if r["ekf_rmse"] < r["open_loop_rmse"]),
    }
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "metrics_ekf.json", "w") as fh:
        json.dump(summary, fh, indent=1)
    return summary
