"""Experiment configuration: a strict, versioned JSON schema plus presets.

Every field has a default matching the benchmark protocol for the chosen
system; unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigError

CONFIG_SCHEMA_VERSION = 1

SYSTEM_KINDS = ("harmonic", "vdp", "fhn", "earthquake")
STRUCTURE_KINDS = ("free", "hamiltonian_general", "hamiltonian_second_order",
                   "second_order_pairs", "parametric", "extended_state",
                   "residual_on_prior")
RECOGNITION_KINDS = ("direct", "rnn", "kkl", "kklu")

# structures and recognitions that make sense per system; kklu needs an
# exogenous input in the recognition window, extended state is the
# oscillator construction, and the earthquake window is output-only
VALID_STRUCTURES = {
    "harmonic": ("free", "hamiltonian_general", "hamiltonian_second_order",
                 "parametric", "extended_state"),
    "vdp": ("free", "parametric", "second_order_pairs", "residual_on_prior"),
    "fhn": ("free", "parametric"),
    "earthquake": ("free", "parametric", "second_order_pairs", "residual_on_prior"),
}
VALID_RECOGNITIONS = {
    "harmonic": ("direct", "rnn", "kkl"),
    "vdp": ("direct", "rnn", "kkl", "kklu"),
    "fhn": ("direct", "rnn", "kkl", "kklu"),
    "earthquake": ("direct", "rnn", "kkl"),
}

# benchmark protocol defaults per system
SYSTEM_DEFAULTS = {
    "harmonic": dict(dt=0.06, n_samples=50, n_test_samples=150, sigma2=1e-4,
                     n_train=20, n_test=100, t_c=1.2, d_omega=3),
    "vdp": dict(dt=0.03, n_samples=100, n_test_samples=100, sigma2=1e-3,
                n_train=50, n_test=100, t_c=1.2, d_omega=3),
    "fhn": dict(dt=0.03, n_samples=100, n_test_samples=100, sigma2=5e-4,
                n_train=50, n_test=100, t_c=1.2, d_omega=1, train_substeps=4),
    "earthquake": dict(dt=0.03, n_samples=100, n_test_samples=100, sigma2=1e-4,
                       n_train=50, n_test=100, t_c=1.2, d_omega=3),
}

# imperfect linear priors for the residual structure
RESIDUAL_PRIORS = {
    "vdp": ([[0.0, 1.0], [-1.0, 0.5]], [[0.0], [1.0]]),
    "earthquake": ([[0.0, 1.0, 0.0, 0.0],
                    [-16.0, 0.0, 8.0, 0.0],
                    [0.0, 0.0, 0.0, 1.0],
                    [8.0, 0.0, -8.0, 0.0]],
                   [[0.0], [-1.0], [0.0], [-1.0]]),
}


@dataclass
class ExperimentConfig:
    system: str = "harmonic"
    structure: str = "free"
    recognition: str = "kkl"
    # dataset
    n_train: int = 20
    n_test: int = 100
    n_samples: int = 50
    n_test_samples: int = 150
    dt: float = 0.06
    sigma2: float = 1e-4
    substeps: int = 10           # generation solver refinement
    train_substeps: int = 1      # rollout solver refinement (stiff fields)
    # recognition / observer
    t_c: float = 1.2
    d_z: int = None
    omega_c: float = 1.0
    d_omega: int = 3
    d_init: str = "butterworth"
    train_D: bool = True
    psi_hidden: list = field(default_factory=lambda: [50, 50])
    # model
    f_hidden: list = field(default_factory=lambda: [50, 50])
    lambda_res: float = 0.0
    prior_A: list = None
    prior_B: list = None
    init_params: dict = None
    # training
    lr: float = 0.005
    epochs: int = 300
    decay: float = None
    batch_size: int = None
    patience: int = None
    # ablation
    ablate_axis: str = None          # "t_c" or "sigma2"
    ablate_values: list = None
    # EKF evaluation
    ekf_q: float = 1e-4
    ekf_r: float = None              # defaults to sigma2
    ekf_horizon: float = 10.0
    ekf_streams: int = 10
    ekf_perturb: float = 0.4
    # bookkeeping
    seed: int = 0
    out_dir: str = "runs/experiment"
    dataset_dir: str = None          # defaults to <out_dir>/dataset
    params_file: str = None          # defaults to <out_dir>/params.json
    schema_version: int = CONFIG_SCHEMA_VERSION

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.schema_version != CONFIG_SCHEMA_VERSION:
            raise ConfigError(f"unsupported config schema {self.schema_version}")
        if self.system not in SYSTEM_KINDS:
            raise ConfigError(f"unknown system {self.system!r}")
        if self.structure not in STRUCTURE_KINDS:
            raise ConfigError(f"unknown structure {self.structure!r}")
        if self.recognition not in RECOGNITION_KINDS:
            raise ConfigError(f"unknown recognition {self.recognition!r}")
        if self.structure not in VALID_STRUCTURES[self.system]:
            raise ConfigError(
                f"structure {self.structure!r} is not defined for {self.system!r}")
        if self.recognition not in VALID_RECOGNITIONS[self.system]:
            raise ConfigError(
                f"recognition {self.recognition!r} is not defined for {self.system!r}")
        if self.n_train < 1:
            raise ConfigError("n_train must be >= 1")
        if self.n_samples < 2:
            raise ConfigError("n_samples must be >= 2")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.sigma2 < 0:
            raise ConfigError("sigma2 must be nonnegative")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.epochs < 0:
            raise ConfigError("epochs must be nonnegative")
        if self.t_c < 0:
            raise ConfigError("t_c must be nonnegative")
        steps = self.t_c / self.dt
        if abs(round(steps) - steps) > 1e-9:
            raise ConfigError(f"t_c={self.t_c} is not a multiple of dt={self.dt}")
        if self.ablate_axis is not None and self.ablate_axis not in ("t_c", "sigma2"):
            raise ConfigError("ablate_axis must be 't_c' or 'sigma2'")

    @property
    def dataset_path(self):
        return Path(self.dataset_dir) if self.dataset_dir else Path(self.out_dir) / "dataset"

    @property
    def params_path(self):
        return Path(self.params_file) if self.params_file else Path(self.out_dir) / "params.json"

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        system = data.get("system", "harmonic")
        if system not in SYSTEM_KINDS:
            raise ConfigError(f"unknown system {system!r}")
        merged = dict(SYSTEM_DEFAULTS[system])
        merged = {k: v for k, v in merged.items()}
        merged.update(data)
        merged.setdefault("system", system)
        try:
            return cls(**merged)
        except TypeError as exc:
            raise ConfigError(f"bad config value: {exc}") from exc


def load_config(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no config file at {path}")
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return ExperimentConfig.from_dict(data)


def save_config(path, cfg):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)


def preset(system, structure="free", recognition="kkl", **overrides):
    """Config prefilled with the benchmark protocol for one system."""
    data = dict(SYSTEM_DEFAULTS[system])
    data.update(system=system, structure=structure, recognition=recognition)
    if structure == "residual_on_prior" and "prior_A" not in overrides:
        a, b = RESIDUAL_PRIORS[system]
        data.update(prior_A=a, prior_B=b, lambda_res=5e-7)
    data.update(overrides)
    return ExperimentConfig.from_dict(data)
