"""Learning continuous-time state-space models from partial observations.

The pieces: a reverse-mode tape (`tape`), MLP/GRU approximators (`nets`),
Adam (`optim`), a differentiable fixed-step RK4 solver (`ode`), KKL
observer gains and recognition models (`observers`), structural priors for
the learned field (`priors`), benchmark plants and dataset synthesis
(`systems`), the joint trainer and metrics (`training`), an extended
Kalman filter (`ekf`), and experiment drivers plus a CLI (`experiments`,
`cli`).
"""

from .errors import (
    ConfigError,
    FilterDivergenceError,
    IntegrationError,
    PreconditionError,
    StructnodeError,
    TrainingError,
)
from .tape import Node, backward, no_grad
from .nets import MLPParams, GRUParams, gru_init, gru_step, mlp_forward, mlp_init
from .optim import Adam
from .ode import SampledSignal, TimeGrid, integrate, integrate_backward, interpolate, rk4_step
from .observers import (
    KKLGains,
    RecognitionVariant,
    assemble_recognition_input,
    build_D,
    butterworth_poles,
    check_gains,
    estimate_x0,
    make_gains,
    make_recognition,
    simulate_observer_backward,
    solve_sylvester,
)
from .priors import ModelSpec, eval_field, hamiltonian_value, make_model, residual_penalty
from .systems import (
    BenchmarkSystem,
    InputSpec,
    NoiseSpec,
    Trajectory,
    earthquake,
    fitzhugh_nagumo,
    generate_dataset,
    harmonic_oscillator,
    input_signal,
    true_field,
    van_der_pol,
)
from .training import (
    MetricsReport,
    Scaler,
    TrainingConfig,
    evaluate_rmse,
    fit_scaler,
    output_loss,
    pipeline_loss,
    train,
)
from .ekf import EKFConfig, EKFState, ekf_predict, ekf_update, run_ekf
from .config import ExperimentConfig, load_config, preset, save_config

__version__ = "0.1.0"
