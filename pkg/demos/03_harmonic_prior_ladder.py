"""Increasing physical structure on the harmonic oscillator.

Trains three models on partial, noisy observations of x1 with a KKL
recognition model: a free neural field, a second-order Hamiltonian field
(x1' = x2 imposed, acceleration from a learned potential), and the fully
parametric oscillator where only the frequency is unknown. Prediction
RMSE is evaluated on longer held-out trajectories.

Scaled down to run in about a minute; raise EPOCHS/N_TEST for the full
protocol numbers.

Run:  python3 demos/03_harmonic_prior_ladder.py
"""

import time

import numpy as np

from structnode import (
    NoiseSpec,
    TimeGrid,
    TrainingConfig,
    evaluate_rmse,
    generate_dataset,
    harmonic_oscillator,
    make_model,
    make_recognition,
    train,
)

EPOCHS = {"free": 500, "hamiltonian_second_order": 400, "parametric": 400}
N_TEST = 40

sys_ = harmonic_oscillator(omega_sq=1.0)
grid = TimeGrid(0.0, 0.06, 50)           # 3 s of training data
test_grid = TimeGrid(0.0, 0.06, 150)     # 9 s prediction horizon
data = generate_dataset(sys_, None, NoiseSpec(sigma2=1e-4, seed=0), 20, grid)
test = generate_dataset(sys_, None, NoiseSpec(sigma2=1e-4, seed=9000), N_TEST,
                        test_grid)

for kind, epochs in EPOCHS.items():
    t0 = time.time()
    rng = np.random.default_rng(0)
    model = make_model(kind, d_x=2, rng=rng, template="harmonic"
                       if kind == "parametric" else None)
    recog = make_recognition("kkl", d_x=2, d_y=1, d_u=0, t_c=1.2, dt=0.06,
                             rng=rng)
    result = train(model, recog, data,
                   TrainingConfig(epochs=epochs, t_c=1.2, seed=0),
                   sys_.output_idx)
    report = evaluate_rmse(model, recog, test, sys_.output_idx, result.scaler)
    line = (f"{kind:26s} median RMSE {report.median:.4f} "
            f"(IQR {report.iqr:.4f}, {time.time() - t0:.0f}s)")
    if kind == "parametric":
        omega = result.report.extras["scalars"]["omega"]
        line += f"  recovered omega^2 = {omega**2:.4f}"
    print(line, flush=True)
