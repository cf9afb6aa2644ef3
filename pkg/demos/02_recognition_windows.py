"""The four recognition inputs on one Van der Pol observation window.

Recognition maps a window of (outputs, inputs) to the initial latent
state. This script shows what each method feeds the recognition network:
the raw window (direct), a backward GRU pass (rnn), the backward KKL
observer state plus the input window (kkl), and the functional observer
driven by the stacked (y, u) (kklu) -- and checks the dimension formulas.

Run:  python3 demos/02_recognition_windows.py
"""

import numpy as np

from structnode.observers import assemble_recognition_input, make_recognition
from structnode.ode import SampledSignal, TimeGrid
from structnode.systems import DEFAULT_INPUTS, NoiseSpec, generate_dataset, van_der_pol
from structnode.tape import value_of

sys_ = van_der_pol()
grid = TimeGrid(0.0, 0.03, 100)
traj = generate_dataset(sys_, DEFAULT_INPUTS["vdp"], NoiseSpec(sigma2=1e-3, seed=0),
                        1, grid)[0]
t_c = 1.2
n_c = int(round(t_c / grid.dt)) + 1
print(f"window: t_c = {t_c} s = {n_c - 1} steps ({n_c} samples), d_y=1, d_u=1\n")

y_win = SampledSignal(grid, traj.y)
u_win = SampledSignal(grid, traj.u)
rng = np.random.default_rng(0)

for kind in ("direct", "rnn", "kkl", "kklu"):
    variant = make_recognition(kind, d_x=2, d_y=1, d_u=1, t_c=t_c, dt=grid.dt,
                               rng=rng, d_omega=3)
    zbar = value_of(assemble_recognition_input(variant, y_win, u_win))
    print(f"{kind:7s} summary length {zbar.shape[-1]:3d} "
          f"(psi input width {variant.input_width()})")

print("\nformulas:")
print("  kkl observer dim   d_y (d_x + 1)             =", 1 * (2 + 1))
print("  kklu observer dim  (d_y + d_u)(d_x + d_w + 1) =", (1 + 1) * (2 + 3 + 1))
print("  direct             n_c (d_y + d_u)           =", n_c * 2)
print("  kkl assembled      d_z + n_c d_u             =", 3 + n_c)
