"""Window-length and noise sweeps at reduced scale.

What happens when the observation window shrinks below the horizon needed
to pin down the initial state, or when measurement noise grows? Runs a
small t_c sweep on the two-story-building system and a noise sweep on the
Van der Pol oscillator (a couple of minutes total).

Run:  python3 demos/05_ablation_sweeps.py
"""

from structnode.config import preset
from structnode.experiments import ablate

print("earthquake, window-length sweep (steps of 0.03 s):")
base = preset("earthquake", structure="free", recognition="kkl",
              n_train=20, n_test=30, n_samples=101, n_test_samples=101,
              epochs=100, seed=0)
for report in ablate("t_c", [0.15, 0.6, 1.2, 3.0], base):
    steps = round(report.extras["value"] / 0.03)
    print(f"  t_c = {steps:3d} steps -> median RMSE {report.median:.4f}")

print("\nvan der pol, noise-variance sweep:")
base = preset("vdp", structure="free", recognition="kkl",
              n_train=20, n_test=30, epochs=100, seed=0)
for report in ablate("sigma2", [1e-4, 1e-3, 1e-2, 1e-1], base):
    print(f"  sigma^2 = {report.extras['value']:.0e} -> median RMSE {report.median:.4f}")
