"""KKL observer basics: gains, the Sylvester transform, and convergence.

A stable linear filter z' = D z + F y driven by the output of a harmonic
oscillator converges to a linear image T x of the plant state. This script
builds Butterworth-initialized gains, solves for T, simulates the coupled
system, and measures the convergence rate against the slowest eigenvalue.

Run:  python3 demos/01_kkl_observer_convergence.py
"""

import numpy as np

from structnode import (
    TimeGrid,
    butterworth_poles,
    check_gains,
    integrate,
    make_gains,
    solve_sylvester,
)

# plant: harmonic oscillator, position measured
A = np.array([[0.0, 1.0], [-1.0, 0.0]])
C = np.array([[1.0, 0.0]])

gains = make_gains(d_z=3, d_in=1, omega_c=1.0)
print("Butterworth poles (order 3, cutoff 2*pi):")
for p in butterworth_poles(3, 1.0):
    print(f"  {p:.4f}")
print("gain checks:", check_gains(gains))

sol = solve_sylvester(A, C, gains)
print("Sylvester residual |TA - DT - FC| =",
      np.max(np.abs(sol.T @ A - gains.D @ sol.T - gains.F @ C)))
print("rank(T) =", sol.rank())

D, F = gains.D, gains.F


def coupled(t, s, u):
    x, z = s[:2], s[2:]
    return np.concatenate([A @ x, D @ z + F @ (C @ x)])


grid = TimeGrid(0.0, 0.001, 4001)
x0 = np.array([1.0, -0.4])
traj = integrate(coupled, np.concatenate([x0, np.zeros(3)]), grid)
err = np.linalg.norm(traj[:, 2:] - traj[:, :2] @ sol.T.T, axis=1)

t = grid.times()
mask = (t >= 0.5) & (t <= 4.0)
rate = -np.polyfit(t[mask], np.log(err[mask]), 1)[0]
lam_min = min(abs(gains.d_params.value[i])
              for i, k in enumerate(gains.kinds) if k == "re")
print(f"\n|z - Tx| at t=0:   {err[0]:.3e}")
print(f"|z - Tx| at t=4:   {err[-1]:.3e}")
print(f"measured decay rate {rate:.3f} vs slowest |Re eigenvalue| {lam_min:.3f}")

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.semilogy(t, err)
    plt.xlabel("t [s]")
    plt.ylabel("|z - Tx|")
    plt.title("KKL observer convergence")
    plt.savefig("kkl_convergence.png", dpi=120)
    print("saved kkl_convergence.png")
except ImportError:
    pass
