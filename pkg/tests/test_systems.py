import numpy as np
import pytest

from structnode.errors import ConfigError
from structnode.ode import SampledSignal, TimeGrid, integrate
from structnode.systems import (
    InputSpec,
    NoiseSpec,
    earthquake,
    fitzhugh_nagumo,
    generate_dataset,
    harmonic_oscillator,
    input_signal,
    sinusoid_generator_field,
    stack_trajectories,
    true_field,
    van_der_pol,
)


def test_vdp_field_example():
    sys = van_der_pol(mu=1.0)
    out = true_field(sys, 0.0, np.array([1.0, 1.0]), np.array([0.0]))
    assert np.allclose(out, [1.0, -1.0], atol=1e-15)


def test_fhn_field_example():
    sys = fitzhugh_nagumo(eps=0.1, gamma=1.5, beta=0.8)
    out = true_field(sys, 0.0, np.array([0.0, 0.0]), np.array([0.0]))
    assert np.allclose(out, [0.0, 0.8], atol=1e-15)


def test_earthquake_field_example():
    sys = earthquake(k_m=10.0)
    # forcing F0 omega^2 cos(omega t) = 4 at t=0 for F0=1, omega=2
    out = true_field(sys, 0.0, np.zeros(4), np.array([4.0]))
    assert np.allclose(out, [0.0, -4.0, 0.0, -4.0], atol=1e-15)


def test_harmonic_zero_frequency():
    sys = harmonic_oscillator(omega_sq=0.0)
    out = true_field(sys, 0.0, np.array([3.0, -2.0]))
    assert np.allclose(out, [-2.0, 0.0], atol=1e-15)


def test_field_dimension_check():
    with pytest.raises(ConfigError):
        true_field(harmonic_oscillator(), 0.0, np.zeros(3))


def test_input_signal_constant():
    grid = TimeGrid(0.0, 0.1, 5)
    sig = input_signal(InputSpec(kind="constant", value=0.5), grid)
    assert np.all(sig.values == 0.5)


def test_input_signal_sinusoid():
    grid = TimeGrid(0.0, np.pi / 2, 2)
    sig = input_signal(InputSpec(kind="sinusoid", amplitude=1.2, omega_u=1.0), grid)
    assert sig.values[1, 0] == pytest.approx(1.2, abs=1e-12)


def test_sinusoid_generator_reproduces_closed_form():
    omega_u, amp = 1.7, 1.2
    grid = TimeGrid(0.0, 0.001, 3001)
    w0 = np.array([0.0, amp * omega_u, omega_u**2])
    states = integrate(lambda t, w, u: sinusoid_generator_field(t, w), w0, grid)
    expected = amp * np.sin(omega_u * grid.times())
    assert np.max(np.abs(states[:, 0] - expected)) < 1e-6


def test_noiseless_outputs_equal_states():
    sys = van_der_pol()
    grid = TimeGrid(0.0, 0.03, 40)
    trajs = generate_dataset(sys, InputSpec(kind="sinusoid", amplitude=1.2,
                                             omega_u=(1.0, 3.0)),
                             NoiseSpec(sigma2=0.0, seed=1), 3, grid)
    for tr in trajs:
        assert np.array_equal(tr.y[:, 0], tr.x[:, 0])


def test_harmonic_energy_drift():
    sys = harmonic_oscillator(omega_sq=1.0)
    grid = TimeGrid(0.0, 0.06, 51)  # 3 s
    trajs = generate_dataset(sys, None, NoiseSpec(sigma2=0.0, seed=2), 2, grid)
    for tr in trajs:
        energy = 0.5 * (tr.x[:, 1] ** 2 + tr.x[:, 0] ** 2)
        drift = np.max(np.abs(energy - energy[0])) / max(energy[0], 1e-12)
        assert drift < 1e-8


def test_vdp_limit_cycle_amplitude():
    sys = van_der_pol(mu=1.0)
    grid = TimeGrid(0.0, 0.01, 2001)  # 20 s, unforced
    amps = []
    for x0 in (np.array([0.1, 0.0]), np.array([3.0, -2.0])):
        states = integrate(lambda t, x, u: true_field(sys, t, x, None), x0, grid)
        amps.append(np.max(np.abs(states[-500:, 0])))
    assert abs(amps[0] - amps[1]) / amps[1] < 0.02


def test_dataset_determinism_bitwise():
    sys = fitzhugh_nagumo()
    grid = TimeGrid(0.0, 0.03, 30)
    spec = InputSpec(kind="constant", value=(0.0, 1.0))
    a = generate_dataset(sys, spec, NoiseSpec(sigma2=5e-4, seed=7), 4, grid)
    b = generate_dataset(sys, spec, NoiseSpec(sigma2=5e-4, seed=7), 4, grid)
    for ta, tb in zip(a, b):
        assert np.array_equal(ta.y, tb.y)
        assert np.array_equal(ta.x, tb.x)
        assert np.array_equal(ta.u, tb.u)
        assert ta.meta == tb.meta


def test_dataset_threaded_matches_serial():
    sys = van_der_pol()
    grid = TimeGrid(0.0, 0.03, 20)
    spec = InputSpec(kind="sinusoid", amplitude=1.2, omega_u=(1.0, 3.0))
    serial = generate_dataset(sys, spec, NoiseSpec(sigma2=1e-3, seed=9), 6, grid)
    threaded = generate_dataset(sys, spec, NoiseSpec(sigma2=1e-3, seed=9), 6, grid,
                                threads=3)
    for ta, tb in zip(serial, threaded):
        assert np.array_equal(ta.y, tb.y)


def test_earthquake_forcing_built_in():
    sys = earthquake()
    grid = TimeGrid(0.0, 0.03, 20)
    trajs = generate_dataset(sys, None, NoiseSpec(sigma2=0.0, seed=3), 2, grid)
    for tr in trajs:
        f0, om = tr.meta["F0"], tr.meta["omega"]
        assert 0.5 <= f0 <= 1.5 and 1.0 <= om <= 3.0
        expected = f0 * om**2 * np.cos(om * grid.times())
        assert np.allclose(tr.u[:, 0], expected, atol=1e-12)
    with pytest.raises(ConfigError):
        generate_dataset(sys, InputSpec(kind="constant", value=1.0),
                         NoiseSpec(seed=3), 1, grid)


def test_noise_variance_sign_checked():
    with pytest.raises(ConfigError):
        NoiseSpec(sigma2=-1.0)


def test_stack_trajectories_shapes():
    sys = van_der_pol()
    grid = TimeGrid(0.0, 0.03, 25)
    spec = InputSpec(kind="sinusoid", amplitude=1.2, omega_u=2.0)
    trajs = generate_dataset(sys, spec, NoiseSpec(sigma2=1e-3, seed=5), 4, grid)
    g, y, u, x = stack_trajectories(trajs)
    assert y.shape == (25, 4, 1)
    assert u.shape == (25, 4, 1)
    assert x.shape == (25, 4, 2)
