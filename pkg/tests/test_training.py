import numpy as np
import pytest

from conftest import fd_gradient, rel_err
from structnode import tape
from structnode.errors import ConfigError
from structnode.observers import make_recognition
from structnode.ode import TimeGrid
from structnode.priors import make_model
from structnode.systems import (
    InputSpec,
    NoiseSpec,
    generate_dataset,
    harmonic_oscillator,
    van_der_pol,
)
from structnode.training import (
    MetricsReport,
    Scaler,
    TrainingConfig,
    evaluate_rmse,
    fit_scaler,
    output_loss,
    pipeline_loss,
    selector_matrix,
    train,
    zero_predictor_rmse,
)
from structnode.systems import stack_trajectories
from structnode.tape import Node


def _ho_dataset(n_traj=6, n=26, dt=0.06, sigma2=1e-4, seed=0):
    sys = harmonic_oscillator(omega_sq=1.0)
    grid = TimeGrid(0.0, dt, n)
    return sys, generate_dataset(sys, None, NoiseSpec(sigma2=sigma2, seed=seed),
                                 n_traj, grid)


def test_output_loss_zero_when_equal():
    y = np.random.default_rng(0).normal(size=(5, 3, 1))
    assert output_loss(y, y) == 0.0


def test_output_loss_arithmetic():
    pred = np.array([[1.0], [1.0]])
    meas = np.array([[0.0], [0.0]])
    assert output_loss(pred, meas) == pytest.approx(0.5)


def test_output_loss_duplication_invariance():
    rng = np.random.default_rng(1)
    pred = rng.normal(size=(4, 1, 2))
    meas = rng.normal(size=(4, 1, 2))
    single = output_loss(pred, meas)
    dup = output_loss(np.concatenate([pred, pred], axis=1),
                      np.concatenate([meas, meas], axis=1))
    assert dup == pytest.approx(single, rel=1e-12)


def test_output_loss_shape_mismatch():
    with pytest.raises(ValueError):
        output_loss(np.zeros((3, 1)), np.zeros((4, 1)))


def test_fit_scaler_examples():
    class T:
        pass

    t = T()
    t.y = np.array([[-1.0, 5.0], [1.0, 5.0]])
    t.u = None
    s = fit_scaler([t], output_idx=(0, 1), d_x=3)
    assert s.mean_y[0] == 0.0 and s.std_y[0] == 1.0
    assert np.allclose(s.scale_y(t.y)[:, 0], [-1.0, 1.0])
    # constant channel: std floored, scaled values zero
    assert s.std_y[1] == 1e-8
    assert np.allclose(s.scale_y(t.y)[:, 1], 0.0)
    # unmeasured state channel gets the mean of the y scalers
    assert s.mean_x[2] == pytest.approx(2.5)
    # round trip
    rng = np.random.default_rng(2)
    v = rng.normal(size=(7, 2))
    assert np.max(np.abs(s.unscale_y(s.scale_y(v)) - v)) < 1e-12


def test_scaling_invariance_of_loss():
    rng = np.random.default_rng(3)

    class T:
        pass

    def loss_for(c):
        t = T()
        t.y = base_y * c
        t.u = None
        s = fit_scaler([t], output_idx=(0,), d_x=2)
        pred = s.scale_y(base_pred * c)
        meas = s.scale_y(t.y)
        return float(tape.value_of(output_loss(pred, meas)))

    base_y = rng.normal(size=(20, 1))
    base_pred = rng.normal(size=(20, 1))
    assert loss_for(1.0) == pytest.approx(loss_for(7.3), rel=1e-9)


def test_zero_epochs_leaves_model_unchanged():
    rng = np.random.default_rng(4)
    sys, data = _ho_dataset()
    model = make_model("parametric", d_x=2, template="harmonic", rng=rng)
    recog = make_recognition("kkl", d_x=2, d_y=1, d_u=0, t_c=0.6, dt=0.06,
                             rng=rng, hidden=(8,))
    before = [p.value.copy() for p in model.parameters() + recog.parameters()]
    train(model, recog, data, TrainingConfig(epochs=0, t_c=0.6), sys.output_idx)
    after = [p.value for p in model.parameters() + recog.parameters()]
    for b, a in zip(before, after):
        assert np.array_equal(b, a)


def test_loss_exactly_zero_for_truth():
    # data generated at the rollout step, true params, true x0: loss == 0
    sys = harmonic_oscillator(omega_sq=1.0)
    grid = TimeGrid(0.0, 0.06, 30)
    data = generate_dataset(sys, None, NoiseSpec(sigma2=0.0, seed=5), 3, grid,
                            substeps=1)
    model = make_model("parametric", d_x=2, template="harmonic",
                       init_params={"omega": 1.0})
    g, y, u, x = stack_trajectories(data)
    sel = selector_matrix(sys.output_idx, 2)
    scaler = fit_scaler(data, sys.output_idx, 2)

    from structnode.ode import integrate
    from structnode.priors import eval_field

    with tape.no_grad():
        states = integrate(lambda t, xx, uu: eval_field(model, t, xx, uu),
                           x[0], g)
        pred_scaled = (states @ sel.T - scaler.mean_y) / scaler.std_y
        loss = output_loss(pred_scaled, scaler.scale_y(y))
    assert float(loss) == 0.0


def test_pipeline_gradient_matches_fd():
    # two trajectories, five steps, every trainable parameter
    rng = np.random.default_rng(6)
    sys = van_der_pol()
    grid = TimeGrid(0.0, 0.1, 6)
    data = generate_dataset(sys, InputSpec(kind="sinusoid", amplitude=1.2,
                                            omega_u=(1.0, 3.0)),
                            NoiseSpec(sigma2=1e-3, seed=7), 2, grid)
    model = make_model("free", d_x=2, d_u=1, rng=rng, hidden=(6,))
    recog = make_recognition("kkl", d_x=2, d_y=1, d_u=1, t_c=0.3, dt=0.1,
                             rng=rng, hidden=(6,), train_D=True)
    g, y, u, _ = stack_trajectories(data)
    scaler = fit_scaler(data, sys.output_idx, 2)
    sel = selector_matrix(sys.output_idx, 2)
    params = model.parameters() + recog.parameters()

    def loss_fn():
        return pipeline_loss(model, recog, g, y, u, scaler, sel)

    tape.zero_grads(params)
    root = loss_fn()
    tape.backward(root)
    worst = 0.0
    for p in params:
        ad = p.grad if p.grad is not None else np.zeros_like(p.value)
        fd = fd_gradient(lambda: float(tape.value_of(loss_fn())), p, step=1e-6)
        worst = max(worst, rel_err(ad, fd, floor=1e-4))
    assert worst < 1e-4, f"pipeline gradient mismatch {worst:.2e}"


def test_training_loss_nonincreasing_most_seeds():
    hits = 0
    for seed in range(10):
        rng = np.random.default_rng([seed, 55])
        sys, data = _ho_dataset(n_traj=5, n=26, seed=seed)
        model = make_model("parametric", d_x=2, template="harmonic", rng=rng)
        recog = make_recognition("kkl", d_x=2, d_y=1, d_u=0, t_c=0.6, dt=0.06,
                                 rng=rng, hidden=(16,))
        res = train(model, recog, data,
                    TrainingConfig(epochs=10, t_c=0.6, seed=seed), sys.output_idx)
        curve = res.report.train_curve
        if all(curve[i + 1] <= curve[i] + 1e-12 for i in range(len(curve) - 1)):
            hits += 1
    assert hits >= 9, f"only {hits}/10 seeds gave a non-increasing loss"


def test_seeded_determinism_of_training():
    def run():
        rng = np.random.default_rng(8)
        sys, data = _ho_dataset(n_traj=4, n=21, seed=11)
        model = make_model("parametric", d_x=2, template="harmonic", rng=rng)
        recog = make_recognition("kkl", d_x=2, d_y=1, d_u=0, t_c=0.6, dt=0.06,
                                 rng=rng, hidden=(8,))
        res = train(model, recog, data,
                    TrainingConfig(epochs=5, t_c=0.6, seed=3), sys.output_idx)
        return [p.value.copy() for p in model.parameters() + recog.parameters()]

    a, b = run(), run()
    for pa, pb in zip(a, b):
        assert np.array_equal(pa, pb)


def test_evaluate_rmse_oracle_self_consistency():
    # full observation, identity recognition at t_c=0, true dynamics
    sys = harmonic_oscillator(omega_sq=1.0)
    full_idx = (0, 1)
    grid = TimeGrid(0.0, 0.06, 40)
    data = generate_dataset(sys, None, NoiseSpec(sigma2=0.0, seed=12), 5, grid)
    for tr in data:
        tr.y = tr.x.copy()  # expose both states
    model = make_model("parametric", d_x=2, template="harmonic",
                       init_params={"omega": 1.0})
    rng = np.random.default_rng(13)
    recog = make_recognition("direct", d_x=2, d_y=2, d_u=0, t_c=0.0, dt=0.06,
                             rng=rng, hidden=())
    scaler = fit_scaler(data, full_idx, 2)
    recog.psi.weights[0].value[...] = np.eye(2)
    recog.psi.biases[0].value[...] = 0.0
    # psi sees scaled y(0) and must emit scaled x0: identity does exactly that
    report = evaluate_rmse(model, recog, data, full_idx, scaler)
    assert report.median < 1e-4


def test_zero_predictor_rmse_about_one():
    rng = np.random.default_rng(14)

    class T:
        pass

    trajs = []
    for _ in range(6):
        t = T()
        t.y = rng.normal(size=(50, 1))
        t.u = None
        trajs.append(t)
    scaler = fit_scaler(trajs, (0,), 2)
    report = zero_predictor_rmse(trajs, scaler)
    assert report.median == pytest.approx(1.0, abs=0.15)


def test_metrics_report_consistency():
    rep = MetricsReport.from_rmse([1.0, 2.0, 3.0, 4.0])
    assert rep.median == pytest.approx(2.5)
    assert rep.iqr == pytest.approx(np.percentile([1, 2, 3, 4], 75)
                                    - np.percentile([1, 2, 3, 4], 25))
    assert all(v >= 0 for v in rep.rmse)


def test_tc_must_fit_grid():
    rng = np.random.default_rng(15)
    sys, data = _ho_dataset(n_traj=3, n=11)
    model = make_model("free", d_x=2, rng=rng, hidden=(4,))
    recog = make_recognition("kkl", d_x=2, d_y=1, d_u=0, t_c=0.05, dt=0.06,
                             rng=rng, hidden=(4,))
    with pytest.raises(ConfigError):
        train(model, recog, data, TrainingConfig(epochs=1, t_c=0.05), sys.output_idx)


def test_early_stopping_restores_best():
    rng = np.random.default_rng(16)
    sys, data = _ho_dataset(n_traj=8, n=21, seed=17)
    model = make_model("parametric", d_x=2, template="harmonic", rng=rng)
    recog = make_recognition("kkl", d_x=2, d_y=1, d_u=0, t_c=0.6, dt=0.06,
                             rng=rng, hidden=(8,))
    res = train(model, recog, data,
                TrainingConfig(epochs=40, t_c=0.6, patience=3, seed=1),
                sys.output_idx)
    assert len(res.report.val_curve) <= 40
    assert res.report.extras["epochs_run"] == len(res.report.train_curve)
