import numpy as np
import pytest

from lifted_nmpc.cost import BoxSet, QuadraticWeights
from lifted_nmpc.lifting import ConfigurationError, HoldSpec, fsfh_lift
from lifted_nmpc.mpc import (
    MpcConfig,
    ScenarioResult,
    ShootingObjective,
    compute_metrics,
    run_controller,
    run_conventional_mpc,
    run_lifted_mpc,
    settling_time,
    truth_step,
)
from lifted_nmpc.plants import (
    CARTPOLE_PARAMS,
    cartpole,
    cartpole_dynamics,
    integrator_plant,
    make_plant,
    van_der_pol,
    vdp_dynamics,
    zero_plant,
)
from lifted_nmpc.solver import SolverOptions, fd_gradient, minimize_box

VDP_W = QuadraticWeights([4.0, 1.0], 1.0, [8.0, 2.0])
CP_W = QuadraticWeights([2.5, 10, 0.01, 0.01], 0.1, [3, 10, 0.02, 0.02])


def vdp_config(**kw):
    base = dict(T=0.05, N=5, weights=VDP_W, input_box=BoxSet([-0.75], [1.0]))
    base.update(kw)
    return MpcConfig(**base)


def test_vdp_dynamics_examples():
    assert np.array_equal(vdp_dynamics([0, 0], [0]), [0, 0])
    assert np.allclose(vdp_dynamics([1, 1], [0], 1.0), [1, -1])
    assert np.allclose(vdp_dynamics([0, 1], [0], 1.0), [1, 1])


def test_cartpole_dynamics_examples():
    assert np.array_equal(cartpole_dynamics(np.zeros(4), [0.0]), np.zeros(4))
    assert np.allclose(cartpole_dynamics([0, np.pi, 0, 0], [0.0]), 0, atol=1e-14)
    assert np.allclose(cartpole_dynamics([0, np.pi, 0, 0], [1.0], **CARTPOLE_PARAMS), [0, 0, 1, -1], atol=1e-15)


def test_dynamics_broadcast():
    x = np.random.default_rng(0).normal(size=(3, 5, 4))
    u = np.ones((3, 5, 1))
    batched = cartpole_dynamics(x, u)
    assert np.allclose(batched[1, 2], cartpole_dynamics(x[1, 2], u[1, 2]))


def test_compiled_kernels_match_numpy():
    rng = np.random.default_rng(1)
    for plant in (van_der_pol(1.3), cartpole()):
        p = np.asarray(plant.kernel_params, dtype=float)
        for _ in range(10):
            x = rng.normal(size=plant.n)
            u = rng.normal(size=plant.m)
            assert np.allclose(plant.kernel(x, u, p), plant.f(x, u), rtol=1e-14, atol=1e-14)


def test_compiled_jacobians_match_fd():
    rng = np.random.default_rng(2)
    for plant in (van_der_pol(0.7), cartpole()):
        p = np.asarray(plant.kernel_params, dtype=float)
        x = rng.normal(size=plant.n)
        u = rng.normal(size=plant.m)
        A, B = plant.jacobian(x, u, p)
        eps = 1e-6
        A_fd = np.column_stack([(plant.f(x + eps * e, u) - plant.f(x - eps * e, u)) / (2 * eps) for e in np.eye(plant.n)])
        B_fd = np.column_stack([(plant.f(x, u + eps * e) - plant.f(x, u - eps * e)) / (2 * eps) for e in np.eye(plant.m)])
        assert np.allclose(A, A_fd, atol=1e-7)
        assert np.allclose(B, B_fd, atol=1e-7)


def test_make_plant():
    assert make_plant("vdp", mu=2.0).params["mu"] == 2.0
    with pytest.raises(ValueError, match="available"):
        make_plant("pendubot")


def test_config_validation():
    with pytest.raises(ConfigurationError, match="multiple of upsampling"):
        vdp_config(M=3, nprime=10)
    with pytest.raises(ConfigurationError):
        vdp_config(nprime=9)
    with pytest.raises(ConfigurationError):
        vdp_config(T=0.0)
    with pytest.raises(ConfigurationError):
        vdp_config(N=0)
    with pytest.raises(ConfigurationError):
        vdp_config(normalization="mean")
    with pytest.raises(ConfigurationError):
        vdp_config(state_box=BoxSet([-1.0], [1.0]))


@pytest.mark.parametrize(
    "controller,M,norm,boxed",
    [
        ("lifted", 1, "integral", False),
        ("lifted", 5, "per-sample", True),
        ("lifted", 2, "integral", True),
        ("conventional", 1, "integral", True),
    ],
)
def test_kernel_matches_numpy_path(controller, M, norm, boxed):
    extra = {}
    if boxed:
        extra = dict(
            state_box=BoxSet([-0.3] * 4, [0.3] * 4),
            terminal_box=BoxSet([-0.1] * 4, [0.1] * 4),
            state_penalty=5.0,
        )
    cfg = MpcConfig(T=0.1, N=4, weights=CP_W, input_box=BoxSet([-15], [15]), M=M, normalization=norm, **extra)
    x0 = [0.1, 2.5, 0.3, -0.2]
    fast = ShootingObjective(cartpole(), cfg, x0, controller)
    slow = ShootingObjective(cartpole(), cfg, x0, controller, use_kernel=False)
    V = np.random.default_rng(3).uniform(-10, 10, size=(6, fast.size))
    a, b = fast.batch(V), slow.batch(V)
    assert np.allclose(a, b, rtol=1e-12, atol=0)


@pytest.mark.parametrize("controller,M", [("lifted", 1), ("lifted", 2), ("conventional", 1)])
def test_adjoint_gradient_matches_fd(controller, M):
    cfg = MpcConfig(
        T=0.1, N=5, weights=CP_W, input_box=BoxSet([-15], [15]), M=M, gradient="adjoint",
        state_box=BoxSet([-0.2] * 4, [0.2] * 4), state_penalty=3.0,
    )
    obj = ShootingObjective(cartpole(), cfg, [0.1, 2.5, 0.3, -0.2], controller)
    v = np.random.default_rng(4).uniform(-3, 3, obj.size)
    value, grad = obj.value_and_grad(v)
    assert value == pytest.approx(obj(v), rel=1e-13)
    ref = fd_gradient(obj, v, 1e-6)
    assert np.abs(grad - ref).max() <= 1e-6 * np.abs(ref).max()


def test_adjoint_needs_compiled_plant():
    cfg = MpcConfig(T=1.0, N=1, weights=QuadraticWeights(1.0, 1.0, 1.0), input_box=BoxSet([-1.0], [1.0]), gradient="adjoint")
    with pytest.raises(ConfigurationError):
        ShootingObjective(integrator_plant(), cfg, [1.0])


def test_truth_step_zero_plant():
    x = np.array([0.3, -0.2])
    end, trace = truth_step(zero_plant(2, 1), x, HoldSpec(1, 1, 0.1), [5.0], 100)
    assert np.array_equal(end, x)
    assert trace.shape == (101, 2) and np.all(trace == x)


def test_truth_step_integrator():
    end, _ = truth_step(integrator_plant(), np.array([0.25]), HoldSpec(1, 1, 0.5), [1.0], 100)
    assert end[0] == pytest.approx(0.75, abs=1e-14)


def test_truth_step_matches_fsfh_refinement():
    spec = HoldSpec(2, 1, 0.05)
    end, _ = truth_step(van_der_pol(), np.array([2.0, 0.0]), spec, [0.4, -0.6], 200)
    coarse = fsfh_lift(van_der_pol(), [2.0, 0.0], spec, [0.4, -0.6], 10).states[-1]
    assert np.abs(end - coarse).max() <= (0.05 / 10) ** 4


def test_truth_step_rejects_bad_substeps():
    with pytest.raises(ConfigurationError):
        truth_step(van_der_pol(), np.zeros(2), HoldSpec(3, 1, 0.1), np.zeros(3), 100)


@pytest.mark.parametrize("runner", [run_conventional_mpc, run_lifted_mpc])
def test_zero_plant_needs_no_input(runner):
    w = QuadraticWeights(np.eye(2), 1.0, np.eye(2))
    cfg = MpcConfig(T=0.1, N=3, weights=w, input_box=BoxSet([-1.0], [1.0]), M=2, fine_substeps=10)
    res = runner(zero_plant(2, 1), cfg, [0.5, -0.5], 0.5)
    assert np.allclose(res.inputs, 0, atol=1e-8)
    assert np.all(res.states == [0.5, -0.5])


def test_conventional_integrator_bangs_to_bound():
    w = QuadraticWeights(0.0, 1e-6, 1.0)
    cfg = MpcConfig(T=1.0, N=1, weights=w, input_box=BoxSet([-1.0], [1.0]), fine_substeps=10)
    res = run_conventional_mpc(integrator_plant(), cfg, [1.0], 1.0)
    assert res.inputs[0, 0] == pytest.approx(-1.0, abs=1e-5)


def test_lifted_integrator_effort_only():
    w = QuadraticWeights(0.0, 1.0, 0.0)
    cfg = MpcConfig(T=0.5, N=2, weights=w, input_box=BoxSet([-1.0], [1.0]), fine_substeps=10)
    res = run_lifted_mpc(integrator_plant(), cfg, [1.0], 0.5)
    assert np.allclose(res.inputs, 0, atol=1e-8)


def test_lifted_equals_conventional_on_terminal_problem():
    T = 0.1
    w_conv = QuadraticWeights([0.0, 0.0], 0.5, [3.0, 1.0])
    w_lift = QuadraticWeights([0.0, 0.0], 0.5 / T, [3.0, 1.0])
    opts = SolverOptions(grad_tolerance=1e-9, max_iterations=500)
    box = BoxSet([-0.75], [1.0])
    x0 = [1.5, -0.5]
    conv = ShootingObjective(van_der_pol(), MpcConfig(T=T, N=1, weights=w_conv, input_box=box, solver=opts), x0, "conventional")
    lift = ShootingObjective(van_der_pol(), MpcConfig(T=T, N=1, weights=w_lift, input_box=box, solver=opts), x0, "lifted")
    a = minimize_box(conv, np.zeros(1), conv.bounds(), opts).v_star
    b = minimize_box(lift, np.zeros(1), lift.bounds(), opts).v_star
    assert abs(a[0] - b[0]) <= 1e-4


def test_closed_loop_shapes_and_continuity():
    cfg = vdp_config(M=2, fine_substeps=20)
    res = run_lifted_mpc(van_der_pol(), cfg, [2.0, 0.0], 0.3)
    periods = 6
    assert res.times.shape == (periods * 20 + 1,)
    assert res.states.shape == (periods * 20 + 1, 2)
    assert res.inputs.shape == (periods * 20 + 1, 1)
    assert np.all(np.diff(res.times) > 0)
    assert len(res.records) == periods
    assert np.array_equal(res.states[0], [2.0, 0.0])
    # each period's input has two constant halves
    for n in range(periods):
        seg = res.inputs[n * 20:(n + 1) * 20, 0]
        assert np.all(seg[:10] == seg[0]) and np.all(seg[10:] == seg[10])


def test_period_boundaries_bit_exact():
    plant = van_der_pol()
    cfg = vdp_config(fine_substeps=10)
    res = run_conventional_mpc(plant, cfg, [2.0, 0.0], 0.2)
    # re-simulate each period from the recorded boundary state
    for n in range(4):
        start = res.states[n * 10]
        end, _ = truth_step(plant, start, HoldSpec(1, 1, 0.05), res.inputs[n * 10], 10)
        assert end.tobytes() == res.states[(n + 1) * 10].tobytes()


def test_closed_loop_deterministic():
    cfg = vdp_config(M=2)
    a = run_lifted_mpc(van_der_pol(), cfg, [2.0, 0.0], 0.25)
    b = run_lifted_mpc(van_der_pol(), cfg, [2.0, 0.0], 0.25)
    assert a.states.tobytes() == b.states.tobytes()
    assert a.inputs.tobytes() == b.inputs.tobytes()
    assert [r.cost for r in a.records] == [r.cost for r in b.records]


def test_inputs_respect_box_exactly():
    res = run_controller("lifted", van_der_pol(), vdp_config(M=5), [2.0, 0.0], 0.5)
    m = compute_metrics(res, 0.05)
    assert m.input_violation == 0.0
    assert res.inputs.min() >= -0.75 and res.inputs.max() <= 1.0


def test_duration_truncated_to_whole_periods():
    res = run_conventional_mpc(van_der_pol(), vdp_config(fine_substeps=10), [2.0, 0.0], 0.12)
    assert len(res.records) == 2
    assert res.duration == pytest.approx(0.1)


def test_run_rejects_bad_inputs():
    with pytest.raises(ValueError):
        run_controller("robust", van_der_pol(), vdp_config(), [2.0, 0.0], 1.0)
    with pytest.raises(ValueError):
        run_lifted_mpc(van_der_pol(), vdp_config(), [2.0, 0.0, 1.0], 1.0)
    with pytest.raises(ValueError):
        run_lifted_mpc(van_der_pol(), vdp_config(), [2.0, 0.0], 0.01)


def synthetic(norms, inputs=None):
    norms = np.asarray(norms, dtype=float)
    k = norms.size
    states = np.column_stack([norms, np.zeros(k)])
    inputs = np.zeros((k, 1)) if inputs is None else np.asarray(inputs, dtype=float).reshape(k, 1)
    return ScenarioResult("lifted", "vdp", np.arange(k) * 0.1, states, inputs, np.zeros(k, int), [], {})


def test_metrics_all_zero():
    m = compute_metrics(synthetic(np.zeros(5)))
    assert m.settling_time == 0.0 and m.peak_input == 0.0


def test_metrics_last_upcrossing():
    m = compute_metrics(synthetic([1, 0.05, 0.2, 0.01, 0.01]), eps=0.1)
    assert m.settling_time == pytest.approx(0.3)
    assert m.max_state_norm == 1.0 and m.final_norm == pytest.approx(0.01)


def test_metrics_never_settles():
    assert compute_metrics(synthetic([1, 0.05, 0.2]), eps=0.1).settling_time is None


def test_metrics_input_on_bound_is_feasible():
    res = synthetic(np.zeros(4), [15.0, -15.0, 0.0, 15.0])
    m = compute_metrics(res, input_box=BoxSet([-15.0], [15.0]))
    assert m.input_violation == 0.0 and m.peak_input == 15.0
    m = compute_metrics(synthetic(np.zeros(2), [15.5, 0.0]), input_box=BoxSet([-15.0], [15.0]))
    assert m.input_violation == pytest.approx(0.5)


def test_settling_time_helper():
    assert settling_time([0, 1, 2], [0.5, 0.5, 0.5], 0.1) is None
    assert settling_time([0, 1, 2], [0.5, 0.05, 0.05], 0.1) == 1
