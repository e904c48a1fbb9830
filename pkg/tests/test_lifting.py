import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lifted_nmpc.lifting import (
    ConfigurationError,
    HoldSpec,
    chain_lift,
    fsfh_lift,
    hold_eval,
    lift_signal,
)
from lifted_nmpc.ode import LinearPlant, discretize_linear, linear_lift_reference
from lifted_nmpc.plants import linear_plant_model, van_der_pol, zero_plant

STABLE3 = LinearPlant(
    [[-0.5, 1.0, 0.0], [-1.0, -0.5, 0.3], [0.0, 0.2, -1.5]],
    [[0.0], [1.0], [0.5]],
)


def test_hold_single_rate():
    spec = HoldSpec(M=1, m=1, T=0.3)
    for theta in (0.0, 0.1, 0.2999):
        assert hold_eval(spec, [3.0], theta) == pytest.approx([3.0])


def test_hold_second_segment():
    spec = HoldSpec(M=2, m=1, T=1.0)
    assert hold_eval(spec, [1.5, -2.5], 0.7) == pytest.approx([-2.5])


@pytest.mark.parametrize("M", [1, 2, 5, 10])
def test_hold_theta_zero_is_first_segment(M):
    spec = HoldSpec(M=M, m=2, T=0.5)
    v = np.arange(2 * M, dtype=float)
    assert np.array_equal(hold_eval(spec, v, 0.0), v[:2])


def test_hold_right_continuous_at_boundary():
    spec = HoldSpec(M=4, m=1, T=1.0)
    assert hold_eval(spec, [0, 1, 2, 3], 0.25)[0] == 1
    assert hold_eval(spec, [0, 1, 2, 3], 0.2499999)[0] == 0


@pytest.mark.parametrize("theta", [-1e-9, 1.0, 2.0])
def test_hold_rejects_theta_outside_period(theta):
    with pytest.raises(ValueError):
        hold_eval(HoldSpec(M=2, m=1, T=1.0), [0.0, 1.0], theta)


@given(st.integers(1, 12), st.floats(0.01, 5.0), st.data())
def test_hold_piecewise_constant_in_order(M, T, data):
    v = np.array(data.draw(st.lists(st.floats(-10, 10), min_size=M, max_size=M)))
    spec = HoldSpec(M=M, m=1, T=T)
    for i in range(M):
        lo, hi = i * T / M, (i + 1) * T / M
        for frac in (0.05, 0.5, 0.95):
            assert hold_eval(spec, v, lo + frac * (hi - lo))[0] == v[i]


def test_lift_signal_blocks():
    lifted = lift_signal(np.arange(8.0), 1.0, 4)
    assert lifted.blocks.shape == (2, 4)
    assert np.array_equal(lifted[1], [4, 5, 6, 7])


def test_lift_signal_sine_indexing():
    t = np.arange(100) / 100.0
    sig = np.sin(2 * np.pi * 3 * t)
    lifted = lift_signal(sig, 0.1, 10)
    assert len(lifted) == 10
    for k in range(10):
        for j in range(10):
            assert lifted[k][j] == sig[10 * k + j]


@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 3))
def test_lift_then_flatten_is_identity(periods, spp, width):
    data = np.random.default_rng(periods * 100 + spp).normal(size=(periods * spp, width))
    assert np.array_equal(lift_signal(data, 0.5, spp).flatten(), data)


def test_lift_signal_length_mismatch():
    with pytest.raises(ValueError):
        lift_signal(np.zeros(7), 1.0, 4)


def test_fsfh_zero_plant():
    plant = zero_plant(3, 2)
    spec = HoldSpec(M=2, m=2, T=0.4)
    x = np.array([1.0, -2.0, 0.5])
    grid = fsfh_lift(plant, x, spec, [1, 2, 3, 4], 10)
    assert grid.states.shape == (11, 3)
    assert np.all(grid.states == x)


@pytest.mark.parametrize("nprime", [4, 10, 20])
def test_fsfh_matches_exact_linear_lift(nprime):
    plant = linear_plant_model(STABLE3)
    T = 0.5
    x0 = np.array([1.0, -0.5, 0.25])
    grid = fsfh_lift(plant, x0, HoldSpec(1, 1, T), [0.8], nprime)
    exact = np.array([s for s, _ in linear_lift_reference(STABLE3, x0, [0.8], T, nprime)])
    err = np.abs(grid.states - exact).max()
    # RK4 global error bound with a modest constant for this well-scaled plant
    assert err <= 0.1 * (T / nprime) ** 4


def test_fsfh_vdp_self_refinement():
    plant = van_der_pol(1.0)
    spec = HoldSpec(1, 1, 0.05)
    coarse = fsfh_lift(plant, [2.0, 0.0], spec, [0.0], 10)
    fine = fsfh_lift(plant, [2.0, 0.0], spec, [0.0], 10, substeps=100)
    rel = np.abs(coarse.states - fine.states).max() / np.abs(fine.states).max()
    assert rel < 1e-6


def test_fsfh_requires_multiple_of_M():
    with pytest.raises(ConfigurationError):
        fsfh_lift(van_der_pol(), [1.0, 0.0], HoldSpec(3, 1, 0.1), [0, 0, 0], 10)


@settings(max_examples=25, deadline=None)
@given(st.sampled_from([1, 2, 5]), st.integers(1, 4), st.integers(1, 4))
def test_fsfh_split_invariance(M, mult, s):
    plant = van_der_pol(1.0)
    nprime = M * mult * 2
    spec = HoldSpec(M, 1, 0.37)
    v = np.linspace(-0.5, 0.9, M)
    a = fsfh_lift(plant, [1.2, -0.3], spec, v, nprime, substeps=s)
    b = fsfh_lift(plant, [1.2, -0.3], spec, v, nprime * s, substeps=1)
    assert a.states[-1].tobytes() == b.states[-1].tobytes()
    assert np.array_equal(a.states, b.states[::s])


def test_fsfh_linear_error_shrinks_with_substeps():
    plant = linear_plant_model(STABLE3)
    T, nprime = 1.0, 4
    x0 = np.array([1.0, 1.0, -1.0])
    exact = np.array([s for s, _ in linear_lift_reference(STABLE3, x0, [0.3], T, nprime)])
    errs = [np.abs(fsfh_lift(plant, x0, HoldSpec(1, 1, T), [0.3], nprime, s).states - exact).max() for s in (1, 2)]
    assert errs[0] / errs[1] >= 13


def test_chain_single_period_equals_fsfh():
    plant = van_der_pol()
    spec = HoldSpec(2, 1, 0.1)
    grids = chain_lift(plant, [2.0, 0.0], spec, [[0.2, -0.4]], 10)
    single = fsfh_lift(plant, [2.0, 0.0], spec, [0.2, -0.4], 10)
    assert len(grids) == 1
    assert np.array_equal(grids[0].states, single.states)


def test_chain_continuity_bit_exact():
    plant = van_der_pol()
    spec = HoldSpec(2, 1, 0.05)
    v_seq = np.random.default_rng(0).uniform(-1, 1, size=(6, 2))
    grids = chain_lift(plant, [2.0, 0.0], spec, v_seq, 10)
    assert np.array_equal(grids[0].states[0], [2.0, 0.0])
    for a, b in zip(grids, grids[1:]):
        assert a.states[-1].tobytes() == b.states[0].tobytes()


def test_chain_linear_endpoint_vs_discretization():
    plant = linear_plant_model(STABLE3)
    T, nprime = 0.5, 10
    Ad, Bd = discretize_linear(STABLE3, T)
    x = x0 = np.array([0.5, 0.0, -0.5])
    for _ in range(3):
        x = Ad @ x + Bd @ np.array([1.0])
    grids = chain_lift(plant, x0, HoldSpec(1, 1, T), [[1.0]] * 3, nprime)
    assert np.abs(grids[-1].states[-1] - x).max() <= 0.1 * (T / nprime) ** 4


def test_chain_equals_one_long_period():
    plant = linear_plant_model(STABLE3)
    T, N, M, nprime = 0.3, 4, 2, 6
    v_seq = np.random.default_rng(5).uniform(-1, 1, size=(N, M))
    grids = chain_lift(plant, [1.0, 0.0, 0.0], HoldSpec(M, 1, T), v_seq, nprime)
    long = fsfh_lift(plant, [1.0, 0.0, 0.0], HoldSpec(M * N, 1, N * T), v_seq.reshape(-1), nprime * N)
    stitched = np.vstack([grids[0].states] + [g.states[1:] for g in grids[1:]])
    assert np.allclose(stitched, long.states, rtol=0, atol=1e-9)


def test_chain_rejects_empty():
    with pytest.raises(ValueError):
        chain_lift(van_der_pol(), [0.0, 0.0], HoldSpec(1, 1, 0.1), np.zeros((0, 1)), 10)
