import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from reentrant_flow.controller import (PositivityError, TriggerState, boundary_deviation,
                                       control_law, decay_constant, dwell_bound,
                                       guarantee_constants, lyapunov_V, robustness_window,
                                       sup_log_deviation, trigger_threshold)
from reentrant_flow.plant import (builtin_profile_paper, builtin_speed_hyperbolic,
                                  constant_profile, step_profile, tabulated_profile)

SP = builtin_speed_hyperbolic()
SIGMA = 0.02


def brute_V(fn, sigma, n=1_000_001):
    x = np.linspace(0, 1, n)
    return float(np.max(np.abs(np.log(fn(x))) * np.exp(-sigma * x)))


def test_control_law_examples():
    assert control_law(1.0, 1.0, SP) == 0.5
    assert control_law(6 + 2 / math.pi, 1.0, SP) == pytest.approx(0.130948, abs=5e-7)
    assert control_law(0.0, 2.0, SP) == 2.0
    with pytest.raises(ValueError):
        control_law(-1.0, 1.0, SP)


def test_lyapunov_V_reference_profile_against_fine_grid():
    V = lyapunov_V(builtin_profile_paper(0), 1.0, SIGMA)
    assert V == pytest.approx(brute_V(lambda x: 6 + np.sin(np.pi * x), SIGMA), abs=1e-7)
    # the rough estimate ln 7 e^{-0.01} sits slightly below the true sup near x = 0.5
    assert V == pytest.approx(math.log(7) * math.exp(-0.01), abs=1e-3)


def test_lyapunov_V_trivial_cases():
    assert lyapunov_V(constant_profile(1.0), 1.0, SIGMA) == 0.0
    assert lyapunov_V(constant_profile(math.e), 1.0, 0.3) == pytest.approx(1.0, abs=1e-15)


def test_lyapunov_V_sees_both_sides_of_a_jump():
    p = step_profile([1.0, 5.0], [0.5])
    assert lyapunov_V(p, 1.0, SIGMA, scan_n=3) == pytest.approx(math.log(5) * math.exp(-0.01))


def test_lyapunov_V_boundary_value_and_arrays():
    p = builtin_profile_paper(0)
    assert lyapunov_V(p, 1.0, SIGMA, boundary_value=1e-3) == pytest.approx(math.log(1e3))
    x = np.linspace(0, 1, 11)
    assert lyapunov_V(np.exp(x), 1.0, 0.0) == pytest.approx(1.0)
    assert lyapunov_V((x, np.exp(x)), 1.0, 0.0) == pytest.approx(1.0)


def test_lyapunov_V_positivity_violation():
    with pytest.raises(PositivityError):
        lyapunov_V(np.array([1.0, 0.0, 2.0]), 1.0, SIGMA)
    with pytest.raises(ValueError):
        lyapunov_V(constant_profile(1.0), 1.0, SIGMA, scan_n=1)


def test_trigger_threshold_examples():
    st_ = TriggerState(0.0, 0.5, 1.9266, 2.0)
    assert trigger_threshold(st_, 2.0, SIGMA) == 1.9266
    assert trigger_threshold(st_, 2.5, SIGMA) == pytest.approx(1.9074, abs=5e-5)
    assert trigger_threshold(TriggerState(0.0, 0.5, 0.0, 0.0), 7.0, SIGMA) == 0.0
    with pytest.raises(ValueError):
        TriggerState(0.0, 0.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        TriggerState(0.0, 1.0, -1.0, 0.0)


def test_boundary_deviation_examples():
    st_ = TriggerState(0.0, control_law(1.0, 1.0, SP), 1.0, 0.0)
    assert boundary_deviation(st_, 1.0, SP, 1.0) == 0.0
    assert boundary_deviation(st_, 3.0, SP, 1.0) == pytest.approx(math.log(2), abs=1e-15)


def test_dwell_bound_examples():
    T0 = dwell_bound(0.0, SIGMA, 1.0, 1.0)
    assert T0 == pytest.approx(math.log(1 + math.exp(-0.04)), abs=1e-15)
    # the quoted 0.67337 is a rounding of 0.673347
    assert T0 == pytest.approx(0.67337, abs=5e-5)
    assert abs(dwell_bound(1e-8, SIGMA, 1.0, 1.0) - T0) < 1e-6
    assert 0 < dwell_bound(1.9266, SIGMA, 1.0, 1.0) < T0
    assert dwell_bound(0.0, SIGMA, 2.0, 0.5) == T0
    with pytest.raises(ValueError):
        dwell_bound(-1.0, SIGMA)


def test_dwell_bound_matches_direct_formula():
    for s in (1e-3, 0.1, 1.0, 5.0):
        direct = math.exp(-s) * math.log(1 + s * math.exp(s - SIGMA) / (math.exp(math.exp(SIGMA) * s) - 1))
        assert dwell_bound(s, SIGMA) == pytest.approx(direct, rel=1e-12)


@given(st.floats(min_value=-8, max_value=2))
def test_dwell_bound_positive_on_log_grid(logs):
    assert dwell_bound(10.0 ** logs, SIGMA) > 0


def test_dwell_bound_monotone_on_grid():
    s = np.logspace(-8, 2, 400)
    vals = np.array([dwell_bound(x, SIGMA) for x in s])
    assert np.all(vals > 0) and np.all(np.diff(vals) <= 1e-15)


def test_decay_constant_examples():
    c = decay_constant(builtin_profile_paper(0), 1.0, SIGMA, SP)
    R = sup_log_deviation(builtin_profile_paper(0), 1.0)
    assert R == pytest.approx(math.log(7), abs=1e-12)
    closed = 1 / (1 + math.exp(math.exp(SIGMA) * math.log(7)))
    assert c == pytest.approx(closed, abs=1e-12)
    assert c == pytest.approx(0.120765, abs=2e-6)
    assert decay_constant(constant_profile(1.0), 1.0, SIGMA, SP) == 0.5
    assert c <= SP.lambda0


def test_robustness_window_examples():
    assert robustness_window(constant_profile(1.0), 1.0, SIGMA, SP) == 1.0
    p = builtin_profile_paper(0)
    G = robustness_window(p, 1.0, SIGMA, SP)
    V0 = lyapunov_V(p, 1.0, SIGMA, boundary_value=1.0)
    assert min(1.0, dwell_bound(V0, SIGMA)) <= G <= 1.0


def test_robustness_window_detects_crossing():
    # a slice with a small budget fires well before the cap
    p = tabulated_profile([0, 0.02, 1], [1.0, 1.01, 6.0])
    G = robustness_window(p, 1.0, 2.0, SP)
    assert G < 1.0


def test_guarantee_constants_reference():
    g = guarantee_constants(builtin_profile_paper(0), 1.0, SIGMA, SP)
    assert g.c_rho0 == pytest.approx(0.1207635, abs=1e-7)
    assert 0 < g.T_tilde_of_V0 < dwell_bound(0.0, SIGMA)
    assert 0 < g.G_rho0 <= 1.0


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.05, 20.0), min_size=3, max_size=9), st.floats(0.1, 10.0),
       st.floats(0.01, 50.0))
def test_V_scale_invariance_property(vals, rho_s, c):
    knots = np.linspace(0, 1, len(vals))
    a = lyapunov_V(tabulated_profile(knots, vals), rho_s, SIGMA)
    b = lyapunov_V(tabulated_profile(knots, np.array(vals) * c), rho_s * c, SIGMA)
    assert abs(a - b) <= 1e-12 * max(1.0, a)
