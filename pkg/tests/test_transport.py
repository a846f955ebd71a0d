import math

import numpy as np
import pytest

from reentrant_flow.oracle import rk_oracle
from reentrant_flow.plant import (builtin_profile_paper, builtin_speed_hyperbolic,
                                  constant_profile, constant_speed, step_profile)
from reentrant_flow.transport import (OutOfHorizon, PicardDivergence, SliceProfile,
                                      contraction_window, backtrack, density_at, l2_deviation,
                                      outflux, picard_window, solve_open_loop)

SP = builtin_speed_hyperbolic()
U0 = 1 / (7 + 2 / math.pi)
SWITCHED = [(0.0, U0), (2.3, 0.2), (5.01, 0.5), (9.7, 0.3)]


@pytest.fixture(scope="module")
def switched():
    return solve_open_loop(builtin_profile_paper(0), SP, SWITCHED, 12.0)


def test_contraction_window_formula():
    assert contraction_window(SP, 7.0) == 0.125


def test_equilibrium_window_is_fixed_point():
    tau, W, dPhi, it = picard_window(1.0, 0.5, 0.1, constant_profile(1.0), SP)
    assert np.max(np.abs(W - 1.0)) < 1e-14
    assert dPhi[-1] == pytest.approx(0.05, abs=1e-15)


def test_initial_slope_matches_mass_balance():
    p = builtin_profile_paper(0)
    tau, W, _, _ = picard_window(p.total_mass, U0, 0.01, p, SP, h=1e-4)
    slope = (-3 * W[0] + 4 * W[1] - W[2]) / (2 * tau[1])
    assert slope == pytest.approx(U0 - U0 * 6, abs=1e-6)
    # the quoted -0.654741 was computed from u rounded to 0.130948
    assert slope == pytest.approx(-0.654741, abs=5e-6)


def test_iteration_limit_raises_divergence():
    p = builtin_profile_paper(0)
    with pytest.raises(PicardDivergence):
        picard_window(p.total_mass, U0, 0.9, p, SP, max_iter=3)


def test_mass_consistency(switched):
    for t in (0.3, 3.0, 6.0, 9.9, 12.0):
        sl = SliceProfile(switched, t)
        assert sl.mass_to(1.0) == pytest.approx(switched.W_at(t), abs=1e-10)
        # Gauss-Legendre on every smooth piece of the slice
        gx, gw = np.polynomial.legendre.leggauss(20)
        edges = np.unique(np.concatenate(([0.0], sl.breakpoints, [1.0])))
        total = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            sub = np.linspace(a, b, 11)
            for lo, hi in zip(sub[:-1], sub[1:]):
                x = 0.5 * (lo + hi) + 0.5 * (hi - lo) * gx
                total += 0.5 * (hi - lo) * gw @ density_at(switched, np.full_like(x, t), x)
        assert total == pytest.approx(switched.W_at(t), abs=1e-9)


def test_pure_transport_before_first_transit(switched):
    t = 1.5
    x = np.linspace(switched.Phi_at(t) + 1e-6, 1.0, 50)
    exact = builtin_profile_paper(0).eval(x - switched.Phi_at(t))
    assert np.array_equal(density_at(switched, np.full_like(x, t), x), exact)


def test_boundary_compatibility(switched):
    t = np.linspace(0, 12, 301)
    flux = SP(switched.W_at(t)) * density_at(switched, t, np.zeros_like(t))
    assert np.max(np.abs(flux - switched.u_at(t))) < 1e-9


def test_positivity_and_phi_monotone(switched):
    assert np.all(switched.W > 0)
    assert np.all(np.diff(switched.Phi) >= 0)
    assert np.all(np.diff(switched.Phi_at(np.linspace(0, 12, 5001))) > 0)


def test_outflux_examples():
    p = builtin_profile_paper(0)
    tr = solve_open_loop(p, SP, [(0.0, U0)], 0.5)
    assert outflux(tr, 0.0) == pytest.approx(6 / (7 + 2 / math.pi), abs=1e-12)
    eq = solve_open_loop(constant_profile(1.0), SP, [(0.0, 0.5)], 3.0)
    assert outflux(eq, 2.0) == pytest.approx(0.5, abs=1e-14)


def test_backtrack_examples(switched):
    r = backtrack(switched, 7.0, 0.0)
    assert r.from_boundary and r.t_tilde == pytest.approx(7.0, abs=1e-12)
    r = backtrack(switched, 7.0, 0.4)
    assert switched.Phi_at(7.0) - switched.Phi_at(r.t_tilde) == pytest.approx(0.4, abs=1e-10)
    assert not backtrack(switched, 1.0, 0.9).from_boundary
    c = solve_open_loop(constant_profile(1.0), constant_speed(0.5), [(0.0, 0.5)], 4.0)
    assert backtrack(c, 3.0, 0.7).t_tilde == pytest.approx(3.0 - 0.7 / 0.5, abs=1e-12)
    with pytest.raises(OutOfHorizon):
        backtrack(switched, 13.0, 0.1)


def test_picard_matches_oracle_on_switched_input(switched):
    orc = rk_oracle(builtin_profile_paper(0), SP, SWITCHED, 12.0, h=1e-3, out_step=1e-2)
    assert np.max(np.abs(switched.W_at(orc.t) - orc.W)) < 1e-8


def test_picard_converges_with_h():
    p = builtin_profile_paper(0)
    grid = np.linspace(0, 6, 6001)
    ref = solve_open_loop(p, SP, SWITCHED[:3], 6.0, h=2.5e-4)
    coarse = solve_open_loop(p, SP, SWITCHED[:3], 6.0, h=8e-3)
    fine = solve_open_loop(p, SP, SWITCHED[:3], 6.0, h=4e-3)
    node_err = [np.max(np.abs(tr.W - ref.W_at(tr.times))) for tr in (coarse, fine)]
    dense_err = [np.max(np.abs(tr.W_at(grid) - ref.W_at(grid))) for tr in (coarse, fine)]
    assert node_err[0] / node_err[1] > 12  # fourth order at the nodes
    assert dense_err[0] / dense_err[1] > 6  # third order for the Hermite dense output


def test_step_profile_kinks_are_tracked():
    p = step_profile([2.0, 1.0], [0.5])
    tr = solve_open_loop(p, SP, [(0.0, 0.4)], 4.0)
    orc = rk_oracle(p, SP, [(0.0, 0.4)], 4.0, h=1e-3, out_step=1e-2)
    assert np.max(np.abs(tr.W_at(orc.t) - orc.W)) < 1e-8
    assert any("kink" in k for k in tr.break_kinds)


def test_l2_deviation_equilibrium_and_reference():
    eq = solve_open_loop(constant_profile(1.0), SP, [(0.0, 0.5)], 1.0)
    assert l2_deviation(eq, 0.5, 1.0) < 1e-14
    tr = solve_open_loop(builtin_profile_paper(0), SP, [(0.0, U0)], 0.1)
    x = np.linspace(0, 1, 400001)
    ref = math.sqrt(np.trapezoid((5 + np.sin(np.pi * x)) ** 2, x))
    assert l2_deviation(tr, 0.0, 1.0) == pytest.approx(ref, abs=1e-9)
