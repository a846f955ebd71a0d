import math
import warnings

import numpy as np
import pytest

from reentrant_flow.controller import dwell_bound, lyapunov_V
from reentrant_flow.plant import (SpeedFunction, builtin_profile_paper, builtin_speed_hyperbolic,
                                  constant_profile)
from reentrant_flow.scheduler import (RobustnessWarning, ScheduleMode, Tolerances,
                                      interexecution_stats, run_closed_loop, zeno_bound)
from reentrant_flow.transport import BlowUpDiagnostic

SP = builtin_speed_hyperbolic()
SIGMA = 0.02


@pytest.fixture(scope="module")
def reference_event():
    return run_closed_loop(builtin_profile_paper(0), SP, 1.0, SIGMA, ScheduleMode.event(), 12.0)


def test_mode_validation():
    with pytest.raises(ValueError):
        ScheduleMode.sampled(0.0)
    with pytest.raises(ValueError):
        ScheduleMode.custom([0.5, 1.0])
    with pytest.raises(ValueError):
        ScheduleMode.custom([0.0, 2.0, 1.0])
    with pytest.raises(ValueError):
        ScheduleMode.robust(1.5)
    with pytest.raises(ValueError):
        ScheduleMode("weird")
    with pytest.raises(ValueError):
        Tolerances(h=0)


def test_equilibrium_all_modes_identical():
    p = constant_profile(1.0)
    modes = [ScheduleMode.event(), ScheduleMode.sampled(1.0),
             ScheduleMode.custom([0.0, 0.7, 3.0]), ScheduleMode.robust(0.9)]
    ts = np.linspace(0, 6, 61)
    for m in modes:
        traj, log = run_closed_loop(p, SP, 1.0, SIGMA, m, 6.0)
        assert np.max(np.abs(traj.W_at(ts) - 1.0)) < 1e-12
        assert all(e.u == pytest.approx(0.5, abs=1e-15) for e in log.entries)
    _, log = run_closed_loop(p, SP, 1.0, SIGMA, ScheduleMode.event(), 6.0)
    assert np.allclose(log.gaps(), 1.0, atol=1e-12)
    assert all(e.reason == "max-interval" for e in log.entries[:-1])


def test_event_log_structure(reference_event):
    traj, log = reference_event
    t = log.times
    assert t[0] == 0 and np.all(np.diff(t) > 0)
    assert math.isnan(log.entries[-1].gap)
    assert traj.t_now == pytest.approx(12.0, abs=1e-12)
    g = log.gaps()
    assert np.all(g <= 1.0 + 1e-8)
    for e in log.entries[:-1]:
        assert e.gap >= min(1.0, dwell_bound(e.V, SIGMA)) - 1e-6


def test_first_event_regression(reference_event):
    # frozen from the first verified run: the cap fires before the trigger
    _, log = reference_event
    e0 = log.entries[0]
    assert e0.u == pytest.approx(1 / (7 + 2 / math.pi), abs=1e-15)
    assert e0.V == pytest.approx(1.9270799796809586, abs=1e-12)
    assert log.entries[1].t == 1.0 and e0.reason == "max-interval"


def test_V_decays_along_event_log(reference_event):
    _, log = reference_event
    V = np.array([e.V for e in log.entries])
    assert np.all(np.diff(V) <= 1e-9)
    assert V[-1] < 1e-2 * V[0]


def test_trigger_fires_without_cap():
    _, log = run_closed_loop(builtin_profile_paper(1), SP, 1.0, 0.006, ScheduleMode.event(),
                             10.0, eq8b_cap=False)
    assert log.entries[0].reason == "threshold-crossing"
    assert log.entries[0].gap > 1.0


def test_sampled_and_custom_times():
    p = builtin_profile_paper(0)
    _, log = run_closed_loop(p, SP, 1.0, SIGMA, ScheduleMode.sampled(2.5), 6.0)
    assert np.allclose(log.times, [0.0, 2.5, 5.0])
    _, log = run_closed_loop(p, SP, 1.0, SIGMA, ScheduleMode.custom([0, 0.4, 1.1, 9.0]), 3.0)
    assert np.allclose(log.times, [0.0, 0.4, 1.1])
    assert np.allclose(log.gaps(), [0.4, 0.7])


def test_custom_gap_violation_is_warned():
    p = builtin_profile_paper(0)
    with pytest.warns(RobustnessWarning):
        _, log = run_closed_loop(p, SP, 1.0, SIGMA, ScheduleMode.custom([0.0, 2.5]), 3.0,
                                 verify_eq16=True)
    assert log.warnings and "exceeds G" in log.warnings[0]
    with warnings.catch_warnings():
        warnings.simplefilter("error", RobustnessWarning)
        run_closed_loop(p, SP, 1.0, SIGMA, ScheduleMode.custom([0.0, 0.5, 1.0]), 1.5,
                        verify_eq16=True)


def test_robust_mode_gaps_are_fraction_of_G():
    _, log = run_closed_loop(builtin_profile_paper(0), SP, 1.0, SIGMA, ScheduleMode.robust(0.9),
                             3.0)
    assert np.allclose(log.gaps(), 0.9, atol=1e-8)


def test_invalid_plant_rejected():
    bad = SpeedFunction(lambda W: 1 + np.sin(W), np.cos, 1.0)
    with pytest.raises(ValueError):
        run_closed_loop(constant_profile(1.0), bad, 1.0, SIGMA, ScheduleMode.event(), 1.0)


def test_blow_up_diagnostic():
    with pytest.raises(BlowUpDiagnostic):
        run_closed_loop(builtin_profile_paper(0), SP, 1.0, SIGMA, ScheduleMode.event(), 1.0,
                        Tolerances(w_ceiling=3.0))


def test_stats_equilibrium_family():
    H = interexecution_stats([constant_profile(1.0)] * 2, SP, 1.0, SIGMA, 5.0, workers=1)
    assert np.all(H.gaps == 1.0)
    assert H.counts.sum() == len(H.gaps) == 8
    assert H.counts[np.searchsorted(H.edges, 1.0, side="right") - 1] == 8


def test_stats_parallel_matches_serial():
    fam = [builtin_profile_paper(l) for l in (1.0, 40.0)]
    a = interexecution_stats(fam, SP, 1.0, SIGMA, 4.0, workers=1)
    b = interexecution_stats(fam, SP, 1.0, SIGMA, 4.0, workers=2)
    assert all(np.array_equal(x, y) for x, y in zip(a.per_profile, b.per_profile))


def test_zeno_bound_value():
    V0 = lyapunov_V(builtin_profile_paper(0), 1.0, SIGMA, boundary_value=1.0)
    assert zeno_bound(40.0, V0, SIGMA, SP, 1.0) == pytest.approx(
        40.0 / dwell_bound(V0, SIGMA) + 1)
