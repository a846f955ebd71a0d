"""One test per acceptance criterion; each prints a PASS/FAIL line."""
import pytest

from reentrant_flow import acceptance as acc
from reentrant_flow.scheduler import Tolerances

from conftest import ACCEPTANCE_LINES

TOL = Tolerances()


def check(result):
    ACCEPTANCE_LINES.append(result.line())
    print("\n" + result.line())
    assert result.passed, result.line()


def test_ac01_equilibrium():
    check(acc.ac01_equilibrium(TOL))


def test_ac02_oracle_equivalence():
    check(acc.ac02_oracle(TOL))


def test_ac03_mass_balance():
    check(acc.ac03_mass_balance(TOL))


def test_ac04_lyapunov_decay():
    check(acc.ac04_lyapunov_decay(TOL))


def test_ac05_global_estimate():
    check(acc.ac05_global_estimate(TOL))


def test_ac06_dwell_time():
    r = acc.ac06_dwell(TOL)
    assert r.info["T_tilde_0"] == pytest.approx(0.673347167, abs=1e-9)
    check(r)


def test_ac07_cap():
    check(acc.ac07_cap(TOL))


@pytest.fixture(scope="module")
def statistics():
    return acc.ac08_statistics(TOL)


def test_ac08a_gaps_mostly_in_06_1(statistics):
    check(statistics[0])


def test_ac08b_uncapped_gaps_up_to_2(statistics):
    check(statistics[1])


def test_ac09_robust_schedule():
    check(acc.ac09_robust(TOL))


def test_ac10_sampled_data():
    check(acc.ac10_sampled(TOL))


def test_ac11_zeno_freeness():
    check(acc.ac11_zeno(TOL))


def test_ac12_scale_invariance():
    check(acc.ac12_scale(TOL))


def test_loose_picard_tolerance_breaks_oracle_agreement():
    r = acc.ac02_oracle(Tolerances(picard_tol=1e-2))
    ACCEPTANCE_LINES.append("(degraded, expected FAIL) " + r.line())
    print("\n(degraded) " + r.line())
    assert not r.passed
