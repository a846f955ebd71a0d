"""Closed-loop runs under event-triggered, periodic, custom and robust schedules."""
from __future__ import annotations

import math
import multiprocessing as mp
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .controller import (TriggerState, control_law, dwell_bound, lyapunov_V, next_event,
                         robustness_window)
from .plant import DensityProfile, SpeedFunction, validate_plant
from .transport import Trajectory, TransportSolver

WORKERS_ENV = "REENTRANT_FLOW_WORKERS"


class RobustnessWarning(UserWarning):
    """A custom gap exceeded the robustness window of the current state."""


@dataclass(frozen=True)
class ScheduleMode:
    """How the next update time is chosen.

    ``kind`` is one of ``"event"``, ``"sampled"`` (fixed ``period``),
    ``"custom"`` (given ``times``) or ``"robust"`` (each gap is
    ``fraction`` times the robustness window of the current state).
    """
    kind: str = "event"
    period: float | None = None
    times: tuple[float, ...] = ()
    fraction: float | None = None

    def __post_init__(self):
        if self.kind == "sampled":
            if not (self.period and self.period > 0):
                raise ValueError("sampled mode needs a positive period")
        elif self.kind == "custom":
            ts = np.asarray(self.times, dtype=float)
            if len(ts) == 0 or ts[0] != 0 or np.any(np.diff(ts) <= 0):
                raise ValueError("custom times must increase strictly from 0")
        elif self.kind == "robust":
            if not (self.fraction and 0 < self.fraction <= 1):
                raise ValueError("robust mode needs a fraction in (0, 1]")
        elif self.kind != "event":
            raise ValueError(f"unknown schedule kind {self.kind!r}")

    @classmethod
    def event(cls):
        return cls("event")

    @classmethod
    def sampled(cls, period: float):
        return cls("sampled", period=float(period))

    @classmethod
    def custom(cls, times):
        return cls("custom", times=tuple(float(t) for t in times))

    @classmethod
    def robust(cls, fraction: float):
        return cls("robust", fraction=float(fraction))


@dataclass(frozen=True)
class Tolerances:
    h: float = 1e-3
    picard_tol: float = 1e-12
    max_iter: int = 200
    scan_dt: float = 1e-3
    bisect_tol: float = 1e-8
    scan_n: int = 2001
    trigger_atol: float = 1e-12
    w_ceiling: float = 1e6

    def __post_init__(self):
        for name in ("h", "picard_tol", "scan_dt", "bisect_tol", "w_ceiling"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.scan_n < 2 or self.max_iter < 1:
            raise ValueError("scan_n >= 2 and max_iter >= 1 required")
        if self.trigger_atol < 0:
            raise ValueError("trigger_atol must be non-negative")


@dataclass(frozen=True)
class EventEntry:
    t: float
    u: float
    V: float
    reason: str
    gap: float  # NaN for the interval truncated by the horizon


@dataclass
class EventLog:
    entries: list[EventEntry] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return np.array([e.t for e in self.entries])

    def gaps(self) -> np.ndarray:
        """Realized inter-execution times (the truncated last interval excluded)."""
        g = np.array([e.gap for e in self.entries])
        return g[np.isfinite(g)]


def run_closed_loop(profile0: DensityProfile, speed: SpeedFunction, rho_s: float, sigma: float,
                    mode: ScheduleMode, t_end: float, tol: Tolerances | None = None,
                    eq8b_cap: bool = True, verify_eq16: bool = False
                    ) -> tuple[Trajectory, EventLog]:
    """Sample the state, apply ``u_i = rho_s lambda(W(t_i))``, hold it, repeat.

    In event mode the hold ends at the trigger (or after ``1/lambda(0)``
    unless ``eq8b_cap`` is off). With ``verify_eq16`` custom gaps are checked
    against the robustness window of the current state and violations are
    recorded as warnings.
    """
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    tol = tol or Tolerances()
    report = validate_plant(speed)
    if not report.passed:
        raise ValueError("; ".join(report.violations))
    solver = TransportSolver(profile0, speed, h=tol.h, picard_tol=tol.picard_tol,
                             max_iter=tol.max_iter, w_ceiling=tol.w_ceiling)
    log = EventLog()
    custom = list(mode.times[1:]) if mode.kind == "custom" else []
    win = dict(h=tol.h, picard_tol=tol.picard_tol, scan_dt=tol.scan_dt,
               bisect_tol=tol.bisect_tol, scan_n=tol.scan_n, atol=tol.trigger_atol,
               max_iter=tol.max_iter, w_ceiling=tol.w_ceiling)
    pending = None
    while solver.t < t_end - 1e-12:
        ti = solver.t
        u = control_law(solver.traj.W_now, rho_s, speed)
        solver.start_segment(u)
        sl = profile0 if ti == 0 else solver.slice_now()
        V = lyapunov_V(sl, rho_s, sigma, tol.scan_n, boundary_value=rho_s)
        if pending is not None:
            log.entries.append(pending(ti))
        if mode.kind == "event":
            state = TriggerState(ti, u, V, solver.traj.Phi_now)
            t, reason = next_event(solver, state, sigma, rho_s, tol.scan_dt, tol.bisect_tol,
                                   t_limit=t_end, cap=eq8b_cap, atol=tol.trigger_atol)
        else:
            if mode.kind == "sampled":
                target, reason = ti + mode.period, "sampled"
            elif mode.kind == "custom":
                while custom and custom[0] <= ti + 1e-12:
                    custom.pop(0)
                target, reason = (custom[0] if custom else math.inf), "custom"
            else:
                G = robustness_window(sl, rho_s, sigma, speed, **win)
                target, reason = ti + mode.fraction * G, "robust"
            if verify_eq16 and mode.kind == "custom" and math.isfinite(target):
                G = robustness_window(sl, rho_s, sigma, speed, **win)
                if target - ti > G + tol.bisect_tol:
                    msg = f"gap {target - ti:.6g} at t={ti:.6g} exceeds G={G:.6g}"
                    log.warnings.append(msg)
                    warnings.warn(msg, RobustnessWarning, stacklevel=2)
            t, _ = solver.advance(min(target, t_end))
            if t < target - 1e-12:
                reason = "horizon"
        pending = (lambda nxt, ti=ti, u=u, V=V, reason=reason:
                   EventEntry(ti, u, V, reason, nxt - ti))
        if reason == "horizon":
            log.entries.append(EventEntry(ti, u, V, reason, math.nan))
            pending = None
            break
    if pending is not None:
        # the last hold ended exactly at the horizon: still a truncated interval
        e = pending(solver.t)
        log.entries.append(EventEntry(e.t, e.u, e.V, e.reason, math.nan))
    return solver.traj, log


_JOBS: list = []


def _job_gaps(k: int):
    return _family_gaps(_JOBS[k])


def _family_gaps(args):
    profile, speed, rho_s, sigma, t_end, tol, cap = args
    _, log = run_closed_loop(profile, speed, rho_s, sigma, ScheduleMode.event(), t_end, tol,
                             eq8b_cap=cap)
    return log.gaps()


@dataclass
class GapHistogram:
    edges: np.ndarray
    counts: np.ndarray
    gaps: np.ndarray
    per_profile: list[np.ndarray]

    def fraction_in(self, lo: float, hi: float) -> float:
        g = self.gaps
        return float(np.mean((g >= lo) & (g <= hi))) if len(g) else math.nan


def worker_count() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return max(1, min(8, os.cpu_count() or 1))


def interexecution_stats(family, speed: SpeedFunction, rho_s: float, sigma: float,
                         t_end: float, tol: Tolerances | None = None, bin_width: float = 0.1,
                         eq8b_cap: bool = True, workers: int | None = None) -> GapHistogram:
    """Pool the realized event-mode gaps of every profile in ``family``."""
    family = list(family)
    if not family:
        raise ValueError("family must not be empty")
    tol = tol or Tolerances()
    jobs = [(p, speed, rho_s, sigma, t_end, tol, eq8b_cap) for p in family]
    n = workers or worker_count()
    if n > 1 and len(jobs) > 1 and "fork" in mp.get_all_start_methods():
        # profiles hold closures, so forked workers inherit the jobs and get indices only
        global _JOBS
        _JOBS = jobs
        try:
            with ProcessPoolExecutor(max_workers=n, mp_context=mp.get_context("fork")) as ex:
                per = list(ex.map(_job_gaps, range(len(jobs))))
        finally:
            _JOBS = []
    else:
        per = [_family_gaps(j) for j in jobs]
    gaps = np.concatenate(per) if per else np.array([])
    top = max(bin_width, float(gaps.max()) if len(gaps) else bin_width)
    nb = int(math.ceil(top / bin_width - 1e-9)) + 1
    edges = bin_width * np.arange(nb + 1)
    counts, _ = np.histogram(gaps, bins=edges)
    return GapHistogram(edges, counts, gaps, per)


def zeno_bound(t_end: float, V0: float, sigma: float, speed: SpeedFunction,
               rho_s: float) -> float:
    """Largest event count on ``[0, t_end]`` allowed by the dwell bound."""
    d = min(1.0 / speed.lambda0, dwell_bound(V0, sigma, speed.lipschitz_K, rho_s))
    return t_end / d + 1
