"""Boundary feedback, Lyapunov functional, event trigger and guarantee constants.

The input is held at ``u_i = rho_s lambda(W(t_i))`` between events. An
event fires when the boundary log-deviation exceeds the geometrically
shrinking budget ``exp(-sigma (Phi(t) - Phi(t_i))) V(t_i)``, or after
``1 / lambda(0)`` time units, whichever comes first.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .plant import SpeedFunction
from .transport import TransportSolver, WindowView


class PositivityError(ValueError):
    pass


@dataclass(frozen=True)
class TriggerState:
    t_i: float
    u_i: float
    V_i: float
    phi_at_ti: float

    def __post_init__(self):
        if not self.V_i >= 0:
            raise ValueError("V_i must be non-negative")
        if not self.u_i > 0:
            raise ValueError("u_i must be positive")


@dataclass(frozen=True)
class GuaranteeConstants:
    sigma: float
    c_rho0: float
    T_tilde_of_V0: float
    G_rho0: float


def control_law(W_at_event: float, rho_s: float, speed: SpeedFunction) -> float:
    if W_at_event < 0:
        raise ValueError("W must be non-negative")
    return float(rho_s * speed.value(W_at_event))


def _scan(profile, scan_n: int) -> np.ndarray:
    """Profile samples on a uniform grid plus both limits at every breakpoint."""
    if isinstance(profile, tuple):
        return np.asarray(profile[1], dtype=float), np.asarray(profile[0], dtype=float)
    if isinstance(profile, np.ndarray):
        return profile, np.linspace(0.0, 1.0, len(profile))
    bps = np.asarray(getattr(profile, "breakpoints", [0.0]), dtype=float)
    x = np.unique(np.concatenate((np.linspace(0.0, 1.0, scan_n), bps)))
    vals = np.asarray(profile.eval(x), dtype=float)
    if hasattr(profile, "right_limit"):
        vals = np.concatenate((vals, np.atleast_1d(profile.right_limit(bps))))
        x = np.concatenate((x, bps))
    return vals, x


def lyapunov_V(profile, rho_s: float, sigma: float, scan_n: int = 2001,
               boundary_value: float | None = None) -> float:
    """``sup_x |ln(rho(x)/rho_s)| exp(-sigma x)`` over a scan.

    ``profile`` may be a profile object, an array of samples on a uniform
    grid of ``[0, 1]``, or an ``(x, values)`` pair. ``boundary_value``
    adds the controller's own inflow density at ``x = 0``.
    """
    if scan_n < 2:
        raise ValueError("scan_n must be at least 2")
    vals, x = _scan(profile, scan_n)
    if np.any(~(vals > 0)):
        raise PositivityError("positivity violation in density profile")
    out = float(np.max(np.abs(np.log(vals / rho_s)) * np.exp(-sigma * x)))
    if boundary_value is not None:
        if not boundary_value > 0:
            raise PositivityError("positivity violation at the boundary")
        out = max(out, abs(math.log(boundary_value / rho_s)))
    return out


def sup_log_deviation(profile, rho_s: float, scan_n: int = 2001) -> float:
    """Unweighted ``sup_x |ln(rho(x)/rho_s)|``."""
    return lyapunov_V(profile, rho_s, 0.0, scan_n)


def trigger_threshold(state: TriggerState, phi_now, sigma: float):
    return np.exp(-sigma * (np.asarray(phi_now) - state.phi_at_ti)) * state.V_i


def boundary_deviation(state: TriggerState, W_now, speed: SpeedFunction, rho_s: float):
    """``|ln(rho(t,0)/rho_s)|`` with ``rho(t,0) = u_i / lambda(W(t))``.

    Under the feedback law this is ``|ln(lambda(W(t_i)) / lambda(W(t)))|``.
    """
    return np.abs(np.log(state.u_i / (rho_s * speed.value(np.asarray(W_now, dtype=float)))))


class TriggerMonitor:
    """Scan-then-bisect detector for the event condition.

    Samples the condition on the grid ``t_i + k scan_dt`` (plus each window
    end) and bisects the first bracketing step down to ``bisect_tol``. The
    later end of the final bracket is returned, so a reported event never
    precedes the true crossing. ``atol`` is added to the threshold so that
    roundoff at equilibrium cannot fire the trigger.
    """

    def __init__(self, state: TriggerState, sigma: float, speed: SpeedFunction, rho_s: float,
                 scan_dt: float = 1e-3, bisect_tol: float = 1e-8, atol: float = 1e-12):
        if not (scan_dt > 0 and bisect_tol > 0):
            raise ValueError("scan_dt and bisect_tol must be positive")
        self.state = state
        self.sigma = sigma
        self.speed = speed
        self.rho_s = rho_s
        self.scan_dt = scan_dt
        self.bisect_tol = bisect_tol
        self.atol = atol

    def excess(self, view: WindowView, t):
        W = view.W_at(t)
        Phi = view.Phi_at(t)
        return (boundary_deviation(self.state, W, self.speed, self.rho_s)
                - trigger_threshold(self.state, Phi, self.sigma) - self.atol)

    def __call__(self, view: WindowView, t0: float, t1: float):
        ti = self.state.t_i
        k0 = math.floor((t0 - ti) / self.scan_dt) + 1
        k1 = math.floor((t1 - ti) / self.scan_dt)
        grid = ti + self.scan_dt * np.arange(k0, k1 + 1)
        grid = grid[(grid > t0) & (grid < t1)]
        pts = np.append(grid, t1)
        f = np.asarray(self.excess(view, pts))
        over = np.nonzero(f > 0)[0]
        if not len(over):
            return None
        j = int(over[0])
        lo = t0 if j == 0 else float(pts[j - 1])
        hi = float(pts[j])
        while hi - lo > self.bisect_tol:
            mid = 0.5 * (lo + hi)
            if float(self.excess(view, np.array([mid]))[0]) > 0:
                hi = mid
            else:
                lo = mid
        return hi


def next_event(solver: TransportSolver, state: TriggerState, sigma: float, rho_s: float,
               scan_dt: float = 1e-3, bisect_tol: float = 1e-8, t_limit: float = math.inf,
               cap: bool = True, atol: float = 1e-12) -> tuple[float, str]:
    """Advance ``solver`` from ``t_i`` until the next event or ``t_limit``.

    The input segment must already be started. Returns the time reached and
    the reason: ``"threshold-crossing"``, ``"max-interval"`` or ``"horizon"``.
    """
    speed = solver.speed
    monitor = TriggerMonitor(state, sigma, speed, rho_s, scan_dt, bisect_tol, atol)
    t_cap = state.t_i + 1.0 / speed.lambda0 if cap else math.inf
    stop = min(t_cap, t_limit)
    if not math.isfinite(stop):
        raise ValueError("an uncapped trigger needs a finite t_limit")
    t, fired = solver.advance(stop, monitor)
    if fired:
        return t, "threshold-crossing"
    if cap and t_cap <= t_limit:
        return t, "max-interval"
    return t, "horizon"


def dwell_bound(s: float, sigma: float, K: float = 1.0, rho_s: float = 1.0) -> float:
    """Guaranteed dwell time as a function of ``s = V(t_i)``.

    ``(1/(K rho_s)) exp(-s) ln(1 + s exp(s - sigma) / (exp(exp(sigma) s) - 1))``
    with its limit ``ln(1 + exp(-2 sigma)) / (K rho_s)`` below ``s = 1e-8``.
    """
    if s < 0 or not (K > 0 and rho_s > 0):
        raise ValueError("need s >= 0, K > 0, rho_s > 0")
    scale = 1.0 / (K * rho_s)
    if s < 1e-8:
        return scale * math.log1p(math.exp(-2.0 * sigma))
    a = math.exp(sigma) * s
    # s e^{s-sigma} / (e^a - 1) written as s e^{s-sigma-a} / (1 - e^{-a})
    ratio = s * math.exp(s - sigma - a) / -math.expm1(-a)
    return scale * math.exp(-s) * math.log1p(ratio)


def decay_constant(profile0, rho_s: float, sigma: float, speed: SpeedFunction,
                   scan_n: int = 2001) -> float:
    """``lambda(rho_s exp(exp(sigma) sup|ln(rho0/rho_s)|))``."""
    R = sup_log_deviation(profile0, rho_s, scan_n)
    return float(speed.value(rho_s * math.exp(math.exp(sigma) * R)))


def robustness_window(profile0, rho_s: float, sigma: float, speed: SpeedFunction,
                      h: float = 1e-3, picard_tol: float = 1e-12, scan_dt: float = 1e-3,
                      bisect_tol: float = 1e-8, scan_n: int = 2001, atol: float = 1e-12,
                      **solver_opts) -> float:
    """``min(1/lambda(0), r)`` with ``r`` the first trigger crossing of the
    open loop started from ``profile0`` under ``u = rho_s lambda(int rho0)``.
    """
    solver = TransportSolver(profile0, speed, h=h, picard_tol=picard_tol, **solver_opts)
    W0 = solver.traj.W_now
    u = control_law(W0, rho_s, speed)
    V0 = lyapunov_V(profile0, rho_s, sigma, scan_n, boundary_value=rho_s)
    solver.start_segment(u)
    state = TriggerState(0.0, u, V0, 0.0)
    t, _ = next_event(solver, state, sigma, rho_s, scan_dt, bisect_tol, atol=atol)
    return min(1.0 / speed.lambda0, t)


def guarantee_constants(profile0, rho_s: float, sigma: float, speed: SpeedFunction,
                        scan_n: int = 2001, **window_opts) -> GuaranteeConstants:
    V0 = lyapunov_V(profile0, rho_s, sigma, scan_n, boundary_value=rho_s)
    return GuaranteeConstants(
        sigma=sigma,
        c_rho0=decay_constant(profile0, rho_s, sigma, speed, scan_n),
        T_tilde_of_V0=dwell_bound(V0, sigma, speed.lipschitz_K, rho_s),
        G_rho0=robustness_window(profile0, rho_s, sigma, speed, scan_n=scan_n, **window_opts),
    )
