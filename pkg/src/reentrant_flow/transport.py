"""Exact solution of the nonlocal transport problem for piecewise-constant influx.

The work in progress ``W`` is found window by window as the fixed point of

    W(t) = t u + int_0^{a(t)} rho_start(x) dx,   a(t) = 1 - int_0^t lambda(W(s)) ds,

where ``rho_start`` is the density at the window start. Windows are no
longer than ``1 / (lambda(0) + K rho_max)`` so the map is a contraction.
The density itself is never stored on a grid: :func:`density_at` follows
the characteristic through ``(t, x)`` back to either the initial profile or
the inflow boundary.

Nodes are stored with ``W`` and the travelled distance ``Phi``; a node is
duplicated wherever ``W`` loses smoothness (input switches and arrivals of
profile discontinuities at ``x = 1``), so dense output never interpolates
across a kink.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np

from .plant import DensityProfile, SpeedFunction

# Levels closer than this (in Phi units) to the current node count as reached.
PHI_SNAP = 1e-10


class SolverError(RuntimeError):
    """Base class for solver diagnostics."""


class PicardDivergence(SolverError):
    pass


class OutOfHorizon(SolverError, ValueError):
    pass


class BlowUpDiagnostic(SolverError):
    pass


class ProfileLike(Protocol):
    breakpoints: np.ndarray

    def eval(self, x): ...

    def right_limit(self, x): ...

    def mass_to(self, a): ...


def contraction_window(speed: SpeedFunction, rho_max: float) -> float:
    """Longest window on which the fixed-point map is a contraction."""
    return 1.0 / (speed.lambda0 + speed.lipschitz_K * rho_max)


def finite_difference_slopes(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Second-order node slopes for cubic Hermite dense output."""
    n = len(x)
    if n == 1:
        return np.zeros(1)
    h = np.diff(x)
    delta = np.diff(y) / h
    if n == 2:
        return np.array([delta[0], delta[0]])
    d = np.empty(n)
    h0, h1 = h[:-1], h[1:]
    d[1:-1] = (h1 * delta[:-1] + h0 * delta[1:]) / (h0 + h1)
    d[0] = ((2 * h[0] + h[1]) * delta[0] - h[0] * delta[1]) / (h[0] + h[1])
    d[-1] = ((2 * h[-1] + h[-2]) * delta[-1] - h[-1] * delta[-2]) / (h[-1] + h[-2])
    return d


def _hermite(t, t0, t1, y0, y1, d0, d1):
    dt = t1 - t0
    s = (t - t0) / dt
    s2, s3 = s * s, s * s * s
    return ((2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * dt * d0
            + (-2 * s3 + 3 * s2) * y1 + (s3 - s2) * dt * d1)


def _hermite_inverse(target, t0, t1, y0, y1, d0, d1, iters: int = 6):
    """Invert an increasing cubic Hermite piece by safeguarded Newton."""
    dt = t1 - t0
    span = y1 - y0
    s = np.where(span > 0, (target - y0) / np.where(span > 0, span, 1.0), 0.0)
    s = np.clip(s, 0.0, 1.0)
    for _ in range(iters):
        s2 = s * s
        f = ((2 * s2 * s - 3 * s2 + 1) * y0 + (s2 * s - 2 * s2 + s) * dt * d0
             + (-2 * s2 * s + 3 * s2) * y1 + (s2 * s - s2) * dt * d1) - target
        df = ((6 * s2 - 6 * s) * y0 + (3 * s2 - 4 * s + 1) * dt * d0
              + (-6 * s2 + 6 * s) * y1 + (3 * s2 - 2 * s) * dt * d1)
        step = np.where(df > 0, f / np.where(df > 0, df, 1.0), 0.0)
        s = np.clip(s - step, 0.0, 1.0)
    return t0 + s * dt


@dataclass(frozen=True)
class BacktrackResult:
    t_tilde: float
    from_boundary: bool


class Trajectory:
    """Closed-loop (or open-loop) solution record.

    Node arrays ``times``, ``W`` and ``Phi`` are non-decreasing in time;
    a time appears twice where a new smooth piece starts. ``segments`` holds
    ``(t_i, u_i)`` pairs of the piecewise-constant input.
    """

    def __init__(self, profile0: ProfileLike, speed: SpeedFunction, W0: float):
        self.profile0 = profile0
        self.speed = speed
        self._t = [np.array([0.0])]
        self._W = [np.array([float(W0)])]
        self._Phi = [np.array([0.0])]
        self._cache = None
        self._piece_start = 0  # node index where the open piece begins
        self._frozen_slopes: list[np.ndarray] = []
        self.seg_t: list[float] = []
        self.seg_u: list[float] = []
        self._seg_U: list[float] = []  # cumulative input at each segment start
        self.break_times: list[float] = []
        self.break_kinds: list[str] = []

    # -- construction (solver side) --------------------------------------
    def _append(self, t, W, Phi):
        self._t.append(np.asarray(t, dtype=float))
        self._W.append(np.asarray(W, dtype=float))
        self._Phi.append(np.asarray(Phi, dtype=float))
        self._cache = None

    def _mark_break(self, kind: str) -> None:
        t, W, Phi = self.t_now, self.W_now, self.Phi_now
        if self.break_times and self.break_times[-1] == t:
            if kind not in self.break_kinds[-1]:
                self.break_kinds[-1] += "+" + kind
            return
        arrays = self._arrays()
        n = len(arrays[0])
        self._frozen_slopes.append(
            finite_difference_slopes(arrays[0][self._piece_start:n], arrays[1][self._piece_start:n]))
        self._append([t], [W], [Phi])
        self._piece_start = n
        self.break_times.append(t)
        self.break_kinds.append(kind)

    def _add_segment(self, u: float) -> None:
        if not u > 0:
            raise ValueError("input must be positive")
        t = self.t_now
        if self.seg_t and t <= self.seg_t[-1]:
            raise ValueError("segment start times must increase")
        self._seg_U.append(self.cumulative_input(t) if self.seg_t else 0.0)
        self.seg_t.append(t)
        self.seg_u.append(float(u))
        if t > 0:
            self._mark_break("event")

    def _arrays(self):
        if self._cache is None:
            t = np.concatenate(self._t)
            W = np.concatenate(self._W)
            Phi = np.concatenate(self._Phi)
            self._t, self._W, self._Phi = [t], [W], [Phi]
            slopes = self._frozen_slopes + [
                finite_difference_slopes(t[self._piece_start:], W[self._piece_start:])]
            dW = np.concatenate(slopes)
            v = np.asarray(self.speed.value(W), dtype=float)
            self._cache = (t, W, Phi, dW, v)
        return self._cache

    # -- public views ------------------------------------------------------
    @property
    def times(self) -> np.ndarray:
        return self._arrays()[0]

    @property
    def W(self) -> np.ndarray:
        return self._arrays()[1]

    @property
    def Phi(self) -> np.ndarray:
        return self._arrays()[2]

    @property
    def t_now(self) -> float:
        return float(self._t[-1][-1])

    @property
    def W_now(self) -> float:
        return float(self._W[-1][-1])

    @property
    def Phi_now(self) -> float:
        return float(self._Phi[-1][-1])

    t_end = t_now

    @property
    def segments(self) -> list[tuple[float, float]]:
        return list(zip(self.seg_t, self.seg_u))

    def _check(self, t):
        ta = np.asarray(t, dtype=float)
        if np.any(ta < -1e-14) or np.any(ta > self.t_now + 1e-12):
            raise OutOfHorizon(f"time outside stored horizon [0, {self.t_now}]")
        return np.clip(ta, 0.0, self.t_now)

    def _interval(self, t, ref):
        n = len(ref)
        j = np.clip(np.searchsorted(ref, t, side="right") - 1, 0, n - 2)
        # a trailing duplicate node leaves a zero-length last interval
        return np.where(ref[j + 1] == ref[j], np.maximum(j - 1, 0), j)

    def W_at(self, t):
        ta = self._check(t)
        tt, W, _, dW, _ = self._arrays()
        if len(tt) == 1:
            return np.full_like(ta, W[0]) if np.ndim(ta) else float(W[0])
        j = self._interval(ta, tt)
        out = _hermite(ta, tt[j], tt[j + 1], W[j], W[j + 1], dW[j], dW[j + 1])
        return out if np.ndim(t) else float(out)

    def Phi_at(self, t):
        ta = self._check(t)
        tt, _, Phi, _, v = self._arrays()
        if len(tt) == 1:
            return np.zeros_like(ta) if np.ndim(ta) else 0.0
        j = self._interval(ta, tt)
        out = _hermite(ta, tt[j], tt[j + 1], Phi[j], Phi[j + 1], v[j], v[j + 1])
        return out if np.ndim(t) else float(out)

    def speed_at(self, t):
        return self.speed.value(self.W_at(t))

    def inverse_Phi(self, y):
        """Time ``s`` with ``Phi(s) = y``; break times are returned exactly."""
        ya = np.atleast_1d(np.asarray(y, dtype=float))
        tt, _, Phi, _, v = self._arrays()
        if len(tt) == 1:
            out = np.zeros_like(ya)
        else:
            j = self._interval(ya, Phi)
            out = _hermite_inverse(ya, tt[j], tt[j + 1], Phi[j], Phi[j + 1], v[j], v[j + 1])
            # node values invert to the node time itself
            exact = np.searchsorted(Phi, ya, side="left")
            exact = np.clip(exact, 0, len(Phi) - 1)
            hit = Phi[exact] == ya
            out[hit] = tt[exact[hit]]
        return out if np.ndim(y) else float(out[0])

    def snap_to_breaks(self, s: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Replace times whose Phi lies within roundoff of a break's Phi by the break time."""
        if not self.break_times:
            return s
        bt = np.asarray(self.break_times)
        bphi = self.Phi_at(bt)
        k = np.clip(np.searchsorted(bphi, y), 0, len(bt) - 1)
        out = s.copy()
        for kk in (k - 1, k):
            kk = np.clip(kk, 0, len(bt) - 1)
            close = np.abs(bphi[kk] - y) <= 1e-12
            out[close] = bt[kk[close]]
        return out

    def u_at(self, t, side: str = "right"):
        """Active input; ``side="left"`` gives the limit from before a switch."""
        ta = np.atleast_1d(np.asarray(t, dtype=float))
        st = np.asarray(self.seg_t)
        idx = np.searchsorted(st, ta, side=side) - 1
        idx = np.clip(idx, 0, len(st) - 1)
        out = np.asarray(self.seg_u)[idx]
        return out if np.ndim(t) else float(out[0])

    def cumulative_input(self, t):
        """``U(t) = int_0^t u(s) ds``; exact for piecewise-constant input."""
        ta = np.atleast_1d(np.asarray(t, dtype=float))
        if not self.seg_t:
            out = np.zeros_like(ta)
        else:
            st = np.asarray(self.seg_t)
            idx = np.clip(np.searchsorted(st, ta, side="right") - 1, 0, len(st) - 1)
            out = np.asarray(self._seg_U)[idx] + np.asarray(self.seg_u)[idx] * (ta - st[idx])
        return out if np.ndim(t) else float(out[0])

    def boundary_density_from(self, s, side: str = "right"):
        """Density carried by the characteristic that entered at time ``s``."""
        return self.u_at(s, side) / self.speed.value(self.W_at(s))

    def kink_times_within(self, t0: float, t1: float) -> np.ndarray:
        bt = np.asarray(self.break_times)
        return bt[(bt > t0) & (bt < t1)]


class SliceProfile:
    """The density ``rho[s]`` of a trajectory at time ``s``, as a profile.

    It supports the same evaluation and mass queries as
    :class:`DensityProfile`, computed from the characteristic representation.
    ``eval(0)`` is the boundary value under the input active at ``s``.
    """

    def __init__(self, traj: Trajectory, s: float):
        self.traj = traj
        self.s = float(s)
        self.P = traj.Phi_at(self.s)
        self.W = traj.W_at(self.s)
        self._bounds = None
        bps = [0.0]
        if self.P < 1:
            bps.append(self.P)
            p0 = np.asarray(traj.profile0.breakpoints)
            bps.extend((self.P + p0[p0 > 0]).tolist())
        if traj.break_times:
            bt = np.asarray(traj.break_times)
            bt = bt[bt <= self.s]
            if len(bt):
                imgs = self.P - traj.Phi_at(bt)
                bps.extend(imgs.tolist())
        bps = np.unique(np.asarray(bps))
        self.breakpoints = bps[(bps >= 0) & (bps < 1)]

    def _boundary(self, x, side):
        y = self.P - x
        s = self.traj.inverse_Phi(y)
        s = self.traj.snap_to_breaks(np.minimum(s, self.s), y)
        return self.traj.boundary_density_from(s, side)

    def _evaluate(self, x, right: bool):
        xa = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty_like(xa)
        if right:
            from_b = xa < self.P
        else:
            from_b = xa <= self.P
        if from_b.any():
            out[from_b] = self._boundary(xa[from_b], "left" if right else "right")
        rest = ~from_b
        if rest.any():
            p0 = self.traj.profile0
            z = xa[rest] - self.P
            out[rest] = p0.right_limit(z) if right else p0.eval(z)
        return out if np.ndim(x) else float(out[0])

    def __call__(self, x):
        return self._evaluate(x, right=False)

    def eval(self, x):
        return self._evaluate(x, right=False)

    def right_limit(self, x):
        return self._evaluate(x, right=True)

    def mass_to(self, a):
        aa = np.clip(np.atleast_1d(np.asarray(a, dtype=float)), 0.0, 1.0)
        b = np.minimum(aa, self.P)
        s = self.traj.inverse_Phi(self.P - b)
        U = self.traj.cumulative_input
        out = U(self.s) - U(s)
        extra = aa > self.P
        if extra.any():
            out[extra] += self.traj.profile0.mass_to(aa[extra] - self.P)
        return out if np.ndim(a) else float(out[0])

    @property
    def total_mass(self) -> float:
        return self.W

    def scan_points(self, n: int = 1024) -> tuple[np.ndarray, np.ndarray]:
        x = np.unique(np.concatenate((np.linspace(0.0, 1.0, n), self.breakpoints)))
        vals = np.concatenate((self.eval(x), self.right_limit(self.breakpoints)))
        return np.concatenate((x, self.breakpoints)), vals

    def _scan(self):
        if self._bounds is None:
            _, vals = self.scan_points(1024)
            self._bounds = (float(vals.min()), float(vals.max()))
        return self._bounds

    @property
    def sup_bound(self) -> float:
        return self._scan()[1]

    @property
    def inf_bound(self) -> float:
        return self._scan()[0]


def picard_window(W_start: float, u: float, window: float, profile_at_start: ProfileLike,
                  speed: SpeedFunction, tol: float = 1e-12, max_iter: int = 200,
                  h: float = 1e-3, W_guess: np.ndarray | None = None):
    """Solve the window's fixed-point equation on a uniform grid of step <= h.

    Returns ``(tau, W, dPhi, iterations)`` with ``tau`` relative to the
    window start and ``dPhi`` the travelled distance since the start
    (end-corrected trapezoid rule on ``lambda(W)``).

    Raises
    ------
    PicardDivergence
        When the sup-norm residual is still above ``tol`` after
        ``max_iter`` sweeps, which signals a window longer than the
        contraction bound.
    """
    if not (u > 0 and window > 0 and tol > 0):
        raise ValueError("need u > 0, window > 0 and tol > 0")
    n = max(1, math.ceil(window / h - 1e-9))
    tau = np.linspace(0.0, window, n + 1)
    dt = np.diff(tau)
    W = np.full(n + 1, float(W_start)) if W_guess is None else np.array(W_guess, dtype=float)
    W[0] = W_start
    # roundoff floor for large W
    eff_tol = max(tol, 64 * np.finfo(float).eps * max(1.0, abs(W_start)))
    def travelled(W):
        v = speed.value(W)
        dPhi = np.concatenate(([0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) * dt)))
        if n >= 2:
            # Euler-Maclaurin end correction turns the cumulative trapezoid into O(h^4)
            dv = speed.derivative(W) * finite_difference_slopes(tau, W)
            dPhi -= dt[0] ** 2 / 12.0 * (dv - dv[0])
        return dPhi

    for it in range(1, max_iter + 1):
        dPhi = travelled(W)
        a = 1.0 - dPhi
        W_new = tau * u + profile_at_start.mass_to(np.maximum(a, 0.0))
        late = a < 0
        if late.any():
            # characteristics that entered inside this window have already left
            s_enter = np.interp(dPhi[late] - 1.0, dPhi, tau)
            W_new[late] = (tau[late] - s_enter) * u
        W_new[0] = W_start
        res = float(np.max(np.abs(W_new - W)))
        W = W_new
        if res <= eff_tol:
            return tau, W, travelled(W), it
    raise PicardDivergence(
        f"picard divergence: residual {res:.3e} > {tol:.1e} after {max_iter} iterations "
        f"(window {window:.4g})")


class WindowView:
    """Dense output over a freshly solved window, used by event monitors."""

    def __init__(self, t, W, Phi, speed, context: tuple[np.ndarray, np.ndarray] | None = None):
        self.t, self.W, self.Phi = t, W, Phi
        self.v = speed.value(W)
        if context is not None and len(context[0]):
            ct, cW = context
            allt = np.concatenate((ct, t[1:]))
            allW = np.concatenate((cW, W[1:]))
            self.dW = finite_difference_slopes(allt, allW)[len(ct) - 1:]
        else:
            self.dW = finite_difference_slopes(t, W)

    def _j(self, ta):
        return np.clip(np.searchsorted(self.t, ta, side="right") - 1, 0, len(self.t) - 2)

    def W_at(self, ta):
        j = self._j(ta)
        return _hermite(ta, self.t[j], self.t[j + 1], self.W[j], self.W[j + 1],
                        self.dW[j], self.dW[j + 1])

    def Phi_at(self, ta):
        j = self._j(ta)
        return _hermite(ta, self.t[j], self.t[j + 1], self.Phi[j], self.Phi[j + 1],
                        self.v[j], self.v[j + 1])


# monitor(view, t0, t1) -> first crossing time in (t0, t1] or None
Monitor = Callable[[WindowView, float, float], "float | None"]


class TransportSolver:
    """Chains contraction windows to build a :class:`Trajectory`.

    Parameters
    ----------
    profile0:
        Initial density (a :class:`DensityProfile` or a :class:`SliceProfile`).
    h:
        Grid step inside each window.
    picard_tol, max_iter:
        Fixed-point stopping rule per window.
    w_ceiling:
        ``W`` above this raises :class:`BlowUpDiagnostic`.
    rho_scan_n:
        Scan resolution used to measure ``rho_max`` at each window start.
    """

    def __init__(self, profile0: ProfileLike, speed: SpeedFunction, h: float = 1e-3,
                 picard_tol: float = 1e-12, max_iter: int = 200, w_ceiling: float = 1e6,
                 rho_scan_n: int = 1024):
        if not (h > 0 and picard_tol > 0):
            raise ValueError("h and picard_tol must be positive")
        self.profile0 = profile0
        self.speed = speed
        self.h = h
        self.picard_tol = picard_tol
        self.max_iter = max_iter
        self.w_ceiling = w_ceiling
        self.rho_scan_n = rho_scan_n
        W0 = float(profile0.mass_to(1.0))
        self.traj = Trajectory(profile0, speed, W0)
        self.picard_iterations: list[int] = []
        bp = np.asarray(profile0.breakpoints, dtype=float)
        self._levels = sorted((1.0 - bp).tolist())

    @property
    def t(self) -> float:
        return self.traj.t_now

    def start_segment(self, u: float) -> None:
        """Switch to a new constant input at the current time."""
        self.traj._add_segment(u)
        if self.traj.t_now > 0:
            lvl = self.traj.Phi_now + 1.0
            self._levels.append(lvl)
            self._levels.sort()

    def slice_now(self) -> SliceProfile:
        return SliceProfile(self.traj, self.traj.t_now)

    def _rho_max(self, profile: ProfileLike) -> float:
        if isinstance(profile, SliceProfile):
            _, vals = profile.scan_points(self.rho_scan_n)
            return float(vals.max())
        return float(profile.sup_bound)

    def _solve(self, s: float, length: float, u: float, start_profile: ProfileLike):
        tau, W, dPhi, it = picard_window(self.traj.W_now, u, length, start_profile, self.speed,
                                         self.picard_tol, self.max_iter, self.h)
        self.picard_iterations.append(it)
        if not np.all(np.isfinite(W)) or W.max() > self.w_ceiling:
            raise BlowUpDiagnostic(
                f"W exceeded ceiling {self.w_ceiling:g} near t={s + tau[-1]:.6g}")
        return s + tau, W, self.traj.Phi_now + dPhi

    def _context(self):
        tt, W = self.traj.times, self.traj.W
        start = max(self.traj._piece_start, len(tt) - 3)
        return tt[start:], W[start:]

    def advance(self, t_stop: float, monitor: Monitor | None = None) -> tuple[float, bool]:
        """Integrate with the current input up to ``t_stop``.

        Stops early at the first monitor crossing. Returns the time reached
        and whether the monitor fired.
        """
        if not self.traj.seg_t:
            raise RuntimeError("start_segment must be called before advance")
        u = self.traj.seg_u[-1]
        lam0 = self.speed.lambda0
        while self.t < t_stop - 1e-13:
            s = self.t
            Phi_s = self.traj.Phi_now
            while self._levels and self._levels[0] <= Phi_s + PHI_SNAP:
                lvl = self._levels.pop(0)
                if lvl > Phi_s - PHI_SNAP and s > 0:
                    self.traj._mark_break("kink")
            start_profile = self.profile0 if s == 0 else self.slice_now()
            rho_max = self._rho_max(start_profile)
            length = min(contraction_window(self.speed, rho_max), 1.0 / lam0, t_stop - s)
            t, W, Phi = self._solve(s, length, u, start_profile)
            ends_at_kink = False
            if self._levels and self._levels[0] < Phi[-1] - PHI_SNAP:
                lvl = self._levels[0]
                v = self.speed.value(W)
                j = int(np.clip(np.searchsorted(Phi, lvl) - 1, 0, len(t) - 2))
                tk = float(_hermite_inverse(lvl, t[j], t[j + 1], Phi[j], Phi[j + 1],
                                            v[j], v[j + 1]))
                for _ in range(6):
                    t, W, Phi = self._solve(s, tk - s, u, start_profile)
                    err = lvl - Phi[-1]
                    if abs(err) < 1e-13:
                        break
                    tk += err / float(self.speed.value(W[-1]))
                ends_at_kink = True
            fired = False
            if monitor is not None:
                view = WindowView(t, W, Phi, self.speed, self._context())
                hit = monitor(view, s, float(t[-1]))
                if hit is not None:
                    t, W, Phi = self._solve(s, hit - s, u, start_profile)
                    fired, ends_at_kink = True, False
            self.traj._append(t[1:], W[1:], Phi[1:])
            if ends_at_kink:
                self._levels.pop(0)
                self.traj._mark_break("kink")
            if fired:
                return self.t, True
        return self.t, False


def solve_open_loop(profile0: ProfileLike, speed: SpeedFunction, segments, t_end: float,
                    **solver_opts) -> Trajectory:
    """Solve with a prescribed piecewise-constant input ``[(t_i, u_i), ...]``."""
    solver = TransportSolver(profile0, speed, **solver_opts)
    segs = sorted(segments)
    if not segs or segs[0][0] != 0:
        raise ValueError("first segment must start at t=0")
    for k, (ti, ui) in enumerate(segs):
        if ti >= t_end:
            break
        solver.start_segment(ui)
        stop = segs[k + 1][0] if k + 1 < len(segs) else t_end
        solver.advance(min(stop, t_end))
    return solver.traj


def backtrack(traj: Trajectory, t: float, x: float) -> BacktrackResult:
    if not 0 <= x <= 1:
        raise ValueError("x must lie in [0, 1]")
    phi_t = traj.Phi_at(traj._check(t))
    if x <= phi_t:
        y = np.array([phi_t - x])
        s = traj.snap_to_breaks(traj.inverse_Phi(y), y)
        return BacktrackResult(float(min(s[0], t)), True)
    return BacktrackResult(0.0, False)


def density_at(traj: Trajectory, t, x):
    """``rho(t, x)`` by following the characteristic through ``(t, x)``."""
    ta, xa = np.broadcast_arrays(np.asarray(traj._check(t), dtype=float),
                                 np.asarray(x, dtype=float))
    if np.any(xa < 0) or np.any(xa > 1):
        raise ValueError("x must lie in [0, 1]")
    ta, xa = ta.ravel(), xa.ravel()
    phi = traj.Phi_at(ta)
    out = np.empty_like(ta)
    b = xa <= phi
    if b.any():
        y = phi[b] - xa[b]
        s = traj.snap_to_breaks(np.minimum(traj.inverse_Phi(y), ta[b]), y)
        out[b] = traj.boundary_density_from(s)
    if (~b).any():
        out[~b] = traj.profile0.eval(xa[~b] - phi[~b])
    shape = np.broadcast(np.asarray(t), np.asarray(x)).shape
    return out.reshape(shape) if shape else float(out[0])


def outflux(traj: Trajectory, t):
    return traj.speed.value(traj.W_at(t)) * density_at(traj, t, 1.0)


def l2_deviation(traj: Trajectory, t: float, rho_s: float, n: int = 2001) -> float:
    """``(int_0^1 (rho(t,x) - rho_s)^2 dx)^(1/2)`` by breakpoint-split Simpson."""
    sl = SliceProfile(traj, t)
    edges = np.unique(np.concatenate(([0.0], sl.breakpoints, [1.0])))
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        m = max(2, int(np.ceil((b - a) * n / 2)) * 2)
        x = np.linspace(a, b, m + 1)
        f = (sl.eval(x) - rho_s) ** 2
        f[0] = (sl.right_limit(a) - rho_s) ** 2
        w = np.ones(m + 1)
        w[1:-1:2], w[2:-1:2] = 4, 2
        total += (b - a) / (3 * m) * float(w @ f)
    return math.sqrt(total)
