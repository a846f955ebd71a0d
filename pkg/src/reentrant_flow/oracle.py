"""Independent RK4 cross-check for the work-in-progress trajectory.

Integrates the mass balance

    dW/dt = u(t) - lambda(W) rho(t, 1),     dPhi/dt = lambda(W),

where the outflow density is recovered through the characteristic delay
from the oracle's *own* history of ``(W, Phi)``. Nothing is shared with the
Picard construction beyond the plant objects.

Steps end exactly on input switches and on the times where a profile
discontinuity reaches ``x = 1``; within a step the outflow branch (which
initial-profile piece, or which input segment) is frozen, so the stages
see a smooth right-hand side.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass

import numpy as np

from .plant import DensityProfile, SpeedFunction


@dataclass
class OracleResult:
    t: np.ndarray  # uniform output grid
    W: np.ndarray
    Phi: np.ndarray
    node_t: np.ndarray  # actual step ends
    node_W: np.ndarray
    node_Phi: np.ndarray


class _History:
    """Per-step cubic Hermite dense output of (W, Phi)."""

    def __init__(self, W0: float):
        self.t0: list[float] = []
        self.rec: list[tuple] = []
        self.phi0: list[float] = []
        self.W_init = W0

    def add(self, t0, t1, y0, y1, f0, f1):
        self.t0.append(t0)
        self.phi0.append(y0[1])
        self.rec.append((t0, t1, y0, y1, f0, f1))

    @staticmethod
    def _herm(s, dt, a, b, da, db):
        s2 = s * s
        s3 = s2 * s
        return ((2 * s3 - 3 * s2 + 1) * a + (s3 - 2 * s2 + s) * dt * da
                + (-2 * s3 + 3 * s2) * b + (s3 - s2) * dt * db)

    def _step_for_phi(self, phi):
        k = bisect.bisect_right(self.phi0, phi) - 1
        return max(k, 0)

    def W_at(self, t):
        if not self.rec:
            return self.W_init
        k = max(bisect.bisect_right(self.t0, t) - 1, 0)
        t0, t1, y0, y1, f0, f1 = self.rec[k]
        dt = t1 - t0
        return self._herm((t - t0) / dt, dt, y0[0], y1[0], f0[0], f1[0])

    def time_of_phi(self, phi):
        """Invert the dense Phi by bisection plus Newton on one step."""
        if not self.rec or phi <= 0.0:
            return 0.0
        k = self._step_for_phi(phi)
        t0, t1, y0, y1, f0, f1 = self.rec[k]
        dt = t1 - t0
        lo, hi = 0.0, 1.0
        s = min(max((phi - y0[1]) / (y1[1] - y0[1]), 0.0), 1.0)
        for _ in range(60):
            val = self._herm(s, dt, y0[1], y1[1], f0[1], f1[1]) - phi
            if val > 0:
                hi = s
            else:
                lo = s
            s2 = s * s
            der = ((6 * s2 - 6 * s) * y0[1] + (3 * s2 - 4 * s + 1) * dt * f0[1]
                   + (-6 * s2 + 6 * s) * y1[1] + (3 * s2 - 2 * s) * dt * f1[1])
            nxt = s - val / der if der > 0 else 0.5 * (lo + hi)
            if not lo <= nxt <= hi:
                nxt = 0.5 * (lo + hi)
            if abs(nxt - s) < 1e-15:
                s = nxt
                break
            s = nxt
        return t0 + s * dt


def rk_oracle(profile0: DensityProfile, speed: SpeedFunction, segments, t_end: float,
              h: float = 1e-3, out_step: float | None = None) -> OracleResult:
    """Classical RK4 solution of the mass balance for a given input schedule.

    ``segments`` is ``[(t_0=0, u_0), (t_1, u_1), ...]``. The returned ``W``
    is sampled on a uniform grid of step ``out_step`` (default ``h``).
    """
    if not h > 0:
        raise ValueError("h must be positive")
    seg_t = [float(a) for a, _ in segments]
    seg_u = [float(b) for _, b in segments]
    if seg_t[0] != 0.0:
        raise ValueError("first segment must start at 0")
    lam = speed.value
    pieces = profile0.pieces
    bps = [float(b) for b in profile0.breakpoints]
    hist = _History(float(profile0.mass_to(1.0)))
    # (Phi level, generation): value jumps in rho(t,1) are generation 1; one
    # transit later they reappear as jumps in the second derivative of W.
    levels = sorted((1.0 - b, 1) for b in bps)

    def branch_at(phi_mid):
        y = 1.0 - phi_mid
        if y > 0:
            k = max(bisect.bisect_left(bps, y) - 1, 0)
            return ("profile", k)
        s = hist.time_of_phi(phi_mid - 1.0)
        return ("boundary", max(bisect.bisect_right(seg_t, s) - 1, 0))

    def rhs(W, phi, u, br):
        v = float(lam(W))
        if br[0] == "profile":
            rho1 = float(pieces[br[1]](np.float64(1.0 - phi)))
        else:
            s = hist.time_of_phi(phi - 1.0)
            rho1 = seg_u[br[1]] / float(lam(hist.W_at(s)))
        return (u - v * rho1, v)

    def rk_step(t, y, dt, u):
        br = branch_at(y[1] + 0.5 * dt * float(lam(y[0])))
        k1 = rhs(y[0], y[1], u, br)
        k2 = rhs(y[0] + 0.5 * dt * k1[0], y[1] + 0.5 * dt * k1[1], u, br)
        k3 = rhs(y[0] + 0.5 * dt * k2[0], y[1] + 0.5 * dt * k2[1], u, br)
        k4 = rhs(y[0] + dt * k3[0], y[1] + dt * k3[1], u, br)
        y1 = (y[0] + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]),
              y[1] + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]))
        f1 = rhs(y1[0], y1[1], u, br)
        return y1, k1, f1

    t = 0.0
    y = (hist.W_init, 0.0)
    nodes = [(0.0, y[0], y[1])]
    for j, tj in enumerate(seg_t):
        if tj >= t_end:
            break
        u = seg_u[j]
        stop = min(seg_t[j + 1] if j + 1 < len(seg_t) else t_end, t_end)
        if j > 0:
            bisect.insort(levels, (y[1] + 1.0, 1))
        while t < stop - 1e-13:
            while levels and levels[0][0] <= y[1] + 1e-12:
                levels.pop(0)
            n = max(1, math.ceil((stop - t) / h - 1e-9))
            dt = (stop - t) / n
            y1, f0, f1 = rk_step(t, y, dt, u)
            if levels and levels[0][0] < y1[1] - 1e-12:
                lvl, gen = levels[0]
                # land the step end on the level with secant/Newton refinement
                dt *= (lvl - y[1]) / (y1[1] - y[1])
                for _ in range(8):
                    y1, f0, f1 = rk_step(t, y, dt, u)
                    if abs(y1[1] - lvl) < 1e-14:
                        break
                    dt += (lvl - y1[1]) / f1[1]
                levels.pop(0)
                if gen == 1:
                    bisect.insort(levels, (lvl + 1.0, 2))
            hist.add(t, t + dt, y, y1, f0, f1)
            t += dt
            y = y1
            if not (math.isfinite(y[0]) and math.isfinite(y[1])):
                raise FloatingPointError("non-finite state in RK oracle")
            nodes.append((t, y[0], y[1]))
    node_t, node_W, node_Phi = (np.array(c) for c in zip(*nodes))
    step = h if out_step is None else out_step
    grid = np.linspace(0.0, t_end, int(round(t_end / step)) + 1)
    W = np.array([hist.W_at(s) for s in grid])
    Phi = np.array([_phi_at(hist, s) for s in grid])
    return OracleResult(grid, W, Phi, node_t, node_W, node_Phi)


def _phi_at(hist: _History, t: float) -> float:
    if not hist.rec:
        return 0.0
    k = max(bisect.bisect_right(hist.t0, t) - 1, 0)
    t0, t1, y0, y1, f0, f1 = hist.rec[k]
    dt = t1 - t0
    return hist._herm((t - t0) / dt, dt, y0[1], y1[1], f0[1], f1[1])
