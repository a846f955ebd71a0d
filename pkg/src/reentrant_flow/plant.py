"""Plant objects: production-speed laws, density profiles and the equilibrium.

A density profile is stored as closed-form pieces between ordered
breakpoints rather than as a grid, so the characteristic solution can
evaluate it at arbitrary shifted positions without interpolation error.
Profiles follow the left-continuous convention: on ``(xi_k, xi_{k+1}]``
the value comes from piece ``k``; :meth:`DensityProfile.right_limit`
gives the value from the piece on the right of a breakpoint.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

ArrayFn = Callable[[np.ndarray], np.ndarray]

# Gauss-Legendre defaults for profile mass integrals.
GL_ORDER = 16
GL_PANELS = 64


@dataclass(frozen=True)
class SpeedFunction:
    """Production speed ``lambda(W)`` as a function of work in progress.

    ``lipschitz_K`` is declared, not derived: the guarantee constants
    consume it directly. :func:`validate_plant` cross-checks it on a grid.
    """

    value: ArrayFn
    derivative: ArrayFn
    lipschitz_K: float
    name: str = "custom"

    def __call__(self, W):
        return self.value(W)

    @property
    def lambda0(self) -> float:
        return float(self.value(np.float64(0.0)))


@dataclass(frozen=True)
class EquilibriumSpec:
    rho_s: float

    def __post_init__(self):
        if not self.rho_s > 0:
            raise ValueError(f"rho_s must be positive, got {self.rho_s}")


@dataclass
class ValidationReport:
    checks: dict[str, bool] = field(default_factory=dict)
    violations: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def add(self, name: str, ok: bool, where: float | None = None) -> None:
        self.checks[name] = bool(ok)
        if not ok and where is not None:
            self.violations[name] = float(where)


def validate_plant(speed: SpeedFunction, grid_n: int = 2001,
                   W_hi: float = 100.0) -> ValidationReport:
    """Grid-check the standing hypotheses on ``lambda`` over ``[0, W_hi]``.

    Returns a report with one entry per invariant; failed entries carry the
    first violating ``W``.
    """
    if grid_n < 2:
        raise ValueError("grid_n must be at least 2")
    report = ValidationReport()
    W = np.linspace(0.0, W_hi, grid_n)
    with np.errstate(all="ignore"):
        lam = np.asarray(speed.value(W), dtype=float)
        dlam = np.asarray(speed.derivative(W), dtype=float)

    finite = np.isfinite(lam) & np.isfinite(dlam)
    report.add("invalid speed function", finite.all(),
               W[~finite][0] if not finite.all() else None)
    if not finite.all():
        return report

    pos = lam > 0
    report.add("positive", pos.all(), W[~pos][0] if not pos.all() else None)
    # a relative slack absorbs roundoff on flat laws
    rises = np.diff(lam) > 1e-14 * np.maximum(1.0, np.abs(lam[:-1]))
    report.add("non-increasing", not rises.any(),
               W[1:][rises][0] if rises.any() else None)
    too_steep = np.abs(dlam) > speed.lipschitz_K * (1 + 1e-12)
    report.add("derivative bound", not too_steep.any(),
               W[too_steep][0] if too_steep.any() else None)
    report.add("lambda0", np.isclose(speed.lambda0, lam[0], rtol=0, atol=0))
    return report


def builtin_speed_hyperbolic() -> SpeedFunction:
    """``lambda(W) = 1/(1+W)``, with ``K = 1`` and ``lambda(0) = 1``."""
    return SpeedFunction(
        value=lambda W: 1.0 / (1.0 + W),
        derivative=lambda W: -1.0 / (1.0 + W) ** 2,
        lipschitz_K=1.0,
        name="hyperbolic",
    )


def constant_speed(c: float, K: float = 1.0) -> SpeedFunction:
    if not c > 0:
        raise ValueError("speed must be positive")
    return SpeedFunction(
        value=lambda W: np.full_like(np.asarray(W, dtype=float), c),
        derivative=lambda W: np.zeros_like(np.asarray(W, dtype=float)),
        lipschitz_K=K,
        name="constant",
    )


def _gauss_legendre(order: int):
    nodes, weights = np.polynomial.legendre.leggauss(order)
    return 0.5 * (nodes + 1.0), 0.5 * weights


class DensityProfile:
    """Piecewise-C1 positive density on ``[0, 1]``.

    Parameters
    ----------
    pieces:
        One vectorised callable per subinterval ``(xi_k, xi_{k+1}]``.
    breakpoints:
        ``xi_0 = 0 < xi_1 < ... < xi_N < 1``.
    inf_bound, sup_bound:
        Declared bounds on the profile. When omitted they are measured by a
        dense scan.
    """

    def __init__(self, pieces: Sequence[ArrayFn], breakpoints: Sequence[float] = (0.0,),
                 inf_bound: float | None = None, sup_bound: float | None = None,
                 name: str = "custom", gl_order: int = GL_ORDER, gl_panels: int = GL_PANELS,
                 antiderivative: ArrayFn | None = None):
        bp = np.asarray(breakpoints, dtype=float)
        if bp.ndim != 1 or len(bp) == 0 or bp[0] != 0.0:
            raise ValueError("breakpoints must start at 0")
        if np.any(np.diff(bp) <= 0) or bp[-1] >= 1.0:
            raise ValueError("breakpoints must be strictly increasing and lie in [0, 1)")
        if len(pieces) != len(bp):
            raise ValueError("need exactly one piece per breakpoint subinterval")
        self.pieces = tuple(pieces)
        self.breakpoints = bp
        self.name = name
        self.antiderivative = antiderivative
        self._edges = np.append(bp, 1.0)
        self._build_mass_table(gl_order, gl_panels)
        if inf_bound is None or sup_bound is None:
            lo, hi = self.scan_bounds()
            inf_bound = lo if inf_bound is None else inf_bound
            sup_bound = hi if sup_bound is None else sup_bound
        self.inf_bound = float(inf_bound)
        self.sup_bound = float(sup_bound)
        if not self.inf_bound > 0:
            raise ValueError("density profiles must be bounded away from zero")

    # -- evaluation -----------------------------------------------------
    def _apply(self, x: np.ndarray, idx: np.ndarray) -> np.ndarray:
        out = np.empty_like(x)
        for k, fn in enumerate(self.pieces):
            mask = idx == k
            if mask.any():
                out[mask] = fn(x[mask])
        return out

    def __call__(self, x):
        return self.eval(x)

    def eval(self, x):
        """Left-continuous evaluation (the value at ``0`` is the limit ``0+``)."""
        xa = np.atleast_1d(np.asarray(x, dtype=float))
        idx = np.searchsorted(self.breakpoints, xa, side="left") - 1
        idx = np.clip(idx, 0, len(self.pieces) - 1)
        out = self._apply(xa, idx)
        return out if np.ndim(x) else out[0]

    def right_limit(self, x):
        xa = np.atleast_1d(np.asarray(x, dtype=float))
        idx = np.searchsorted(self.breakpoints, xa, side="right") - 1
        idx = np.clip(idx, 0, len(self.pieces) - 1)
        out = self._apply(xa, idx)
        return out if np.ndim(x) else out[0]

    def piece_index(self, x):
        """Index of the piece that owns ``x`` under the left-continuous rule."""
        return np.clip(np.searchsorted(self.breakpoints, x, side="left") - 1,
                       0, len(self.pieces) - 1)

    # -- mass -------------------------------------------------------------
    def _build_mass_table(self, order: int, panels: int) -> None:
        gx, gw = _gauss_legendre(order)
        self._gx, self._gw = gx, gw
        edges, piece_of = [], []
        for k in range(len(self.pieces)):
            e = np.linspace(self._edges[k], self._edges[k + 1], panels + 1)
            edges.append(e[:-1])
            piece_of.append(np.full(panels, k))
        lo = np.concatenate(edges)
        hi = np.append(lo[1:], 1.0)
        piece_of = np.concatenate(piece_of)
        width = hi - lo
        pts = lo[:, None] + width[:, None] * gx[None, :]
        vals = np.empty_like(pts)
        for k, fn in enumerate(self.pieces):
            m = piece_of == k
            vals[m] = fn(pts[m].ravel()).reshape(-1, order)
        panel_mass = (vals * gw[None, :]).sum(axis=1) * width
        self._panel_lo = lo
        self._panel_piece = piece_of
        self._cum = np.concatenate(([0.0], np.cumsum(panel_mass)))

    @property
    def total_mass(self) -> float:
        return float(self._cum[-1])

    def mass_to(self, a):
        """``int_0^a rho(x) dx`` for ``a`` in ``[0, 1]`` (clipped)."""
        aa = np.clip(np.atleast_1d(np.asarray(a, dtype=float)), 0.0, 1.0)
        j = np.clip(np.searchsorted(self._panel_lo, aa, side="right") - 1, 0,
                    len(self._panel_lo) - 1)
        lo = self._panel_lo[j]
        width = aa - lo
        pts = lo[:, None] + width[:, None] * self._gx[None, :]
        vals = np.empty_like(pts)
        pieces = self._panel_piece[j]
        for k, fn in enumerate(self.pieces):
            m = pieces == k
            if m.any():
                vals[m] = fn(pts[m].ravel()).reshape(-1, len(self._gx))
        out = self._cum[j] + (vals * self._gw[None, :]).sum(axis=1) * width
        return out if np.ndim(a) else out[0]

    # -- scans -------------------------------------------------------------
    def scan_points(self, n: int = 1024) -> tuple[np.ndarray, np.ndarray]:
        """Uniform grid plus breakpoints, with left and right limits at each."""
        x = np.unique(np.concatenate((np.linspace(0.0, 1.0, n), self.breakpoints)))
        vals = np.concatenate((self.eval(x), self.right_limit(self.breakpoints)))
        return np.concatenate((x, self.breakpoints)), vals

    def scan_bounds(self, n: int = 4097) -> tuple[float, float]:
        _, vals = self.scan_points(n)
        return float(vals.min()), float(vals.max())


def smooth_profile(fn: ArrayFn, name: str = "custom", **kw) -> DensityProfile:
    return DensityProfile([fn], (0.0,), name=name, **kw)


def constant_profile(c: float) -> DensityProfile:
    return DensityProfile([lambda x: np.full_like(x, c)], (0.0,), inf_bound=c, sup_bound=c,
                          name="constant", antiderivative=lambda x: c * np.asarray(x))


def step_profile(levels: Sequence[float], jumps: Sequence[float]) -> DensityProfile:
    """Piecewise-constant profile; ``jumps`` are the interior breakpoints."""
    levels = [float(c) for c in levels]
    if len(levels) != len(jumps) + 1:
        raise ValueError("need one more level than jump")
    pieces = [lambda x, c=c: np.full_like(x, c) for c in levels]
    return DensityProfile(pieces, (0.0, *jumps), inf_bound=min(levels),
                          sup_bound=max(levels), name="step")


def tabulated_profile(knots: Sequence[float], values: Sequence[float]) -> DensityProfile:
    """Piecewise-linear profile; interior knots become breakpoints."""
    xk = np.asarray(knots, dtype=float)
    yk = np.asarray(values, dtype=float)
    if xk[0] != 0.0 or xk[-1] != 1.0 or np.any(np.diff(xk) <= 0):
        raise ValueError("knots must increase from 0 to 1")
    if np.any(yk <= 0):
        raise ValueError("tabulated densities must be positive")
    pieces = []
    for k in range(len(xk) - 1):
        x0, x1, y0, y1 = xk[k], xk[k + 1], yk[k], yk[k + 1]
        slope = (y1 - y0) / (x1 - x0)
        pieces.append(lambda x, x0=x0, y0=y0, s=slope: y0 + s * (x - x0))
    return DensityProfile(pieces, xk[:-1], inf_bound=yk.min(), sup_bound=yk.max(),
                          name="tabulated")


def builtin_profile_paper(l: float = 0.0) -> DensityProfile:
    """``rho0(x) = 6 + sin(pi x) + l x^4`` on a single smooth piece."""
    if l < 0:
        raise ValueError("l must be non-negative")
    l = float(l)
    return DensityProfile(
        [lambda x: 6.0 + np.sin(np.pi * x) + l * x**4],
        (0.0,),
        inf_bound=6.0,
        sup_bound=7.0 + l,
        name=f"reference(l={l:g})",
        antiderivative=lambda x: 6.0 * x + (1.0 - np.cos(np.pi * x)) / np.pi + l * x**5 / 5.0,
    )
