"""JSON scenario files.

Keys are flat and every one is optional; an empty object ``{}`` is the
reference scenario ``rho0 = 6 + sin(pi x)``, ``lambda(W) = 1/(1+W)``,
``rho_s = 1``, ``sigma = 0.02`` under the event trigger.

=================  ==========================================================
key                meaning (default)
=================  ==========================================================
speed              ``"hyperbolic"`` for 1/(1+W), or ``"constant"`` ("hyperbolic")
speed_c            value of the constant speed (1.0)
profile            ``"reference"``, ``"constant"``, ``"step"`` or ``"tabulated"`` ("reference")
profile_l          ``l`` in ``6 + sin(pi x) + l x^4`` (0.0)
profile_c          level of the constant profile (1.0)
profile_levels     step levels, one more than ``profile_jumps`` ([])
profile_jumps      interior jump positions of the step profile ([])
profile_knots      knots of the piecewise-linear profile, 0 to 1 ([])
profile_values     profile values at the knots ([])
family_l_min       smallest ``l`` of the stats family (1.0)
family_l_max       largest ``l`` of the stats family (100.0)
family_count       number of family members, evenly spaced in ``l`` (100)
rho_s              equilibrium density (1.0)
sigma              trigger decay parameter (0.02)
mode               ``"event"``, ``"sampled"``, ``"custom"`` or ``"robust"`` ("event")
period             sampling period for ``"sampled"`` (1.0)
custom_times       update times for ``"custom"``, starting at 0 ([0.0])
robust_fraction    gap as a fraction of G for ``"robust"`` (0.9)
t_end              horizon (40.0)
h                  solver grid step (1e-3)
picard_tol         fixed-point tolerance (1e-12)
max_iter           fixed-point iteration limit (200)
scan_dt            trigger scan step (1e-3)
bisect_tol         trigger bisection tolerance (1e-8)
scan_n             points of the sup scan for V (2001)
trigger_atol       absolute floor added to the trigger threshold (1e-12)
w_ceiling          W above this aborts the run (1e6)
output_dt          row spacing of trajectory.csv (0.05)
snapshot_times     times of profile snapshots (8 evenly spaced in [0, t_end])
snapshot_n         grid points per snapshot (201)
bin_width          histogram bin width (0.1)
out_dir            output directory ("out")
eq8b_cap           cap event gaps at 1/lambda(0) (true)
verify_eq16        check custom gaps against the robustness window (false)
=================  ==========================================================
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields

import numpy as np

from .plant import (DensityProfile, SpeedFunction, builtin_profile_paper,
                    builtin_speed_hyperbolic, constant_profile, constant_speed, step_profile,
                    tabulated_profile)
from .scheduler import ScheduleMode, Tolerances


class ConfigError(ValueError):
    pass


@dataclass
class ScenarioConfig:
    speed: str = "hyperbolic"
    speed_c: float = 1.0
    profile: str = "reference"
    profile_l: float = 0.0
    profile_c: float = 1.0
    profile_levels: list = field(default_factory=list)
    profile_jumps: list = field(default_factory=list)
    profile_knots: list = field(default_factory=list)
    profile_values: list = field(default_factory=list)
    family_l_min: float = 1.0
    family_l_max: float = 100.0
    family_count: int = 100
    rho_s: float = 1.0
    sigma: float = 0.02
    mode: str = "event"
    period: float = 1.0
    custom_times: list = field(default_factory=lambda: [0.0])
    robust_fraction: float = 0.9
    t_end: float = 40.0
    h: float = 1e-3
    picard_tol: float = 1e-12
    max_iter: int = 200
    scan_dt: float = 1e-3
    bisect_tol: float = 1e-8
    scan_n: int = 2001
    trigger_atol: float = 1e-12
    w_ceiling: float = 1e6
    output_dt: float = 0.05
    snapshot_times: list | None = None
    snapshot_n: int = 201
    bin_width: float = 0.1
    out_dir: str = "out"
    eq8b_cap: bool = True
    verify_eq16: bool = False

    def __post_init__(self):
        for name in ("rho_s", "sigma", "t_end", "output_dt", "bin_width"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.family_count < 1:
            raise ConfigError("family_count must be at least 1")
        try:
            self.tolerances()
            self.schedule()
        except ValueError as e:
            raise ConfigError(str(e)) from e
        if self.speed not in ("hyperbolic", "constant"):
            raise ConfigError(f"unknown speed {self.speed!r}")
        if self.profile not in ("reference", "constant", "step", "tabulated"):
            raise ConfigError(f"unknown profile {self.profile!r}")

    # -- builders -------------------------------------------------------------
    def tolerances(self) -> Tolerances:
        return Tolerances(h=self.h, picard_tol=self.picard_tol, max_iter=self.max_iter,
                          scan_dt=self.scan_dt, bisect_tol=self.bisect_tol, scan_n=self.scan_n,
                          trigger_atol=self.trigger_atol, w_ceiling=self.w_ceiling)

    def schedule(self) -> ScheduleMode:
        if self.mode == "event":
            return ScheduleMode.event()
        if self.mode == "sampled":
            return ScheduleMode.sampled(self.period)
        if self.mode == "custom":
            return ScheduleMode.custom(self.custom_times)
        if self.mode == "robust":
            return ScheduleMode.robust(self.robust_fraction)
        raise ValueError(f"unknown mode {self.mode!r}")

    def speed_function(self) -> SpeedFunction:
        if self.speed == "constant":
            return constant_speed(self.speed_c)
        return builtin_speed_hyperbolic()

    def initial_profile(self) -> DensityProfile:
        try:
            if self.profile == "constant":
                return constant_profile(self.profile_c)
            if self.profile == "step":
                return step_profile(self.profile_levels, self.profile_jumps)
            if self.profile == "tabulated":
                return tabulated_profile(self.profile_knots, self.profile_values)
            return builtin_profile_paper(self.profile_l)
        except ValueError as e:
            raise ConfigError(f"bad profile: {e}") from e

    def family(self) -> list[float]:
        return np.linspace(self.family_l_min, self.family_l_max, self.family_count).tolist()

    def snapshots(self) -> list[float]:
        if self.snapshot_times is None:
            return np.linspace(0.0, self.t_end, 8).tolist()
        return [float(t) for t in self.snapshot_times]


def load_config(path) -> ScenarioConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    known = {f.name for f in fields(ScenarioConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    try:
        return ScenarioConfig(**raw)
    except TypeError as e:
        raise ConfigError(str(e)) from e
