"""Command-line front end: ``run``, ``stats`` and ``verify``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .acceptance import run_acceptance
from .config import ConfigError, ScenarioConfig, load_config
from .controller import decay_constant, dwell_bound, lyapunov_V
from .plant import builtin_profile_paper, builtin_speed_hyperbolic
from .scheduler import interexecution_stats, run_closed_loop
from .transport import SliceProfile, SolverError, density_at, l2_deviation, outflux

log = logging.getLogger("reentrant_flow")

EXIT_CONFIG = 2
EXIT_SOLVER = 3


def fmt(x) -> str:
    return format(float(x), ".17g")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([r if isinstance(r, (str, int)) else fmt(r) for r in row])


def _apply_flags(cfg: ScenarioConfig, args) -> ScenarioConfig:
    changes = {}
    if getattr(args, "out", None):
        changes["out_dir"] = args.out
    if getattr(args, "no_eq8b_cap", False):
        changes["eq8b_cap"] = False
    if getattr(args, "verify_eq16", False):
        changes["verify_eq16"] = True
    return replace(cfg, **changes) if changes else cfg


def cmd_run(cfg: ScenarioConfig) -> int:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    speed = cfg.speed_function()
    profile0 = cfg.initial_profile()
    traj, events = run_closed_loop(profile0, speed, cfg.rho_s, cfg.sigma, cfg.schedule(),
                                   cfg.t_end, cfg.tolerances(), eq8b_cap=cfg.eq8b_cap,
                                   verify_eq16=cfg.verify_eq16)
    for msg in events.warnings:
        log.warning(msg)
    n = int(round(cfg.t_end / cfg.output_dt))
    ts = np.linspace(0.0, cfg.t_end, n + 1)
    rows = []
    for t in ts:
        sl = profile0 if t == 0 else SliceProfile(traj, t)
        V = lyapunov_V(sl, cfg.rho_s, cfg.sigma, cfg.scan_n,
                       boundary_value=cfg.rho_s if t == 0 else None)
        rows.append((t, traj.W_at(t), traj.Phi_at(t), traj.u_at(t), density_at(traj, t, 0.0),
                     density_at(traj, t, 1.0), outflux(traj, t), V,
                     l2_deviation(traj, t, cfg.rho_s)))
    _write_csv(out / "trajectory.csv",
               ["t", "W", "Phi", "u", "rho_at_0", "rho_at_1", "outflux", "V", "L2_deviation"],
               rows)
    _write_csv(out / "events.csv", ["i", "t_i", "u_i", "V_i", "gap", "reason"],
               [(i, e.t, e.u, e.V, e.gap, e.reason) for i, e in enumerate(events.entries)])
    x = np.linspace(0.0, 1.0, cfg.snapshot_n)
    for t in cfg.snapshots():
        t = min(max(t, 0.0), cfg.t_end)
        rho = density_at(traj, np.full_like(x, t), x)
        _write_csv(out / f"profile_t{t:.6g}.csv", ["x", "rho"], zip(x, rho))
    log.info("run: %d events, output in %s", len(events.entries), out)
    return 0


def cmd_stats(cfg: ScenarioConfig) -> int:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    speed = cfg.speed_function()
    fam = [builtin_profile_paper(l) for l in cfg.family()]
    H = interexecution_stats(fam, speed, cfg.rho_s, cfg.sigma, cfg.t_end, cfg.tolerances(),
                             bin_width=cfg.bin_width, eq8b_cap=cfg.eq8b_cap)
    rows = [(lo, hi, int(c)) for lo, hi, c in zip(H.edges[:-1], H.edges[1:], H.counts)]
    g = H.gaps
    summary = ("summary", "min", fmt(g.min()) if len(g) else "nan",
               "max", fmt(g.max()) if len(g) else "nan",
               "mean", fmt(g.mean()) if len(g) else "nan")
    with open(out / "gaps_histogram.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_lo", "bin_hi", "count"])
        for lo, hi, c in rows:
            w.writerow([fmt(lo), fmt(hi), c])
        w.writerow(summary)
    V0 = max(lyapunov_V(p, cfg.rho_s, cfg.sigma, cfg.scan_n, boundary_value=cfg.rho_s)
             for p in fam)
    floor = min(1.0 / speed.lambda0, dwell_bound(V0, cfg.sigma, speed.lipschitz_K, cfg.rho_s))
    log.info("stats: %d gaps, dwell floor %.6g", len(g), floor)
    return 0


def cmd_verify(filters) -> int:
    results = run_acceptance(filters)
    for r in results:
        print(r.line(), flush=True)
    p0 = builtin_profile_paper(0.0)
    sp = builtin_speed_hyperbolic()
    print(f"INFO c(rho0)={decay_constant(p0, 1.0, 0.02, sp):.9f} "
          f"T~(0)={dwell_bound(0.0, 0.02, sp.lipschitz_K, 1.0):.9f}")
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="reentrant-flow",
                                 description="Event-triggered and sampled-data boundary "
                                             "control of a re-entrant flow line.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("run", "stats"):
        p = sub.add_parser(name)
        p.add_argument("config")
        p.add_argument("--out")
        p.add_argument("--no-eq8b-cap", action="store_true",
                       help="do not cap event gaps at 1/lambda(0)")
        p.add_argument("--verify-eq16", action="store_true",
                       help="check custom gaps against the robustness window")
    p = sub.add_parser("verify")
    p.add_argument("--filter", action="append", default=None,
                   help="criterion id prefix, e.g. AC02 (repeatable)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "verify":
        return cmd_verify(args.filter)
    try:
        cfg = _apply_flags(load_config(args.config), args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return cmd_run(cfg) if args.command == "run" else cmd_stats(cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as e:
        print(f"solver error: {e}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
