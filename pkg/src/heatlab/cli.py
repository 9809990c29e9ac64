"""``heatlab <subcommand> --config path [--seed N] [--out path] [--override key=value]``.

Every command writes one CSV: a comment line with the version and the
resolved configuration, one header row, then data rows.  Floats use the
shortest round-trip representation.  A failure still writes a row whose
``status`` column says what went wrong, and the exit status is nonzero.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
import time

import numpy as np

from . import __version__
from .bounds import assemble_observability_constant
from .config import SUBCOMMANDS, ConfigError, RunConfig, parse_config
from .exhaustion import cost_sweep, limit_control_check, wellposedness_sweep
from .heat import PotentialField, SolverError, assemble_laplacian
from .hum import (
    ControlSystem,
    ConvergenceError,
    UnobservableError,
    estimate_observability_constant,
    solve_penalized_hum,
)
from .lattice import NodeMask, SpatialGrid, control_mask
from .semilinear import fixed_point_solve
from .timeset import build_telescope, choose_density_anchor
from .uc import FrequencyParams, frequency_monotonicity_check

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


class CsvTable:
    def __init__(self, columns):
        self.columns = list(columns)
        self.rows: list[list] = []

    def add(self, **values):
        unknown = set(values) - set(self.columns)
        if unknown:
            raise KeyError(f"unknown CSV columns {sorted(unknown)}")
        self.rows.append([values.get(c) for c in self.columns])

    def render(self, header: str) -> str:
        buf = io.StringIO()
        buf.write(f"# {header}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_fmt(v) for v in row])
        return buf.getvalue()


def _system(cfg: RunConfig, n: int) -> ControlSystem:
    grid = SpatialGrid(cfg.spec, cfg.sweep().box(n), cfg.m)
    mask = control_mask(grid) if cfg["control_set"] == "lattice" else NodeMask(np.zeros(grid.size))
    pot = PotentialField.constant(cfg["potential"], cfg["K"], grid.size)
    return ControlSystem(assemble_laplacian(grid), mask, cfg.time_set, cfg["K"], pot, cfg.solver)


def _failure_status(exc: Exception) -> str:
    if isinstance(exc, UnobservableError):
        return "unobservable"
    if isinstance(exc, (ConvergenceError, SolverError)):
        return "solver-failure"
    return "error"


def cmd_solve_linear(cfg: RunConfig):
    table = CsvTable(["n", "extent", "nodes", "kappa", "final_ratio", "identity_error", "cg_iters", "status"])
    n = cfg["sizes"][-1]
    system = _system(cfg, n)
    base = dict(n=n, extent=system.grid.domain.extent(cfg.spec)[0], nodes=system.grid.size)
    z0 = cfg.sweep().z0_on(system.grid)
    try:
        res = solve_penalized_hum(z0, system, cfg.hum)
    except (UnobservableError, ConvergenceError, SolverError) as exc:
        table.add(**base, status=_failure_status(exc))
        return table, EXIT_FAILED
    table.add(**base, kappa=res.kappa, final_ratio=res.final_ratio, identity_error=res.identity_error,
              cg_iters=res.iterations, status="ok")
    return table, EXIT_OK


def cmd_solve_semilinear(cfg: RunConfig):
    table = CsvTable(["iteration", "residual", "kappa", "final_ratio", "cg_iters", "verified_ratio", "status"])
    n = cfg["sizes"][-1]
    system = _system(cfg, n)
    z0 = cfg.sweep().z0_on(system.grid)
    try:
        res = fixed_point_solve(z0, cfg.nonlinearity, cfg.fixed_point, system)
    except (UnobservableError, ConvergenceError, SolverError) as exc:
        table.add(status=_failure_status(exc))
        return table, EXIT_FAILED
    for i, (r, k, fr, cg) in enumerate(zip(res.residuals, res.kappas, res.final_ratios, res.cg_iterations), 1):
        table.add(iteration=i, residual=r, kappa=k, final_ratio=fr, cg_iters=cg, status="iterate")
    status = "ok" if res.converged else "no-convergence"
    table.add(iteration="final", kappa=res.kappa, final_ratio=res.final_ratio,
              cg_iters=int(sum(res.cg_iterations)), verified_ratio=res.verified_ratio, status=status)
    return table, EXIT_OK if res.converged else EXIT_FAILED


def cmd_cost_sweep(cfg: RunConfig):
    table = CsvTable(["n", "extent", "nodes", "kappa", "final_ratio", "fp_iters", "cg_iters", "wall_ms", "status"])
    curve = cost_sweep(cfg.sweep())
    for r in curve.records:
        table.add(n=r.n, extent=r.extent, nodes=r.nodes, kappa=r.kappa, final_ratio=r.final_ratio,
                  fp_iters=r.fp_iters, cg_iters=r.cg_iters,
                  wall_ms=r.wall_ms if cfg["record_wall_time"] else None, status=r.status)
    failed = any(r.status != "ok" for r in curve.records)
    return table, EXIT_FAILED if failed else EXIT_OK


def cmd_observability(cfg: RunConfig):
    table = CsvTable(["probe", "ratio", "status"])
    system = _system(cfg, cfg["sizes"][-1])
    try:
        est = estimate_observability_constant(system, cfg["observability"]["power_iterations"], cfg["seed"])
    except UnobservableError as exc:
        table.add(status=_failure_status(exc))
        return table, EXIT_FAILED
    for name, ratio in est.ratios.items():
        table.add(probe=name, ratio=ratio, status="probe")
    table.add(probe=est.probe, ratio=est.constant, status="max")
    return table, EXIT_OK


def cmd_frequency_check(cfg: RunConfig):
    table = CsvTable(["k", "t", "frequency", "derivative", "bound", "violation", "tolerance", "pass"])
    system = _system(cfg, cfg["sizes"][-1])
    grid = system.grid
    z0 = cfg.sweep().z0_on(grid)
    u = system.forward(z0)
    fq = cfg["frequency"]
    x0 = fq["x0"] if fq["x0"] is not None else list(grid.center())
    p = FrequencyParams(tuple(x0), fq["r"], fq["lam"], cfg["T"])
    pot = system.potential.values if cfg["potential"] != 0 else None
    rep = frequency_monotonicity_check(u, grid, p, pot)
    for k in range(len(rep.derivative)):
        ok = not np.isfinite(rep.violation[k]) or rep.violation[k] <= rep.tolerance
        table.add(k=k, t=rep.times[k], frequency=rep.frequency[k], derivative=rep.derivative[k],
                  bound=rep.bound[k], violation=rep.violation[k], tolerance=rep.tolerance, **{"pass": ok})
    return table, EXIT_OK if rep.passed and not rep.all_undefined else EXIT_FAILED


def cmd_telescope(cfg: RunConfig):
    table = CsvTable(["m", "l_m", "gap", "measure", "pass"])
    E = cfg.time_set
    l, l1 = choose_density_anchor(E)
    ratio = cfg["telescope"]["ratio"] or cfg.bound_constants.kappa
    seq = build_telescope(E, l, l1, ratio, cfg["telescope"]["M"])
    for i, (gap, cov, ok) in enumerate(zip(seq.gaps, seq.covered, seq.passed)):
        table.add(m=i + 1, l_m=seq.terms[i], gap=gap, measure=cov, **{"pass": bool(ok)})
    return table, EXIT_OK if seq.ok else EXIT_FAILED


def cmd_bound(cfg: RunConfig):
    table = CsvTable(["quantity", "value"])
    b = assemble_observability_constant(cfg.time_set, cfg["T"], cfg["bound"]["a_norm"], cfg.bound_constants)
    for name, value in b.rows():
        table.add(quantity=name, value=value)
    return table, EXIT_OK


def cmd_exhaustion(cfg: RunConfig):
    table = CsvTable(["kind", "n", "error", "relative_error", "rho", "status"])
    sweep = cfg.sweep()
    wp = wellposedness_sweep(sweep)
    for n, e in zip(wp.sizes, wp.errors):
        rel = e / wp.y0_norm if wp.y0_norm > 0 else 0.0
        table.add(kind="wellposedness", n=n, error=e, relative_error=rel, status="ok")
    lc = limit_control_check(sweep)
    for n, rho, st in zip(lc.sizes, lc.rho, lc.statuses):
        table.add(kind="limit-control", n=n, rho=rho, status=st)
    failed = any(st not in ("ok",) for st in lc.statuses) or any(not math.isfinite(r) for r in lc.rho)
    return table, EXIT_FAILED if failed else EXIT_OK


COMMANDS = {
    "solve-linear": cmd_solve_linear,
    "solve-semilinear": cmd_solve_semilinear,
    "cost-sweep": cmd_cost_sweep,
    "observability": cmd_observability,
    "frequency-check": cmd_frequency_check,
    "telescope": cmd_telescope,
    "bound": cmd_bound,
    "exhaustion": cmd_exhaustion,
}


def run_command(cfg: RunConfig) -> tuple[str, int]:
    """Dispatch and render; returns ``(csv_text, exit_status)``."""
    t0 = time.perf_counter()
    try:
        table, status = COMMANDS[cfg.subcommand](cfg)
    except ValueError as exc:
        log.error("%s", exc)
        table, status = CsvTable(["status", "message"]), EXIT_FAILED
        table.add(status="error", message=str(exc))
    log.info("%s finished in %.1f s", cfg.subcommand, time.perf_counter() - t0)
    return table.render(f"heatlab {__version__} config={cfg.to_json()}"), status


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="heatlab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"heatlab {__version__}")
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", help="JSON configuration file (defaults apply when omitted)")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out", help="CSV output path (stdout when omitted)")
    ap.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                    help="dotted key with a JSON value, e.g. lattice.m=16; repeatable")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    text = ""
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            print(f"heatlab: cannot read config: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    try:
        cfg = parse_config(text, args.subcommand, args.override, args.seed, args.out)
    except ConfigError as exc:
        print(f"heatlab: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out, status = run_command(cfg)
    path = cfg["out"]
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(out)
    else:
        sys.stdout.write(out)
    return status


if __name__ == "__main__":
    sys.exit(main())
