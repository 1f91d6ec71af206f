"""``logplap`` command line: eig, spectrum, solve, verify, check-g.

Each run writes into ``--out`` a ``manifest.json`` (resolved config,
package versions, seed) plus command-specific JSON reports and CSV tables.
Outputs depend only on the config and seed, so repeated runs are
byte-identical.  Exit codes: 0 success, 1 configuration error, 2 solver or
check failure, 3 the nonlinearity fails (g1)-(g3).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import platform
import sys
import time

import numpy as np
import scipy

from . import __version__
from .assembly import Constants, assemble_form
from .config import Config, ConfigError, config_to_dict, load_config
from .critical_point import (ConditionsNotMet, GeometryError, RadiiError,
                             build_linking_geometry_p2, mountain_pass, solve_linking)
from .eigensolver import first_eigenpair, second_eigenvalue_heuristic, spectrum_p2
from .grid import build_grid
from .nonlinearity import (check_growth_conditions, check_superlinearity, load_custom_table,
                           make_builtin, make_custom)
from .verify import run_suite, write_reports

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_CONDITIONS = 0, 1, 2, 3


class _Run:
    def __init__(self, cfg: Config, out: str, quiet: bool, command: str):
        self.cfg, self.out, self.quiet, self.command = cfg, out, quiet, command
        os.makedirs(out, exist_ok=True)

    def log(self, msg: str) -> None:
        if not self.quiet:
            print(msg, file=sys.stderr)

    def json(self, name: str, obj) -> None:
        with open(os.path.join(self.out, name), "w") as fh:
            json.dump(_clean(obj), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def csv(self, name: str, header: list[str], rows) -> None:
        with open(os.path.join(self.out, name), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(x) for x in row])

    def function_csv(self, name: str, u) -> None:
        self.csv(name, ["x", "u"], zip(u.grid.nodes, u.values))

    def manifest(self, extra: dict | None = None) -> None:
        body = {
            "command": self.command,
            "config": config_to_dict(self.cfg),
            "seed": self.cfg.solver.seed,
            "versions": {"logplap": __version__, "numpy": np.__version__,
                         "scipy": scipy.__version__,
                         "python": platform.python_version()},
        }
        body.update(extra or {})
        self.json("manifest.json", body)


def _fmt(x):
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return repr(float(x))


def _clean(obj):
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats as strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def _form(cfg: Config):
    d, c = cfg.domain, cfg.constants
    return assemble_form(build_grid(d.a, d.b, d.n), Constants(c.C, c.rho, c.p))


def _nonlinearity(cfg: Config, *, strict: bool = True):
    nl, p = cfg.nonlinearity, cfg.constants.p
    if nl.kind == "custom":
        try:
            t, g = load_custom_table(nl.custom_table_path)
        except OSError as exc:
            raise ConfigError(f"nonlinearity.custom_table_path: cannot read "
                              f"{nl.custom_table_path} ({exc.strerror})") from None
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return make_custom(t, g, p, nl.custom_table_path)
    if strict and nl.kind != "power" and nl.theta >= 1:
        raise ConfigError(f"nonlinearity.theta must lie in (0, 1) for solve, got {nl.theta}")
    return make_builtin(nl.kind, nl.lam, nl.theta, nl.t0, nl.t1, p, strict=strict)


# ------------------------------------------------------------- commands


def cmd_eig(run: _Run, second: bool = False) -> int:
    cfg = run.cfg
    form = _form(cfg)
    s = cfg.solver
    t = time.perf_counter()
    eig = first_eigenpair(form, seed=s.seed, restarts=s.restarts, tol=s.tol, max_iter=s.max_iter)
    run.log(f"lambda_1 = {eig.value:.12g}  residual {eig.residual:.2e}  "
            f"({time.perf_counter() - t:.2f} s)")
    run.manifest()
    run.json("eigenpair.json", eig.to_dict())
    run.function_csv("eigenfunction.csv", eig.function)
    ok = eig.converged
    if second:
        e2 = second_eigenvalue_heuristic(form, eig.function, seed=s.seed, m=s.m_knots,
                                         tol=s.tol, max_iter=s.max_iter)
        run.log(f"lambda_2 = {e2.value:.12g}  residual {e2.residual:.2e}"
                + ("  (heuristic)" if e2.heuristic else ""))
        run.json("eigenpair2.json", e2.to_dict())
        run.function_csv("eigenfunction2.csv", e2.function)
        ok = ok and e2.converged
    if not ok:
        print("error: eigen solver did not reach the tolerance", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def cmd_spectrum(run: _Run) -> int:
    cfg = run.cfg
    if cfg.constants.p != 2:
        raise ConfigError(f"constants.p must be 2 for spectrum, got {cfg.constants.p}")
    sp = spectrum_p2(_form(cfg))
    run.manifest()
    run.csv("spectrum.csv", ["k", "lambda"], ((k + 1, v) for k, v in enumerate(sp.values)))
    run.log(f"{len(sp.values)} eigenvalues, smallest {sp.values[0]:.12g}")
    return EXIT_OK


def cmd_check_g(run: _Run) -> int:
    g = _nonlinearity(run.cfg, strict=False)
    rep = check_growth_conditions(g)
    run.manifest()
    run.json("conditions.json", {"nonlinearity": g.to_dict(), **rep.to_dict()})
    if rep.g3_feasible:
        sup = check_superlinearity(g, report=rep)
        run.json("superlinearity.json", sup.to_dict())
    run.log(f"g1 {'pass' if rep.g1_pass else 'FAIL'} (limit {rep.g1_limit:.6g})  "
            f"g2 {'pass' if rep.g2_pass else 'FAIL'} (limit {rep.g2_limit:.3g})  "
            f"g3 {'pass' if rep.g3_feasible else 'FAIL'} (beta {rep.g3_beta:.3g})")
    return EXIT_OK if rep.passed else EXIT_CONDITIONS


def cmd_solve(run: _Run, mode: str) -> int:
    cfg = run.cfg
    if mode == "linking" and cfg.constants.p != 2:
        raise ConfigError(f"constants.p must be 2 for linking (got {cfg.constants.p}); "
                          "use --mode mountain-pass for other exponents")
    form = _form(cfg)
    g = _nonlinearity(cfg)
    rep = check_growth_conditions(g)
    run.manifest({"mode": mode})
    run.json("conditions.json", {"nonlinearity": g.to_dict(), **rep.to_dict()})
    if not rep.passed:
        print("error: nonlinearity fails the growth conditions; see conditions.json",
              file=sys.stderr)
        return EXIT_CONDITIONS
    s = cfg.solver
    t = time.perf_counter()
    try:
        if mode == "mountain-pass":
            eig = first_eigenpair(form, seed=s.seed, restarts=s.restarts)
            out = mountain_pass(form, g, m=s.m_knots, tol=s.tol, max_iter=s.max_iter,
                                seed=s.seed, direction=eig.function, lambda1=eig.value)
        else:
            lt = s.lambda_tilde if s.lambda_tilde is not None else rep.g1_limit
            geo = build_linking_geometry_p2(form, spectrum_p2(form), s.k, lt, g, seed=s.seed)
            out = solve_linking(form, g, geo, tol=s.tol, max_iter=s.max_iter)
    except ConditionsNotMet as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONDITIONS
    except (RadiiError, GeometryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        run.json("failure.json", {"error": type(exc).__name__, "message": str(exc)})
        return EXIT_SOLVER
    run.json("report.json", out.to_dict())
    run.function_csv("solution.csv", out.solution)
    run.log(f"critical value {out.critical_value:.10g}  residual {out.residual:.2e}  "
            f"iterations {out.iterations}  ({time.perf_counter() - t:.2f} s)")
    if not (out.converged and out.nontrivial):
        print("error: critical point solver did not converge to a nontrivial solution",
              file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def cmd_verify(run: _Run) -> int:
    cfg = run.cfg
    v = cfg.verify
    form = _form(cfg)
    g = _nonlinearity(cfg)
    reports = run_suite(form, v.samples, cfg.solver.seed, v.recipe, v.delta, v.gamma,
                        g=g, rho_list=v.rho_list)
    run.manifest()
    write_reports(reports, os.path.join(run.out, "reports"))
    summary = {r.name: {"passed": r.passed, "empirical_constant": r.empirical_constant,
                        "refinement_drift": r.refinement_drift} for r in reports}
    run.json("summary.json", summary)
    for r in reports:
        drift = "n/a" if r.refinement_drift is None else f"{r.refinement_drift:.3f}"
        run.log(f"{r.name:24s} {'pass' if r.passed else 'FAIL'}  "
                f"constant {r.empirical_constant:.4g}  drift {drift}")
    return EXIT_OK if all(r.passed for r in reports) else EXIT_SOLVER


# ------------------------------------------------------------------ main


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON config (all fields optional)")
    common.add_argument("--out", metavar="DIR", default="out", help="output directory")
    common.add_argument("--seed", type=int, help="overrides solver.seed")
    common.add_argument("--quiet", action="store_true", help="no progress on stderr")
    ap = argparse.ArgumentParser(prog="logplap", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    e = sub.add_parser("eig", parents=[common], help="first eigenpair")
    e.add_argument("--second", action="store_true", help="also run the second-eigenvalue path search")
    sub.add_parser("spectrum", parents=[common], help="full spectrum at p = 2")
    s = sub.add_parser("solve", parents=[common], help="nontrivial critical point")
    s.add_argument("--mode", choices=("mountain-pass", "linking"), default="mountain-pass")
    sub.add_parser("verify", parents=[common], help="inequality suite")
    sub.add_parser("check-g", parents=[common], help="growth conditions of the nonlinearity")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError(f"--seed must be >= 0, got {args.seed}")
            cfg.solver.seed = args.seed
        run = _Run(cfg, args.out, args.quiet, args.command)
        if args.command == "eig":
            return cmd_eig(run, args.second)
        if args.command == "spectrum":
            return cmd_spectrum(run)
        if args.command == "solve":
            return cmd_solve(run, args.mode)
        if args.command == "verify":
            return cmd_verify(run)
        return cmd_check_g(run)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        # constructor-level validation that slipped past the config layer
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
