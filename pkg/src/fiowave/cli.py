"""Command-line frontend: scenario simulation, admissibility checking,
verification suites, and phase-table dumps.

Subcommands

    simulate      Monte Carlo moments of the random-field solution at
                  the configured probes; writes CSV + JSON manifest.
    check         admissibility table for the configured measure; the
                  verdict is data, exit code stays 0.
    verify        run a named verification suite; exit 0 iff all checks
                  in the suite pass.
    eikonal-dump  write phase tables for the configured equation.

Exit codes: 0 success, 2 configuration/usage error, 3 admissibility
failure without --override-admissibility, 4 horizon error.  All output
CSV is RFC-4180 with '.' decimals; every number in a simulate run is a
pure function of config + seed, so reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import AdmissibilityError, ConfigError, FiowaveError, HorizonError
from .config import (ScenarioConfig, build_coefficient_pair, build_measure,
                     build_solution_ops, load_config)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ADMISSIBILITY = 3
EXIT_HORIZON = 4


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _manifest(cfg: ScenarioConfig, seed, outputs, timings, extra=None):
    data = {
        "schema_version": 1,
        "package_version": __version__,
        "config_path": str(cfg.path),
        "config_digest": cfg.digest,
        "seed": int(seed),
        "grid": {"dim": cfg.grid.dim, "length": cfg.grid.length,
                 "points": cfg.grid.points},
        "outputs": [str(p) for p in outputs],
        "timings_seconds": timings,
    }
    if extra:
        data.update(extra)
    return data


def cmd_simulate(args) -> int:
    from .grid import Field
    from .stochastic import random_field_solution

    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.seed
    out_dir = Path(args.out or cfg.output["directory"])
    out_dir.mkdir(parents=True, exist_ok=True)

    t_build = time.perf_counter()
    ops = build_solution_ops(cfg)
    measure = build_measure(cfg)
    coeff = build_coefficient_pair(cfg)
    build_seconds = time.perf_counter() - t_build

    grid = cfg.grid
    zero = Field(grid, np.zeros(grid.shape, complex))
    u0, u1 = zero, zero  # scenario data are the homogeneous SPDE start
    n_paths = int(cfg.noise["paths"])
    dt = float(cfg.noise.get("dt", 0.0)) or None

    rows = []
    t_run = time.perf_counter()
    for t in cfg.probe["t"]:
        for x in cfg.probe["x"]:
            res = random_field_solution(
                ops, u0, u1, coeff, measure, float(t), x, n_paths, int(seed),
                dt=dt, override_admissibility=args.override_admissibility,
                threads=args.threads,
            )
            rows.append([
                float(t),
                ";".join(repr(float(c)) for c in np.atleast_1d(x)),
                res.mean, res.variance, res.std_error, res.n_paths,
                res.i0_value, res.a1.verdict, res.a3.verdict,
            ])
    run_seconds = time.perf_counter() - t_run

    csv_path = out_dir / "moments.csv"
    _write_csv(csv_path,
               ["t", "x", "mean", "variance", "std_error", "n_paths", "I0",
                "A1_verdict", "A3_verdict"], rows)
    manifest = _manifest(cfg, seed, [csv_path],
                         {"build": build_seconds, "run": run_seconds},
                         {"n_paths": n_paths, "measure": measure.label})
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    print(f"wrote {csv_path}")
    return EXIT_OK


def cmd_check(args) -> int:
    from .measures import dalang_integral

    cfg = load_config(args.config)
    out_dir = Path(args.out or cfg.output["directory"])
    out_dir.mkdir(parents=True, exist_ok=True)
    measure = build_measure(cfg)
    order = int(cfg.equation.get("order", 2))
    nus = [float(cfg.probe.get("nu", 1.0))]
    if order > 2:
        nus.append(float(order - 1))
    rows = []
    for nu in nus:
        rep = dalang_integral(measure, nu,
                              eta_probes=[[e] + [0.0] * (cfg.grid.dim - 1)
                                          for e in cfg.probe["eta"]])
        for eta_norm, value in rep.per_eta:
            rows.append([measure.label, nu, eta_norm, value,
                         rep.sup_value, rep.verdict])
    csv_path = out_dir / "admissibility.csv"
    _write_csv(csv_path, ["measure", "nu", "eta", "value", "sup", "verdict"], rows)
    for row in rows:
        print(" ".join(_fmt(v) for v in row))
    print(f"wrote {csv_path}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import SUITES, run_suite

    if args.suite not in SUITES:
        print(f"unknown suite {args.suite!r}; available: {', '.join(SUITES)}",
              file=sys.stderr)
        return EXIT_CONFIG
    config = None
    if args.config:
        config = load_config(args.config)
    try:
        records = run_suite(args.suite, config=config)
    except FiowaveError as exc:
        print(f"rejected: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    all_ok = True
    for rec in records:
        status = "PASS" if rec.passed else "FAIL"
        print(f"[{status}] {rec.name} ({rec.elapsed:.2f} s): {rec.detail}")
        all_ok = all_ok and rec.passed
    return EXIT_OK if all_ok else 1


def cmd_eikonal_dump(args) -> int:
    from .eikonal import solve_eikonal
    from .reduction import HyperbolicOperator, reduce_to_system
    from .config import build_solution_ops  # noqa: F401  (kept for symmetry)
    from .expr import coefficient_from_expression

    cfg = load_config(args.config)
    grid = cfg.grid
    kind = cfg.equation["kind"]
    if kind == "wave":
        op = HyperbolicOperator(dim=grid.dim)
    elif kind == "second-order":
        d = grid.dim
        a_list = [coefficient_from_expression(s, d) for s in cfg.equation["a"]]
        a = [[a_list[i * d + j] if len(a_list) > 1 else
              (a_list[0] if i == j else 0.0) for j in range(d)] for i in range(d)]
        op = HyperbolicOperator(dim=d, a=a)
    else:
        print("eikonal-dump covers the wave and second-order kinds",
              file=sys.stderr)
        return EXIT_CONFIG
    sys0 = reduce_to_system(op, grid)
    horizon = float(cfg.solver["horizon"])
    out_dir = Path(args.out or cfg.output["directory"])
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    stride = max(1, grid.points // 32)
    xs = grid.x_axis[::stride]
    xis = [1.0, 4.0, -4.0]
    for j, root in enumerate(sys0.roots):
        phase = solve_eikonal(root, grid, horizon_request=horizon,
                              n_steps=int(cfg.solver["eikonal_steps"]))
        for t in cfg.probe["t"]:
            t = min(float(t), phase.horizon)
            for xi in xis:
                vals = phase.value(t, 0.0, (xs,), (np.array([xi]),))
                for xv, pv in zip(xs, np.atleast_1d(vals)):
                    rows.append([j, t, 0.0, float(xv), float(xi), float(pv)])
    csv_path = out_dir / "phases.csv"
    _write_csv(csv_path, ["root", "t", "s", "x", "xi", "phi"], rows)
    print(f"wrote {csv_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fiowave",
        description="hyperbolic propagators and random-field SPDE simulation",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="scenario TOML file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--override-admissibility", action="store_true")

    p_sim = sub.add_parser("simulate", help="Monte Carlo moments at the probes")
    common(p_sim)
    p_sim.set_defaults(fn=cmd_simulate)

    p_chk = sub.add_parser("check", help="admissibility table for the measure")
    common(p_chk)
    p_chk.set_defaults(fn=cmd_check)

    p_ver = sub.add_parser("verify", help="run a named verification suite")
    p_ver.add_argument("suite")
    p_ver.add_argument("--config", default=None)
    p_ver.set_defaults(fn=cmd_verify)

    p_dump = sub.add_parser("eikonal-dump", help="write phase tables")
    common(p_dump)
    p_dump.set_defaults(fn=cmd_eikonal_dump)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AdmissibilityError as exc:
        print(f"admissibility failure: {exc} "
              "(use --override-admissibility to force)", file=sys.stderr)
        return EXIT_ADMISSIBILITY
    except HorizonError as exc:
        print(f"horizon error: {exc}", file=sys.stderr)
        return EXIT_HORIZON


if __name__ == "__main__":
    sys.exit(main())
