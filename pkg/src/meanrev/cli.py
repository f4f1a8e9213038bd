"""Command-line front end: solve, simulate, verify, and sweep.

Subcommands write CSV data files (12-significant-digit fields, fixed
column order), a run manifest echoing the configuration plus computed
results, and a small matplotlib stub for plotting. Exit codes: 0 success,
2 configuration error, 3 solver non-convergence, 4 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .chooser import solve_chooser
from .config import RunConfig, config_echo, load_config
from .entry_problems import build_value_table, solve_entry_long, solve_entry_short
from .errors import (
    BoundaryCrossingError,
    BracketFailureError,
    ConfigError,
    ConvergenceError,
    MeanRevError,
    QuadratureError,
)
from .exit_problems import DegeneratePolicy, solve_exit_long, solve_exit_short
from .model import Problem, critical_levels, mean_m
from .oracles import FDGrid, PolicySpec, fd_value, mc_policy_value
from .strategy_sim import Strategy, StrategyBoundaries, simulate_round_trip, simulate_round_trips
from .volterra import TimeGrid

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_VERIFY = 4


def _f(v) -> str:
    return f"{float(v):.12g}"


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_f(v) if isinstance(v, (int, float, np.floating)) else v for v in row])


def _write_manifest(path: Path, cfg: RunConfig, results: dict):
    text = config_echo(cfg) + "\n[results]\n"
    for key, val in results.items():
        text += f"{key} = {_f(val) if isinstance(val, (int, float, np.floating)) else val}\n"
    path.write_text(text)


_PLOT_STUB = """\
# Auto-generated plotting stub: renders the CSV data in this directory.
import csv
from pathlib import Path

import matplotlib.pyplot as plt

here = Path(__file__).parent
for name in ("boundary.csv", "path.csv", "sweep.csv"):
    f = here / name
    if not f.exists():
        continue
    with open(f) as fh:
        rows = list(csv.reader(fh))
    header, data = rows[0], [[float(v) for v in r] for r in rows[1:]]
    xs = [r[0] for r in data]
    for j in range(1, len(header)):
        plt.plot(xs, [r[j] for r in data], label=f"{name}:{header[j]}")
plt.legend()
plt.xlabel("t")
plt.savefig(here / "plot.png", dpi=150)
print("wrote", here / "plot.png")
"""


def _outdir(cfg: RunConfig, override) -> Path:
    out = Path(override) if override else Path(cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    (out / "plot_stub.py").write_text(_PLOT_STUB)
    return out


def _grid(cfg: RunConfig, horizon: float) -> TimeGrid:
    return TimeGrid.uniform(horizon, cfg.n_steps)


def _value_rows(solution, horizon, model):
    scale = model.stationary_scale()
    ts = np.linspace(0.0, horizon, 11)
    xs = np.linspace(model.theta - 3 * scale, model.theta + 3 * scale, 21)
    rows = []
    for t in ts:
        vals = solution.value(float(t), xs)
        rows.extend((t, x, v) for x, v in zip(xs, vals))
    return rows


def _solve_exits(cfg: RunConfig):
    grid = _grid(cfg, cfg.market.T_prime)
    long_sol = solve_exit_long(cfg.model, cfg.market, grid, cfg.solver)
    short_sol = solve_exit_short(cfg.model, cfg.market, grid, cfg.solver)
    return long_sol, short_sol


def _residual_max(solution) -> float:
    from .exit_problems import exit_equation_spec
    from .volterra import residual_report

    eq = exit_equation_spec(solution)
    return max(abs(res) for _, res in residual_report(eq, solution.boundary))


def cmd_solve_exit(cfg: RunConfig, args) -> int:
    out = _outdir(cfg, args.out)
    sol = solve_exit_long(cfg.model, cfg.market, _grid(cfg, cfg.market.T_prime), cfg.solver) \
        if args.side == "long" else \
        solve_exit_short(cfg.model, cfg.market, _grid(cfg, cfg.market.T_prime), cfg.solver)
    levels = critical_levels(cfg.model, cfg.market)
    if isinstance(sol, DegeneratePolicy):
        _write_manifest(out / "run_manifest.txt", cfg, {
            "problem": sol.problem.value,
            "degenerate": sol.classification.value,
            "note": sol.note,
            "x_star_upper": levels.x_star_upper,
            "x_star_lower": levels.x_star_lower,
        })
        print(f"degenerate configuration: {sol.classification.value} ({sol.note})")
        return EXIT_OK
    b = sol.boundary
    _write_csv(out / "boundary.csv", ["t", "boundary_value"], zip(b.grid.nodes, b.values))
    _write_csv(out / "value.csv", ["t", "x", "value"],
               _value_rows(sol, cfg.market.T_prime, cfg.model))
    _write_manifest(out / "run_manifest.txt", cfg, {
        "problem": f"exit_{args.side}",
        "terminal_value": b.terminal_value,
        "boundary_at_zero": b.values[0],
        "x_star_upper": levels.x_star_upper,
        "x_star_lower": levels.x_star_lower,
        "residual_max": _residual_max(sol),
    })
    print(f"exit-{args.side} solved: terminal {b.terminal_value:.6f}, b(0) {b.values[0]:.6f}")
    return EXIT_OK


def cmd_solve_entry(cfg: RunConfig, args) -> int:
    out = _outdir(cfg, args.out)
    exit_long, exit_short = _solve_exits(cfg)
    exit_sol = exit_long if args.side == "long" else exit_short
    if isinstance(exit_sol, DegeneratePolicy):
        print(f"exit leg degenerate: {exit_sol.classification.value}")
        return EXIT_OK
    grid = _grid(cfg, cfg.market.T)
    sol = (solve_entry_long if args.side == "long" else solve_entry_short)(
        cfg.model, cfg.market, exit_sol, grid, cfg.solver
    )
    levels = critical_levels(cfg.model, cfg.market)
    if isinstance(sol, DegeneratePolicy):
        _write_manifest(out / "run_manifest.txt", cfg, {
            "problem": sol.problem.value,
            "degenerate": sol.classification.value,
            "note": sol.note,
        })
        print(f"degenerate configuration: {sol.classification.value} ({sol.note})")
        return EXIT_OK
    b = sol.boundary
    _write_csv(out / "boundary.csv", ["t", "boundary_value"], zip(b.grid.nodes, b.values))
    _write_csv(out / "value.csv", ["t", "x", "value"], _value_rows(sol, cfg.market.T, cfg.model))
    _write_manifest(out / "run_manifest.txt", cfg, {
        "problem": f"entry_{args.side}",
        "terminal_value": b.terminal_value,
        "boundary_at_zero": b.values[0],
        "break_even": sol.gamma,
        "x_star_upper": levels.x_star_upper,
        "x_star_lower": levels.x_star_lower,
        "exit_terminal_value": exit_sol.boundary.terminal_value,
    })
    print(
        f"entry-{args.side} solved: terminal {b.terminal_value:.6f}, "
        f"break-even {sol.gamma:.6f}"
    )
    return EXIT_OK


def cmd_solve_chooser(cfg: RunConfig, args) -> int:
    out = _outdir(cfg, args.out)
    exit_long, exit_short = _solve_exits(cfg)
    if isinstance(exit_long, DegeneratePolicy) or isinstance(exit_short, DegeneratePolicy):
        print("an exit leg is degenerate; chooser skipped")
        return EXIT_OK
    sol = solve_chooser(
        cfg.model, cfg.market, exit_long, exit_short, _grid(cfg, cfg.market.T), cfg.solver
    )
    if isinstance(sol, DegeneratePolicy):
        print(f"degenerate configuration: {sol.classification.value} ({sol.note})")
        return EXIT_OK
    _write_csv(
        out / "boundary.csv",
        ["t", "boundary_value", "upper_boundary"],
        zip(sol.lower.grid.nodes, sol.lower.values, sol.upper.values),
    )
    _write_csv(out / "value.csv", ["t", "x", "value"], _value_rows(sol, cfg.market.T, cfg.model))
    levels = critical_levels(cfg.model, cfg.market)
    _write_manifest(out / "run_manifest.txt", cfg, {
        "problem": "chooser",
        "crossover": sol.m,
        "break_even_long": sol.gamma_long,
        "break_even_short": sol.gamma_short,
        "lower_terminal": sol.lower.terminal_value,
        "upper_terminal": sol.upper.terminal_value,
        "x_star_upper": levels.x_star_upper,
        "x_star_lower": levels.x_star_lower,
    })
    print(
        f"chooser solved: crossover {sol.m:.6f}, terminals "
        f"({sol.lower.terminal_value:.6f}, {sol.upper.terminal_value:.6f})"
    )
    return EXIT_OK


def _strategy_boundaries(cfg: RunConfig, strategy: Strategy):
    exit_long, exit_short = _solve_exits(cfg)
    grid = _grid(cfg, cfg.market.T)
    if strategy is Strategy.LONG_SHORT:
        entry = solve_entry_long(cfg.model, cfg.market, exit_long, grid, cfg.solver)
        return StrategyBoundaries(strategy, entry_lower=entry.boundary,
                                  exit_long=exit_long.boundary)
    if strategy is Strategy.SHORT_LONG:
        entry = solve_entry_short(cfg.model, cfg.market, exit_short, grid, cfg.solver)
        return StrategyBoundaries(strategy, entry_upper=entry.boundary,
                                  exit_short=exit_short.boundary)
    ch = solve_chooser(cfg.model, cfg.market, exit_long, exit_short, grid, cfg.solver)
    return StrategyBoundaries(strategy, entry_lower=ch.lower, entry_upper=ch.upper,
                              exit_long=exit_long.boundary, exit_short=exit_short.boundary)


_STRATEGIES = {
    "long-short": Strategy.LONG_SHORT,
    "short-long": Strategy.SHORT_LONG,
    "chooser": Strategy.CHOOSER,
}


def cmd_simulate(cfg: RunConfig, args) -> int:
    out = _outdir(cfg, args.out)
    strategy = _STRATEGIES[args.strategy]
    bounds = _strategy_boundaries(cfg, strategy)
    rng = np.random.default_rng(cfg.verification.seed)
    spu = cfg.verification.steps_per_unit
    record, (times, path) = simulate_round_trip(cfg.model, cfg.market, bounds, rng, spu)
    records = [record]
    if args.n_paths > 1:
        records += simulate_round_trips(cfg.model, cfg.market, bounds, rng, args.n_paths - 1, spu)
    _write_csv(out / "path.csv", ["t", "x"], zip(times, path))
    _write_csv(
        out / "trades.csv",
        ["entered", "side", "entry_time", "entry_price", "exit_time", "exit_price",
         "forced_exit", "discounted_pnl"],
        (
            (
                int(rec.entered),
                rec.side or "",
                rec.entry_time if rec.entered else "",
                rec.entry_price if rec.entered else "",
                rec.exit_time if rec.entered else "",
                rec.exit_price if rec.entered else "",
                int(rec.forced_exit),
                rec.discounted_pnl,
            )
            for rec in records
        ),
    )
    _write_manifest(out / "run_manifest.txt", cfg, {
        "strategy": args.strategy,
        "n_paths": args.n_paths,
        "first_path_entered": int(record.entered),
    })
    if record.entered:
        print(
            f"first path: entered {record.side} at t={record.entry_time:.4f}, "
            f"exit at t={record.exit_time:.4f} (forced={record.forced_exit}), "
            f"pnl={record.discounted_pnl:.6f}"
        )
    else:
        print("first path: no entry before the deadline")
    return EXIT_OK


def cmd_verify(cfg: RunConfig, args) -> int:
    out = _outdir(cfg, args.out)
    exit_long, exit_short = _solve_exits(cfg)
    grid = _grid(cfg, cfg.market.T)
    entry_long = solve_entry_long(cfg.model, cfg.market, exit_long, grid, cfg.solver)
    rows = []
    model, market, ver = cfg.model, cfg.market, cfg.verification
    theta = model.theta

    if "fd" in ver.oracles:
        fgrid = FDGrid.for_model(model, ver.fd_n_x, ver.fd_n_t)
        fd = fd_value(Problem.EXIT_LONG, model, market, fgrid)
        ie_val = float(exit_long.value(0.0, theta))
        fd_val = float(fd.value_at(0.0, theta))
        rows.append(("fd", "exit_long_value_at_theta", ie_val, fd_val, 1e-3,
                     abs(ie_val - fd_val) <= 1e-3))
        mask = fd.t <= 0.95 * market.T_prime
        sup = float(np.nanmax(np.abs(fd.boundary[mask] - exit_long.boundary(fd.t[mask]))))
        rows.append(("fd", "exit_long_boundary_sup_diff", sup, 0.0, 2e-3, sup <= 2e-3))

    if "mc" in ver.oracles:
        pol = PolicySpec(Problem.EXIT_LONG, exit_boundary=exit_long.boundary)
        est = mc_policy_value(pol, model, market, theta, ver.n_paths, ver.steps_per_unit,
                              ver.seed)
        ie_val = float(exit_long.value(0.0, theta))
        tol = 3.0 * est.std_error + 3e-4  # documented discrete-monitoring bias allowance
        rows.append(("mc", "exit_long_policy_value", est.value, ie_val, tol,
                     abs(est.value - ie_val) <= tol))
        if not isinstance(entry_long, DegeneratePolicy):
            pol2 = PolicySpec(Problem.ENTRY_LONG, exit_boundary=exit_long.boundary,
                              entry_boundary=entry_long.boundary)
            est2 = mc_policy_value(pol2, model, market, theta, ver.n_paths,
                                   ver.steps_per_unit, ver.seed)
            ie2 = float(entry_long.value(0.0, theta))
            tol2 = 3.0 * est2.std_error + 3e-4
            rows.append(("mc", "entry_long_policy_value", est2.value, ie2, tol2,
                         abs(est2.value - ie2) <= tol2))

    _write_csv(
        out / "verification_report.csv",
        ["method", "quantity", "value", "reference", "tolerance", "pass"],
        ((m, q, v, ref, tol, "pass" if ok else "fail") for m, q, v, ref, tol, ok in rows),
    )
    n_fail = sum(1 for row in rows if not row[5])
    print(f"verification: {len(rows) - n_fail}/{len(rows)} checks passed")
    if n_fail:
        print("ERROR VERIFICATION_FAILED: see verification_report.csv", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, args) -> int:
    out = _outdir(cfg, args.out)
    deadlines = [float(s) for s in args.deadline_sweep.split(",") if s.strip()]
    if not deadlines or any(d <= 0 for d in deadlines):
        raise ConfigError(f"invalid deadline sweep {args.deadline_sweep!r}")
    exit_long, exit_short = _solve_exits(cfg)
    table_long = build_value_table(exit_long)
    table_short = build_value_table(exit_short)
    theta = cfg.model.theta
    dt = cfg.market.T / cfg.n_steps
    rows = []
    from dataclasses import replace

    for T in deadlines:
        market_T = replace(cfg.market, T=T)
        grid = TimeGrid.uniform(T, max(2, round(T / dt)))
        entry = solve_entry_long(cfg.model, market_T, exit_long, grid, cfg.solver,
                                 table=table_long)
        v_long = float(entry.value(0.0, theta))
        if _STRATEGIES[args.strategy] is Strategy.CHOOSER:
            ch = solve_chooser(cfg.model, market_T, exit_long, exit_short, grid, cfg.solver,
                               table_long=table_long, table_short=table_short)
            rows.append((T, float(ch.value(0.0, theta)), v_long))
        else:
            rows.append((T, v_long))
    header = ["T", "value", "value_long_short"] if len(rows[0]) == 3 else ["T", "value"]
    _write_csv(out / "sweep.csv", header, rows)
    _write_manifest(out / "run_manifest.txt", cfg, {
        "strategy": args.strategy,
        "deadlines": args.deadline_sweep,
    })
    print(f"sweep over {len(rows)} deadlines written to {out/'sweep.csv'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="meanrev",
        description="Optimal entry/exit boundaries for mean-reverting diffusions "
        "under sequential deadlines and fixed transaction costs.",
    )
    parser.add_argument("--version", action="version", version=f"meanrev {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, **extra):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="run configuration file")
        p.add_argument("--out", default=None, help="output directory override")
        p.set_defaults(fn=fn)
        return p

    p = add("solve-exit", cmd_solve_exit)
    p.add_argument("--side", choices=("long", "short"), default="long")
    p = add("solve-entry", cmd_solve_entry)
    p.add_argument("--side", choices=("long", "short"), default="long")
    add("solve-chooser", cmd_solve_chooser)
    p = add("simulate", cmd_simulate)
    p.add_argument("--strategy", choices=tuple(_STRATEGIES), default="long-short")
    p.add_argument("--n-paths", type=int, default=1)
    add("verify", cmd_verify)
    p = add("sweep", cmd_sweep)
    p.add_argument("--strategy", choices=tuple(_STRATEGIES), default="long-short")
    p.add_argument("--deadline-sweep", default="0.25,0.5,0.75,1.0")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        return args.fn(cfg, args)
    except ConfigError as exc:
        print(f"ERROR CONFIG_INVALID: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BracketFailureError, ConvergenceError, BoundaryCrossingError, QuadratureError) as exc:
        print(f"ERROR SOLVER_FAILED: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except MeanRevError as exc:
        print(f"ERROR INVALID_INPUT: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
