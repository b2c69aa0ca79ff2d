"""Command-line runner: single scenarios, controller comparisons, reports.

Outputs per run: trajectory.csv, report.txt, config.echo, and optionally
plot.gp (a plain gnuplot script; no graphics dependency). Exit codes are
the machine contract: 0 run completed, 2 divergence recorded, 1 bad
configuration or arguments, 3 output I/O failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from .config import emit_scenario, parse_scenario
from .exceptions import ConfigError, ConsensusLabError, DivergenceError
from .metrics import build_report
from .presets import PRESETS, preset
from .scenario import simulate_scenario, with_controller


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="consensuslab",
        description="Simulate cascaded high-order consensus scenarios.",
    )
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", metavar="FILE", help="scenario config file")
    src.add_argument("--preset", metavar="NAME",
                     help=f"built-in scenario: {', '.join(sorted(PRESETS))}")
    p.add_argument("--out", metavar="DIR", default="runs",
                   help="output directory (default: runs)")
    p.add_argument("--controller", metavar="KIND",
                   help="override the scenario's controller")
    p.add_argument("--compare", metavar="K1,K2,...",
                   help="run the same setup under several controllers")
    p.add_argument("--seed", type=int, metavar="U64", help="override the seed")
    p.add_argument("--dt", type=float, metavar="S", help="override the step size")
    p.add_argument("--t-end", type=float, metavar="S", dest="t_end",
                   help="override the horizon")
    p.add_argument("--quiet", action="store_true", help="suppress progress text")
    p.add_argument("--gnuplot", action="store_true",
                   help="also write a plot.gp script referencing the CSV")
    return p


def _load_scenario(args):
    if args.preset is not None:
        sc = preset(args.preset)
    else:
        path = Path(args.scenario)
        if not path.exists():
            raise ConfigError(f"scenario file not found: {path}")
        sc = parse_scenario(path.read_text())
    overrides = {}
    if args.controller is not None:
        overrides["controller"] = args.controller
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.dt is not None:
        overrides["dt"] = args.dt
    if args.t_end is not None:
        overrides["t_end"] = args.t_end
    if overrides:
        sc = dataclasses.replace(sc, **overrides)
    return sc


def _fmt12(v) -> str:
    return f"{v:.12g}"


def write_trajectory_csv(traj, path: Path) -> None:
    meta = traj.meta
    n = meta["n_agents"]
    L = meta["laplacian"]
    d_ref = np.asarray(meta["d_ref"])
    header = ["t"]
    blocks = []

    x_rel = traj.plant_x - d_ref
    header += [f"x_{i + 1}" for i in range(n)]
    blocks.append(traj.plant_x)
    if traj.plant_xdot is not None:
        header += [f"xdot_{i + 1}" for i in range(n)]
        blocks.append(traj.plant_xdot)
    if meta["route"] == "cascade" and meta["order"] >= 2:
        for k in range(meta["order"]):
            header += [f"xi_{k + 1}_{i + 1}" for i in range(n)]
        blocks.append(traj.states)

    disagreement = np.abs(x_rel - x_rel.mean(axis=1, keepdims=True)).max(axis=1)
    lap = np.abs(x_rel @ L.T).max(axis=1)
    header += ["disagreement", "lap_seminorm"]
    blocks.append(np.column_stack((disagreement, lap)))

    data = np.column_stack([traj.times] + blocks)
    with path.open("w") as fh:
        fh.write(",".join(header) + "\n")
        for row in data:
            fh.write(",".join(_fmt12(v) for v in row) + "\n")


def write_report(traj, sc, path: Path) -> None:
    regime_band = 1.0 if any(st.kind == "saturated" for st in sc.stages) else None
    report = build_report(
        traj,
        tolerance=sc.tolerance,
        tail_fraction=sc.tail_fraction,
        regime_band=regime_band,
        L=traj.meta["laplacian"],
    )
    x_rel = traj.plant_x - np.asarray(traj.meta["d_ref"])
    lines = [
        f"name = {sc.name}",
        f"controller = {sc.controller}",
        f"seed = {sc.seed}",
        f"n_agents = {sc.graph_n}",
        f"order = {sc.order}",
        f"dt = {_fmt12(sc.dt)}",
        f"t_end = {_fmt12(sc.t_end)}",
        f"converged = {'true' if report.converged else 'false'}",
    ]
    for k, res in enumerate(report.order_residuals):
        lines.append(f"order{k}_residual = {_fmt12(res)}")
    lines.append(f"peak_disagreement = {_fmt12(report.peak_disagreement)}")
    lines.append(
        f"final_lap_seminorm = "
        f"{_fmt12(float(np.abs(traj.meta['laplacian'] @ x_rel[-1]).max()))}"
    )
    if report.regime_entry is not None:
        lines.append(f"regime_entry_time = {_fmt12(report.regime_entry)}")
    elif regime_band is not None:
        lines.append("regime_entry_time = never")
    if report.divergence_time is not None:
        lines.append(f"divergence_time = {_fmt12(report.divergence_time)}")
    path.write_text("\n".join(lines) + "\n")


def write_gnuplot(sc, path: Path) -> None:
    n = sc.graph_n
    plots = ", ".join(
        f"'trajectory.csv' using 1:{i + 2} with lines title 'x_{i + 1}'"
        for i in range(n)
    )
    path.write_text(
        "set datafile separator ','\n"
        "set key outside\n"
        f"set title '{sc.name} ({sc.controller})'\n"
        "set xlabel 't [s]'\n"
        f"plot {plots}\n"
    )


def run(sc, out_dir, quiet=False, gnuplot=False) -> int:
    """Simulate one scenario and write its artifacts. Exit-code semantics:
    0 completed, 2 diverged (recorded), 1 config error, 3 I/O error."""
    try:
        code = 0
        try:
            traj = simulate_scenario(sc)
        except DivergenceError as err:
            traj = err.trajectory
            code = 2
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 1

    try:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_trajectory_csv(traj, out / "trajectory.csv")
        write_report(traj, sc, out / "report.txt")
        (out / "config.echo").write_text(emit_scenario(sc) + "\n")
        if gnuplot:
            write_gnuplot(sc, out / "plot.gp")
    except OSError as err:
        print(f"could not write outputs: {err}", file=sys.stderr)
        return 3

    if not quiet:
        tag = "diverged" if code == 2 else "completed"
        print(f"{sc.name} [{sc.controller}] {tag}; outputs in {out}")
    return code


def compare(sc, controllers, out_dir, quiet=False, gnuplot=False) -> int:
    """Run the same physical setup under each controller (identical seed,
    initial conditions, and RNG streams) and write a side-by-side table."""
    out = Path(out_dir)
    rows = []
    worst = 0
    for kind in controllers:
        sub = with_controller(sc, kind)
        code = run(sub, out / kind, quiet=quiet, gnuplot=gnuplot)
        if code in (1, 3):
            return code
        worst = max(worst, code)
        report = (out / kind / "report.txt").read_text()
        fields = dict(
            line.split(" = ", 1) for line in report.strip().splitlines()
        )
        rows.append((
            kind,
            fields.get("converged", "?"),
            fields.get("peak_disagreement", "?"),
            fields.get("order0_residual", "?"),
            fields.get("order1_residual", "-"),
            fields.get("divergence_time", "-"),
        ))

    try:
        out.mkdir(parents=True, exist_ok=True)
        widths = (22, 10, 16, 16, 16, 14)
        titles = ("controller", "converged", "peak_disagree",
                  "order0_resid", "order1_resid", "diverged_at")
        lines = ["".join(t.ljust(w) for t, w in zip(titles, widths))]
        for row in rows:
            lines.append("".join(str(v).ljust(w) for v, w in zip(row, widths)))
        table = "\n".join(lines) + "\n"
        (out / "comparison.txt").write_text(table)
    except OSError as err:
        print(f"could not write comparison: {err}", file=sys.stderr)
        return 3
    if not quiet:
        print(table, end="")
    return worst


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        sc = _load_scenario(args)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 1

    if args.compare:
        kinds = [k.strip() for k in args.compare.split(",") if k.strip()]
        if not kinds:
            print("empty --compare list", file=sys.stderr)
            return 1
        return compare(sc, kinds, args.out, quiet=args.quiet, gnuplot=args.gnuplot)
    return run(sc, args.out, quiet=args.quiet, gnuplot=args.gnuplot)


if __name__ == "__main__":
    sys.exit(main())
