"""Command-line front end.

Subcommands:
    run      one closed-loop simulation -> trajectory CSV (+ optional figure)
    sweep    one run per parameter value -> per-item CSVs, summary CSV, overlay
    compare  side-by-side table and overlay figure from existing CSVs
    verify   startup set membership and the derivative certification suite

Exit codes: 0 success (an infeasible run is a result, not a failure),
1 config/usage error, 2 runtime failure, 3 verification failure.
FCBF_LOG=debug|info|warn controls diagnostic verbosity.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import logio, plots, verify
from .config import format_kv, parse_config
from .constraints import GoalSingularity, clf_row_fcbf, clf_row_hocbf, fcbf_row, hocbf_row
from .logio import SchemaMismatch
from .model import UnsupportedFilterOrder
from .sim import ConfigError, Controller, ScenarioConfig, run as run_sim

logger = logging.getLogger("fcbf.cli")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_VERIFY = 3

SWEEP_PARAMS = ("k3", "alpha", "tau", "theta0")


def _setup_logging() -> None:
    level = {"debug": logging.DEBUG, "info": logging.INFO, "warn": logging.WARNING}.get(
        os.environ.get("FCBF_LOG", "warn").lower(), logging.WARNING
    )
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _summary_line(log) -> str:
    s = log.summary
    return (f"status={s.status} steps={s.n_steps} min_b={s.min_b:.6g} "
            f"goal_dist={s.terminal_goal_distance:.6g} "
            f"max_du1_dt={s.max_du_dt[0]:.6g} max_du2_dt={s.max_du_dt[1]:.6g}")


def _scene(config: ScenarioConfig):
    par = config.unicycle
    obstacle = (par.obstacle_x, par.obstacle_y, par.obstacle_r)
    goal = (par.goal_x, par.goal_y, par.goal_tol_rd)
    return obstacle, goal


def _apply_sweep_value(config: ScenarioConfig, param: str, value: float) -> ScenarioConfig:
    if param == "k3":
        gains = dataclasses.replace(config.gains, k3=type(config.gains.k3)(value))
        return dataclasses.replace(config, gains=gains)
    if param == "alpha":
        gains = dataclasses.replace(config.gains, alpha=type(config.gains.alpha)(value))
        return dataclasses.replace(config, gains=gains)
    if param == "tau":
        return dataclasses.replace(
            config, filter=dataclasses.replace(config.filter, tau=value)
        )
    if param == "theta0":
        state = dataclasses.replace(config.initial_state, theta=value)
        return dataclasses.replace(config, initial_state=state)
    raise ConfigError(f"unknown sweep parameter {param!r}")


def cmd_run(args) -> int:
    try:
        config = parse_config(args.config)
        if args.controller is not None:
            config = config.with_controller(Controller(args.controller))
            config.validate()
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        log = run_sim(config)
        logio.write_csv(log, args.out)
        outputs = [args.out]
        if args.svg:
            frame = logio.read_csv(args.out)
            obstacle, goal = _scene(config)
            plots.save_run_figure(frame, args.svg, obstacle, goal,
                                  label=config.controller.value)
            outputs.append(args.svg)
        manifest = logio.build_manifest(args.config, config.controller.value,
                                        outputs, args.seed, log)
        logio.write_manifest(manifest, str(args.out) + ".manifest.json")
    except (UnsupportedFilterOrder, GoalSingularity, OSError, RuntimeError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(_summary_line(log))
    return EXIT_OK


def cmd_sweep(args) -> int:
    try:
        config = parse_config(args.config)
        if args.param not in SWEEP_PARAMS:
            raise ConfigError(
                f"sweep parameter must be one of {', '.join(SWEEP_PARAMS)}, got {args.param!r}"
            )
        values = [float(v) for v in args.values.split(",") if v.strip() != ""]
        if not values:
            raise ConfigError("empty sweep value list")
        variants = [_apply_sweep_value(config, args.param, v) for v in values]
        for v in variants:
            v.validate()
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def one(item):
        value, variant = item
        try:
            return value, run_sim(variant), None
        except Exception as exc:  # pragma: no cover - per-item failures recorded
            return value, None, exc

    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        results = list(pool.map(one, zip(values, variants)))

    frames, labels = [], []
    summary_lines = ["param,value,status,steps,min_b,goal_dist,max_du1_dt,max_du2_dt"]
    failures = 0
    for value, log, exc in results:
        label = f"{args.param}={value:g}"
        if exc is not None or log is None:
            failures += 1
            print(f"{label}: failed: {exc}", file=sys.stderr)
            summary_lines.append(f"{args.param},{value:g},error,0,,,,")
            continue
        csv_path = out_dir / f"{args.param}_{value:g}.csv"
        logio.write_csv(log, csv_path)
        manifest = logio.build_manifest(args.config, log.config.controller.value,
                                        [str(csv_path)], args.seed, log)
        logio.write_manifest(manifest, str(csv_path) + ".manifest.json")
        frames.append(logio.read_csv(csv_path))
        labels.append(label)
        s = log.summary
        summary_lines.append(
            f"{args.param},{value:g},{s.status},{s.n_steps},"
            f"{s.min_b:.17g},{s.terminal_goal_distance:.17g},"
            f"{s.max_du_dt[0]:.17g},{s.max_du_dt[1]:.17g}"
        )
        print(f"{label}: {_summary_line(log)}")
    (out_dir / "sweep_summary.csv").write_text("\n".join(summary_lines) + "\n")
    if frames:
        obstacle, goal = _scene(config)
        plots.save_sweep_figure(frames, labels, out_dir / "sweep_overlay.svg",
                                obstacle, goal)
    return EXIT_OK if failures == 0 else EXIT_RUNTIME


def cmd_compare(args) -> int:
    if len(args.csvs) < 2:
        print("compare needs at least 2 CSV files", file=sys.stderr)
        return EXIT_CONFIG
    frames, labels, scenes = [], [], []
    for path in args.csvs:
        try:
            frames.append(logio.read_csv(path))
        except (SchemaMismatch, OSError) as exc:
            print(f"cannot read {path}: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        labels.append(Path(path).stem)
        scenes.append(_scene_from_manifest(path))
    table = _frame_table(frames, labels, scenes)
    print(table)
    if args.svg:
        scene = next((s for s in scenes if s is not None), (None, None))
        plots.save_compare_figure(frames, labels, args.svg, scene[0], scene[1])
    return EXIT_OK


def _scene_from_manifest(csv_path):
    manifest_path = Path(str(csv_path) + ".manifest.json")
    if not manifest_path.is_file():
        return None
    try:
        meta = logio.read_manifest(manifest_path)
        config = parse_config(meta["config_path"])
    except (ConfigError, OSError, KeyError, ValueError):
        return None
    return _scene(config)


def _frame_table(frames, labels, scenes) -> str:
    import math

    header = ("run", "status", "rows", "min_b", "goal_dist", "max|du1|/dt", "max|du2|/dt")
    widths = [max(len(h), 12) for h in header]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    for frame, label, scene in zip(frames, labels, scenes):
        statuses = [s for s in frame.columns["qp_status"] if s is not None]
        status = statuses[-1] if statuses else "n/a"
        if status == "optimal":
            status = "completed"  # every period solved; the run finished
        bs = frame.series("b")
        min_b = f"{min(bs):.6g}" if bs else "n/a"
        if scene is not None:
            gx, gy, _ = scene[1]
            last = frame.last_row()
            goal = f"{math.hypot(last['x'] - gx, last['y'] - gy):.6g}"
        else:
            goal = "n/a"
        rates = []
        for ch in (1, 2):
            ts, vals = plots._input_series(frame, ch)
            if len(vals) >= 2:
                dts = [tb - ta for ta, tb in zip(ts, ts[1:])]
                rate = max(abs(b - a) / d for a, b, d in zip(vals, vals[1:], dts) if d > 0)
                rates.append(f"{rate:.6g}")
            else:
                rates.append("n/a")
        cells = [label, status, str(len(frame)), min_b, goal, rates[0], rates[1]]
        lines.append("  ".join(c.ljust(w) for c, w in zip(cells, widths)))
    return "\n".join(lines)


def cmd_verify(args) -> int:
    try:
        config = parse_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    g = config.gains
    try:
        hocbf_row(config.initial_state, config.unicycle, g.k1, g.k2)
        clf_row_hocbf(config.initial_state, config.unicycle, g.c3)
        fcbf_row(config.initial_state, config.initial_uf, config.unicycle,
                 config.filter, g.k1, g.k2, g.k3)
        clf_row_fcbf(config.initial_state, config.initial_uf, config.unicycle,
                     config.filter, g.c3)
    except (GoalSingularity, UnsupportedFilterOrder) as exc:
        print(f"row construction failed at the initial condition: {exc}")
        return EXIT_VERIFY

    from .constraints import startup_check

    startup = startup_check(config.initial_state, config.initial_uf, config.unicycle,
                            g.k1, g.k2, config.input_bounds.as_arrays())
    print("startup set membership:")
    print(startup.format())

    reports = verify.deriv_check_suite(config, n_samples=args.samples, seed=args.seed)
    print("derivative certification:")
    kv = []
    for rep in reports:
        print(rep.format())
        kv.append((f"{rep.operation}_max_rel_err", rep.max_rel_err))
        kv.append((f"{rep.operation}_seed", rep.seed))
    print(format_kv(kv), end="")
    if not startup.all_ok or not all(r.passed for r in reports):
        return EXIT_VERIFY
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fcbf",
        description="Safety-filter control simulations (filtered barrier QP controllers)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one closed-loop simulation")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--controller", choices=[c.value for c in Controller])
    p_run.add_argument("--out", required=True, help="trajectory CSV path")
    p_run.add_argument("--svg", help="optional figure path")
    p_run.add_argument("--seed", type=int, default=0)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a parameter sweep")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--param", required=True)
    p_sweep.add_argument("--values", required=True, help="comma-separated values")
    p_sweep.add_argument("--out-dir", required=True)
    p_sweep.add_argument("--jobs", type=int, default=1)
    p_sweep.add_argument("--seed", type=int, default=0)
    p_sweep.set_defaults(func=cmd_sweep)

    p_cmp = sub.add_parser("compare", help="compare existing trajectory CSVs")
    p_cmp.add_argument("csvs", nargs="*")
    p_cmp.add_argument("--svg", help="optional overlay figure path")
    p_cmp.set_defaults(func=cmd_compare)

    p_ver = sub.add_parser("verify", help="derivative certification suite")
    p_ver.add_argument("--config", required=True)
    p_ver.add_argument("--samples", type=int, default=500)
    p_ver.add_argument("--seed", type=int, default=verify.DEFAULT_SEED)
    p_ver.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; map to the config/usage code
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    try:
        return args.func(args)
    except Exception as exc:  # pragma: no cover - final safety net
        logger.exception("unhandled failure")
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
