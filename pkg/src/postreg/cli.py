"""Command-line front end.

Subcommands::

    postreg run <cfg>                       simulate, write trajectory and summary
    postreg sweep <cfg> --param g=5,8,10    one run per parameter combination
    postreg check <cfg>                     evaluate the configured checks
    postreg plotdata <dir>                  figure CSVs from run/sweep output

Exit codes: 0 success, 2 invalid input, 3 blow-up, 4 failed checks.
"""

import argparse
import itertools
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import (
    build_plant,
    build_regulator,
    dump_config,
    initial_state,
    load_config,
    run_checks,
    set_param,
)
from .errors import PostregError
from .regulator import mismatch_along
from .sim import (
    atomic_write_text,
    integrate,
    read_csv_columns,
    sweep,
    tail_stats,
    write_sweep_csv,
    write_trajectory_csv,
)

EXIT_OK, EXIT_INVALID, EXIT_BLOWUP, EXIT_CHECKS = 0, 2, 3, 4

log = logging.getLogger("postreg")


def _out_dir(args, cfg, config_path):
    if args.out:
        return Path(args.out)
    if "dir" in cfg["outputs"]:
        return Path(cfg["outputs"]["dir"])
    return Path("postreg_out") / Path(config_path).stem


def _apply_seed(cfg, seed):
    if seed is not None:
        cfg["sim"]["seed"] = int(seed)
    return cfg


def _sim_opts(cfg):
    s = cfg["sim"]
    return dict(solver=s["solver"], rtol=s["rtol"], atol=s["atol"], step=s["step"],
                report_dt=s["report_dt"], threshold=s["threshold"], seed=s["seed"])


def _write_json(path, obj):
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True, default=float) + "\n")


def _summary(traj, plant, config, cfg):
    s = cfg["sim"]
    out = dict(blown_up=traj.blown_up, t_blowup=traj.t_blowup, samples=len(traj),
               metadata={k: v for k, v in traj.metadata.items()})
    if len(traj) > 1:
        st = tail_stats(traj, s["tail_fraction"])
        out["tail"] = dict(window=list(st.window), sup_abs_e=st.sup_abs_e,
                           window_sups=st.window_sups.tolist(),
                           block_sups=st.block_sups.tolist(),
                           decreasing_flag=st.decreasing_flag,
                           floor_detected=st.floor_detected, valid=st.valid)
    if not traj.blown_up:
        try:
            mm = mismatch_along(traj, plant, config, fd_step=s.get("fd_step"),
                                tail_start=traj.t[-1] * (1 - s["tail_fraction"]))
            out["mismatch"] = dict(delta_bar=mm.delta_bar, window=list(mm.window),
                                   fd_step=mm.fd_step, stencil_points=mm.stencil_points)
        except PostregError as exc:
            out["mismatch"] = dict(error=str(exc))
    return out


def cmd_run(args):
    cfg = _apply_seed(load_config(args.config), args.seed)
    plant = build_plant(cfg)
    config = build_regulator(cfg, plant)
    out = _out_dir(args, cfg, args.config)
    out.mkdir(parents=True, exist_ok=True)
    traj = integrate(plant, config, initial_state(cfg, plant, config), cfg["sim"]["horizon"],
                     **_sim_opts(cfg))
    if cfg["outputs"]["trajectory"]:
        write_trajectory_csv(traj, out / "trajectory.csv")
    summary = _summary(traj, plant, config, cfg)
    summary["gains"] = config.gains.to_dict()
    reports = run_checks(cfg, plant, config) if cfg["checks"] else []
    if reports:
        summary["checks"] = [r.to_dict() for r in reports]
    _write_json(out / "summary.json", summary)
    atomic_write_text(out / "config.json", dump_config(cfg) + "\n")
    if traj.blown_up:
        print(f"blow-up at t={traj.t_blowup:.6g}: {traj.metadata.get('failure')}", file=sys.stderr)
        return EXIT_BLOWUP
    if not args.quiet:
        tail = summary.get("tail", {})
        print(f"run complete: {len(traj)} samples, tail sup |e| = {tail.get('sup_abs_e', np.nan):.6g}, "
              f"delta_bar = {summary.get('mismatch', {}).get('delta_bar', np.nan):.6g} -> {out}")
    return EXIT_OK


def _parse_params(specs):
    if not specs:
        raise PostregError("sweep needs at least one --param name=v1,v2,...")
    names, values = [], []
    for spec in specs:
        name, sep, vals = spec.partition("=")
        if not sep or not name or not vals.strip():
            raise PostregError(f"bad --param {spec!r}; expected name=v1,v2,...")
        try:
            vs = [float(v) for v in vals.split(",") if v.strip()]
        except ValueError:
            raise PostregError(f"non-numeric value in --param {spec!r}") from None
        if not vs:
            raise PostregError(f"empty value list in --param {spec!r}")
        names.append(name.strip())
        values.append(vs)
    return names, [dict(zip(names, combo)) for combo in itertools.product(*values)]


def _fmt_value(v):
    return f"{v:g}"


def cmd_sweep(args):
    cfg = _apply_seed(load_config(args.config), args.seed)
    names, grid = _parse_params(args.param)
    for row in grid:  # validate every combination before running anything
        for k, v in row.items():
            set_param(cfg, k, v)
    out = _out_dir(args, cfg, args.config)
    out.mkdir(parents=True, exist_ok=True)

    def row_cfg(params):
        c = cfg
        for k, v in params.items():
            c = set_param(c, k, v)
        return c

    def plant_factory(params):
        return build_plant(row_cfg(params))

    def config_factory(plant, params):
        return build_regulator(row_cfg(params), plant)

    def z0(params):
        c = row_cfg(params)
        p = build_plant(c)
        return initial_state(c, p, build_regulator(c, p))

    rows = sweep(plant_factory, config_factory, grid, cfg["sim"]["horizon"], z0,
                 sim_opts=_sim_opts(cfg), tail_fraction=cfg["sim"]["tail_fraction"],
                 keep_trajectories=args.trajectories)
    write_sweep_csv(rows, out / "sweep.csv", names)
    if args.trajectories:
        for r in rows:
            if r.trajectory is not None:
                tag = "_".join(f"{k}={_fmt_value(v)}" for k, v in r.params.items())
                write_trajectory_csv(r.trajectory, out / "trajectories" / f"{tag}.csv")
    _write_json(out / "sweep_meta.json", dict(params=names, grid=grid, config=cfg,
                                              errors=[r.error for r in rows]))
    if not args.quiet:
        for r in rows:
            print(" ".join(f"{k}={_fmt_value(v)}" for k, v in r.params.items()),
                  f"tail_sup_e={r.tail_sup_e:.6g} delta_bar={r.delta_bar:.6g} bounded={r.bounded}")
    return EXIT_OK if all(r.bounded for r in rows) else EXIT_BLOWUP


def cmd_check(args):
    cfg = _apply_seed(load_config(args.config), args.seed)
    plant = build_plant(cfg)
    config = build_regulator(cfg, plant)
    reports = run_checks(cfg, plant, config)
    out = _out_dir(args, cfg, args.config)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "checks.json", [r.to_dict() for r in reports])
    if not args.quiet:
        for r in reports:
            print(r.summary())
    return EXIT_OK if all(r.passed for r in reports) else EXIT_CHECKS


def cmd_plotdata(args):
    run_dir = Path(args.run_dir)
    written = []
    traj_path = run_dir / "trajectory.csv"
    if traj_path.exists():
        cols = read_csv_columns(traj_path)
        e_names = sorted((k for k in cols if k.startswith("e") and k[1:].isdigit()), key=lambda k: int(k[1:]))
        ya_names = sorted((k for k in cols if k.startswith("ya")), key=lambda k: int(k[2:]))
        left = np.column_stack([cols["t"]] + [cols[k] for k in e_names])
        right = np.column_stack([cols["t"]] + [cols[k] for k in ya_names])
        atomic_write_text(run_dir / "fig1_left.csv", _csv(["t"] + e_names, left))
        atomic_write_text(run_dir / "fig1_right.csv", _csv(["t"] + ya_names, right))
        written += ["fig1_left.csv", "fig1_right.csv"]
    traj_dir = run_dir / "trajectories"
    files = sorted(traj_dir.glob("*.csv")) if traj_dir.is_dir() else []
    if files:
        runs = [(f.stem, read_csv_columns(f)) for f in files]
        runs.sort(key=lambda item: _sort_key(item[0]))
        n = min(len(c["t"]) for _, c in runs)
        t = runs[0][1]["t"][:n]
        data = np.column_stack([t] + [c["e1"][:n] for _, c in runs])
        header = ["t"] + [f"e_{stem.replace('=', '')}" for stem, _ in runs]
        atomic_write_text(run_dir / "fig2.csv", _csv(header, data))
        written.append("fig2.csv")
    if not written:
        print(f"no run artifacts (trajectory.csv or trajectories/*.csv) in {run_dir}", file=sys.stderr)
        return EXIT_INVALID
    if not args.quiet:
        print("wrote " + ", ".join(str(run_dir / w) for w in written))
    return EXIT_OK


def _sort_key(stem):
    parts = []
    for item in stem.split("_"):
        _, _, v = item.partition("=")
        try:
            parts.append(float(v))
        except ValueError:
            parts.append(float("inf"))
    return parts


def _csv(header, data):
    lines = [",".join(header)] + [",".join("%.17g" % v for v in row) for row in data]
    return "\n".join(lines) + "\n"


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output directory (overrides outputs.dir)")
    common.add_argument("--seed", type=int, help="random seed for sampled checks and metadata")
    common.add_argument("--quiet", action="store_true", help="suppress console summaries")

    parser = argparse.ArgumentParser(
        prog="postreg",
        description="Simulate and check postprocessing internal-model regulators.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", parents=[common], help="simulate one configuration")
    p.add_argument("config")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("sweep", parents=[common], help="simulate a parameter grid")
    p.add_argument("config")
    p.add_argument("--param", action="append", default=[],
                   help="name=v1,v2,... (repeat for a Cartesian product)")
    p.add_argument("--trajectories", action="store_true",
                   help="also write one trajectory CSV per row")
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("check", parents=[common], help="run the configured assumption checks")
    p.add_argument("config")
    p.set_defaults(func=cmd_check)
    p = sub.add_parser("plotdata", parents=[common], help="write figure CSVs from run output")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_plotdata)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except PostregError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
