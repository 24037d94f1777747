"""Command-line entry point: extract, calibrate, simulate, heatmap, curves.

Exit codes: 0 ok, 2 input error, 3 empty data, 4 configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import IdmParams
from .calibration import DEFAULT_BOUNDS, PsoConfig, check_bounds, pso_calibrate
from .core import ConstraintViolation, DrsParams
from .dataset import DatasetError, extract_pairs, parse_columns, parse_csv, read_pairs, write_pairs
from .dynamics import DrsModel, IdmModel, ReplayModel, simulate_pair
from .reporting import (
    AxisSpec,
    accel_heatmap,
    boxplot_stats,
    export,
    speed_risk_curves,
    strength_heatmap,
)

log = logging.getLogger("drsurrogate")

EXIT_OK, EXIT_INPUT, EXIT_EMPTY, EXIT_CONFIG = 0, 2, 3, 4
DEFAULT_GRID = ("vF:0:40:100", "gap:1:100:100")


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


@dataclass
class RunConfig:
    command: str
    model: str | None = None
    dataset: str | None = None
    columns: dict | None = None
    pairs: str | None = None
    params_file: str | None = None
    params: dict = field(default_factory=dict)
    out: str = "."
    seed: int | None = None
    dt: float | None = None
    extra: dict = field(default_factory=dict)
    version: str = __version__

    def write(self, out: Path) -> None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "run_config.json").write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")


def default_params(kind: str) -> dict:
    text = resources.files("drsurrogate").joinpath("data", f"{kind}.json").read_text()
    return json.loads(text)


def load_params(kind: str, path: str | None):
    data = default_params(kind)
    if path:
        try:
            user = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise CliError(EXIT_INPUT, f"parameter file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise CliError(EXIT_CONFIG, f"parameter file {path} is not valid JSON: {exc}") from None
        if "best_params" in user:
            if user.get("kind", kind) != kind:
                raise CliError(EXIT_CONFIG, f"{path} holds {user['kind']} parameters, not {kind}")
            user = user["best_params"]
        data.update({k: v for k, v in user.items() if not k.startswith("_")})
    cls = DrsParams if kind == "drs" else IdmParams
    try:
        return cls.from_dict(data).validate()
    except (ConstraintViolation, TypeError) as exc:
        raise CliError(EXIT_CONFIG, f"invalid {kind} parameters: {exc}") from None


def _model(kind, params):
    return DrsModel(params) if kind == "drs" else IdmModel(params)


def _load_records(args):
    try:
        columns = parse_columns(args.columns)
        result = parse_csv(args.dataset, columns)
    except FileNotFoundError:
        raise CliError(EXIT_INPUT, f"dataset not found: {args.dataset}") from None
    except DatasetError as exc:
        raise CliError(EXIT_INPUT, f"{args.dataset}: {exc}") from None
    for line, why in result.rejected:
        print(f"rejected line {line}: {why}", file=sys.stderr)
    return result, columns


def _load_pairs(args):
    if getattr(args, "pairs", None):
        root = Path(args.pairs)
        if not root.is_dir():
            raise CliError(EXIT_INPUT, f"pairs directory not found: {root}")
        try:
            pairs = read_pairs(root)
        except (DatasetError, ValueError, KeyError) as exc:
            raise CliError(EXIT_INPUT, f"{root}: {exc}") from None
    elif getattr(args, "dataset", None):
        result, _ = _load_records(args)
        pairs = extract_pairs(result.records, args.min_duration, args.lane_change_margin).pairs
    else:
        raise CliError(EXIT_CONFIG, "give --pairs DIR or --dataset FILE")
    if not pairs:
        raise CliError(EXIT_EMPTY, "no car-following pairs to process")
    return pairs


def cmd_extract(args) -> int:
    result, columns = _load_records(args)
    summary = extract_pairs(result.records, args.min_duration, args.lane_change_margin)
    out = Path(args.out)
    write_pairs(summary.pairs, out / "pairs")
    durations = np.array([p.duration for p in summary.pairs])
    info = {
        "pairs": len(summary.pairs),
        "records": len(result.records),
        "rejected_rows": [{"line": ln, "reason": why} for ln, why in result.rejected],
        "dropped_short": summary.dropped_short,
        "dropped_jitter": summary.dropped_jitter,
        "lane_changes": summary.lane_changes,
    }
    print(f"pairs: {len(summary.pairs)}")
    if len(durations):
        top = max(5.0 * math.ceil(durations.max() / 5.0), 5.0)
        counts, edges = np.histogram(durations, bins=np.arange(0.0, top + 5.0, 5.0))
        info["duration_histogram"] = {f"{a:g}-{b:g}": int(c) for a, b, c in zip(edges, edges[1:], counts)}
        print("duration histogram (s):")
        for k, c in info["duration_histogram"].items():
            if c:
                print(f"  {k:>10}  {c}")
    (out / "extract_summary.json").write_text(json.dumps(info, indent=2) + "\n")
    RunConfig("extract", dataset=args.dataset, columns=columns, out=args.out,
              extra={"min_duration": args.min_duration,
                     "lane_change_margin": args.lane_change_margin}).write(out)
    if not summary.pairs:
        print("error: no car-following pairs found", file=sys.stderr)
        return EXIT_EMPTY
    return EXIT_OK


def _parse_bounds(args, kind) -> dict:
    bounds = dict(DEFAULT_BOUNDS[kind])
    if args.bounds:
        try:
            user = json.loads(Path(args.bounds).read_text())
        except FileNotFoundError:
            raise CliError(EXIT_INPUT, f"bounds file not found: {args.bounds}") from None
        except json.JSONDecodeError as exc:
            raise CliError(EXIT_CONFIG, f"bounds file is not valid JSON: {exc}") from None
        if args.only_listed:
            bounds = {}
        bounds.update({k: tuple(map(float, v)) for k, v in user.items()})
    for item in args.bound or ():
        try:
            name, lo, hi = item.split(":")
            bounds[name] = (float(lo), float(hi))
        except ValueError:
            raise CliError(EXIT_CONFIG, f"bad --bound {item!r}; expected name:lo:hi") from None
    return bounds


def cmd_calibrate(args) -> int:
    kind = args.model
    base = load_params(kind, args.params)
    bounds = _parse_bounds(args, kind)
    try:
        cfg = PsoConfig(
            swarm_size=args.swarm_size, standby_pool_size=args.standby_size,
            inertia_start=args.inertia_start, inertia_end=args.inertia_end,
            c1=args.c1, c2=args.c2, max_iters=args.max_iters, swap_interval=args.swap_interval,
            seed=args.seed, bounds=bounds, stall_tol=args.stall_tol, stall_iters=args.stall_iters,
        )
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None
    # bounds are checked before touching data so a bad config fails fast
    try:
        check_bounds(kind, bounds, base)
    except ConstraintViolation as exc:
        raise CliError(EXIT_CONFIG, f"infeasible calibration bounds: {exc}") from None
    pairs = _load_pairs(args)
    try:
        report = pso_calibrate(pairs, kind, cfg, base)
    except ConstraintViolation as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "calibration.json").write_text(report.to_json())
    (out / f"{kind}_calibrated.json").write_text(
        json.dumps({k: report.best_params[k] for k in report.free_parameters}
                   | {k: v for k, v in report.best_params.items() if k not in report.free_parameters},
                   indent=2, sort_keys=True) + "\n")
    RunConfig("calibrate", model=kind, dataset=args.dataset, pairs=args.pairs,
              params_file=args.params, params=base.to_dict(), out=args.out, seed=args.seed,
              extra={"pso": report.config}).write(out)
    print(f"best loss: {report.best_loss:.6g} m after {report.iterations} iterations")
    print(f"wall time: {report.wall_time:.2f} s")
    return EXIT_OK


def cmd_simulate(args) -> int:
    kind = args.model
    params = load_params(kind, args.params) if kind != "replay" else None
    pairs = _load_pairs(args)
    out = Path(args.out)
    traces = out / "traces"
    traces.mkdir(parents=True, exist_ok=True)
    per_pair, errs = [], []
    for p in pairs:
        if kind == "replay":
            model = ReplayModel(p.t, p.a_f, mode=args.replay_mode)
        else:
            model = _model(kind, params)
        res = simulate_pair(p, model, args.dt)
        (traces / f"{p.pair_id}.{args.format}").write_bytes(export(res, args.format))
        per_pair.append({"pair_id": p.pair_id, "rmse": res.rmse_position,
                         "collision": res.collision_flag, "numeric_error": res.numeric_error,
                         "min_gap": float(np.min(res.gap))})
        errs.append(res.rmse_position)
    finite = [e for e in errs if math.isfinite(e)]
    stats = boxplot_stats(finite) if finite else None
    summary = {
        "model": kind,
        "n_pairs": len(pairs),
        "mean_rmse": math.fsum(finite) / len(finite) if finite else None,
        "boxplot": asdict(stats) if stats else None,
        "collisions": [r["pair_id"] for r in per_pair if r["collision"]],
        "numeric_errors": [r["pair_id"] for r in per_pair if r["numeric_error"]],
        "pairs": per_pair,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    if stats:
        (out / "boxplot.json").write_bytes(export(stats, "json"))
    RunConfig("simulate", model=kind, dataset=args.dataset, pairs=args.pairs,
              params_file=args.params, params=params.to_dict() if params else {}, out=args.out,
              dt=args.dt, extra={"replay_mode": args.replay_mode} if kind == "replay" else {}).write(out)
    print(f"pairs: {len(pairs)}  mean RMSE: {summary['mean_rmse']}")
    if summary["collisions"]:
        print(f"collisions: {len(summary['collisions'])} ({', '.join(summary['collisions'])})")
    return EXIT_OK


def _grid_axes(items):
    axes = {}
    try:
        for text in list(DEFAULT_GRID) + list(items or ()):
            spec = AxisSpec.parse(text)
            key = spec.name.lower()
            if key not in ("vf", "gap"):
                raise ValueError(f"unknown axis {spec.name!r}; use vF or gap")
            axes[key] = spec
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None
    return axes["vf"], axes["gap"]


def cmd_heatmap(args) -> int:
    kind = args.model
    params = load_params(kind, args.params)
    vf_axis, gap_axis = _grid_axes(args.grid)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        grids = [accel_heatmap(params, args.leader_speed, vf_axis, gap_axis, args.leader_accel)]
        if args.field:
            if kind != "drs":
                raise CliError(EXIT_CONFIG, "--field is only defined for the drs model")
            grids.append(strength_heatmap(params, args.leader_speed, vf_axis, gap_axis, args.leader_accel))
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None
    for g in grids:
        for fmt in ("csv", "json"):
            (out / f"heatmap_{kind}_{g.kind}.{fmt}").write_bytes(export(g, fmt))
    RunConfig("heatmap", model=kind, params_file=args.params, params=params.to_dict(), out=args.out,
              extra={"leader_speed": args.leader_speed, "leader_accel": args.leader_accel,
                     "grid": [asdict(vf_axis), asdict(gap_axis)], "field": args.field}).write(out)
    a = grids[0]
    print(f"{kind} heatmap {vf_axis.steps}x{gap_axis.steps}, leader {args.leader_speed:g} m/s: "
          f"a in [{a.values.min():.3g}, {a.values.max():.3g}] m/s^2, {int(a.clamped.sum())} clamped cells")
    return EXIT_OK


def cmd_curves(args) -> int:
    params = load_params("drs", args.params)
    try:
        axis = AxisSpec.parse(args.axis)
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None
    c = speed_risk_curves(args.leader_speed, axis, params)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["v,strength,acceleration"]
    lines += [f"{v:.6g},{s:.6g},{a:.6g}" for v, s, a in zip(c["v"], c["strength"], c["acceleration"])]
    (out / "speed_curves.csv").write_text("\n".join(lines) + "\n")
    print(f"desired speed behind a {args.leader_speed:g} m/s leader: {c['v_desired']:.4g} m/s")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="drs", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("--log-level", default="WARNING")
    sub = ap.add_subparsers(dest="command", required=True)

    def data_flags(p, required=False):
        p.add_argument("--dataset", required=required, help="trajectory CSV")
        p.add_argument("--columns", help="column overrides, e.g. id=ID,t=Time,v=Speed")
        p.add_argument("--min-duration", type=float, default=5.0)
        p.add_argument("--lane-change-margin", type=float, default=0.5)

    def model_flags(p, choices=("drs", "idm")):
        p.add_argument("--model", choices=choices, default="drs")
        p.add_argument("--params", help="JSON parameter overrides or a calibration report")

    p = sub.add_parser("extract", help="extract car-following pairs from a trajectory CSV")
    data_flags(p, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("calibrate", help="fit model parameters with the standby-pool PSO")
    data_flags(p)
    model_flags(p)
    p.add_argument("--pairs", help="directory written by `extract`")
    p.add_argument("--bounds", help="JSON {name: [lo, hi]} overriding default bounds")
    p.add_argument("--only-listed", action="store_true", help="calibrate only parameters in --bounds")
    p.add_argument("--bound", action="append", help="name:lo:hi (repeatable)")
    d = PsoConfig()
    p.add_argument("--swarm-size", type=int, default=d.swarm_size)
    p.add_argument("--standby-size", type=int, default=d.standby_pool_size)
    p.add_argument("--max-iters", type=int, default=d.max_iters)
    p.add_argument("--swap-interval", type=int, default=d.swap_interval)
    p.add_argument("--inertia-start", type=float, default=d.inertia_start)
    p.add_argument("--inertia-end", type=float, default=d.inertia_end)
    p.add_argument("--c1", type=float, default=d.c1)
    p.add_argument("--c2", type=float, default=d.c2)
    p.add_argument("--stall-tol", type=float, default=d.stall_tol)
    p.add_argument("--stall-iters", type=int, default=d.stall_iters)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("simulate", help="simulate followers and report RMSE statistics")
    data_flags(p)
    model_flags(p, ("drs", "idm", "replay"))
    p.add_argument("--replay-mode", choices=("midpoint", "sample"), default="midpoint",
                   help="replay: step-centred interpolation or hold the sample at the step start")
    p.add_argument("--pairs")
    p.add_argument("--dt", type=float, default=None, help="resample pairs to this step (s)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--seed", type=int, default=0, help="accepted for symmetry; simulation is deterministic")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("heatmap", help="acceleration (and field) grid behind a steady leader")
    model_flags(p)
    p.add_argument("--leader-speed", type=float, default=20.0)
    p.add_argument("--leader-accel", type=float, default=0.0)
    p.add_argument("--grid", action="append", help="vF:min:max:steps or gap:min:max:steps")
    p.add_argument("--field", action="store_true", help="also write the DRS field-strength grid")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("curves", help="speed-risk strength and acceleration along follower speed")
    p.add_argument("--params")
    p.add_argument("--leader-speed", type=float, default=17.0)
    p.add_argument("--axis", default="v:0:40:81")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_curves)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
