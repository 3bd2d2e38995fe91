"""Command-line interface.

Exit status: 0 on success, 1 on invalid input or usage, 2 on I/O failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import geomap as gm
from .config import ConfigError, load_run_config, load_yaml, policy_from_dict, tree_params_from_dict
from .metrics import PredictedRateMetric
from .predictor import (
    RateModel,
    cross_validate,
    fit_model,
    training_set,
    training_set_from_log,
)
from .rng import substream
from .sim import SimConfig, SimReport, compare, paired_baseline, read_tx_log, run
from .synth import generate_trace, highway_scenario, load_scenario
from .trace import TraceError, load_column_map, read_trace_file, write_trace

DEFAULT_PAYLOAD_RANGE = (10_000.0, 1_200_000.0)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _write(path: str, data: bytes | str) -> None:
    p = Path(path)
    if p.parent and not p.parent.exists():
        p.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    p.write_bytes(data)


def _emit(args, summary: dict, text: str) -> None:
    if getattr(args, "json", False):
        print(json.dumps(summary, indent=2))
    else:
        print(text)


def _read_trace(args, path: str):
    cmap = load_column_map(args.column_map) if getattr(args, "column_map", None) else None
    try:
        return read_trace_file(path, cmap, lenient=getattr(args, "lenient", False))
    except TraceError as exc:
        raise TraceError(f"{path}: {exc}") from None


def _load_map(path: Optional[str]):
    if path is None:
        return None
    return gm.from_json(Path(path).read_text(encoding="utf-8"))


def _training_data(args, seed: int):
    trace = _read_trace(args, args.trace)
    grid = _load_map(args.map)
    fallback = None
    if grid is not None:
        fallback = grid.global_mean_rate() if args.map_fallback is None else args.map_fallback
        fallback = 0.0 if fallback is None else fallback
    if args.tx_log:
        records = read_tx_log(Path(args.tx_log).read_bytes())
        X, y = training_set_from_log(trace, records, grid, fallback)
    else:
        lo, hi = args.payload_min, args.payload_max
        if not 0 <= lo <= hi:
            raise ConfigError("payload range must satisfy 0 <= min <= max")
        payloads = substream(seed, "train.payload").uniform(lo, hi, len(trace))
        X, y = training_set(trace, payloads, grid, fallback)
    return X, y, fallback


def _tree_params(args):
    if args.params is None:
        return tree_params_from_dict(None)
    data = load_yaml(args.params)
    return tree_params_from_dict(data.get("predictor", data))


# -- subcommands -----------------------------------------------------------------

def cmd_generate(args) -> int:
    scenario = load_scenario(args.scenario, args.seed) if args.scenario else highway_scenario(args.seed)
    trace = generate_trace(scenario)
    _write(args.out, write_trace(trace))
    _emit(args, {"out": args.out, "snapshots": len(trace), "seed": scenario.seed},
          f"wrote {len(trace)} snapshots to {args.out} (seed {scenario.seed})")
    return 0


def cmd_train(args) -> int:
    X, y, fallback = _training_data(args, args.seed)
    model = fit_model(X, y, _tree_params(args), fallback)
    _write(args.out, model.to_json())
    _emit(args, {"out": args.out, "rows": len(y), "leaves": model.tree.n_leaves, "depth": model.tree.depth},
          f"trained on {len(y)} rows: {model.tree.n_leaves} leaves, depth {model.tree.depth} -> {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    X, y, _ = _training_data(args, args.seed)
    report = cross_validate(X, y, _tree_params(args), args.k, args.seed)
    if report["r"] is None:
        report["r"] = "undefined"
    text = json.dumps(report, indent=2)
    if args.out:
        _write(args.out, text + "\n")
    print(text)
    return 0


def cmd_build_map(args) -> int:
    traces = [_read_trace(args, p) for p in args.traces]
    grid = gm.build_map(traces, args.cell)
    _write(args.out, gm.export_csv(grid))
    if args.map_out:
        _write(args.map_out, gm.to_json(grid))
    _emit(args, {"out": args.out, "cells": len(grid.cells), "snapshots": grid.total_count},
          f"{grid.total_count} snapshots in {len(grid.cells)} grid cells -> {args.out}")
    return 0


def cmd_simulate(args) -> int:
    cfg = load_run_config(args.config) if args.config else None
    tick = args.tick if args.tick is not None else (cfg.tick_s if cfg else 1.0)
    rate = args.sensor_rate if args.sensor_rate is not None else (cfg.sensor_rate_Bps if cfg else 10_000.0)
    seed = args.seed if args.seed is not None else (cfg.seed if cfg else 0)
    policy = cfg.policy if cfg else None
    if args.periodic is not None:
        policy = policy_from_dict({"kind": "periodic", "interval_s": args.periodic})
    if policy is None:
        raise ConfigError("no policy given (config 'policy' section or --periodic)")

    model_path = args.model or (cfg.model_path if cfg else None)
    map_path = args.map or (cfg.map_path if cfg else None)
    model = RateModel.from_json(Path(model_path).read_text(encoding="utf-8")) if model_path else None
    if getattr(policy, "metric", None) is not None and isinstance(policy.metric, PredictedRateMetric) \
            and model is None:
        raise ConfigError("predicted_rate metric requires a model (config 'model' or --model)")
    grid = _load_map(str(map_path) if map_path else None)

    trace = _read_trace(args, args.trace)
    report = run(trace, SimConfig(policy, tick, rate, seed, model, grid))
    _write(args.out, report.to_json())
    if args.tx_log:
        _write(args.tx_log, report.tx_log_csv())
    summary = {"out": args.out, "tx_count": report.tx_count, "mean_tx_rate_mbps": report.mean_tx_rate_mbps,
               "mean_gap_s": report.mean_gap_s}
    if args.baseline_out:
        base = run(trace, SimConfig(paired_baseline(report), tick, rate, seed))
        _write(args.baseline_out, base.to_json())
        summary["baseline_out"] = args.baseline_out
        summary["baseline_mean_tx_rate_mbps"] = base.mean_tx_rate_mbps
    _emit(args, summary,
          f"{report.tx_count} transmissions, mean rate {report.mean_tx_rate_mbps} Mbit/s -> {args.out}")
    return 0


def cmd_compare(args) -> int:
    base = SimReport.from_dict(json.loads(Path(args.baseline).read_text(encoding="utf-8")))
    cand = SimReport.from_dict(json.loads(Path(args.candidate).read_text(encoding="utf-8")))
    gain = compare(base, cand)
    text = gain.to_json()
    if args.out:
        _write(args.out, text)
    print(text, end="")
    return 0


# -- parser -------------------------------------------------------------------------

def _add_trace_opts(p) -> None:
    p.add_argument("--column-map", help="YAML file mapping canonical field names to source columns")
    p.add_argument("--lenient", action="store_true", help="clamp out-of-range indicators instead of failing")


def _add_training_opts(p) -> None:
    p.add_argument("--trace", required=True, help="trace CSV with rate_mbps ground truth")
    p.add_argument("--tx-log", help="transmissions log CSV supplying payload sizes and achieved rates")
    p.add_argument("--params", help="YAML file with tree parameters (top level or 'predictor' section)")
    p.add_argument("--map", help="map JSON (from build-map --map-out) adding the map-rate feature")
    p.add_argument("--map-fallback", type=float, help="map-rate value for unobserved cells (default: map mean)")
    p.add_argument("--payload-min", type=float, default=DEFAULT_PAYLOAD_RANGE[0],
                   help="lower bound of synthetic payload sizes in bytes, used without --tx-log")
    p.add_argument("--payload-max", type=float, default=DEFAULT_PAYLOAD_RANGE[1],
                   help="upper bound of synthetic payload sizes in bytes, used without --tx-log")
    p.add_argument("--seed", type=int, default=0, help="seed for payload sampling and fold shuffling")
    _add_trace_opts(p)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cattx", description="Context-aware transmission of vehicular sensor data.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="generate a synthetic drive-test trace")
    p.add_argument("--scenario", help="scenario YAML (default: bundled highway scenario)")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--out", required=True, help="output trace CSV")
    p.add_argument("--json", action="store_true", help="machine-readable summary on stdout")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train the data-rate model tree")
    _add_training_opts(p)
    p.add_argument("--out", required=True, help="output model JSON")
    p.add_argument("--json", action="store_true", help="machine-readable summary on stdout")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="k-fold cross-validation of the model tree (prints JSON)")
    _add_training_opts(p)
    p.add_argument("--k", type=int, default=10, help="number of folds")
    p.add_argument("--out", help="also write the JSON report to this file")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("build-map", help="aggregate traces into a connectivity grid map")
    p.add_argument("--traces", nargs="+", required=True, help="trace CSV files")
    p.add_argument("--cell", type=float, default=100.0, help="grid cell size in meters")
    p.add_argument("--out", required=True, help="output CSV for plotting")
    p.add_argument("--map-out", help="also write the map as JSON for train/simulate --map")
    p.add_argument("--json", action="store_true", help="machine-readable summary on stdout")
    _add_trace_opts(p)
    p.set_defaults(func=cmd_build_map)

    p = sub.add_parser("simulate", help="replay a trace under a transmission policy")
    p.add_argument("--trace", required=True, help="trace CSV with rate_mbps ground truth")
    p.add_argument("--config", help="run config YAML (sim, policy, model, map)")
    p.add_argument("--periodic", type=float, help="use a periodic policy with this interval in seconds")
    p.add_argument("--model", help="model JSON (overrides config)")
    p.add_argument("--map", help="map JSON (overrides config)")
    p.add_argument("--tick", type=float, help="tick length in seconds (overrides config)")
    p.add_argument("--sensor-rate", type=float, help="sensor data rate in bytes/s (overrides config)")
    p.add_argument("--seed", type=int, help="seed for transmission decisions (overrides config)")
    p.add_argument("--out", required=True, help="output report JSON")
    p.add_argument("--tx-log", help="also write the transmissions log CSV")
    p.add_argument("--baseline-out", help="also run the paired periodic baseline and write its report")
    p.add_argument("--json", action="store_true", help="machine-readable summary on stdout")
    _add_trace_opts(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="gain of a candidate report over a baseline report")
    p.add_argument("--baseline", required=True, help="baseline report JSON")
    p.add_argument("--candidate", required=True, help="candidate report JSON")
    p.add_argument("--out", help="also write the gain report JSON to this file")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except OSError as exc:
        print(f"cattx: I/O error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"cattx: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
