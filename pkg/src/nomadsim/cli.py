"""Command line entry point: simulate, sweep, gen-trace, report."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import glob
import json
import os
import sys
from pathlib import Path

import numpy as np

from .engine import InfeasibleJob
from .harness import (MATRIX_COLUMNS, NETTED, ConfigError, ScenarioConfig, apply_env,
                      parallelism, simulate, sweep)
from .trace import (SyntheticTraceSpec, TraceError, generate_trace, run_lengths, save_prices,
                    save_trace, tail_slope)

SUMMARY_COLUMNS = ["policy", "mean_cost", "std_err", "deadline_rate", "selection_accuracy",
                   "migrations", "mean_egress", "n"]


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _load_config(args) -> ScenarioConfig:
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError("config", f"file not found: {path}")
        cfg = ScenarioConfig.from_json(path.read_text(encoding="utf-8"))
    else:
        cfg = ScenarioConfig(synthetic=SyntheticTraceSpec(region_count=2, horizon_h=200.0))
    over = {}
    if getattr(args, "policies", None):
        over["policies"] = [p.strip() for p in args.policies.split(",") if p.strip()]
    if getattr(args, "trace", None):
        over["trace_path"] = args.trace
        over["synthetic"] = None
    if getattr(args, "prices", None):
        over["price_path"] = args.prices
    if getattr(args, "job_count", None):
        over["job_count"] = args.job_count
    if getattr(args, "seed", None) is not None:
        over["seed"] = args.seed
    if getattr(args, "deadline_ratios", None):
        over["deadline_ratios"] = _floats(args.deadline_ratios)
    if getattr(args, "region_counts", None):
        over["region_counts"] = _ints(args.region_counts)
    if getattr(args, "ckpt_sizes", None):
        over["ckpt_sizes_gb"] = _floats(args.ckpt_sizes)
    cfg = apply_env(cfg.replace(**over))
    if getattr(args, "out", None):
        cfg = cfg.replace(output_dir=args.out)
    cfg.validate()
    return cfg


def _write_csv(path: Path, columns: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in columns})


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = simulate(cfg)
    rows = []
    for name, res in results.items():
        docs = [r.to_dict() for r in res.reports]
        (out / f"report_{name}.json").write_text(json.dumps(docs, sort_keys=True), encoding="utf-8")
        with open(out / f"decisions_{name}.jsonl", "w", encoding="utf-8") as fh:
            for r in res.reports:
                for d in r.decisions:
                    fh.write(json.dumps(dict(d, run=r.label or r.policy, start=r.start_index),
                                        sort_keys=True) + "\n")
        sel = res.selection_accuracy
        rows.append({"policy": name, "mean_cost": res.mean_cost, "std_err": res.std_err,
                     "deadline_rate": res.deadline_rate,
                     "selection_accuracy": "n/a" if sel is None else sel,
                     "migrations": res.mean_migrations, "mean_egress": res.mean_egress,
                     "n": len(res.costs)})
    _write_csv(out / "summary.csv", SUMMARY_COLUMNS, rows)
    (out / "config.json").write_text(cfg.to_json(), encoding="utf-8")

    print(f"{'policy':<12} {'mean_cost':>10} {'deadline':>9} {'sel_acc':>8}")
    for row in rows:
        sel = row["selection_accuracy"]
        sel = sel if isinstance(sel, str) else f"{sel:.3f}"
        print(f"{row['policy']:<12} {row['mean_cost']:>10.3f} {row['deadline_rate']:>9.2f} {sel:>8}")

    status = 0
    if "optimal" in results and "skynomad" in results:
        opt, sky = results["optimal"].costs, results["skynomad"].costs
        ok = all(o <= s + 1e-9 for o, s in zip(opt, sky))
        print(f"dominance optimal <= skynomad: {'OK' if ok else 'VIOLATED'}")
        if not ok:
            status = 1
    for name, res in results.items():
        if name in NETTED and not all(res.deadline_met):
            print(f"error: safety-netted policy {name} missed a deadline", file=sys.stderr)
            status = 1
    return status


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    if not (cfg.deadline_ratios or cfg.region_counts or cfg.ckpt_sizes_gb or cfg.geo_subsets):
        raise ConfigError("deadline_ratios", "a sweep needs at least one axis")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    workers = args.parallel if args.parallel else parallelism()
    rows = sweep(cfg, workers)
    _write_csv(out / "matrix.csv", MATRIX_COLUMNS, rows)
    cells = out / "cells"
    cells.mkdir(exist_ok=True)
    for row in rows:
        if row.get("config"):
            (cells / f"{row['config_hash']}.json").write_text(row["config"], encoding="utf-8")
    print(f"{len(rows)} rows -> {out / 'matrix.csv'}")
    return 0


def cmd_gen_trace(args) -> int:
    if args.spec:
        doc = json.loads(Path(args.spec).read_text(encoding="utf-8"))
        doc["volatile_periods"] = [tuple(p) for p in doc.get("volatile_periods", [])]
        spec = SyntheticTraceSpec(**doc)
    else:
        spec = SyntheticTraceSpec()
    over = {k: v for k, v in (("region_count", args.regions), ("horizon_h", args.horizon_h),
                              ("seed", args.seed), ("lifetime_tail_exponent", args.tail),
                              ("price_spread", args.spread)) if v is not None}
    spec = dataclasses.replace(spec, **over)
    trace = generate_trace(spec)
    out = Path(os.environ.get("NOMADSIM_OUT") or args.out)
    out.mkdir(parents=True, exist_ok=True)
    ext = "csv" if args.format == "csv" else "json"
    save_trace(trace, out / f"trace.{ext}")
    save_prices(trace.prices, out / "prices.json", trace.labels)
    (out / "spec.json").write_text(json.dumps(dataclasses.asdict(spec), sort_keys=True),
                                   encoding="utf-8")
    step_h = trace.interval_s / 3600.0
    lifetimes = []
    print(f"{'region':<12} {'avail':>6} {'median_life_h':>14}")
    for r, label in enumerate(trace.labels):
        runs = run_lengths(trace.samples[r]) * step_h
        lifetimes.extend(runs)
        med = float(np.median(runs)) if len(runs) else float("nan")
        print(f"{label:<12} {trace.samples[r].mean():>6.3f} {med:>14.3f}")
    if len(lifetimes) >= 10:
        print(f"tail slope (log-log survival): {tail_slope(np.array(lifetimes)):.3f}")
    return 0


def _read_csv(path: Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


FIGURES = {"deadline_ratio": "cost_vs_deadline_ratio.csv", "region_count": "cost_vs_region_count.csv",
           "ckpt_gb": "cost_vs_ckpt_size.csv", "geo": "cost_by_geo_constraint.csv"}


def cmd_report(args) -> int:
    summaries, matrix, timeline = [], [], []
    for d in args.dirs:
        d = Path(d)
        if (d / "summary.csv").exists():
            summaries += [dict(r, source=str(d)) for r in _read_csv(d / "summary.csv")]
        if (d / "matrix.csv").exists():
            matrix += [dict(r, source=str(d)) for r in _read_csv(d / "matrix.csv")]
        for path in sorted(glob.glob(str(d / "report_*.json"))):
            for rep in json.loads(Path(path).read_text(encoding="utf-8")):
                for ev in rep.get("events", []):
                    timeline.append({"policy": rep.get("label") or rep["policy"],
                                     "start": rep["start_index"], "t": ev["t"],
                                     "region": ev.get("region", ev.get("dst")),
                                     "mode": ev.get("mode", ""), "event": ev["kind"]})
    if not (summaries or matrix or timeline):
        print("error: no summary.csv, matrix.csv or report files found", file=sys.stderr)
        return 2
    out = Path(os.environ.get("NOMADSIM_OUT") or args.out)
    out.mkdir(parents=True, exist_ok=True)
    if summaries:
        _write_csv(out / "comparison.csv", ["policy", "source"] + SUMMARY_COLUMNS[1:],
                   sorted(summaries, key=lambda r: (r["policy"], r["source"])))
        print(f"{'policy':<12} {'mean_cost':>10}  source")
        for r in sorted(summaries, key=lambda r: (r["policy"], r["source"])):
            print(f"{r['policy']:<12} {float(r['mean_cost']):>10.3f}  {r['source']}")
    for axis, name in FIGURES.items():
        rows = [r for r in matrix if r.get(axis) not in (None, "") and r.get("status") == "ok"]
        if rows:
            _write_csv(out / name, [axis, "policy", "mean_cost", "std_err", "deadline_rate",
                                    "selection_accuracy", "source"], rows)
    if timeline:
        _write_csv(out / "timeline.csv", ["policy", "start", "t", "region", "mode", "event"],
                   timeline)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nomadsim", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run policies on one scenario")
    sim.add_argument("config", nargs="?")
    sim.add_argument("--policies")
    sim.add_argument("--trace")
    sim.add_argument("--prices")
    sim.add_argument("--job-count", type=int)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--out")
    sim.set_defaults(func=cmd_simulate)

    sw = sub.add_parser("sweep", help="cross product of sweep axes")
    sw.add_argument("config", nargs="?")
    sw.add_argument("--policies")
    sw.add_argument("--trace")
    sw.add_argument("--prices")
    sw.add_argument("--job-count", type=int)
    sw.add_argument("--seed", type=int)
    sw.add_argument("--deadline-ratios")
    sw.add_argument("--region-counts")
    sw.add_argument("--ckpt-sizes")
    sw.add_argument("--parallel", type=int)
    sw.add_argument("--out")
    sw.set_defaults(func=cmd_sweep)

    gen = sub.add_parser("gen-trace", help="write a synthetic trace and price file")
    gen.add_argument("--spec")
    gen.add_argument("--regions", type=int)
    gen.add_argument("--horizon-h", type=float)
    gen.add_argument("--seed", type=int)
    gen.add_argument("--tail", type=float)
    gen.add_argument("--spread", type=float)
    gen.add_argument("--format", choices=["json", "csv"], default="json")
    gen.add_argument("--out", default="trace_out")
    gen.set_defaults(func=cmd_gen_trace)

    rep = sub.add_parser("report", help="merge run directories into tables")
    rep.add_argument("dirs", nargs="+")
    rep.add_argument("--out", default="report_out")
    rep.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (TraceError, InfeasibleJob, FileNotFoundError, json.JSONDecodeError, TypeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
