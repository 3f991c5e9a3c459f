"""Scenario configs, policy factory, and the sweep runner behind the CLI."""
from __future__ import annotations

import dataclasses
import hashlib
import itertools
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .baselines import BaselineConfig, make_baseline
from .engine import InfeasibleJob, RunReport, region_overlap, run
from .market import JobSpec
from .oracle import ReplayPolicy, make_lifetime_oracle, solve
from .policy import SkyNomad
from .trace import SyntheticTraceSpec, Trace, generate_trace, load_prices, load_trace

POLICIES = ("skynomad", "skynomad_o", "up", "up_s", "up_a", "up_ap", "od_only", "asm", "optimal")
NETTED = {"skynomad", "skynomad_o", "up", "up_s", "up_a", "up_ap", "od_only", "asm"}


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class ScenarioConfig:
    trace_path: str | None = None
    price_path: str | None = None
    synthetic: SyntheticTraceSpec | None = None
    job: JobSpec = field(default_factory=JobSpec)
    policies: list = field(default_factory=lambda: ["skynomad", "up_s", "od_only"])
    region_filter: list | None = None
    deadline_ratios: list | None = None
    region_counts: list | None = None
    ckpt_sizes_gb: list | None = None
    geo_subsets: dict | None = None  # name -> list of region labels
    job_count: int = 1
    start_spacing_h: float | None = None  # None -> spread evenly over the trace
    initial_region: int = 0
    oracle_step_factor: int = 1
    seed: int = 0
    output_dir: str = "out"

    # ------------------------------------------------------------- validation
    def validate(self) -> None:
        if not self.policies:
            raise ConfigError("policies", "at least one policy is required")
        for i, p in enumerate(self.policies):
            if p not in POLICIES:
                raise ConfigError(f"policies[{i}]", f"unknown policy {p!r}")
        if self.trace_path is None and self.synthetic is None:
            raise ConfigError("trace_path", "either trace_path or synthetic is required")
        if self.job_count < 1:
            raise ConfigError("job_count", "must be >= 1")
        if self.oracle_step_factor < 1:
            raise ConfigError("oracle_step_factor", "must be >= 1")
        for name in ("deadline_ratios", "region_counts", "ckpt_sizes_gb"):
            v = getattr(self, name)
            if v is not None and len(v) == 0:
                raise ConfigError(name, "sweep axis must be non-empty when given")
        if self.geo_subsets is not None and len(self.geo_subsets) == 0:
            raise ConfigError("geo_subsets", "sweep axis must be non-empty when given")
        if self.synthetic is not None:
            try:
                self.synthetic.validate()
            except ValueError as e:
                raise ConfigError("synthetic", str(e)) from None

    # ---------------------------------------------------------- serialization
    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["job"] = self.job.to_dict()
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        for k in d:
            if k not in known:
                raise ConfigError(k, "unknown field")
        d = dict(d)
        try:
            d["job"] = JobSpec(**d.get("job", {}))
        except (TypeError, ValueError) as e:
            raise ConfigError("job", str(e)) from None
        if d.get("synthetic") is not None:
            syn = dict(d["synthetic"])
            syn["volatile_periods"] = [tuple(p) for p in syn.get("volatile_periods", [])]
            try:
                d["synthetic"] = SyntheticTraceSpec(**syn)
            except TypeError as e:
                raise ConfigError("synthetic", str(e)) from None
        cfg = cls(**d)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "ScenarioConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError("<root>", f"invalid JSON: {e}") from None
        if not isinstance(d, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        return cls.from_dict(d)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    def replace(self, **kw) -> "ScenarioConfig":
        return dataclasses.replace(self, **kw)


def apply_env(cfg: ScenarioConfig) -> ScenarioConfig:
    out = os.environ.get("NOMADSIM_OUT")
    return cfg.replace(output_dir=out) if out else cfg


def parallelism(default: int | None = None) -> int:
    env = os.environ.get("NOMADSIM_PARALLEL")
    if env:
        return max(1, int(env))
    if default:
        return default
    return os.cpu_count() or 1


# ------------------------------------------------------------------ scenario

def load_scenario_trace(cfg: ScenarioConfig) -> Trace:
    if cfg.trace_path is not None:
        if not os.path.exists(cfg.trace_path):
            raise ConfigError("trace_path", f"file not found: {cfg.trace_path}")
        trace = load_trace(cfg.trace_path)
        if cfg.price_path is not None:
            if not os.path.exists(cfg.price_path):
                raise ConfigError("price_path", f"file not found: {cfg.price_path}")
            trace = Trace(trace.regions, trace.availability, load_prices(cfg.price_path, trace))
        elif trace.prices is None:
            raise ConfigError("price_path", "required when the trace file carries no prices")
    else:
        trace = generate_trace(cfg.synthetic)
    if cfg.region_filter:
        try:
            keep = [trace.index_of(lab) for lab in cfg.region_filter]
        except ValueError as e:
            raise ConfigError("region_filter", str(e)) from None
        trace = trace.subset(keep)
    return trace


def regions_by_availability(trace: Trace) -> list[int]:
    frac = trace.samples.mean(axis=1)
    return sorted(range(trace.n_regions), key=lambda r: (-frac[r], r))


def start_indices(trace: Trace, job: JobSpec, count: int, spacing_h: float | None) -> list[int]:
    n_steps = math.ceil(job.T * 3600 / trace.interval_s - 1e-9)
    room = trace.n_samples - n_steps
    if room < 0:
        raise InfeasibleJob(f"trace too short: {trace.n_samples} samples for {n_steps} steps")
    if spacing_h is None:
        if count == 1:
            return [0]
        return [int(round(x)) for x in np.linspace(0, room, count)]
    step = int(round(spacing_h * 3600 / trace.interval_s))
    starts = [k * step for k in range(count)]
    if starts[-1] > room:
        raise InfeasibleJob(f"start spacing {spacing_h}h x {count} jobs exceeds the trace")
    return starts


def build_policy(name: str, trace: Trace, start: int):
    if name == "skynomad":
        return SkyNomad()
    if name == "skynomad_o":
        return SkyNomad(lifetime_oracle=make_lifetime_oracle(trace, start))
    if name == "asm":
        return make_baseline(BaselineConfig("spot_only_failover"))
    return make_baseline(BaselineConfig(name))


def run_policy(name: str, trace: Trace, job: JobSpec, start: int, initial_region: int = 0,
               oracle_step_factor: int = 1, seed: int = 0) -> list[RunReport]:
    """All runs that make up one policy's result at one start time.

    Single-region UP is run once per region (its result is their mean); the
    oracle's schedule is replayed through the engine.
    """
    if name == "optimal":
        sol = solve(trace, None, job, start_index=start, step_factor=oracle_step_factor)
        if not sol.feasible:
            raise InfeasibleJob("oracle found no feasible schedule")
        if sol.relaxed:
            rep = _relaxed_report(sol, trace, job, start, seed)
            return [rep]
        rep = run(trace, None, job, ReplayPolicy(sol.schedule), seed=seed, start_index=start,
                  initial_region=sol.replay_region())
        return [rep]
    if name == "up":
        return [run(trace, None, job, build_policy(name, trace, start), seed=seed,
                    start_index=start, initial_region=r, label=f"up@{r}")
                for r in range(trace.n_regions)]
    return [run(trace, None, job, build_policy(name, trace, start), seed=seed,
                start_index=start, initial_region=initial_region)]


def _relaxed_report(sol, trace, job, start, seed) -> RunReport:
    return RunReport(policy="optimal", total_cost=sol.min_cost, compute=float("nan"),
                     egress=float("nan"), probes=0.0, deadline_met=True, completed=True,
                     finish_time=float("nan"), migrations=0, preemptions=0, probe_count=0,
                     mode_time_s={}, progress_s=int(round(job.P * 3600)), job=job.to_dict(),
                     start_index=start, initial_region=0, step_s=trace.interval_s, seed=seed,
                     config_hash="relaxed", label="optimal(relaxed)")


@dataclass
class PolicyResult:
    policy: str
    costs: list
    deadline_met: list
    selection: list
    migrations: list
    reports: list
    egress: list = field(default_factory=list)

    @property
    def mean_cost(self) -> float:
        return float(np.mean(self.costs))

    @property
    def std_err(self) -> float:
        n = len(self.costs)
        return float(np.std(self.costs, ddof=1) / math.sqrt(n)) if n > 1 else 0.0

    @property
    def deadline_rate(self) -> float:
        return float(np.mean(self.deadline_met))

    @property
    def selection_accuracy(self) -> float | None:
        vals = [s for s in self.selection if s is not None]
        return float(np.mean(vals)) if vals else None

    @property
    def mean_migrations(self) -> float:
        return float(np.mean(self.migrations))

    @property
    def mean_egress(self) -> float:
        return float(np.mean(self.egress)) if self.egress else 0.0


def simulate(cfg: ScenarioConfig, trace: Trace | None = None) -> dict[str, PolicyResult]:
    """Every configured policy at every job start; ``up`` is averaged over regions."""
    trace = trace if trace is not None else load_scenario_trace(cfg)
    starts = start_indices(trace, cfg.job, cfg.job_count, cfg.start_spacing_h)
    out = {}
    for name in cfg.policies:
        res = PolicyResult(name, [], [], [], [], [])
        for s in starts:
            reps = run_policy(name, trace, cfg.job, s, cfg.initial_region,
                              cfg.oracle_step_factor, cfg.seed)
            res.costs.append(float(np.mean([r.total_cost for r in reps])))
            res.deadline_met.append(all(r.deadline_met for r in reps))
            sel = [r.selection_accuracy for r in reps if r.selection_accuracy is not None]
            res.selection.append(float(np.mean(sel)) if sel else None)
            res.migrations.append(float(np.mean([r.migrations for r in reps])))
            res.egress.append(float(np.mean([r.egress for r in reps])))
            res.reports.extend(reps)
        out[name] = res
    if "optimal" in out:
        opt = {r.start_index: r for r in out["optimal"].reports if r.schedule}
        for res in out.values():
            for r in res.reports:
                if r.start_index in opt and r is not opt[r.start_index]:
                    r.region_overlap_with_optimal = region_overlap(r, opt[r.start_index])
    return out


# --------------------------------------------------------------------- sweeps

def sweep_cells(cfg: ScenarioConfig, trace: Trace) -> list[tuple]:
    """Cross product of the configured axes, each as a standalone config."""
    ratios = cfg.deadline_ratios or [None]
    counts = cfg.region_counts or [None]
    ckpts = cfg.ckpt_sizes_gb or [None]
    geos = list(cfg.geo_subsets.items()) if cfg.geo_subsets else [(None, None)]
    order = [trace.labels[r] for r in regions_by_availability(trace)]
    cells = []
    base = cfg.replace(deadline_ratios=None, region_counts=None, ckpt_sizes_gb=None,
                       geo_subsets=None)
    for ratio, count, ckpt, (geo, labels) in itertools.product(ratios, counts, ckpts, geos):
        axis = {"deadline_ratio": ratio, "region_count": count, "ckpt_gb": ckpt, "geo": geo}
        job = cfg.job
        try:
            if ratio is not None:
                job = dataclasses.replace(job, T=ratio * job.P)
            if ckpt is not None:
                job = dataclasses.replace(job, ckpt_gb=float(ckpt))
        except ValueError:
            cells.append((axis, None, list(cfg.policies)))
            continue
        region_filter = cfg.region_filter
        if labels is not None:
            region_filter = list(labels)
        elif count is not None:
            region_filter = order[:count]
        cells.append((axis, base.replace(job=job, region_filter=region_filter), list(cfg.policies)))
    return cells


def _run_cell(args) -> list[dict]:
    axis, cell_cfg, policies = args
    rows = []
    if cell_cfg is None:
        return [dict(axis, policy=p, status="infeasible: deadline below work plus cold start")
                for p in policies]
    try:
        results = simulate(cell_cfg)
    except InfeasibleJob as e:
        return [dict(axis, policy=p, status=f"infeasible: {e}") for p in cell_cfg.policies]
    digest = cell_cfg.digest()
    for name, res in results.items():
        sel = res.selection_accuracy
        rows.append(dict(axis, policy=name, mean_cost=res.mean_cost, std_err=res.std_err,
                         deadline_rate=res.deadline_rate,
                         selection_accuracy="n/a" if sel is None else sel,
                         migrations=res.mean_migrations, mean_egress=res.mean_egress,
                         n=len(res.costs), status="ok",
                         config_hash=digest, config=cell_cfg.to_json()))
    return rows


MATRIX_COLUMNS = ["deadline_ratio", "region_count", "ckpt_gb", "geo", "policy", "mean_cost",
                  "std_err", "deadline_rate", "selection_accuracy", "migrations", "mean_egress", "n",
                  "status",
                  "config_hash"]


def sweep(cfg: ScenarioConfig, workers: int = 1) -> list[dict]:
    trace = load_scenario_trace(cfg)
    cells = sweep_cells(cfg, trace)
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_cell, cells))
    else:
        chunks = [_run_cell(c) for c in cells]
    return [row for chunk in chunks for row in chunk]
