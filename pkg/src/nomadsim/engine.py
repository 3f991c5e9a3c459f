"""Discrete-time simulation of one job under one policy on one trace.

Internally all times are integer seconds so progress, cold start and mode
accounting are exact; policies and reports see hours.

Per step ``k`` (trace sample ``start_index + k``):

1. a running spot instance whose region just became unavailable is
   preempted (no work is lost; checkpoints are continuous by default);
2. the policy decides (and may probe);
3. the decision's launch attempts are executed in order;
4. cost and progress accrue over the step. Billing stops the moment the
   work completes.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .market import CostLedger, JobSpec, compute_cost, migration_cost, probe_cost
from .observer import Observation, Source
from .policy import Decision, Policy
from .trace import PriceBook, Trace
from .valuation import ProgressSnapshot


class InfeasibleJob(ValueError):
    pass


class AuditError(AssertionError):
    pass


def _secs(hours: float) -> int:
    return int(round(hours * 3600))


def trace_digest(trace: Trace, book: PriceBook) -> str:
    h = hashlib.sha256()
    h.update(str(trace.interval_s).encode())
    h.update(np.ascontiguousarray(trace.samples).tobytes())
    for arr in (book.spot, book.od, book.egress):
        h.update(np.ascontiguousarray(arr, dtype=float).tobytes())
    return h.hexdigest()[:16]


def config_hash(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def check_feasible(job: JobSpec, step_s: int) -> None:
    P, T, d = _secs(job.P), _secs(job.T), _secs(job.d)
    if T < P + 2 * d + step_s:
        raise InfeasibleJob(
            f"deadline {job.T}h leaves no room for work {job.P}h plus 2x cold start "
            f"{job.d}h plus one step {step_s / 3600:.4g}h")


@dataclass
class RunReport:
    policy: str
    total_cost: float
    compute: float
    egress: float
    probes: float
    deadline_met: bool
    completed: bool
    finish_time: float  # hours; end of simulation when not completed
    migrations: int
    preemptions: int
    probe_count: int
    mode_time_s: dict
    progress_s: int
    job: dict
    start_index: int
    initial_region: int
    step_s: int
    seed: int
    config_hash: str
    selection_accuracy: float | None = None
    region_overlap_with_optimal: float | None = None
    schedule: list = field(default_factory=list)  # per step [region, mode]
    decisions: list = field(default_factory=list)
    events: list = field(default_factory=list)
    ledger: list = field(default_factory=list)  # [t, kind, region, amount]
    label: str | None = None

    @property
    def mode_time(self) -> dict:
        return {k: v / 3600.0 for k, v in self.mode_time_s.items()}

    def to_dict(self, logs: bool = True) -> dict:
        d = asdict(self)
        if not logs:
            for k in ("schedule", "decisions", "events", "ledger"):
                d.pop(k)
        return d

    def to_json(self, logs: bool = True) -> str:
        return json.dumps(self.to_dict(logs), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        return cls(**d)

    def decisions_jsonl(self) -> str:
        return "".join(json.dumps(x, sort_keys=True) + "\n" for x in self.decisions)

    def events_jsonl(self) -> str:
        return "".join(json.dumps(x, sort_keys=True) + "\n" for x in self.events)


class StepContext:
    """What a policy may see and do during one scheduling step."""

    def __init__(self, sim: "_Simulation"):
        self._sim = sim

    @property
    def now(self) -> float:
        return self._sim.t / 3600.0

    @property
    def p(self) -> float:
        return self._sim.p / 3600.0

    @property
    def job(self) -> JobSpec:
        return self._sim.job

    @property
    def book(self) -> PriceBook:
        return self._sim.book

    @property
    def step_h(self) -> float:
        return self._sim.step_s / 3600.0

    @property
    def loc(self) -> int:
        return self._sim.loc

    @property
    def mode(self) -> str:
        return self._sim.mode

    @property
    def cold_remaining(self) -> float:
        return self._sim.cold / 3600.0

    @property
    def n_regions(self) -> int:
        return self._sim.trace.n_regions

    def snapshot(self) -> ProgressSnapshot:
        s = self._sim
        return ProgressSnapshot(s.t / 3600.0, s.p / 3600.0, s.job.P, s.job.T)

    def spot_price(self, r: int) -> float:
        return self._sim.book.spot_price(r, self._sim.idx)

    def od_price(self, r: int) -> float:
        return self._sim.book.od_price(r)

    def probe(self, r: int) -> bool:
        return self._sim.probe(r)


class _Simulation:
    def __init__(self, trace, book, job, policy, start_index, initial_region, ckpt_interval_steps):
        self.trace = trace
        self.book = book
        self.job = job
        self.policy = policy
        self.start = start_index
        self.step_s = trace.interval_s
        self.P = _secs(job.P)
        self.T = _secs(job.T)
        self.d = _secs(job.d)
        self.ckpt_every = ckpt_interval_steps
        self.t = 0
        self.p = 0
        self.p_ckpt = 0
        self.ready_steps = 0
        self.loc = initial_region
        self.mode = "idle"
        self.cold = 0
        self.ledger = CostLedger()
        self.mode_time = {"spot": 0, "od": 0, "idle": 0, "cold_start": 0}
        self.migrations = 0
        self.preemptions = 0
        self.probes = 0
        self.events: list[dict] = []
        self.decisions: list[dict] = []
        self.schedule: list[list] = []
        self.finish = None

    @property
    def idx(self) -> int:
        return self.start + self.t // self.step_s

    @property
    def t_h(self) -> float:
        return self.t / 3600.0

    def _notify(self, r: int, source: Source) -> None:
        self.policy.notify(r, Observation(self.t_h, source))

    def _event(self, kind: str, **kw) -> None:
        self.events.append({"t": self.t_h, "kind": kind, **kw})

    def probe(self, r: int) -> bool:
        ok = self.trace.available(r, self.idx)
        amount = probe_cost(self.book, r, self.idx, self.job.probe_minutes)
        self.ledger.add(self.t_h, "probe", r, amount)
        self.probes += 1
        self._event("probe", region=r, ok=ok)
        self._notify(r, Source.PROBE_OK if ok else Source.PROBE_FAIL)
        return ok

    def _stop_current(self) -> None:
        if self.mode == "spot":
            self._notify(self.loc, Source.VOLUNTARY_TERMINATE)
        if self.mode != "idle":
            self._event("terminate", region=self.loc, mode=self.mode)
        self.p_ckpt = self.p
        self.mode = "idle"
        self.cold = 0

    def _launch(self, r: int, m: str) -> None:
        if self.mode != "idle":
            self._stop_current()
        if r != self.loc:
            self.ledger.add(self.t_h, "egress", self.loc,
                            migration_cost(self.book, self.loc, r, self.job.ckpt_gb))
            self.migrations += 1
            self._event("migrate", src=self.loc, dst=r)
        self.loc, self.mode, self.cold = r, m, self.d
        self._event("launch", region=r, mode=m)
        if m == "spot":
            self._notify(r, Source.LAUNCH_OK)

    def execute(self, decision: Decision) -> tuple[str, int | None]:
        if decision.action == "stay":
            return "stay", None
        for i, (r, m) in enumerate(decision.attempts):
            if m == "idle":
                if self.mode == "idle":
                    return "stay", i
                self._stop_current()
                return "terminate", i
            if r == self.loc and m == self.mode:
                return "stay", i
            if m == "spot" and not self.trace.available(r, self.idx):
                self._event("launch_fail", region=r)
                self._notify(r, Source.LAUNCH_FAIL)
                continue
            self._launch(r, m)
            return f"launch {m}@{r}", i
        return "stay", None

    def accrue(self) -> None:
        dt = min(self.step_s, self.T - self.t)
        if self.mode == "idle":
            self.mode_time["idle"] += dt
            self._segment(self.t, self.t + dt, "idle")
            self.t += dt
            return
        price = self.book.price(self.loc, self.mode, self.idx)
        cold_used = min(self.cold, dt)
        work = dt - cold_used
        used = dt
        if self.p + work >= self.P:
            work = self.P - self.p
            used = cold_used + work
        self.ledger.add(self.t_h, "compute", self.loc, price * used / 3600.0)
        self.mode_time["cold_start"] += cold_used
        self.mode_time[self.mode] += work
        if cold_used:
            self._segment(self.t, self.t + cold_used, "cold")
        if work:
            self._segment(self.t + cold_used, self.t + used, "ready")
        self.cold -= cold_used
        self.p += work
        if work > 0:
            self.ready_steps += 1
            if self.ready_steps >= self.ckpt_every:
                self.p_ckpt = self.p
                self.ready_steps = 0
        if self.p >= self.P:
            self.finish = self.t + used
            self._event("complete", region=self.loc, mode=self.mode)
        self.t += dt

    def _segment(self, t0: int, t1: int, phase: str) -> None:
        last = self.events[-1] if self.events else None
        region = self.loc if self.mode != "idle" else None
        if (last is not None and last["kind"] == "segment" and last["phase"] == phase
                and last["mode"] == self.mode and last["region"] == region
                and last["t1_s"] == t0):
            last["t1_s"] = t1
            return
        self.events.append({"t": t0 / 3600.0, "kind": "segment", "phase": phase,
                            "mode": self.mode, "region": region, "t0_s": t0, "t1_s": t1})

    def run(self) -> None:
        ctx = StepContext(self)
        while self.t < self.T and self.p < self.P:
            if self.mode == "spot" and not self.trace.available(self.loc, self.idx):
                self.preemptions += 1
                self._event("preemption", region=self.loc)
                self._notify(self.loc, Source.PREEMPTION)
                self.mode, self.cold = "idle", 0
                self.p = self.p_ckpt
                self.ready_steps = 0
            decision = self.policy.decide(ctx)
            executed, which = self.execute(decision)
            self._log(decision, executed, which)
            self.schedule.append([self.loc, self.mode])
            self.accrue()
        if self.mode != "idle":
            self._event("terminate", region=self.loc, mode=self.mode)
            self.mode = "idle"

    def _log(self, decision: Decision, executed: str, which: int | None) -> None:
        u = decision.utilities
        chosen = runner = None
        if u and which is not None and which < len(u):
            chosen = u[which]
            runner = u[which + 1] if which + 1 < len(u) else None
        elif decision.current_utility is not None:
            chosen = decision.current_utility
            runner = u[0] if u else None
        self.decisions.append({"t": self.t_h, "action": executed, "reason": decision.reason,
                               "V": decision.value, "u_chosen": chosen, "u_runner_up": runner})


def run(trace: Trace, book: PriceBook | None, job: JobSpec, policy: Policy, seed: int = 0,
        start_index: int = 0, initial_region: int = 0, ckpt_interval_steps: int = 1,
        label: str | None = None) -> RunReport:
    book = book if book is not None else trace.prices
    if book is None:
        raise ValueError("a price book is required")
    step_s = trace.interval_s
    check_feasible(job, step_s)
    n_steps = math.ceil(_secs(job.T) / step_s)
    if start_index < 0 or start_index + n_steps > trace.n_samples:
        raise InfeasibleJob(
            f"job needs {n_steps} samples from index {start_index}; trace has {trace.n_samples}")
    policy.reset(trace.n_regions, job, book, step_s / 3600.0, initial_region)
    sim = _Simulation(trace, book, job, policy, start_index, initial_region, ckpt_interval_steps)
    sim.run()
    completed = sim.p >= sim.P
    finish = sim.finish if completed else sim.t
    led = sim.ledger
    payload = {"policy": label or policy.name, "job": job.to_dict(), "start": start_index,
               "initial_region": initial_region, "seed": seed, "ckpt": ckpt_interval_steps,
               "trace": trace_digest(trace, book)}
    report = RunReport(
        policy=policy.name, total_cost=led.total, compute=led.compute, egress=led.egress,
        probes=led.probes, deadline_met=bool(completed and finish <= sim.T), completed=completed,
        finish_time=finish / 3600.0, migrations=sim.migrations, preemptions=sim.preemptions,
        probe_count=sim.probes, mode_time_s=dict(sim.mode_time), progress_s=sim.p,
        job=job.to_dict(), start_index=start_index, initial_region=initial_region,
        step_s=step_s, seed=seed, config_hash=config_hash(payload), schedule=sim.schedule,
        decisions=sim.decisions, events=sim.events,
        ledger=[[e.t, e.kind, e.region, e.amount] for e in led.entries], label=label)
    report.selection_accuracy = selection_accuracy(report, trace, book)
    if os.environ.get("NOMADSIM_AUDIT"):
        problems = audit(report, trace, book)
        if ckpt_interval_steps > 1:
            problems = [p for p in problems if not p.startswith("progress")]
        if problems:
            raise AuditError("; ".join(problems))
    return report


def selection_accuracy(report: RunReport, trace: Trace, book: PriceBook) -> float | None:
    """Share of spot-running steps spent in the cheapest spot-available region."""
    hits = total = 0
    for k, (region, mode) in enumerate(report.schedule):
        if mode != "spot":
            continue
        idx = report.start_index + k
        avail = trace.samples[:, idx].astype(bool)
        if not avail.any():
            continue
        prices = book.spot_column(idx)
        best = prices[avail].min()
        total += 1
        if math.isclose(prices[region], best, rel_tol=1e-12, abs_tol=1e-12):
            hits += 1
    return hits / total if total else None


def region_overlap(a: RunReport, b: RunReport) -> float | None:
    """Share of steps where both runs are active and in the same region."""
    if a.start_index != b.start_index:
        raise ValueError("reports cover different start times")
    same = both = 0
    for (ra, ma), (rb, mb) in zip(a.schedule, b.schedule):
        if ma == "idle" or mb == "idle":
            continue
        both += 1
        same += ra == rb
    return same / both if both else None


def audit(report: RunReport, trace: Trace, book: PriceBook, tol: float = 1e-9) -> list[str]:
    """Re-derive the report's accounting from its event log; returns problems."""
    problems = []
    by_kind = {"compute": 0.0, "egress": 0.0, "probe": 0.0}
    for _, kind, _, amount in report.ledger:
        if amount < 0:
            problems.append(f"negative ledger amount {amount}")
        by_kind[kind] += amount
    for kind, field_name in (("compute", "compute"), ("egress", "egress"), ("probe", "probes")):
        if abs(by_kind[kind] - getattr(report, field_name)) > tol:
            problems.append(f"{kind} subtotal {getattr(report, field_name)} != entries {by_kind[kind]}")
    if abs(report.compute + report.egress + report.probes - report.total_cost) > tol:
        problems.append("total != sum of subtotals")

    base = report.start_index * trace.interval_s
    recomputed = 0.0
    ready = 0
    for ev in report.events:
        if ev["kind"] != "segment" or ev["mode"] == "idle":
            continue
        recomputed += compute_cost(book, ev["region"], ev["mode"], base + ev["t0_s"],
                                   base + ev["t1_s"], trace.interval_s)
        if ev["phase"] == "ready":
            ready += ev["t1_s"] - ev["t0_s"]
        if ev["mode"] == "spot":
            i0 = (base + ev["t0_s"]) // trace.interval_s
            i1 = -(-(base + ev["t1_s"]) // trace.interval_s)
            if not trace.samples[ev["region"], i0:i1].all():
                problems.append(f"spot segment at {ev['t']}h without availability")
    if abs(recomputed - report.compute) > tol * max(1.0, report.compute):
        problems.append(f"compute {report.compute} != recomputed {recomputed}")
    if sum(report.mode_time_s.values()) != int(round(report.finish_time * 3600)):
        problems.append("mode_time does not sum to finish_time")
    if report.mode_time_s["spot"] + report.mode_time_s["od"] != ready:
        problems.append("ready time in events disagrees with mode_time")
    if report.job and report.progress_s != ready and report.completed:
        problems.append(f"progress {report.progress_s}s != ready time {ready}s")
    if report.deadline_met != (report.completed and report.finish_time <= report.job["T"] + 1e-9):
        problems.append("deadline verdict inconsistent")
    return problems
