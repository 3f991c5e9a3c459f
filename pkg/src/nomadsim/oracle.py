"""Omniscient minimum-cost schedule by backward induction.

Progress is counted in units of ``gcd(step, cold start, work)`` seconds so
partial-step progress after a cold start is represented exactly and replay
through the engine reproduces the optimum. The state at the start of a step is
either ``idle@loc`` or ``run(region, mode, w)`` where ``w`` counts steps run
since launch (capped at ``ceil(d / step)``), plus an optional placeless start
state from which the first launch pays no egress.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .market import JobSpec
from .policy import Decision, Policy
from .trace import AvailabilitySeries, PriceBook, RegionId, Trace, TraceError

CONTINUE, IDLE, LAUNCH0 = 0, 1, 2
MODES = ("spot", "od")


@dataclass(frozen=True)
class ScheduleStep:
    k: int
    action: str  # continue | idle | launch
    region: int | None
    mode: str  # spot | od | idle
    cost: float


@dataclass
class DPSolution:
    min_cost: float
    schedule: list = field(default_factory=list)
    feasible: bool = True
    initial_region: int | None = None
    relaxed: bool = False
    unit_s: int = 0
    start_index: int = 0

    @property
    def launch_region(self) -> int | None:
        for s in self.schedule:
            if s.action == "launch":
                return s.region
        return None

    def replay_region(self) -> int:
        if self.initial_region is not None:
            return self.initial_region
        r = self.launch_region
        return 0 if r is None else r

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "action", "region", "mode", "cost"])
        for s in self.schedule:
            w.writerow([s.k, s.action, "" if s.region is None else s.region, s.mode, repr(s.cost)])
        return buf.getvalue()


class _Layout:
    def __init__(self, R: int, D: int):
        self.R, self.D = R, D
        self.n = R + 2 * R * (D + 1) + 1
        self.nowhere = self.n - 1

    def run(self, r: int, m: int, w: int) -> int:
        return self.R + (2 * r + m) * (self.D + 1) + w

    def decode(self, s: int):
        if s < self.R:
            return ("idle", s, None, None)
        if s == self.nowhere:
            return ("nowhere", None, None, None)
        j, w = divmod(s - self.R, self.D + 1)
        r, m = divmod(j, 2)
        return ("run", r, m, w)


def _coarsen(trace: Trace, book: PriceBook, start: int, n_steps: int, factor: int):
    """Block-aggregate ``factor`` samples: available if any sample is, cheapest price."""
    R = trace.n_regions
    cols = np.arange(start, start + n_steps * factor)
    cols = np.minimum(cols, trace.n_samples - 1)
    avail = trace.samples[:, cols].reshape(R, n_steps, factor)
    spot = np.stack([book.spot_column(int(i)) for i in cols], axis=1).reshape(R, n_steps, factor)
    blocked = np.where(avail.astype(bool), spot, np.inf).min(axis=2)
    blocked = np.where(np.isfinite(blocked), blocked, spot.min(axis=2))
    series = AvailabilitySeries(trace.interval_s * factor, avail.max(axis=2).astype(np.uint8))
    coarse_book = PriceBook(blocked, book.od.copy(), book.egress.copy())
    return Trace([RegionId(i, l) for i, l in enumerate(trace.labels)], series, coarse_book), coarse_book


def solve(trace: Trace, book: PriceBook | None, job: JobSpec, start_index: int = 0,
          initial_region: int | None = None, step_factor: int = 1) -> DPSolution:
    """Minimum total cost (compute + egress) that completes ``job`` by its deadline.

    ``initial_region=None`` lets the first launch happen anywhere without
    egress, which lower-bounds every starting region. ``step_factor > 1``
    solves a coarser relaxed problem (availability OR-ed and prices
    minimised within each block) and marks the result ``relaxed``.
    """
    book = book if book is not None else trace.prices
    if book is None:
        raise ValueError("a price book is required")
    step_s = trace.interval_s * step_factor
    T_s = int(round(job.T * 3600))
    K = math.ceil(T_s / step_s)
    if step_factor > 1:
        trace, book = _coarsen(trace, book, start_index, K, step_factor)
        sol = solve(trace, book, job, 0, initial_region, 1)
        sol.relaxed = True
        sol.start_index = start_index
        return sol
    if start_index + K > trace.n_samples:
        raise TraceError(f"job needs {K} samples from {start_index}; trace has {trace.n_samples}")
    P_s = int(round(job.P * 3600))
    d_s = int(round(job.d * 3600))
    last_dt = T_s - (K - 1) * step_s
    u = math.gcd(math.gcd(step_s, d_s), math.gcd(P_s, last_dt))
    NP = P_s // u
    D = math.ceil(d_s / step_s) if d_s else 0
    R = trace.n_regions
    lay = _Layout(R, D)
    ckpt = job.ckpt_gb
    eg = book.egress * ckpt  # (R, R), source row

    p = np.arange(NP + 1)
    colds = [max(0, d_s - w * step_s) for w in range(D + 1)]

    def accrue(Jn, price, cold, dt):
        cu = min(cold, dt)
        wu = (dt - cu) // u
        q = p + wu
        done = q >= NP
        full = price * dt / 3600.0 + Jn[np.minimum(q, NP)]
        part = price * (cu + (NP - p) * u) / 3600.0
        out = np.where(done, part, full)
        out[NP] = 0.0
        return out

    J = np.full((lay.n, NP + 1), np.inf)
    J[:, NP] = 0.0
    choice = np.empty((K, lay.n, NP + 1), dtype=np.int16 if 2 * R + 2 > 127 else np.int8)
    w1 = min(1, D)
    for k in range(K - 1, -1, -1):
        idx = start_index + k
        dt = min(step_s, T_s - k * step_s)
        avail = trace.samples[:, idx].astype(bool)
        spot = book.spot_column(idx)
        Jn = J
        J = np.empty_like(Jn)
        prices = np.empty((R, 2))
        prices[:, 0] = spot
        prices[:, 1] = book.od
        launch = np.full((2 * R, NP + 1), np.inf)
        for r in range(R):
            for m in range(2):
                if m == 0 and not avail[r]:
                    continue
                launch[2 * r + m] = accrue(Jn[lay.run(r, m, w1)], prices[r, m], d_s, dt)
        # A[l, j]: launch j from checkpoint location l
        A = launch[None, :, :] + np.repeat(eg, 2, axis=1)[:, :, None]
        for l in range(R):
            best = A[l].min(axis=0)
            arg = A[l].argmin(axis=0)
            stay = Jn[l]
            take = best <= stay
            J[l] = np.where(take, best, stay)
            choice[k, l] = np.where(take & np.isfinite(best), LAUNCH0 + arg, IDLE)
        for l in range(R):
            for m in range(2):
                masked = A[l].copy()
                masked[2 * l + m] = np.inf
                lbest = masked.min(axis=0)
                larg = masked.argmin(axis=0)
                for w in range(D + 1):
                    s = lay.run(l, m, w)
                    if m == 0 and not avail[l]:
                        J[s] = J[l]
                        choice[k, s] = choice[k, l]
                        continue
                    cont = accrue(Jn[lay.run(l, m, min(w + 1, D))], prices[l, m], colds[w], dt)
                    val = cont.copy()
                    code = np.zeros(NP + 1, dtype=choice.dtype)
                    better = lbest < val
                    val = np.where(better, lbest, val)
                    code = np.where(better, LAUNCH0 + larg, code)
                    better = Jn[l] < val
                    val = np.where(better, Jn[l], val)
                    code = np.where(better, IDLE, code)
                    J[s] = val
                    choice[k, s] = code
        best = launch.min(axis=0)
        arg = launch.argmin(axis=0)
        stay = Jn[lay.nowhere]
        take = best <= stay
        J[lay.nowhere] = np.where(take, best, stay)
        choice[k, lay.nowhere] = np.where(take & np.isfinite(best), LAUNCH0 + arg, IDLE)

    s0 = lay.nowhere if initial_region is None else initial_region
    min_cost = float(J[s0, 0])
    if not math.isfinite(min_cost):
        return DPSolution(math.inf, [], False, initial_region, False, u, start_index)
    schedule, forward = _extract(trace, book, job, choice, lay, s0, start_index, K, step_s, T_s,
                                 u, NP, d_s, colds, eg)
    # report the schedule's cost summed the way the engine bills it, so a
    # policy that follows the same schedule matches to the last bit
    assert abs(forward - min_cost) <= 1e-9 * max(1.0, min_cost)
    min_cost = forward
    return DPSolution(min_cost, schedule, True, initial_region, False, u, start_index)


def _extract(trace, book, job, choice, lay, s, start, K, step_s, T_s, u, NP, d_s, colds, eg):
    out = []
    p = 0
    D = lay.D
    compute = egress = 0.0  # forward sums in ledger order
    for k in range(K):
        if p >= NP:
            break
        idx = start + k
        dt = min(step_s, T_s - k * step_s)
        kind, r, m, w = lay.decode(s)
        if kind == "run" and m == 0 and not trace.available(r, idx):
            s = r
            kind, r, m, w = lay.decode(s)
        code = int(choice[k, s, p])
        cost = 0.0
        if code == IDLE:
            out.append(ScheduleStep(k, "idle", r, "idle", 0.0))
            if kind == "run":
                s = r  # terminated: idle at r
            continue
        if code == CONTINUE:
            cold = colds[w]
            action = "continue"
        else:
            j = code - LAUNCH0
            nr, nm = divmod(j, 2)
            if kind != "nowhere":
                cost += float(eg[r, nr])
                egress += float(eg[r, nr])
            r, m, w, cold = nr, nm, 0, d_s
            action = "launch"
        price = book.spot_price(r, idx) if m == 0 else book.od_price(r)
        cu = min(cold, dt)
        wu = (dt - cu) // u
        if p + wu >= NP:
            amount = price * (cu + (NP - p) * u) / 3600.0
            p = NP
        else:
            amount = price * dt / 3600.0
            p += wu
        cost += amount
        compute += amount
        s = lay.run(r, m, min(w + 1, D))
        out.append(ScheduleStep(k, action, r, MODES[m], cost))
    return out, compute + egress


class ReplayPolicy(Policy):
    """Plays back a fixed per-step schedule (e.g. the DP optimum)."""

    name = "optimal"
    safety_net = False

    def __init__(self, schedule, name: str | None = None):
        self.schedule = {s.k: s for s in schedule}
        if name:
            self.name = name

    def decide(self, ctx):
        k = int(round(ctx.now / ctx.step_h))
        s = self.schedule.get(k)
        if s is None or s.action == "idle":
            if ctx.mode != "idle":
                return Decision.terminate("replay")
            return Decision.stay("replay")
        if s.action == "continue":
            return Decision.stay("replay")
        return Decision.launch(s.region, s.mode, "replay")


def next_unavailable(trace: Trace) -> np.ndarray:
    """For each (region, sample) the index of the first unavailable sample at
    or after it (``n_samples`` when none)."""
    R, N = trace.samples.shape
    out = np.full((R, N + 1), N, dtype=np.int64)
    for i in range(N - 1, -1, -1):
        out[:, i] = np.where(trace.samples[:, i] == 0, i, out[:, i + 1])
    return out[:, :N]


def lifetime_oracle(trace: Trace, r: int, t: float) -> float:
    """Hours from ``t`` (hours since trace start) until region ``r`` next loses
    capacity; runs reaching the end of the trace are cut at the horizon."""
    t_s = t * 3600.0
    idx = int(math.floor(t_s / trace.interval_s + 1e-9))
    if idx < 0 or idx >= trace.n_samples:
        raise TraceError(f"time {t}h outside trace")
    row = trace.samples[r]
    if not row[idx]:
        raise TraceError(f"region {r} unavailable at {t}h")
    zeros = np.flatnonzero(row[idx:] == 0)
    end = (idx + zeros[0]) * trace.interval_s if len(zeros) else trace.horizon_s
    return (end - t_s) / 3600.0


def make_lifetime_oracle(trace: Trace, start_index: int = 0):
    """Oracle in job-relative hours for a run starting at ``start_index``;
    returns None for unavailable regions."""
    nxt = next_unavailable(trace)
    base = start_index * trace.interval_s

    def oracle(r: int, now: float) -> float | None:
        t_s = base + now * 3600.0
        idx = int(math.floor(t_s / trace.interval_s + 1e-9))
        if idx >= trace.n_samples or not trace.samples[r, idx]:
            return None
        return (nxt[r, idx] * trace.interval_s - t_s) / 3600.0

    return oracle
