"""Scheduling policy interface, deadline rules, and the utility-driven scheduler.

A policy sees the job through a step context supplied by the engine (current
time, progress, location/mode, prices, and a ``probe`` call) and returns a
``Decision``. Launches are returned as an ordered list of attempts; the engine
executes them in order and the first one that succeeds wins. Spot attempts
fail when the region has no capacity; on-demand and idle always succeed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .observer import Observation, RegionUnavailable, VirtualInstanceView, schedule_probes
from .survival import InsufficientData, fit, predict_lifetime, volatility
from .trace import PriceBook
from .valuation import (CandidateState, ProgressSnapshot, rank_candidates, utility,
                        value_of_progress)

REASONS = ("safety_net", "utility_improvement", "preemption_recovery", "thrifty_stop",
           "probe_only", "no_change", "pacing", "failover", "replay")


@dataclass
class Decision:
    action: str  # stay | launch | terminate
    reason: str = "no_change"
    attempts: tuple = ()  # ((region, mode), ...); mode "idle" means terminate
    utilities: tuple = ()  # aligned with attempts when the policy scores them
    value: float | None = None
    current_utility: float | None = None

    def __post_init__(self):
        if self.action not in ("stay", "launch", "terminate"):
            raise ValueError(f"unknown action {self.action!r}")
        if self.reason not in REASONS:
            raise ValueError(f"unknown reason {self.reason!r}")

    @classmethod
    def stay(cls, reason="no_change", **kw) -> "Decision":
        return cls("stay", reason, **kw)

    @classmethod
    def terminate(cls, reason="thrifty_stop", **kw) -> "Decision":
        return cls("terminate", reason, attempts=((None, "idle"),), **kw)

    @classmethod
    def launch(cls, region: int, mode: str, reason: str, **kw) -> "Decision":
        return cls("launch", reason, attempts=((region, mode),), **kw)

    @classmethod
    def try_in_order(cls, attempts: Sequence[tuple[int, str]], reason: str, **kw) -> "Decision":
        return cls("launch", reason, attempts=tuple(attempts), **kw)


class Policy:
    """Base class. Subclasses override ``decide`` and optionally ``notify``."""

    name = "policy"
    safety_net = True

    def reset(self, n_regions: int, job, book: PriceBook, step_h: float,
              initial_region: int) -> None:
        self.n_regions = n_regions
        self.job = job
        self.book = book
        self.step_h = step_h
        self.initial_region = initial_region
        self.latched = False

    def notify(self, r: int, obs: Observation) -> None:
        pass

    def decide(self, ctx) -> Decision:
        raise NotImplementedError

    # shared deadline handling ------------------------------------------------
    def safety_decision(self, ctx, regions: Sequence[int] | None = None) -> Decision | None:
        """Latching on-demand fallback; ``None`` while the net is not engaged."""
        if not self.safety_net:
            return None
        if not self.latched and not safety_net_due(ctx):
            return None
        self.latched = True
        if ctx.mode == "od":
            return Decision.stay("safety_net")
        snap = ctx.snapshot()
        r = fallback_region(snap, ctx.book, ctx.loc, self.job.ckpt_gb, self.job.d, regions)
        return Decision.launch(r, "od", "safety_net")


def safety_net_check(snap: ProgressSnapshot, d: float) -> bool:
    """True when remaining time is short of remaining work plus two cold starts."""
    if snap.p >= snap.P:
        return False
    return snap.T - snap.t < snap.P - snap.p + 2 * d


def safety_net_due(ctx) -> bool:
    """Evaluate the safety net at the next decision epoch.

    Decisions are only taken at step boundaries, so the check is applied to
    ``t + step`` with no further progress: if waiting one more step would
    trip the net, it trips now.
    """
    snap = ctx.snapshot()
    ahead = ProgressSnapshot(min(snap.t + ctx.step_h, snap.T), snap.p, snap.P, snap.T)
    return safety_net_check(ahead, ctx.job.d)


def fallback_region(snap: ProgressSnapshot, book: PriceBook, r0: int, ckpt_gb: float,
                    d: float, regions: Sequence[int] | None = None) -> int:
    """Cheapest place to finish on on-demand, counting the checkpoint move."""
    if regions is None:
        regions = range(book.n_regions)
    remaining = max(0.0, snap.P - snap.p) + d

    def key(r):
        move = 0.0 if r == r0 else book.egress[r0, r] * ckpt_gb
        return (book.od[r] * remaining + move, r != r0, r)

    return min(regions, key=key)


@dataclass
class SkyNomadConfig:
    min_region_samples: int = 5
    prior_lifetime: float | None = None  # hours; None -> probe interval
    lookback: float = 48.0
    max_windows: int = 256
    # spread migration cost over min(lifetime, remaining work + d) instead of
    # the whole predicted lifetime
    amortize_within_job: bool = False


class SkyNomad(Policy):
    """Probe, predict lifetimes, value progress, and move to the best state.

    ``lifetime_oracle(region, now_h)`` (optional) replaces survival-based
    prediction with the true remaining lifetime; it may return ``None`` for
    regions it cannot answer.
    """

    name = "skynomad"

    def __init__(self, config: SkyNomadConfig | None = None,
                 lifetime_oracle: Callable[[int, float], float | None] | None = None,
                 name: str | None = None):
        self.config = config or SkyNomadConfig()
        self.lifetime_oracle = lifetime_oracle
        if name:
            self.name = name
        elif lifetime_oracle is not None:
            self.name = "skynomad_o"

    def reset(self, n_regions, job, book, step_h, initial_region):
        super().reset(n_regions, job, book, step_h, initial_region)
        self.view = VirtualInstanceView(n_regions)
        self._pooled_cache: tuple | None = None
        self.preempted = False

    def notify(self, r, obs):
        self.view.record(r, obs)
        if obs.source.value == "preemption":
            self.preempted = True

    @property
    def prior_lifetime(self) -> float:
        if self.config.prior_lifetime is not None:
            return self.config.prior_lifetime
        return self.job.probe_interval

    # ---------------------------------------------------------------- lifetimes
    def _samples(self, regions, now):
        out = []
        for q in regions:
            out.extend(self.view.lifetimes(q))
            open_len = self.view.open_run_length(q, now)
            if open_len is not None and open_len > 0:
                out.append((open_len, True))
        return out

    def _pooled_model(self, now):
        key = (now, self.view.version)
        if self._pooled_cache is None or self._pooled_cache[0] != key:
            try:
                model = fit(self._samples(range(self.n_regions), now))
            except InsufficientData:
                model = None
            self._pooled_cache = (key, model)
        return self._pooled_cache[1]

    def predict_for(self, r: int, mode: str, now: float) -> float:
        """Expected remaining lifetime (hours) of state ``(r, mode)``."""
        if mode == "od":
            return math.inf
        if mode == "idle":
            return 0.0
        if self.lifetime_oracle is not None:
            truth = self.lifetime_oracle(r, now)
            if truth is not None:
                return truth
        try:
            a = self.view.age(r, now)
        except RegionUnavailable:
            return 0.0
        if self.view.n_lifetimes(r) >= self.config.min_region_samples:
            model = fit(self._samples([r], now))
        else:
            model = self._pooled_model(now)
        if model is None:
            return self.prior_lifetime
        vol = volatility(model, self.view.volatility_trace(r), now,
                         self.config.lookback, self.config.max_windows)
        if a + self.step_h > model.l_max + 1e-9:
            # no data beyond this age: extrapolate the heavy tail (remaining ~ age)
            return max(a, self.step_h) / vol.gamma_star
        return predict_lifetime(model, vol, a, self.step_h)

    # ------------------------------------------------------------------ decide
    def decide(self, ctx) -> Decision:
        snap = ctx.snapshot()
        if snap.p >= snap.P:
            return Decision.terminate("thrifty_stop")
        net = self.safety_decision(ctx)
        if net is not None:
            return net
        now = ctx.now
        running_spot = ctx.loc if ctx.mode == "spot" else None
        due = schedule_probes(self.view, self.job.probe_interval, now, running=running_spot)
        for r in due:
            ctx.probe(r)
        V = value_of_progress(snap, self.book.c_od_min)
        cands = [CandidateState(ctx.loc, "idle")]
        for r in range(self.n_regions):
            move = 0.0 if r == ctx.loc else float(self.book.egress[ctx.loc, r]) * self.job.ckpt_gb
            cands.append(CandidateState(r, "od", ctx.od_price(r), math.inf, move))
            if r == running_spot or not self.view.believed_available(r):
                continue
            L = self.predict_for(r, "spot", now)
            if L > 0:
                if self.config.amortize_within_job and move > 0:
                    horizon = snap.P - snap.p + self.job.d
                    if L > horizon:
                        move *= L / horizon  # so that move / L == original / horizon
                cands.append(CandidateState(r, "spot", ctx.spot_price(r), L, move))
        if ctx.mode == "idle":
            current = CandidateState(ctx.loc, "idle")
        elif ctx.mode == "od":
            current = CandidateState(ctx.loc, "od", ctx.od_price(ctx.loc))
        else:
            current = CandidateState(ctx.loc, "spot", ctx.spot_price(ctx.loc),
                                     self.predict_for(ctx.loc, "spot", now))
        hysteresis = self.job.hysteresis_for(self.book)
        ranked = rank_candidates(cands, V, self.job.d, current, hysteresis,
                                 current_cold=ctx.cold_remaining)
        u_cur = utility(current, V, ctx.cold_remaining)
        preempted, self.preempted = self.preempted, False
        if not ranked:
            return Decision.stay("probe_only" if due else "no_change", value=V,
                                 current_utility=u_cur)
        reason = "preemption_recovery" if preempted and ctx.mode == "idle" else "utility_improvement"
        return Decision.try_in_order([(c.region, c.mode) for c, _ in ranked], reason,
                                     utilities=tuple(u for _, u in ranked), value=V,
                                     current_utility=u_cur)
