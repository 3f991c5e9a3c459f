"""Reference policies sharing the engine's policy interface.

The uniform-progress (UP) family paces work along the linear target
``p*(t) = t * P / T``: behind target it runs on-demand when spot is missing,
ahead of target it waits for spot. Variants differ only in where they look
for spot capacity.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .observer import VirtualInstanceView, schedule_probes
from .policy import Decision, Policy, fallback_region

KINDS = ("od_only", "spot_only_failover", "up", "up_s", "up_a", "up_ap")


@dataclass
class BaselineConfig:
    kind: str = "up"
    window: int = 5
    safety_net: bool = True
    home: int | None = None  # UP home region; None -> the run's initial region
    zones: tuple | None = None  # failover zones; None -> every region

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown baseline kind {self.kind!r}")
        if self.window < 1:
            raise ValueError("window must be >= 1")


def behind_schedule(ctx) -> bool:
    return ctx.p < ctx.now * ctx.job.P / ctx.job.T


class OnDemandOnly(Policy):
    name = "od_only"

    def decide(self, ctx):
        if ctx.p >= ctx.job.P:
            return Decision.terminate()
        if ctx.mode == "od":
            return Decision.stay()
        snap = ctx.snapshot()
        r = fallback_region(snap, ctx.book, ctx.loc, self.job.ckpt_gb, self.job.d)
        return Decision.launch(r, "od", "pacing")


class UniformProgress(Policy):
    """Single-region UP."""

    name = "up"

    def __init__(self, home: int | None = None, safety_net: bool = True):
        self.home_cfg = home
        self.safety_net = safety_net

    def reset(self, n_regions, job, book, step_h, initial_region):
        super().reset(n_regions, job, book, step_h, initial_region)
        self.home = initial_region if self.home_cfg is None else self.home_cfg

    def pace(self, ctx, region: int, attempts: list) -> Decision:
        if behind_schedule(ctx):
            attempts.append((region, "od"))
        else:
            attempts.append((None, "idle"))
        return Decision.try_in_order(attempts, "pacing")

    def decide(self, ctx):
        if ctx.p >= ctx.job.P:
            return Decision.terminate()
        net = self.safety_decision(ctx, [self.home])
        if net is not None:
            return net
        if ctx.mode == "spot":
            return Decision.stay()
        return self.pace(ctx, self.home, [(self.home, "spot")])


class UPSwitch(UniformProgress):
    """UP that tries every region's spot market, cheapest first."""

    name = "up_s"

    def decide(self, ctx):
        if ctx.p >= ctx.job.P:
            return Decision.terminate()
        net = self.safety_decision(ctx)
        if net is not None:
            return net
        if ctx.mode == "spot":
            return Decision.stay()
        order = sorted(range(self.n_regions), key=lambda r: (ctx.spot_price(r), r))
        od = min(range(self.n_regions), key=lambda r: (ctx.od_price(r), r != ctx.loc, r))
        return self.pace(ctx, od, [(r, "spot") for r in order])


class UPAvailability(UniformProgress):
    """UP steered by probed availability (optionally per unit spot price)."""

    def __init__(self, window: int = 5, per_price: bool = False, safety_net: bool = True):
        super().__init__(None, safety_net)
        self.window = window
        self.per_price = per_price
        self.name = "up_ap" if per_price else "up_a"

    def reset(self, n_regions, job, book, step_h, initial_region):
        super().reset(n_regions, job, book, step_h, initial_region)
        self.view = VirtualInstanceView(n_regions)

    def notify(self, r, obs):
        self.view.record(r, obs)

    def score(self, r: int, ctx) -> float:
        recent = self.view.observations[r][-self.window:]
        if not recent:
            return 0.0
        frac = sum(o.o for o in recent) / len(recent)
        return frac / ctx.spot_price(r) if self.per_price else frac

    def target(self, ctx) -> int:
        scores = [self.score(r, ctx) for r in range(self.n_regions)]
        if self.per_price:
            return min(range(self.n_regions), key=lambda r: (-scores[r], ctx.spot_price(r), r))
        return min(range(self.n_regions), key=lambda r: (-scores[r], r))

    def decide(self, ctx):
        if ctx.p >= ctx.job.P:
            return Decision.terminate()
        net = self.safety_decision(ctx)
        if net is not None:
            return net
        running = ctx.loc if ctx.mode == "spot" else None
        for r in schedule_probes(self.view, self.job.probe_interval, ctx.now, running=running):
            ctx.probe(r)
        goal = self.target(ctx)
        if ctx.mode == "spot" and ctx.loc == goal:
            return Decision.stay()
        attempts = [(goal, "spot")]
        if ctx.mode == "spot":
            # keep the current spot instance when the target has no capacity
            attempts.append((ctx.loc, "spot"))
            return Decision.try_in_order(attempts, "utility_improvement")
        return self.pace(ctx, goal, attempts)


class SpotOnlyFailover(Policy):
    """Spot-only with round-robin failover across a fixed set of zones."""

    name = "asm"

    def __init__(self, zones: Sequence[int] | None = None, safety_net: bool = True):
        self.zones_cfg = None if zones is None else tuple(zones)
        self.safety_net = safety_net

    def reset(self, n_regions, job, book, step_h, initial_region):
        super().reset(n_regions, job, book, step_h, initial_region)
        self.zones = self.zones_cfg if self.zones_cfg is not None else tuple(range(n_regions))
        self.cursor = self.zones.index(initial_region) if initial_region in self.zones else 0
        self.ran = False

    def decide(self, ctx):
        if ctx.p >= ctx.job.P:
            return Decision.terminate()
        net = self.safety_decision(ctx, self.zones)
        if net is not None:
            return net
        if ctx.mode == "spot":
            if ctx.loc in self.zones:
                self.cursor = self.zones.index(ctx.loc)
            self.ran = True
            return Decision.stay()
        n = len(self.zones)
        first = self.cursor + (1 if self.ran else 0)
        order = [self.zones[(first + i) % n] for i in range(n)]
        return Decision.try_in_order([(z, "spot") for z in order], "failover")


def make_baseline(config: BaselineConfig) -> Policy:
    kind = config.kind
    if kind == "od_only":
        return OnDemandOnly()
    if kind == "up":
        return UniformProgress(config.home, config.safety_net)
    if kind == "up_s":
        return UPSwitch(None, config.safety_net)
    if kind in ("up_a", "up_ap"):
        return UPAvailability(config.window, kind == "up_ap", config.safety_net)
    return SpotOnlyFailover(config.zones, config.safety_net)
