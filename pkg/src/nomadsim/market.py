"""Cost arithmetic: compute, egress, probes, and the ledger that records them."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

from .trace import PriceBook

KINDS = ("compute", "egress", "probe")


@dataclass
class LedgerEntry:
    t: float  # hours since job start
    kind: str
    region: int
    amount: float


@dataclass
class CostLedger:
    """Append-only cost record. Subtotals are kept alongside the entries."""

    compute: float = 0.0
    egress: float = 0.0
    probes: float = 0.0
    entries: list[LedgerEntry] = field(default_factory=list)

    def add(self, t: float, kind: str, region: int, amount: float) -> None:
        if amount < 0:
            raise ValueError(f"negative {kind} charge {amount}")
        if kind == "compute":
            self.compute += amount
        elif kind == "egress":
            self.egress += amount
        elif kind == "probe":
            self.probes += amount
        else:
            raise ValueError(f"unknown ledger kind {kind!r}")
        self.entries.append(LedgerEntry(t, kind, region, amount))

    @property
    def total(self) -> float:
        return self.compute + self.egress + self.probes

    def subtotal_from_entries(self, kind: str) -> float:
        return sum(e.amount for e in self.entries if e.kind == kind)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "kind", "region", "amount"])
        for e in self.entries:
            w.writerow([repr(e.t), e.kind, e.region, repr(e.amount)])
        return buf.getvalue()


@dataclass(frozen=True)
class JobSpec:
    """Batch job parameters. All durations in hours.

    ``hysteresis`` is in currency/hour; ``None`` means 5% of the cheapest
    on-demand price.
    """

    P: float = 100.0
    T: float = 150.0
    d: float = 0.1
    ckpt_gb: float = 50.0
    probe_interval: float = 2.0
    hysteresis: float | None = None
    probe_minutes: float = 1.0

    def __post_init__(self):
        for name in ("P", "T", "d", "ckpt_gb", "probe_interval", "probe_minutes"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.hysteresis is not None and self.hysteresis < 0:
            raise ValueError("hysteresis must be non-negative")
        if self.T < self.P + self.d:
            raise ValueError(f"infeasible job: T={self.T} < P + d = {self.P + self.d}")

    def hysteresis_for(self, book: PriceBook) -> float:
        if self.hysteresis is not None:
            return self.hysteresis
        return 0.05 * book.c_od_min

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("P", "T", "d", "ckpt_gb", "probe_interval", "hysteresis", "probe_minutes")}


def migration_cost(book: PriceBook, src: int, dst: int, ckpt_gb: float) -> float:
    if src == dst:
        return 0.0
    return float(book.egress[src, dst]) * ckpt_gb


def compute_cost(book: PriceBook, r: int, mode: str, t0: float, t1: float,
                 interval_s: int) -> float:
    """Integral of the price of ``(r, mode)`` over ``[t0, t1]`` (seconds from
    trace start), with spot prices piecewise constant per sample."""
    if t1 < t0:
        raise ValueError("t1 must not precede t0")
    if mode == "idle" or t1 == t0:
        return 0.0
    if mode == "od":
        return book.od_price(r) * (t1 - t0) / 3600.0
    total = 0.0
    t = t0
    while t < t1:
        idx = int(t // interval_s)
        edge = min(t1, (idx + 1) * interval_s)
        total += book.spot_price(r, idx) * (edge - t) / 3600.0
        t = edge
    return total


def probe_cost(book: PriceBook, r: int, idx: int, minutes: float = 1.0) -> float:
    """A probe is billed as ``minutes`` of the region's current spot price."""
    return book.spot_price(r, idx) * minutes / 60.0


def proactive_migration_breakeven(p_a: float, p_b: float, t_b: float, d: float,
                                  migration: float) -> bool:
    """Whether moving from a spot instance at ``p_a``/hr to one at ``p_b``/hr
    with expected lifetime ``t_b`` pays back ``migration``.

    Savings rate times effective time must cover the one-off cost. Diagnostic
    only; the scheduler itself ranks by utility.
    """
    if t_b <= d:
        return False
    saving = (p_a - p_b) * (t_b - d)
    if saving <= 0:
        return False
    return saving >= migration
