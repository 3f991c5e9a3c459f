"""Reusable synthetic markets for the acceptance checks and experiment scripts."""
from __future__ import annotations

import numpy as np

from .trace import AvailabilitySeries, PriceBook, RegionId, SyntheticTraceSpec, Trace, generate_trace


def heterogeneous_market(seed: int, regions: int = 8, horizon_h: float = 24 * 8,
                         price_spread: float | None = None, rng_offset: int = 1000,
                         od_price: float = 4.0, egress_per_gb: float = 0.02) -> Trace:
    """Heavy-tailed regions that differ in tail shape, typical lifetime and gap length.

    Per region: tail exponent U(1.2, 1.8), minimum lifetime log-uniform on
    [1, 20] h, mean gap log-uniform on [0.5, 6] h. ``price_spread=None`` draws
    the spread from U(2, 4).
    """
    rng = np.random.default_rng(rng_offset + seed)
    R = regions
    tails = list(rng.uniform(1.2, 1.8, R))
    mins = list(np.exp(rng.uniform(np.log(1), np.log(20), R)))
    gaps = list(np.exp(rng.uniform(np.log(0.5), np.log(6), R)))
    spread = float(rng.uniform(2, 4)) if price_spread is None else price_spread
    spec = SyntheticTraceSpec(region_count=R, horizon_h=horizon_h, seed=seed,
                              lifetime_tail_exponent=tails, min_lifetime_h=mins,
                              mean_gap_h=gaps, price_spread=spread, od_price=od_price,
                              egress_per_gb=egress_per_gb)
    return generate_trace(spec)


def staggered_windows(seed: int, regions: int = 6, horizon_h: float = 24 * 6,
                      width_h: float = 4.6, shrink_h: float = 0.1, offset_h: float = 4.0,
                      jitter_h: float = 0.5, interval_s: int = 600) -> Trace:
    """Daily spot windows that barely overlap across regions.

    Region ``r`` is available each day from ``offset_h * r`` (plus uniform
    jitter) for ``width_h - shrink_h * r`` hours, so every added region opens
    hours no earlier region covers, and average availability falls with the
    index. Spot prices are U(1, 2), on-demand 4.0, egress $0.02/GB.
    """
    rng = np.random.default_rng(3000 + seed)
    steps_per_h = 3600 / interval_s
    N = int(round(horizon_h * steps_per_h))
    S = np.zeros((regions, N), np.uint8)
    for r in range(regions):
        for day in range(-1, int(horizon_h // 24) + 1):
            a = day * 24 + offset_h * r + rng.uniform(-jitter_h, jitter_h)
            b = a + width_h - shrink_h * r
            i0, i1 = max(0, int(round(a * steps_per_h))), min(N, int(round(b * steps_per_h)))
            if i1 > i0:
                S[r, i0:i1] = 1
    spot = rng.uniform(1, 2, regions)
    book = PriceBook(spot, [4.0] * regions, [0.02] * regions)
    ids = tuple(RegionId(i, f"z{i}") for i in range(regions))
    return Trace(ids, AvailabilitySeries(interval_s, S), book)
