"""Value of progress and per-state utility."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

MODE_ORDER = {"spot": 0, "od": 1, "idle": 2}


class DeadlineMissed(RuntimeError):
    pass


@dataclass(frozen=True)
class ProgressSnapshot:
    t: float  # hours since start
    p: float  # completed work, hours
    P: float
    T: float

    @property
    def pressure(self) -> float:
        """Remaining work over remaining time."""
        return (self.P - self.p) / (self.T - self.t)

    @property
    def average_progress(self) -> float:
        return self.p / self.t


@dataclass(frozen=True)
class CandidateState:
    region: int
    mode: str  # spot | od | idle
    price: float = 0.0
    predicted_lifetime: float = math.inf
    migration: float = 0.0


def value_of_progress(snap: ProgressSnapshot, c_od_min: float) -> float:
    """Currency per hour of future progress: ``c_od_min * pressure / average``.

    At ``t = 0`` the job is on schedule by definition; before any progress
    exists the average is taken as the nominal rate ``P / T``.
    """
    if snap.t >= snap.T and snap.p < snap.P:
        raise DeadlineMissed(f"t={snap.t} reached deadline with p={snap.p} < P={snap.P}")
    if snap.p >= snap.P:
        return 0.0
    if snap.t <= 0:
        return c_od_min
    avg = snap.p / snap.t if snap.p > 0 else snap.P / snap.T
    return c_od_min * snap.pressure / avg


def effectiveness(lifetime: float, d: float) -> float:
    if math.isinf(lifetime):
        return 1.0
    if lifetime <= 0:
        return 0.0
    return max(0.0, lifetime - d) / lifetime


def utility(cand: CandidateState, V: float, d: float) -> float:
    if cand.mode == "idle":
        return 0.0
    if cand.mode == "od" or math.isinf(cand.predicted_lifetime):
        return V - cand.price
    L = cand.predicted_lifetime
    if L <= 0:
        return -math.inf if cand.migration > 0 else -cand.price
    return V * effectiveness(L, d) - cand.price - cand.migration / L


def _sort_key(item):
    cand, u = item
    return (-u, cand.price, cand.region, MODE_ORDER[cand.mode])


def rank_candidates(cands: Sequence[CandidateState], V: float, d: float,
                    current: CandidateState, hysteresis: float,
                    current_cold: float | None = None) -> list[tuple[CandidateState, float]]:
    """Candidates whose utility beats the current state's by more than
    ``hysteresis``, best first.

    The current state is scored with ``current_cold`` (its remaining cold
    start) in place of ``d`` and no migration charge.
    """
    cur = CandidateState(current.region, current.mode, current.price,
                         current.predicted_lifetime, 0.0)
    u_cur = utility(cur, V, d if current_cold is None else current_cold)
    scored = [(c, utility(c, V, d)) for c in cands
              if not (c.region == current.region and c.mode == current.mode)]
    keep = [(c, u) for c, u in scored if u > u_cur + hysteresis]
    keep.sort(key=_sort_key)
    return keep
