"""Nelson-Aalen survival estimation over virtual-instance lifetimes.

All durations are hours. The survival curve is a right-continuous step
function ``S(l) = exp(-H(l))`` with ``H(l) = sum_{l_i <= l} e_i / n_i``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .observer import LifetimeSample

DENOM_EPS = 1e-6


class InsufficientData(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SurvivalModel:
    grid: np.ndarray  # sorted distinct durations
    e: np.ndarray
    c: np.ndarray
    n: np.ndarray
    h: np.ndarray
    H: np.ndarray
    S: np.ndarray

    @property
    def l_max(self) -> float:
        return float(self.grid[-1])

    @property
    def n_samples(self) -> int:
        return int(self.e.sum() + self.c.sum())

    def cumhaz(self, l) -> np.ndarray | float:
        idx = np.searchsorted(self.grid, l, side="right") - 1
        out = np.where(idx >= 0, self.H[np.maximum(idx, 0)], 0.0)
        return float(out) if np.ndim(out) == 0 else out

    def survival(self, l, gamma: float = 1.0):
        if np.ndim(l) == 0:
            return math.exp(-gamma * self.cumhaz(l))
        return np.exp(-gamma * self.cumhaz(l))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["l", "e", "c", "n", "h", "H", "S"])
        for row in zip(self.grid, self.e, self.c, self.n, self.h, self.H, self.S):
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()


def fit(samples: Iterable[LifetimeSample] | Sequence[tuple[float, bool]]) -> SurvivalModel:
    durations, censored = [], []
    for s in samples:
        if isinstance(s, LifetimeSample):
            durations.append(s.duration)
            censored.append(s.censored)
        else:
            durations.append(float(s[0]))
            censored.append(bool(s[1]))
    if not durations:
        raise InsufficientData("no lifetime samples")
    dur = np.asarray(durations, dtype=float)
    cen = np.asarray(censored, dtype=bool)
    grid, inverse = np.unique(dur, return_inverse=True)
    e = np.bincount(inverse, weights=~cen, minlength=len(grid)).astype(float)
    c = np.bincount(inverse, weights=cen, minlength=len(grid)).astype(float)
    n = np.cumsum((e + c)[::-1])[::-1]
    h = e / n
    H = np.cumsum(h)
    S = np.exp(-H)
    for arr in (grid, e, c, n, h, H, S):
        arr.setflags(write=False)
    return SurvivalModel(grid, e, c, n, h, H, S)


def expected_remaining(model: SurvivalModel, a: float, grid_step: float,
                       gamma: float = 1.0) -> float:
    """Restricted mean remaining lifetime given survival to age ``a``.

    ``grid_step / S(a) * sum S(a + k * grid_step)`` over grid points up to
    the largest observed duration. ``gamma`` scales the cumulative hazard.
    """
    if a < 0:
        raise ValueError("age must be non-negative")
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    k_max = math.floor((model.l_max - a) / grid_step + 1e-9)
    if k_max < 1:
        return 0.0
    s_a = math.exp(-gamma * model.cumhaz(a))
    if s_a <= 0.0:
        return 0.0
    points = a + grid_step * np.arange(1, k_max + 1)
    s = np.exp(-gamma * model.cumhaz(points))
    return float(grid_step * s.sum() / s_a)


@dataclass(frozen=True)
class VolatilityState:
    gamma_star: float = 1.0
    window_scan: tuple = field(default_factory=tuple)  # ((window_start, gamma_W), ...)


def hazard_increments(model: SurvivalModel, ages: np.ndarray) -> np.ndarray:
    """Hazard mass accrued since the previous observation of the same run.

    Ages restart from zero when a new availability run begins, so the
    increments of one run telescope to ``H(final age)``.
    """
    ages = np.asarray(ages, dtype=float)
    if len(ages) == 0:
        return ages
    prev = np.concatenate([[0.0], ages[:-1]])
    prev = np.where(prev > ages, 0.0, prev)
    return model.cumhaz(ages) - model.cumhaz(prev)


def volatility(model: SurvivalModel, recent_obs: Sequence[tuple[float, float, bool]],
               now: float, lookback: float = 48.0, max_windows: int = 256) -> VolatilityState:
    """Largest observed/expected preemption ratio over windows ending at ``now``.

    ``recent_obs`` holds time-ordered ``(t, age, preempted)`` tuples. Each
    window starts at one observation timestamp (inclusive) and runs to ``now``.
    """
    if not recent_obs:
        return VolatilityState()
    t = np.array([o[0] for o in recent_obs], dtype=float)
    ages = np.array([o[1] for o in recent_obs], dtype=float)
    pre = np.array([o[2] for o in recent_obs], dtype=float)
    if np.any(np.diff(t) < -1e-9):
        raise ValueError("observations must be time-ordered")
    inc = hazard_increments(model, ages)
    # suffix sums give every window [t_j, now] at once
    e_w = np.cumsum(pre[::-1])[::-1]
    expected = np.cumsum(inc[::-1])[::-1]
    starts = np.flatnonzero(t >= now - lookback - 1e-9)
    if len(starts) > max_windows:
        starts = starts[-max_windows:]
    scan = []
    best = 1.0
    for j in starts:
        if expected[j] <= DENOM_EPS:
            continue
        g = float(e_w[j] / expected[j])
        scan.append((float(t[j]), g))
        best = max(best, g)
    return VolatilityState(best, tuple(scan))


def predict_lifetime(model: SurvivalModel, vol: VolatilityState, a: float,
                     grid_step: float) -> float:
    return expected_remaining(model, a, grid_step, gamma=vol.gamma_star)
