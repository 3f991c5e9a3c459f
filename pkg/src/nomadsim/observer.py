"""Per-region virtual-instance view built from probes, launches and preemptions.

Every region is treated as if an instance were running there continuously.
A 1 -> 0 change in observed availability closes a lifetime of that virtual
instance; a voluntary terminate closes it as right-censored.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass

EPS = 1e-9


class Source(str, enum.Enum):
    PROBE_OK = "probe_ok"
    PROBE_FAIL = "probe_fail"
    LAUNCH_OK = "launch_ok"
    LAUNCH_FAIL = "launch_fail"
    PREEMPTION = "preemption"
    VOLUNTARY_TERMINATE = "voluntary_terminate"


_AVAILABLE = {Source.PROBE_OK, Source.LAUNCH_OK}


class OutOfOrderError(ValueError):
    pass


class RegionUnavailable(LookupError):
    pass


@dataclass(frozen=True)
class Observation:
    t: float  # hours
    source: Source

    @property
    def o(self) -> int:
        return 1 if self.source in _AVAILABLE else 0

    @classmethod
    def of(cls, t: float, source: str | Source) -> "Observation":
        return cls(float(t), Source(source))


@dataclass(frozen=True)
class LifetimeSample:
    duration: float  # hours
    censored: bool = False

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("lifetime duration must be positive")


class VirtualInstanceView:
    def __init__(self, n_regions: int):
        self.n_regions = n_regions
        self.observations: list[list[Observation]] = [[] for _ in range(n_regions)]
        self._lifetimes: list[list[LifetimeSample]] = [[] for _ in range(n_regions)]
        self._run_start: list[float | None] = [None] * n_regions
        self._last_zero: list[float | None] = [None] * n_regions
        # (t, age since run start, preempted) per region, for volatility scans
        self._vol: list[list[tuple[float, float, bool]]] = [[] for _ in range(n_regions)]
        self.version = 0

    def record(self, r: int, obs: Observation) -> "VirtualInstanceView":
        history = self.observations[r]
        if history and obs.t < history[-1].t - EPS:
            raise OutOfOrderError(
                f"region {r}: observation at {obs.t} precedes last at {history[-1].t}")
        prev = history[-1].o if history else None
        history.append(obs)
        self.version += 1
        if obs.o == 1:
            if prev != 1:
                self._run_start[r] = obs.t
            self._vol[r].append((obs.t, obs.t - self._run_start[r], False))
            return self
        self._last_zero[r] = obs.t
        if prev == 1:
            start = self._run_start[r]
            duration = obs.t - start
            censored = obs.source is Source.VOLUNTARY_TERMINATE
            if duration > EPS:
                self._lifetimes[r].append(LifetimeSample(duration, censored))
            self._vol[r].append((obs.t, duration, not censored))
            self._run_start[r] = None
        return self

    # ---------------------------------------------------------------- queries
    def known(self, r: int) -> bool:
        return bool(self.observations[r])

    def latest(self, r: int) -> Observation | None:
        h = self.observations[r]
        return h[-1] if h else None

    def believed_available(self, r: int) -> bool:
        last = self.latest(r)
        return last is not None and last.o == 1

    def lifetimes(self, r: int | None = None) -> list[LifetimeSample]:
        if r is None:
            return [s for per in self._lifetimes for s in per]
        return list(self._lifetimes[r])

    def n_lifetimes(self, r: int) -> int:
        return len(self._lifetimes[r])

    def open_run_length(self, r: int, now: float) -> float | None:
        """Length of the current availability run, or None when unavailable."""
        start = self._run_start[r]
        if start is None:
            return None
        return now - start

    def age(self, r: int, now: float) -> float:
        """Hours since the most recent unavailable observation (or since the
        first observation when none was ever unavailable)."""
        history = self.observations[r]
        if not history:
            raise RegionUnavailable(f"region {r} has no observations")
        if history[-1].o == 0:
            raise RegionUnavailable(f"region {r} is currently observed unavailable")
        anchor = self._last_zero[r]
        if anchor is None:
            anchor = history[0].t
        return max(0.0, now - anchor)

    def volatility_trace(self, r: int) -> list[tuple[float, float, bool]]:
        return list(self._vol[r])

    def to_json(self, labels=None) -> str:
        out = {}
        for r, history in enumerate(self.observations):
            key = labels[r] if labels else str(r)
            out[key] = [{"t": o.t, "o": o.o, "source": o.source.value} for o in history]
        return json.dumps(out)


def schedule_probes(view: VirtualInstanceView, probe_interval: float, now: float,
                    running: int | None = None) -> list[int]:
    """Regions whose latest observation is at least ``probe_interval`` old.

    Never-observed regions are always due; the region hosting the running
    instance is exempt.
    """
    due = []
    for r in range(view.n_regions):
        if r == running:
            continue
        last = view.latest(r)
        if last is None or now - last.t >= probe_interval - EPS:
            due.append(r)
    return due
