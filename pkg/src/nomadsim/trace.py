"""Availability/price traces: data model, file I/O, synthetic generation.

Times inside a trace are integer seconds relative to the first sample.
Availability is piecewise constant: sample ``i`` holds over
``[i * interval_s, (i + 1) * interval_s)``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


class TraceError(ValueError):
    pass


@dataclass(frozen=True)
class RegionId:
    index: int
    label: str


@dataclass(frozen=True, eq=False)
class AvailabilitySeries:
    interval_s: int
    samples: np.ndarray  # (R, N) uint8
    start_s: int = 0

    def __post_init__(self):
        arr = np.array(self.samples, dtype=np.uint8)
        if arr.ndim == 1:
            arr = arr[None, :]
        if arr.ndim != 2:
            raise TraceError("samples must be a (regions, samples) array")
        if arr.size and arr.max() > 1:
            raise TraceError("availability values must be 0 or 1")
        if self.interval_s <= 0:
            raise TraceError("interval_s must be positive")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    def fraction(self) -> np.ndarray:
        return self.samples.mean(axis=1)

    def __eq__(self, other):
        if not isinstance(other, AvailabilitySeries):
            return NotImplemented
        return (self.interval_s == other.interval_s and self.start_s == other.start_s
                and np.array_equal(self.samples, other.samples))


@dataclass(frozen=True, eq=False)
class PriceBook:
    """Spot series (R, N) or (R, 1) for constant prices, on-demand (R,), egress (R, R) per GB."""

    spot: np.ndarray
    od: np.ndarray
    egress: np.ndarray

    def __post_init__(self):
        spot = np.array(self.spot, dtype=float)
        if spot.ndim == 1:
            spot = spot[:, None]
        od = np.array(self.od, dtype=float).reshape(-1)
        egress = np.array(self.egress, dtype=float)
        if egress.ndim == 1:
            egress = np.repeat(egress[:, None], len(egress), axis=1)
        R = len(od)
        if spot.shape[0] != R or egress.shape != (R, R):
            raise TraceError("price arrays disagree on region count")
        if (spot < 0).any() or (od < 0).any() or (egress < 0).any():
            raise TraceError("prices must be non-negative")
        egress = egress.copy()
        np.fill_diagonal(egress, 0.0)
        for a in (spot, od, egress):
            a.setflags(write=False)
        object.__setattr__(self, "spot", spot)
        object.__setattr__(self, "od", od)
        object.__setattr__(self, "egress", egress)

    @property
    def n_regions(self) -> int:
        return len(self.od)

    @property
    def c_od_min(self) -> float:
        return float(self.od.min())

    def spot_price(self, r: int, idx: int) -> float:
        col = min(idx, self.spot.shape[1] - 1)
        return float(self.spot[r, col])

    def spot_column(self, idx: int) -> np.ndarray:
        return self.spot[:, min(idx, self.spot.shape[1] - 1)]

    def od_price(self, r: int) -> float:
        return float(self.od[r])

    def price(self, r: int, mode: str, idx: int) -> float:
        if mode == "spot":
            return self.spot_price(r, idx)
        if mode == "od":
            return self.od_price(r)
        return 0.0

    def mean_spot(self) -> np.ndarray:
        return self.spot.mean(axis=1)

    def subset(self, keep: Sequence[int]) -> "PriceBook":
        keep = list(keep)
        return PriceBook(self.spot[keep], self.od[keep], self.egress[np.ix_(keep, keep)])

    def __eq__(self, other):
        if not isinstance(other, PriceBook):
            return NotImplemented
        return (np.array_equal(self.spot, other.spot) and np.array_equal(self.od, other.od)
                and np.array_equal(self.egress, other.egress))


@dataclass(frozen=True, eq=False)
class Trace:
    regions: tuple[RegionId, ...]
    availability: AvailabilitySeries
    prices: PriceBook | None = None

    def __post_init__(self):
        labels = [r.label for r in self.regions]
        if [r.index for r in self.regions] != list(range(len(self.regions))):
            raise TraceError("region indices must be dense 0..R-1")
        if len(set(labels)) != len(labels):
            raise TraceError("region labels must be unique")
        if self.availability.samples.shape[0] != len(self.regions):
            raise TraceError("availability rows do not match regions")
        if self.prices is not None and self.prices.n_regions != len(self.regions):
            raise TraceError("price book does not match regions")

    @property
    def n_regions(self) -> int:
        return len(self.regions)

    @property
    def n_samples(self) -> int:
        return self.availability.n_samples

    @property
    def interval_s(self) -> int:
        return self.availability.interval_s

    @property
    def horizon_s(self) -> int:
        return self.n_samples * self.interval_s

    @property
    def labels(self) -> list[str]:
        return [r.label for r in self.regions]

    @property
    def samples(self) -> np.ndarray:
        return self.availability.samples

    def index_of(self, label: str) -> int:
        for r in self.regions:
            if r.label == label:
                return r.index
        raise TraceError(f"unknown region {label!r}")

    def available(self, r: int, idx: int) -> bool:
        return bool(self.availability.samples[r, idx])

    def subset(self, keep: Sequence[int]) -> "Trace":
        keep = list(keep)
        regions = tuple(RegionId(i, self.regions[k].label) for i, k in enumerate(keep))
        avail = AvailabilitySeries(self.interval_s, self.samples[keep], self.availability.start_s)
        prices = self.prices.subset(keep) if self.prices is not None else None
        return Trace(regions, avail, prices)

    def window(self, start: int, stop: int) -> "Trace":
        avail = AvailabilitySeries(self.interval_s, self.samples[:, start:stop],
                                   self.availability.start_s + start * self.interval_s)
        prices = None
        if self.prices is not None:
            spot = self.prices.spot
            if spot.shape[1] > 1:
                spot = spot[:, start:stop]
            prices = PriceBook(spot, self.prices.od, self.prices.egress)
        return Trace(self.regions, avail, prices)

    def __eq__(self, other):
        if not isinstance(other, Trace):
            return NotImplemented
        return (self.regions == other.regions and self.availability == other.availability
                and self.prices == other.prices)


def availability(trace: Trace, r: int, t: float) -> int:
    """Sample value enclosing time ``t`` (seconds from trace start)."""
    if t < 0 or t >= trace.horizon_s:
        raise TraceError(f"time {t} outside trace horizon [0, {trace.horizon_s})")
    return int(trace.samples[r, int(t // trace.interval_s)])


def gang_aggregate(series):
    """Pointwise AND of per-instance availability series for one zone.

    Accepts a sequence of 1-D arrays or single-row ``AvailabilitySeries``; the
    return type follows the inputs.
    """
    if len(series) == 0:
        raise TraceError("need at least one series")
    if isinstance(series[0], AvailabilitySeries):
        intervals = {s.interval_s for s in series}
        if len(intervals) != 1:
            raise TraceError("mismatched intervals")
        rows = [s.samples.reshape(-1) if s.samples.shape[0] == 1 else s.samples.min(axis=0)
                for s in series]
    else:
        rows = [np.asarray(s, dtype=np.uint8).reshape(-1) for s in series]
    lengths = {len(r) for r in rows}
    if len(lengths) != 1:
        raise TraceError("mismatched series lengths")
    out = np.minimum.reduce(rows)
    if isinstance(series[0], AvailabilitySeries):
        return AvailabilitySeries(series[0].interval_s, out, series[0].start_s)
    return out


# --------------------------------------------------------------------------- I/O

def _infer_format(path: Path, fmt: str | None) -> str:
    if fmt:
        return fmt
    suffix = path.suffix.lower().lstrip(".")
    if suffix not in ("csv", "json"):
        raise TraceError(f"cannot infer trace format from {path.name}")
    return suffix


def load_trace(path, format: str | None = None) -> Trace:
    path = Path(path)
    fmt = _infer_format(path, format)
    if fmt == "json":
        return _load_json_trace(path)
    return _load_csv_trace(path)


def _load_json_trace(path: Path) -> Trace:
    doc = json.loads(path.read_text(encoding="utf-8"))
    try:
        interval = int(doc["interval_s"])
        start = int(doc.get("start_s", 0))
        entries = doc["regions"]
    except (KeyError, TypeError, ValueError) as exc:
        raise TraceError(f"{path}: malformed trace document ({exc})") from None
    labels, rows = [], []
    for i, entry in enumerate(entries):
        try:
            labels.append(str(entry["label"]))
            row = [int(v) for v in entry["samples"]]
        except (KeyError, TypeError, ValueError):
            raise TraceError(f"{path}: malformed region entry {i}") from None
        if any(v not in (0, 1) for v in row):
            raise TraceError(f"{path}: region {labels[-1]!r} has non-binary samples")
        rows.append(row)
    if len({len(r) for r in rows}) > 1:
        raise TraceError(f"{path}: regions have different sample counts")
    regions = tuple(RegionId(i, lab) for i, lab in enumerate(labels))
    return Trace(regions, AvailabilitySeries(interval, np.array(rows, dtype=np.uint8), start))


def _load_csv_trace(path: Path) -> Trace:
    per_region: dict[str, list[tuple[int, int]]] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["region", "timestamp_s", "available"]:
            raise TraceError(f"{path}: expected header region,timestamp_s,available")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                label, ts, av = row[0].strip(), int(row[1]), int(row[2])
                if len(row) != 3 or av not in (0, 1) or not label:
                    raise ValueError
            except (ValueError, IndexError):
                raise TraceError(f"{path}: malformed row {lineno}: {row}") from None
            series = per_region.setdefault(label, [])
            if series and ts <= series[-1][0]:
                raise TraceError(f"{path}: row {lineno}: timestamps for {label!r} not increasing")
            series.append((ts, av))
    if not per_region:
        raise TraceError(f"{path}: no samples")
    interval = None
    start = None
    length = None
    rows = []
    for label, series in per_region.items():
        ts = np.array([s[0] for s in series], dtype=np.int64)
        if len(ts) > 1:
            diffs = np.unique(np.diff(ts))
            if len(diffs) != 1:
                raise TraceError(f"{path}: region {label!r} has non-uniform interval")
            if interval is None:
                interval = int(diffs[0])
            elif interval != int(diffs[0]):
                raise TraceError(f"{path}: region {label!r} has non-uniform interval")
        if start is None:
            start, length = int(ts[0]), len(ts)
        elif int(ts[0]) != start or len(ts) != length:
            raise TraceError(f"{path}: region {label!r} has a gap relative to other regions")
        rows.append([s[1] for s in series])
    if interval is None:
        raise TraceError(f"{path}: cannot determine sample interval from a single sample")
    regions = tuple(RegionId(i, lab) for i, lab in enumerate(per_region))
    return Trace(regions, AvailabilitySeries(interval, np.array(rows, dtype=np.uint8), start))


def save_trace(trace: Trace, path, format: str | None = None) -> None:
    path = Path(path)
    fmt = _infer_format(path, format)
    av = trace.availability
    if fmt == "json":
        doc = {"interval_s": av.interval_s, "start_s": av.start_s,
               "regions": [{"label": r.label, "samples": av.samples[r.index].tolist()}
                           for r in trace.regions]}
        path.write_text(json.dumps(doc), encoding="utf-8")
        return
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["region", "timestamp_s", "available"])
        for r in trace.regions:
            for i, v in enumerate(av.samples[r.index]):
                w.writerow([r.label, av.start_s + i * av.interval_s, int(v)])


def load_prices(path, trace: Trace) -> PriceBook:
    """Read ``{spot, od, egress}`` JSON keyed by region label."""
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    labels = trace.labels
    idx = {lab: i for i, lab in enumerate(labels)}
    R = len(labels)
    for section in ("spot", "od"):
        if section not in doc:
            raise TraceError(f"{path}: missing {section!r} section")
        for lab in doc[section]:
            if lab not in idx:
                raise TraceError(f"{path}: {section}.{lab}: unknown region")
    for lab in doc.get("egress", {}):
        if lab not in idx:
            raise TraceError(f"{path}: egress.{lab}: unknown region")

    spot_vals = []
    for lab in labels:
        if lab not in doc["spot"]:
            raise TraceError(f"{path}: spot.{lab}: missing")
        v = doc["spot"][lab]
        spot_vals.append([float(x) for x in v] if isinstance(v, list) else [float(v)])
    width = max(len(v) for v in spot_vals)
    if width > 1:
        for lab, v in zip(labels, spot_vals):
            if len(v) == 1:
                v *= width
            elif len(v) != width:
                raise TraceError(f"{path}: spot.{lab}: series length {len(v)} != {width}")
    spot = np.array(spot_vals, dtype=float)
    try:
        od = np.array([float(doc["od"][lab]) for lab in labels])
    except KeyError as exc:
        raise TraceError(f"{path}: od.{exc.args[0]}: missing") from None
    egress = np.zeros((R, R))
    for src, val in doc.get("egress", {}).items():
        if isinstance(val, dict):
            for dst, price in val.items():
                if dst not in idx:
                    raise TraceError(f"{path}: egress.{src}.{dst}: unknown region")
                egress[idx[src], idx[dst]] = float(price)
        else:
            egress[idx[src], :] = float(val)
    return PriceBook(spot, od, egress)


def save_prices(book: PriceBook, path, labels: Sequence[str]) -> None:
    spot = {}
    for i, lab in enumerate(labels):
        row = book.spot[i]
        spot[lab] = float(row[0]) if len(row) == 1 else row.tolist()
    doc = {
        "spot": spot,
        "od": {lab: float(book.od[i]) for i, lab in enumerate(labels)},
        "egress": {src: {dst: float(book.egress[i, j]) for j, dst in enumerate(labels)}
                   for i, src in enumerate(labels)},
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


# --------------------------------------------------------------------- synthesis

def _per_region(value, R: int, name: str) -> list:
    if isinstance(value, (list, tuple)):
        if len(value) != R:
            raise TraceError(f"{name} has {len(value)} entries for {R} regions")
        return list(value)
    return [value] * R


@dataclass
class SyntheticTraceSpec:
    """Knobs for the synthetic trace generator.

    Per-region fields accept a scalar (broadcast) or a list with one entry per
    region. ``volatile_periods`` entries are ``(start_h, duration_h, multiplier)``
    or ``(start_h, duration_h, multiplier, region_index)``.
    """

    region_count: int = 8
    horizon_h: float = 14 * 24.0
    interval_s: int = 600
    lifetime_tail_exponent: float | list = 1.5
    min_lifetime_h: float | list = 0.5
    mean_gap_h: float | list = 2.0
    diurnal_amplitude: float = 0.0
    diurnal_phase_h: float | list = 0.0
    volatile_periods: list = field(default_factory=list)
    price_spread: float = 3.0
    spot_base_price: float = 1.0
    od_price: float | list = 4.0
    egress_per_gb: float | list = 0.02
    labels: list | None = None
    seed: int = 0

    def validate(self) -> None:
        R = self.region_count
        if R < 1:
            raise TraceError("region_count must be >= 1")
        if self.horizon_h <= 0:
            raise TraceError("horizon must be positive")
        if self.interval_s <= 0:
            raise TraceError("interval_s must be positive")
        for a in _per_region(self.lifetime_tail_exponent, R, "lifetime_tail_exponent"):
            if a <= 1:
                raise TraceError("lifetime_tail_exponent must exceed 1")
        for v in _per_region(self.min_lifetime_h, R, "min_lifetime_h"):
            if v <= 0:
                raise TraceError("min_lifetime_h must be positive")
        for v in _per_region(self.mean_gap_h, R, "mean_gap_h"):
            if v <= 0:
                raise TraceError("mean_gap_h must be positive")
        if not 0 <= self.diurnal_amplitude <= 1:
            raise TraceError("diurnal_amplitude must lie in [0, 1]")
        if self.price_spread < 1:
            raise TraceError("price_spread must be >= 1")
        if self.labels is not None and len(self.labels) != R:
            raise TraceError("labels length must equal region_count")
        for vp in self.volatile_periods:
            if len(vp) not in (3, 4) or vp[1] <= 0 or vp[2] <= 0:
                raise TraceError(f"bad volatile period {vp}")


def pareto_lifetimes(rng: np.random.Generator, n: int, shape: float, scale: float) -> np.ndarray:
    """Pareto(shape, scale) draws by inverse transform: ``scale * U**(-1/shape)``."""
    u = 1.0 - rng.random(n)  # (0, 1]
    return scale * u ** (-1.0 / shape)


def _hazard_walk(t0: float, E: float, shape: float, scale: float,
                 periods: list[tuple[float, float, float]]) -> float:
    """Pareto lifetime starting at absolute time ``t0`` whose hazard is scaled
    by the multiplier of any volatile period covering ``t0 + age``.

    Cumulative hazard is ``shape * ln(age / scale)`` times the multiplier, so
    each constant-multiplier segment is inverted in closed form.
    """
    if not periods:
        return scale * math.exp(E / shape)
    edges = sorted({t0 + scale} | {p[0] for p in periods if p[0] > t0 + scale}
                   | {p[0] + p[1] for p in periods if p[0] + p[1] > t0 + scale})
    acc = 0.0
    for i, lo in enumerate(edges):
        hi = edges[i + 1] if i + 1 < len(edges) else math.inf
        mid = lo if math.isinf(hi) else 0.5 * (lo + hi)
        mult = max([p[2] for p in periods if p[0] <= mid < p[0] + p[1]], default=1.0)
        a_lo = lo - t0
        rate = shape * mult
        if math.isinf(hi):
            return a_lo * math.exp((E - acc) / rate)
        seg = rate * math.log((hi - t0) / a_lo)
        if acc + seg >= E:
            return a_lo * math.exp((E - acc) / rate)
        acc += seg
    raise AssertionError("unreachable")


def generate_trace(spec: SyntheticTraceSpec) -> Trace:
    """Alternating available/unavailable runs, heavy-tailed lifetimes.

    Output (availability and prices) is a pure function of ``spec``.
    """
    spec.validate()
    R = spec.region_count
    step_h = spec.interval_s / 3600.0
    N = max(1, int(round(spec.horizon_h / step_h)))
    shapes = _per_region(spec.lifetime_tail_exponent, R, "lifetime_tail_exponent")
    scales = _per_region(spec.min_lifetime_h, R, "min_lifetime_h")
    gaps = _per_region(spec.mean_gap_h, R, "mean_gap_h")
    phases = _per_region(spec.diurnal_phase_h, R, "diurnal_phase_h")
    root = np.random.SeedSequence(spec.seed)
    children = root.spawn(R + 1)
    samples = np.zeros((R, N), dtype=np.uint8)
    for r in range(R):
        rng = np.random.default_rng(children[r])
        periods = [(float(p[0]), float(p[1]), float(p[2])) for p in spec.volatile_periods
                   if len(p) == 3 or int(p[3]) == r]
        i = 0
        up = bool(rng.random() < 0.5)
        while i < N:
            t_h = i * step_h
            if up:
                life = _hazard_walk(t_h, rng.exponential(), shapes[r], scales[r], periods)
                n = max(1, math.ceil(life / step_h - 1e-9))
                samples[r, i:i + n] = 1
            else:
                factor = 1.0 + spec.diurnal_amplitude * math.cos(
                    2 * math.pi * (t_h - phases[r]) / 24.0)
                gap = rng.exponential(gaps[r] * max(factor, 1e-3))
                n = max(1, math.ceil(gap / step_h - 1e-9))
            i += n
            up = not up

    price_rng = np.random.default_rng(children[R])
    if R == 1:
        exps = np.zeros(1)
    else:
        exps = price_rng.random(R)
        exps = (exps - exps.min()) / (exps.max() - exps.min())
    spot = spec.spot_base_price * spec.price_spread ** exps
    od = np.array(_per_region(spec.od_price, R, "od_price"), dtype=float)
    egress = np.array(_per_region(spec.egress_per_gb, R, "egress_per_gb"), dtype=float)
    labels = spec.labels or [f"region-{r}" for r in range(R)]
    regions = tuple(RegionId(i, str(lab)) for i, lab in enumerate(labels))
    return Trace(regions, AvailabilitySeries(spec.interval_s, samples),
                 PriceBook(spot, od, egress))


def run_lengths(row: np.ndarray, value: int = 1) -> np.ndarray:
    """Lengths (in samples) of maximal runs equal to ``value``."""
    row = np.asarray(row, dtype=np.int8)
    padded = np.concatenate([[0], (row == value).astype(np.int8), [0]])
    d = np.diff(padded)
    return np.flatnonzero(d == -1) - np.flatnonzero(d == 1)


def tail_slope(lifetimes: np.ndarray, lo_quantile: float = 0.0, hi_quantile: float = 0.99) -> float:
    """Least-squares slope of log empirical CCDF against log lifetime."""
    x = np.sort(np.asarray(lifetimes, dtype=float))
    n = len(x)
    ccdf = 1.0 - np.arange(n) / n
    lo = np.quantile(x, lo_quantile)
    hi = np.quantile(x, hi_quantile)
    mask = (x >= lo) & (x <= hi)
    slope, _ = np.polyfit(np.log(x[mask]), np.log(ccdf[mask]), 1)
    return float(slope)
