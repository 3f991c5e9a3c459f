"""Small hand-built traces shared by the tests."""
import numpy as np

from nomadsim.trace import AvailabilitySeries, PriceBook, RegionId, Trace


def make_trace(avail, spot, od, egress=0.0, interval_s=600, labels=None):
    avail = np.atleast_2d(np.asarray(avail, dtype=np.uint8))
    R = avail.shape[0]
    spot = np.asarray(spot, dtype=float)
    if spot.ndim == 0:
        spot = np.full(R, float(spot))
    od = np.asarray(od, dtype=float)
    if od.ndim == 0:
        od = np.full(R, float(od))
    egress = np.asarray(egress, dtype=float)
    if egress.ndim == 0:
        egress = np.full(R, float(egress))
    labels = labels or [f"r{i}" for i in range(R)]
    book = PriceBook(spot, od, egress)
    return Trace(tuple(RegionId(i, l) for i, l in enumerate(labels)),
                 AvailabilitySeries(interval_s, avail), book)


def hourly(avail, spot, od, egress=0.0):
    return make_trace(avail, spot, od, egress, interval_s=3600)


class StubContext:
    """Minimal stand-in for the engine's step context."""

    def __init__(self, job, book, now=0.0, p=0.0, loc=0, mode="idle", cold=0.0, avail=None,
                 step_h=1 / 6, idx=0):
        self.job, self.book, self.now, self.p = job, book, now, p
        self.loc, self.mode, self.cold_remaining, self.step_h = loc, mode, cold, step_h
        self.n_regions = book.n_regions
        self.avail = avail if avail is not None else [1] * book.n_regions
        self.idx = idx
        self.probed = []

    def snapshot(self):
        from nomadsim.valuation import ProgressSnapshot
        return ProgressSnapshot(self.now, self.p, self.job.P, self.job.T)

    def spot_price(self, r):
        return self.book.spot_price(r, self.idx)

    def od_price(self, r):
        return self.book.od_price(r)

    def probe(self, r):
        self.probed.append(r)
        return bool(self.avail[r])
