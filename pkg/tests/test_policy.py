import math

import pytest
from hypothesis import given, strategies as st

from helpers import StubContext, make_trace
from nomadsim.engine import run
from nomadsim.market import JobSpec
from nomadsim.observer import Observation
from nomadsim.policy import (Decision, SkyNomad, SkyNomadConfig, fallback_region,
                             safety_net_check, safety_net_due)
from nomadsim.survival import expected_remaining, fit, volatility
from nomadsim.trace import PriceBook
from nomadsim.valuation import ProgressSnapshot


def test_safety_net_boundary():
    assert not safety_net_check(ProgressSnapshot(49.8, 0, 100, 150), 0.1)
    assert safety_net_check(ProgressSnapshot(49.8 + 1e-9, 0, 100, 150), 0.1)
    assert not safety_net_check(ProgressSnapshot(149, 100, 100, 150), 0.1)


def test_safety_net_without_cold_start():
    assert not safety_net_check(ProgressSnapshot(50, 0, 100, 150), 0.0)
    assert safety_net_check(ProgressSnapshot(50.001, 0, 100, 150), 0.0)
    assert not safety_net_check(ProgressSnapshot(100, 50, 100, 150), 0.0)


def test_safety_net_due_looks_one_step_ahead():
    job = JobSpec(P=100, T=150, d=0.1)
    book = PriceBook([1.0], [4.0], [0.0])
    ctx = StubContext(job, book, now=49.6, step_h=1 / 6)
    assert not safety_net_due(ctx)  # next epoch 49.7667 is still below 49.8
    ctx.now = 49.8 - 1 / 6 + 1e-6
    assert safety_net_due(ctx)


def test_fallback_region_examples():
    snap = ProgressSnapshot(0, 0, 10, 20)
    flat = PriceBook([1.0, 1.0], [3.0, 3.0], [0.8, 0.8])
    assert fallback_region(snap, flat, 1, 50, 0.0) == 1
    cheap = PriceBook([1.0, 1.0], [3.0, 2.0], [0.8, 0.8])  # $40 to move 50 GB
    assert fallback_region(snap, cheap, 0, 50, 0.0) == 0
    long = ProgressSnapshot(0, 0, 100, 150)
    assert fallback_region(long, cheap, 0, 50, 0.0) == 1
    assert fallback_region(long, cheap, 0, 50, 0.0, regions=[0]) == 0


def sky(job, book, **kw):
    pol = SkyNomad(**kw)
    pol.reset(book.n_regions, job, book, 1 / 6, 0)
    return pol


def test_stays_when_nothing_beats_current():
    job = JobSpec(P=30, T=45, d=0.1, ckpt_gb=50)
    book = PriceBook([1.0, 1.2], [2.6, 2.6], [0.02, 0.02])
    pol = sky(job, book, lifetime_oracle=lambda r, t: 4.0)
    ctx = StubContext(job, book, now=3.0, p=2.0, loc=0, mode="spot")
    for r in range(2):
        pol.notify(r, Observation.of(0.0, "probe_ok"))
    d = pol.decide(ctx)
    assert d.action == "stay"


def test_preempted_migrates_to_positive_utility_region():
    job = JobSpec(P=30, T=45, d=0.1, ckpt_gb=50, hysteresis=0.0)
    book = PriceBook([2.65, 1.81], [2.6, 2.6], [0.04, 0.04])  # $2 to move the checkpoint
    pol = sky(job, book, lifetime_oracle=lambda r, t: 4.0)
    pol.notify(0, Observation.of(9.0, "probe_ok"))
    pol.notify(1, Observation.of(9.0, "probe_ok"))
    pol.notify(0, Observation.of(10.0, "preemption"))
    ctx = StubContext(job, book, now=10.0, p=10.0 * 30 / 45, loc=0, mode="idle", avail=[0, 1])
    d = pol.decide(ctx)
    assert d.action == "launch" and d.reason == "preemption_recovery"
    assert d.attempts[0] == (1, "spot")
    assert d.value == pytest.approx(2.6)
    assert d.utilities[0] == pytest.approx(2.6 * 3.9 / 4 - 1.81 - 0.5)


def test_amortizing_within_the_job_blocks_late_expensive_moves():
    job = JobSpec(P=30, T=45, d=0.1, ckpt_gb=1000, hysteresis=0.0)
    book = PriceBook([2.65, 1.0], [2.6, 2.6], [0.04, 0.04])  # $40 to move the checkpoint

    def decide(flag):
        pol = sky(job, book, lifetime_oracle=lambda r, t: 40.0,
                  config=SkyNomadConfig(amortize_within_job=flag))
        pol.notify(1, Observation.of(39.5, "probe_ok"))
        pol.notify(0, Observation.of(40.0, "preemption"))
        return pol.decide(StubContext(job, book, now=40.0, p=27.0, loc=0, avail=[0, 1]))

    V = 2.6 * (3 / 5) / (27 / 40)
    d = decide(False)
    assert d.attempts[0] == (1, "spot")
    assert d.utilities[0] == pytest.approx(V * 39.9 / 40 - 1.0 - 40 / 40)
    # only 3.1 h of the instance's life can be used: -40/3.1 swamps the saving
    assert decide(True).action == "stay"


def test_waits_then_launches_as_pressure_rises():
    job = JobSpec(P=30, T=60, d=0.1, ckpt_gb=0, hysteresis=0.0)
    book = PriceBook([3.0, 3.2], [2.6, 2.6], [0.0, 0.0])
    pol = sky(job, book, lifetime_oracle=lambda r, t: 2.0)
    for r in range(2):
        pol.notify(r, Observation.of(19.5, "probe_ok"))
    calm = StubContext(job, book, now=20.0, p=10.0)
    assert pol.decide(calm).action == "stay"
    pressed = StubContext(job, book, now=20.0, p=5.0)
    d = pol.decide(pressed)
    # spot here costs more than on-demand, so on-demand is the better paid state
    assert d.action == "launch" and d.attempts[0] == (0, "od")
    assert d.value > 2.6 and d.utilities[0] > 0


def test_thrifty_stop():
    job = JobSpec(P=30, T=45)
    book = PriceBook([1.0], [2.6], [0.0])
    d = sky(job, book).decide(StubContext(job, book, now=31, p=30, mode="spot"))
    assert d.action == "terminate"


def test_unknown_regions_probed_never_launched():
    job = JobSpec(P=30, T=45, hysteresis=0.0)
    book = PriceBook([1.0, 1.0], [2.6, 2.6], [0.0, 0.0])
    pol = sky(job, book)
    ctx = StubContext(job, book, now=0.0, avail=[0, 0])
    d = pol.decide(ctx)
    assert ctx.probed == [0, 1]
    assert all(m != "spot" for _, m in d.attempts)


def test_predict_for_on_demand_and_idle():
    job = JobSpec(P=30, T=45)
    pol = sky(job, PriceBook([1.0], [2.6], [0.0]))
    assert math.isinf(pol.predict_for(0, "od", 0.0))
    assert pol.predict_for(0, "idle", 0.0) == 0.0


def test_predict_for_pooled_model_on_fresh_region():
    job = JobSpec(P=30, T=45)
    pol = sky(job, PriceBook([1.0, 1.0], [2.6, 2.6], [0.0, 0.0]))
    t = 0.0
    for life in (3.0, 5.0, 8.0, 12.0):
        pol.notify(0, Observation.of(t, "probe_ok"))
        pol.notify(0, Observation.of(t + life, "preemption"))
        t += life + 1
    pol.notify(1, Observation.of(t, "probe_ok"))
    now = t + 1.0
    pooled = fit(pol._samples(range(2), now))
    assert pol.predict_for(1, "spot", now) == expected_remaining(pooled, 1.0, 1 / 6)


def test_predict_for_volatile_region_is_discounted():
    job = JobSpec(P=30, T=60)
    pol = sky(job, PriceBook([1.0, 1.0], [2.6, 2.6], [0.0, 0.0]))
    t = 0.0
    for life in [10.0] * 5 + [1.0] * 3:
        pol.notify(0, Observation.of(t, "probe_ok"))
        pol.notify(0, Observation.of(t + life, "preemption"))
        t += life + 1
    pol.notify(0, Observation.of(t, "probe_ok"))
    now = t + 0.5
    model = fit(pol._samples([0], now))
    gamma = volatility(model, pol.view.volatility_trace(0), now).gamma_star
    assert gamma > 2
    plain = expected_remaining(model, pol.view.age(0, now), 1 / 6)
    assert pol.predict_for(0, "spot", now) < plain


def test_decision_validation():
    with pytest.raises(ValueError):
        Decision("jump")
    with pytest.raises(ValueError):
        Decision("stay", reason="whim")


def _random_case(seed, n_regions, ratio):
    import numpy as np
    rng = np.random.default_rng(seed)
    steps = int(30 * ratio * 6) + 6
    avail = (rng.random((n_regions, steps)) < 0.6).astype(int)
    return make_trace(avail, rng.uniform(0.5, 2, n_regions), rng.uniform(2.5, 4, n_regions), 0.02)


@given(st.integers(0, 10_000), st.integers(1, 3), st.sampled_from([1.05, 1.3, 2.0]))
def test_safety_latch_keeps_on_demand(seed, n_regions, ratio):
    tr = _random_case(seed, n_regions, ratio)
    job = JobSpec(P=30, T=30 * ratio, d=0.1, ckpt_gb=10)
    rep = run(tr, None, job, SkyNomad())
    assert rep.deadline_met
    reasons = [d["reason"] for d in rep.decisions]
    if "safety_net" in reasons:
        first = reasons.index("safety_net")
        assert all(r == "safety_net" for r in reasons[first:])
        # after the latch the job is on on-demand in a single region
        tail = rep.schedule[first + 1:]
        assert all(m == "od" for _, m in tail)


def test_decisions_are_deterministic():
    tr = _random_case(3, 3, 1.5)
    job = JobSpec(P=30, T=45, d=0.1, ckpt_gb=10)
    a = run(tr, None, job, SkyNomad())
    b = run(tr, None, job, SkyNomad())
    assert a.decisions_jsonl() == b.decisions_jsonl()
