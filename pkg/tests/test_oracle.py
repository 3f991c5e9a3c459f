import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import reference
from helpers import hourly, make_trace
from nomadsim.engine import run
from nomadsim.market import JobSpec
from nomadsim.oracle import (ReplayPolicy, lifetime_oracle, make_lifetime_oracle,
                             next_unavailable, solve)
from nomadsim.trace import TraceError


def test_single_region_always_spot():
    tr = hourly([[1] * 10], 1.5, 4.0)
    job = JobSpec(P=6, T=10, d=0.5)
    sol = solve(tr, None, job)
    assert sol.min_cost == pytest.approx(1.5 * 6.5)
    assert all(s.mode == "spot" for s in sol.schedule if s.action != "idle")


def test_no_spot_uses_cheapest_on_demand_from_the_start():
    tr = hourly([[0] * 10, [0] * 10], [1.0, 1.0], [4.0, 3.0])
    job = JobSpec(P=6, T=10, d=0.5)
    sol = solve(tr, None, job)
    assert sol.min_cost == pytest.approx(3.0 * 6.5)
    assert sol.schedule[0].action == "launch" and sol.schedule[0].region == 1
    assert sol.schedule[0].mode == "od"


def test_infeasible_and_short_trace():
    tr = hourly([[1] * 5], 1.0, 4.0)
    with pytest.raises(TraceError):
        solve(tr, None, JobSpec(P=6, T=10, d=0.5))


def random_instance(rng, start_anywhere=True):
    avail = (rng.random((2, 12)) < rng.uniform(0.3, 0.9)).astype(int)
    spot = rng.choice([0.5, 1.0, 1.5, 2.0], size=(2, 12))
    od = rng.choice([2.5, 3.0, 4.0], size=2)
    egress = [float(rng.choice([0.0, 0.125, 0.25])), float(rng.choice([0.0, 0.125, 0.5]))]
    d = float(rng.choice([0.5, 1.0, 1.5]))
    P = float(rng.integers(3, 10))
    return avail, spot, od, egress, d, P


@settings(max_examples=25)
@given(st.integers(0, 2**31), st.booleans())
def test_matches_brute_force(seed, anywhere):
    rng = np.random.default_rng(seed)
    avail, spot, od, egress, d, P = random_instance(rng)
    T = 12.0
    if T < P + d:
        return
    job = JobSpec(P=P, T=T, d=d, ckpt_gb=8)
    sol = solve(hourly(avail, spot, od, egress), None, job,
                initial_region=None if anywhere else 0)
    eg = [[0, egress[0]], [egress[1], 0]]
    bf = reference.brute_force_min_cost(avail.tolist(), spot.tolist(), od.tolist(), eg, 8, P, T,
                                        d, 1, start_anywhere=anywhere)
    assert sol.min_cost == float(bf)


@settings(max_examples=30)
@given(st.integers(0, 2**31))
def test_replay_reproduces_optimum(seed):
    rng = np.random.default_rng(seed)
    R = int(rng.integers(1, 4))
    avail = (rng.random((R, 60)) < rng.uniform(0.2, 0.9)).astype(int)
    tr = make_trace(avail, rng.uniform(0.5, 2, R), rng.uniform(2.5, 4, R), rng.uniform(0, 0.05, R))
    job = JobSpec(P=5, T=float(rng.choice([5.5, 7.5, 9.0])), d=0.1, ckpt_gb=20)
    sol = solve(tr, None, job)
    rep = run(tr, None, job, ReplayPolicy(sol.schedule), initial_region=sol.replay_region())
    assert rep.deadline_met
    assert rep.total_cost == pytest.approx(sol.min_cost, abs=1e-6)


def test_relaxed_solution_is_labelled():
    tr = make_trace((np.arange(120)[None, :] % 5 > 0).astype(int), 1.0, 4.0)
    job = JobSpec(P=8, T=15, d=0.1)
    exact = solve(tr, None, job)
    coarse = solve(tr, None, job, step_factor=3)
    assert coarse.relaxed and not exact.relaxed
    assert np.isfinite(coarse.min_cost) and coarse.min_cost <= exact.min_cost + 1e-9


def test_schedule_csv():
    sol = solve(hourly([[1] * 10], 1.5, 4.0), None, JobSpec(P=6, T=10, d=0.5))
    lines = sol.to_csv().splitlines()
    assert lines[0] == "step,action,region,mode,cost" and len(lines) == len(sol.schedule) + 1


def test_lifetime_oracle_examples():
    tr = make_trace([[1, 1, 1, 0]], 1.0, 4.0)
    assert lifetime_oracle(tr, 0, 0.0) == pytest.approx(0.5)
    tr = make_trace([[0, 1, 1, 1]], 1.0, 4.0)
    assert lifetime_oracle(tr, 0, 1 / 6) == pytest.approx(tr.horizon_s / 3600 - 1 / 6)
    assert lifetime_oracle(tr, 0, 0.5) == pytest.approx(1 / 6)
    with pytest.raises(TraceError):
        lifetime_oracle(tr, 0, 0.0)


def test_job_relative_lifetime_oracle():
    tr = make_trace([[0, 1, 1, 0, 1]], 1.0, 4.0)
    orc = make_lifetime_oracle(tr, start_index=1)
    assert orc(0, 0.0) == pytest.approx(1 / 3)
    assert orc(0, 1 / 3) is None
    assert next_unavailable(tr).tolist() == [[0, 3, 3, 3, 5]]


def test_schedule_after_a_pause_replays_to_the_optimum():
    # the optimum terminates mid-run and relaunches later
    avail = [[1] * 12, [0] + [1] * 11]
    spot = [[1.5, 2, 0.5, 0.5, 2, 1, 1, 1, 0.5, 1.5, 1, 2],
            [2, 0.5, 0.5, 2, 1.5, 1, 1, 1, 2, 1.5, 0.5, 1.5]]
    tr = hourly(avail, spot, [2.5, 4.0], [0.25, 0.125])
    job = JobSpec(P=4, T=12, d=1.0, ckpt_gb=8)
    sol = solve(tr, None, job, initial_region=0)
    bf = reference.brute_force_min_cost(avail, spot, [2.5, 4.0], [[0, 0.25], [0.125, 0]], 8, 4, 12,
                                        1.0, 1, start_anywhere=False)
    assert sol.min_cost == float(bf) == 4.5
    assert any(s.action == "idle" for s in sol.schedule[sol.schedule.index(
        next(s for s in sol.schedule if s.action == "launch")):])
    rep = run(tr, None, job, ReplayPolicy(sol.schedule), initial_region=0)
    assert rep.deadline_met and rep.total_cost == sol.min_cost
