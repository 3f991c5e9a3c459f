import math
import pytest
from hypothesis import assume, given, strategies as st

from nomadsim.valuation import (CandidateState, DeadlineMissed, ProgressSnapshot, effectiveness,
                                rank_candidates, utility, value_of_progress)


def test_equilibrium_is_anchor_price():
    assert value_of_progress(ProgressSnapshot(30, 20, 100, 150), 2.6) == 2.6
    assert value_of_progress(ProgressSnapshot(0, 0, 100, 150), 2.6) == 2.6


def test_pressure_raises_value_to_about_four():
    # theta = 0.73 against an average of 0.51: the value rises well above the anchor
    P, T, t = 30.0, 45.0, 13.0
    p = P - 0.73 * (T - t)
    V = value_of_progress(ProgressSnapshot(t, p, P, T), 2.8)
    assert V == pytest.approx(4.0, abs=0.05)


def test_completed_and_late():
    assert value_of_progress(ProgressSnapshot(40, 100, 100, 150), 3.0) == 0.0
    with pytest.raises(DeadlineMissed):
        value_of_progress(ProgressSnapshot(150, 90, 100, 150), 3.0)


def test_utility_worked_example():
    c = CandidateState(1, "spot", 1.81, 4.0, 2.0)
    assert effectiveness(4.0, 0.1) == pytest.approx(0.975)
    assert utility(c, 2.6, 0.1) == pytest.approx(2.535 - 1.81 - 0.5)
    assert utility(c, 2.6, 0.1) > 0


def test_utility_special_cases():
    assert utility(CandidateState(0, "idle"), 5.0, 0.1) == 0.0
    assert utility(CandidateState(0, "od", 3.0), 5.0, 0.1) == 2.0
    short = CandidateState(0, "spot", 1.0, 0.05, 0.4)
    assert utility(short, 5.0, 0.1) == pytest.approx(-1.0 - 0.4 / 0.05)


def test_rank_examples():
    cands = [CandidateState(0, "od", 4.0), CandidateState(1, "od", 4.5), CandidateState(0, "idle")]
    assert rank_candidates(cands, 0.5, 0.1, CandidateState(0, "idle"), 0.0) == []
    # two challengers with equal utility: the cheaper one is tried first
    V = 3.0
    b = CandidateState(1, "spot", 2.3, 10.0)
    gap = utility(CandidateState(0, "spot", 1.8, 10.0), V, 0.1) - utility(b, V, 0.1)
    a = CandidateState(0, "spot", 1.8, 10.0, migration=gap * 10.0)
    ranked = rank_candidates([b, a], V, 0.1, CandidateState(2, "idle"), 0.0)
    assert [c.price for c, _ in ranked] == [1.8, 2.3]
    assert ranked[0][1] == pytest.approx(ranked[1][1])


def test_rank_hysteresis_margin():
    cur = CandidateState(0, "od", 2.5)
    challenger = CandidateState(1, "od", 2.45)
    V = 3.0  # current utility 0.5, challenger 0.55
    assert rank_candidates([challenger], V, 0.1, cur, 0.1) == []
    assert rank_candidates([challenger], V, 0.1, cur, 0.01)


@given(st.floats(1, 100), st.floats(1.05, 3), st.floats(0.01, 0.98), st.floats(0.01, 0.99),
       st.floats(0.01, 0.99))
def test_monotone_in_remaining_work(P, ratio, tf, pf1, pf2):
    T = P * ratio
    t = tf * T
    p1, p2 = sorted((pf1 * P, pf2 * P))
    assume(p2 - p1 > 1e-6 * P)
    assume(P - p2 < T - t)
    v_low = value_of_progress(ProgressSnapshot(t, p2, P, T), 1.0)
    v_high = value_of_progress(ProgressSnapshot(t, p1, P, T), 1.0)
    assert v_high > v_low


@given(st.floats(1, 100), st.floats(1.05, 3), st.floats(0.01, 0.98), st.floats(0.01, 0.99),
       st.sampled_from([0.1, 3, 10]))
def test_scale_invariance(P, ratio, tf, pf, k):
    T = P * ratio
    s = ProgressSnapshot(tf * T, pf * P, P, T)
    sk = ProgressSnapshot(k * s.t, k * s.p, k * P, k * T)
    assert value_of_progress(sk, 2.0) == pytest.approx(value_of_progress(s, 2.0), rel=1e-10)


@given(st.floats(0.5, 10), st.floats(0.2, 5), st.floats(0.2, 50), st.floats(0.1, 20),
       st.floats(0, 10))
def test_utility_monotone(V, price, L, dL, mig):
    assume(V > price)
    base = CandidateState(0, "spot", price, L, mig)
    longer = CandidateState(0, "spot", price, L + dL, mig)
    dearer = CandidateState(0, "spot", price + 0.1, L, mig)
    heavier = CandidateState(0, "spot", price, L, mig + 1)
    u = utility(base, V, 0.1)
    assert utility(longer, V, 0.1) >= u - 1e-12
    assert utility(dearer, V, 0.1) < u
    assert utility(heavier, V, 0.1) < u


@given(st.lists(st.tuples(st.integers(0, 3), st.sampled_from(["spot", "od", "idle"]),
                          st.sampled_from([1.0, 1.8, 2.3, 4.0]),
                          st.sampled_from([0.5, 2.0, 8.0, math.inf])),
                min_size=1, max_size=10, unique_by=lambda x: (x[0], x[1])),
       st.randoms())
def test_rank_permutation_invariant(specs, rnd):
    cands = [CandidateState(r, m, p if m != "idle" else 0.0, L if m == "spot" else math.inf)
             for r, m, p, L in specs]
    cur = CandidateState(9, "idle")
    a = rank_candidates(cands, 3.0, 0.1, cur, 0.05)
    shuffled = list(cands)
    rnd.shuffle(shuffled)
    assert rank_candidates(shuffled, 3.0, 0.1, cur, 0.05) == a


def test_equilibrium_spot_positive_od_nonpositive():
    snap = ProgressSnapshot(50, 100 / 3, 100, 150)
    V = value_of_progress(snap, 3.0)
    assert V == pytest.approx(3.0)
    assert utility(CandidateState(0, "spot", 1.5, 10.0), V, 0.1) > 0
    for od in (3.0, 3.5, 5.0):
        assert utility(CandidateState(0, "od", od), V, 0.1) <= 1e-12
