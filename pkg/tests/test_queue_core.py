import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gg2tail import queue_core as qc
from gg2tail.estimators import mean_cycle_length
from gg2tail.heavytail import XTail, parse_arrival, sample_interarrival, sample_service
from gg2tail.streams import stream

from conftest import models

nonneg = st.floats(0, 1e6, allow_nan=False)


def straight_line_step(w1, w2, v, t):
    """Independent re-implementation: first server is whichever is free first."""
    a = w1 + v - t
    if a < 0:
        a = 0.0
    b = w2 - t
    if b < 0:
        b = 0.0
    if a <= b:
        return a, b
    return b, a


@pytest.mark.parametrize("w,v,t,want", [((2, 5), 10, 1, (4, 11)), ((0, 0), 0, 1, (0, 0)),
                                        ((3, 8), 1, 10, (0, 0))])
def test_kw_step_examples(w, v, t, want):
    s = qc.kw_step(qc.QueueState(*w), v, t)
    assert (s.w1, s.w2) == want


def test_kw_step_matches_straight_line_bit_exact():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        w = np.sort(rng.exponential(5.0, 2))
        v, t = rng.pareto(2.5) + 1, rng.exponential(1.5)
        s = qc.kw_step(qc.QueueState(*w), v, t)
        assert (s.w1, s.w2) == straight_line_step(w[0], w[1], v, t)


@given(nonneg, nonneg, nonneg, nonneg)
def test_kw_step_ordering(a, b, v, t):
    s = qc.kw_step(qc.QueueState.of(a, b), v, t)
    assert 0 <= s.w1 <= s.w2


@given(nonneg, nonneg, nonneg, nonneg)
def test_kw_step_kernel_agrees(a, b, v, t):
    w = qc.QueueState.of(a, b)
    s = qc.kw_step(w, v, t)
    assert (s.w1, s.w2) == qc._nb.step(w.w1, w.w2, v, t)


def test_queue_state_validates():
    with pytest.raises(ValueError):
        qc.QueueState(3, 2)
    with pytest.raises(ValueError):
        qc.QueueState(-1, 2)
    assert qc.QueueState.of(5, 2) == qc.QueueState(2, 5)


@pytest.mark.parametrize("alpha", ["1.5", "3"])
def test_ordering_invariant_long_path(alpha):
    svc, arr = models(f"pareto:alpha={alpha}")
    assert qc.ordering_violations(svc, arr, 10**6, 7) == 0


def test_cycle_record_invariants(pareto3):
    svc, arr = pareto3
    rng = stream(1, 0)
    bs = [0.5, 1.0, 2.0, 5.0, 1e6]
    for _ in range(2000):
        rec = qc.simulate_cycle(svc, arr, bs, [2.0, 10.0], rng)
        counts = [rec.exceed_counts[b] for b in bs]
        assert all(c <= rec.tau0 for c in counts)
        assert all(x >= y for x, y in zip(counts, counts[1:]))
        assert rec.exceed_counts[1e6] == 0
        assert rec.max_w1 <= rec.max_w2
        assert rec.hit_tau2[10.0] <= rec.hit_tau2[2.0]


def test_cycle_deterministic_arrivals_rejected(pareto3):
    svc, _ = pareto3
    det = parse_arrival("det", svc)
    with pytest.raises(ValueError):
        qc.simulate_cycle(svc, det, [1.0], [], stream(0, 0))


def test_cycle_cap_aborts(pareto3):
    svc, arr = pareto3
    aborted = 0
    for i in range(200):
        try:
            qc.simulate_cycle(svc, arr, [1.0], [], stream(9, i), cap=2)
        except qc.CycleCapExceeded:
            aborted += 1
    assert aborted > 0


def test_mean_cycle_length_stable_across_seeds(pareto3):
    svc, arr = pareto3
    m1, s1 = mean_cycle_length(svc, arr, 10**5, 100)
    m2, s2 = mean_cycle_length(svc, arr, 10**5, 200)
    assert math.isfinite(m1) and abs(m1 - m2) <= 3 * math.hypot(s1, s2)


def test_simulate_from_horizon_zero(pareto3):
    path, vs, ts = qc.simulate_from(qc.QueueState(), *pareto3, 0, stream(0, 0))
    assert path == [qc.QueueState()] and len(vs) == len(ts) == 0


def test_deterministic_balance_sum_nonincreasing():
    w = qc.QueueState(5, 5)
    sums = [w.load]
    for _ in range(3):
        w = qc.kw_step(w, 1.0, 1.0)
        sums.append(w.load)
    assert all(a >= b for a, b in zip(sums, sums[1:]))


def test_simulate_from_large_w2_drains_by_interarrivals(pareto3):
    path, vs, ts = qc.simulate_from(qc.QueueState(0, 100), *pareto3, 50, stream(3, 0))
    y = 100.0
    for k in range(50):
        prev = path[k]
        if prev.w1 + vs[k] - ts[k] > prev.w2 - ts[k]:
            break
        y = max(y - ts[k], 0.0)
        assert path[k + 1].w2 == y


def test_simulate_from_first_service_zero(pareto3):
    path, vs, _ = qc.simulate_from(qc.QueueState(2, 4), *pareto3, 5, stream(4, 0), first_service_zero=True)
    assert vs[0] == 0.0 and len(path) == 6


def test_detect_stopping_examples():
    w2 = np.array([0, 1, 2, 3, 4, 5, 6, 11, 12], dtype=float)
    path = np.column_stack([np.zeros_like(w2), w2])
    st_ = qc.detect_stopping(path, [10.0], 0.2, 0.5, 0.8, 10.0)
    assert st_.tau2_of == {10.0: 7} and st_.tau1_of == {}
    assert st_.tau_bar == 3  # first n >= tau_{2}^(2) = 3 with w2 <= 8
    never = qc.detect_stopping(path[:7], [10.0], 0.2, 0.5, 0.8, 10.0)
    assert never.tau1_of == {} and never.tau2_of == {}
    with pytest.raises(ValueError):
        qc.detect_stopping(path, [10.0], 0.5, 0.2, 0.8, 10.0)


def test_forced_jump_crosses_at_step_one():
    b = 20.0
    path = [qc.QueueState()]
    path.append(qc.kw_step(path[-1], 3 * b, 1.0))
    for v, t in [(0.5, 1.0), (0.5, 1.0), (70.0, 1.0)]:
        path.append(qc.kw_step(path[-1], v, t))
    st_ = qc.detect_stopping(path, [b], 0.2, 0.5, 0.8, b)
    assert st_.tau2_of[b] == 1
    assert st_.tau2_of[b] <= st_.tau1_of.get(b, math.inf)


@given(st.lists(st.tuples(nonneg, nonneg), min_size=1, max_size=40), st.floats(0.1, 100))
@settings(max_examples=50)
def test_tau2_precedes_tau1(steps, x):
    path = [qc.QueueState()]
    for v, t in steps:
        path.append(qc.kw_step(path[-1], v, t % 50))
    st_ = qc.detect_stopping(path, [x], 0.2, 0.5, 0.8, x)
    if x in st_.tau1_of:
        assert st_.tau2_of[x] <= st_.tau1_of[x]


@pytest.mark.parametrize("state,first_zero", [((0, 0), False), ((0, 50), True), ((20, 20), False),
                                              ((5, 300), True)])
def test_domination_small(pareto25, state, first_zero):
    assert qc.domination_violations(qc.QueueState(*state), *pareto25, 200, 4000, 5,
                                    first_service_zero=first_zero) == 0


def test_drift_negative_at_large_w2(pareto3):
    for w1 in (0.0, 1000.0):
        m, se = qc.drift_at(qc.QueueState(w1, 1000.0), *pareto3, 10**5, 2)
        assert m + 5 * se < 0


def test_overshoot_sample_above_level(pareto3):
    z, used = qc.first_passage_overshoots(*pareto3, 10.0, 200, 1)
    assert len(z) >= 200 and np.all(z > 10.0) and used % qc.CYCLE_BLOCK == 0
    z2, _ = qc.first_passage_overshoots(*pareto3, 10.0, 200, 1, threads=3)
    assert np.array_equal(z, z2)


def test_dkw_epsilon():
    assert qc.dkw_epsilon(10**4) == pytest.approx(math.sqrt(math.log(2000) / 2e4))


def test_overshoot_dominance_on_exact_sample(pareto3):
    # a sample drawn from the reference law itself passes
    svc, arr = pareto3
    xt = XTail(svc, arr)
    b = 10.0
    rng = stream(8, 0)
    x = sample_service(svc, rng, size=400_000) - sample_interarrival(arr, rng, size=400_000)
    ref = x[x > b] + b
    worst, eps = qc.overshoot_dominance(ref, xt, b, np.linspace(b, 10 * b, 91))
    assert worst >= 0 and eps > 0
    worst_shifted, _ = qc.overshoot_dominance(ref + 5 * b, xt, b, np.linspace(b, 10 * b, 91))
    assert worst_shifted < 0
