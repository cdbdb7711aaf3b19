"""Fast built-in checks with exact answers; ``gg2tail selftest`` runs them all."""
import math

import numpy as np

from . import asymptotics, queue_core as qc, rw_ld
from .estimators import regenerative_tail, time_average_tail
from .heavytail import (ArrivalModel, SlowVariation, TailModel, karamata_check, parse_arrival,
                        parse_service, sample_interarrival, tail_eval, tail_quantile)
from .streams import stream


def _pareto3():
    return TailModel.create(3.0, SlowVariation.const(1.0))


def _raises(fn, exc=ValueError):
    try:
        fn()
    except exc:
        return True
    return False


def check_tail_eval():
    m = _pareto3()
    return math.isclose(tail_eval(m, 10.0), 1e-3, rel_tol=1e-15) and tail_eval(m, 0.5) == 1.0


def check_quantile():
    m = _pareto3()
    return math.isclose(tail_quantile(m, 1e-3), 10.0, rel_tol=1e-12) and tail_quantile(m, 1.0) == m.x0


def check_quantile_domain():
    m = _pareto3()
    return _raises(lambda: tail_quantile(m, 0.0)) and _raises(lambda: tail_quantile(m, 1.5))


def check_arrivals():
    svc = TailModel.create(2.0 + 1.0, SlowVariation.const(1.0 / 1.5**3))  # mean 1
    det = ArrivalModel.matched("det", svc)
    uni = ArrivalModel.matched("uniform", svc)
    u = sample_interarrival(uni, stream(0, 0), size=10_000)
    return (math.isclose(svc.mean, 1.0, rel_tol=1e-8) and sample_interarrival(det, stream(0, 0)) == svc.mean
            and u.min() >= 0.0 and u.max() <= 2.0 * svc.mean)


def check_karamata_exact():
    return math.isclose(karamata_check(3.0, 1.0, 7.0), 1.0, rel_tol=1e-9)


def check_kw_step():
    cases = [((2, 5), 10, 1, (4, 11)), ((0, 0), 0, 1, (0, 0)), ((3, 8), 1, 10, (0, 0))]
    for (w1, w2), v, t, want in cases:
        s = qc.kw_step(qc.QueueState(w1, w2), v, t)
        if (s.w1, s.w2) != want:
            return False
    return True


def check_deterministic_cycle():
    """Deterministic arrivals are refused for estimation; the step cap aborts loudly."""
    svc = parse_service("pareto:alpha=3")
    det = parse_arrival("det", svc)
    refused = (_raises(lambda: regenerative_tail(svc, det, [1.0], 10, 0))
               and _raises(lambda: qc.simulate_cycle(svc, det, [1.0], [], stream(0, 0))))
    aborted = 0
    for i in range(50):
        try:
            rec = qc.simulate_cycle(svc, det, [1.0], [], stream(0, i), cap=1, allow_deterministic=True)
            if rec.tau0 != 1:
                return False
        except qc.CycleCapExceeded:
            aborted += 1
    return refused and aborted > 0


def check_simulate_from_empty():
    svc = parse_service("pareto:alpha=3")
    path, _, _ = qc.simulate_from(qc.QueueState(), svc, parse_arrival("exp", svc), 0, stream(0, 0))
    return path == [qc.QueueState()]


def check_stopping():
    w2 = np.array([0, 1, 2, 3, 4, 5, 6, 11, 12], dtype=float)
    path = np.column_stack([np.zeros_like(w2), w2])
    st = qc.detect_stopping(path, [10.0], 0.2, 0.5, 0.8, 10.0)
    never = qc.detect_stopping(path[:7], [10.0], 0.2, 0.5, 0.8, 10.0)
    return st.tau2_of == {10.0: 7} and not never.tau1_of and not never.tau2_of


def check_rule_of_three():
    svc = parse_service("pareto:alpha=3")
    arr = parse_arrival("exp", svc)
    r = regenerative_tail(svc, arr, [1e9], 1000, 3)[1e9]
    return r.point == 0.0 and r.ci_low == 0.0 and r.ci_high > 0.0


def check_time_average_edges():
    svc = parse_service("pareto:alpha=3")
    arr = parse_arrival("exp", svc)
    all_pos = time_average_tail(svc, arr, [-1.0], 1000, 100, 1)[-1.0]
    single = time_average_tail(svc, arr, [1.0], 1000, 999, 1)[1.0]
    return all_pos.point == 1.0 and not single.reliable


def check_brownian_deep_tail():
    return rw_ld.brownian_max_abs_tail(8.0) < 1e-14


def check_stable_domain():
    svc = parse_service("pareto:alpha=2.1")
    spec = rw_ld.WalkSpec.create(svc, parse_arrival("exp", svc))
    return _raises(lambda: rw_ld.stable_max_bound_check(spec, [1000], [10.0], 10, 0))


def check_targets():
    t = asymptotics.AsymptoteTarget.for_model(parse_service("pareto:alpha=1.5"))
    t1, t2, _ = asymptotics.target_eval(t, 10.0)
    one = asymptotics.target_eval(t, 1.0)[0]
    return math.isclose(t1, 10**-0.75, rel_tol=1e-12) and t2 is None and 0 < one <= 1


def check_slope_exact():
    pts = [(b, b**-4.0, 0.0) for b in (5.0, 8.0, 12.0, 18.0, 25.0)]
    slope, _ = asymptotics.fit_loglog_slope(pts)
    return abs(slope + 4.0) < 1e-12


CHECKS = [
    ("tail_eval", check_tail_eval),
    ("tail_quantile", check_quantile),
    ("tail_quantile_domain", check_quantile_domain),
    ("arrivals", check_arrivals),
    ("karamata_exact", check_karamata_exact),
    ("kw_step", check_kw_step),
    ("deterministic_cycle", check_deterministic_cycle),
    ("simulate_from_empty", check_simulate_from_empty),
    ("stopping_times", check_stopping),
    ("rule_of_three", check_rule_of_three),
    ("time_average_edges", check_time_average_edges),
    ("brownian_deep_tail", check_brownian_deep_tail),
    ("stable_domain", check_stable_domain),
    ("targets", check_targets),
    ("slope_exact", check_slope_exact),
]


def run():
    out = []
    for name, fn in CHECKS:
        try:
            ok = bool(fn())
            out.append((name, ok, ""))
        except Exception as e:  # a crash is a failed check, reported with its message
            out.append((name, False, f"{type(e).__name__}: {e}"))
    return out
