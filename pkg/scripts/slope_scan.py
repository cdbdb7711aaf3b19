"""Log-log slope of the regenerative delay tail against the target exponent.

    python3 scripts/slope_scan.py --service pareto:alpha=3 --b 5,8,12,18,25 --cycles 4e7
"""
import argparse

from gg2tail.asymptotics import AsymptoteTarget, fit_loglog_slope, slope_target, target_eval
from gg2tail.cli import float_list, sci_int
from gg2tail.estimators import regenerative_tail
from gg2tail.heavytail import parse_arrival, parse_service


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--service", default="pareto:alpha=3")
    p.add_argument("--arrival", default="exp")
    p.add_argument("--b", type=float_list, default=[5.0, 8.0, 12.0, 18.0, 25.0])
    p.add_argument("--cycles", type=sci_int, default=10**7)
    p.add_argument("--seed", type=sci_int, default=1)
    p.add_argument("--threads", type=sci_int)
    a = p.parse_args()

    svc = parse_service(a.service)
    arr = parse_arrival(a.arrival, svc)
    target = AsymptoteTarget.for_model(svc)
    reps = regenerative_tail(svc, arr, a.b, a.cycles, a.seed, a.threads)
    print(f"{'b':>8} {'estimate':>12} {'stderr':>10} {'target':>12} {'ratio':>8}")
    for b in sorted(reps):
        r = reps[b]
        tot = target_eval(target, b)[2]
        print(f"{b:8.2f} {r.point:12.4e} {r.stderr:10.2e} {tot:12.4e} {r.point / tot:8.3f}")
    pts = [(b, reps[b].point, reps[b].stderr) for b in sorted(reps) if reps[b].point > 0]
    slope, se = fit_loglog_slope(pts)
    print(f"slope {slope:.3f} +- {se:.3f}  (pure-power target {slope_target(svc):.3f})")


if __name__ == "__main__":
    main()
