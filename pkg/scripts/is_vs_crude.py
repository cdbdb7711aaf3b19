"""Importance sampling against crude Monte Carlo for P_0{W^(2) exceeds b before emptying}.

    python3 scripts/is_vs_crude.py --alpha 2.5 --b 20 --paths 1e5 --crude-paths 1e7
"""
import argparse
import math

from gg2tail import queue_core as qc, rare_event as re_
from gg2tail.cli import float_list, sci_int
from gg2tail.heavytail import parse_arrival, parse_service


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--alpha", type=float, default=2.5)
    p.add_argument("--b", type=float_list, default=[20.0])
    p.add_argument("--paths", type=sci_int, default=100_000)
    p.add_argument("--crude-paths", type=sci_int, default=10**7)
    p.add_argument("--seed", type=sci_int, default=1)
    a = p.parse_args()

    svc = parse_service(f"pareto:alpha={a.alpha}")
    arr = parse_arrival("exp", svc)
    w = qc.QueueState()
    for b in a.b:
        cal = re_.calibrate(svc, arr, b, seed=a.seed)
        th = cal.params
        print(f"b={b:g}: kappa0={th.kappa0:g} kappa1={th.kappa1:g} kappa2={th.kappa2:.4f} a={th.a:g}")
        cal.model.hitting_probability(w, 1000, a.seed)  # compile before timing
        isr = cal.model.hitting_probability(w, a.paths, a.seed + 1)
        crude, secs = re_.crude_hitting_probability(w, b, svc, arr, a.crude_paths, a.seed + 2)
        for name, r, t in (("IS", isr.report, isr.seconds), ("crude", crude, secs)):
            rel = r.stderr / r.point if r.point > 0 else math.inf
            print(f"  {name:6s} {r.point:.5e} +- {r.stderr:.2e}  {t:7.2f}s  rel.err*sqrt(s) {rel * math.sqrt(t):.3g}")
        print(f"  certificate {isr.certificate:.4e}  clamp rate {isr.clamp_rate:g}  mean steps {isr.mean_steps:.1f}")


if __name__ == "__main__":
    main()
