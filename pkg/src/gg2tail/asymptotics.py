"""Delay-tail target shapes, log-log slope fits and the one-jump/two-jump classifier."""
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .heavytail import tail_eval


class Regime(Enum):
    FINITE_VARIANCE = "FiniteVariance"
    INFINITE_VARIANCE = "InfiniteVariance"


class Dominance(Enum):
    ONE_JUMP = "OneJumpDominates"
    TWO_JUMPS = "TwoJumpsDominate"
    COMPARABLE = "Comparable"


@dataclass(frozen=True)
class AsymptoteTarget:
    service: object
    regime: Regime

    @classmethod
    def for_model(cls, service):
        if service.alpha > 2:
            return cls(service, Regime.FINITE_VARIANCE)
        if service.alpha < 2:
            return cls(service, Regime.INFINITE_VARIANCE)
        raise ValueError("alpha = 2 sits between the two regimes and has no target")

    def one_jump(self, b):
        """b^2 Bbar(b^2) in finite variance, b^alpha Bbar(b^alpha) otherwise."""
        e = 2.0 if self.regime is Regime.FINITE_VARIANCE else self.service.alpha
        return b**e * tail_eval(self.service, b**e)

    def two_jumps(self, b):
        if self.regime is not Regime.FINITE_VARIANCE:
            raise ValueError("the two-jump term only exists with finite variance")
        return b**2 * tail_eval(self.service, b) ** 2


def target_eval(target, b):
    if not b > 0:
        raise ValueError("b must be positive")
    t1 = target.one_jump(b)
    if target.regime is Regime.FINITE_VARIANCE:
        t2 = target.two_jumps(b)
        return t1, t2, t1 + t2
    return t1, None, t1


def slope_target(service):
    """Exponent of the pure-power target: 2 - 2 alpha (finite variance), alpha - alpha^2 otherwise."""
    a = service.alpha
    return 2 - 2 * a if a > 2 else a - a * a


def fit_loglog_slope(points):
    """Weighted least squares of log(estimate) on log(b).

    ``points`` are (b, estimate, stderr).  Weights use the delta-method variance
    (stderr / estimate)^2 of the log estimate; with any zero stderr the fit is
    unweighted and the slope error comes from residuals.
    """
    pts = list(points)
    if len(pts) < 3:
        raise ValueError("need at least three points")
    b, est, se = (np.array(col, dtype=float) for col in zip(*pts))
    if np.any(est <= 0) or np.any(b <= 0):
        raise ValueError("estimates and levels must be positive")
    x, y = np.log(b), np.log(est)
    known = np.all(se > 0)
    w = (est / se) ** 2 if known else np.ones_like(x)
    xm = np.sum(w * x) / np.sum(w)
    ym = np.sum(w * y) / np.sum(w)
    sxx = np.sum(w * (x - xm) ** 2)
    slope = np.sum(w * (x - xm) * (y - ym)) / sxx
    if known:
        return float(slope), float(math.sqrt(1.0 / sxx))
    resid = y - (ym + slope * (x - xm))
    s2 = np.sum(resid**2) / (len(x) - 2)
    return float(slope), float(math.sqrt(s2 / sxx))


DOMINANCE_GRID = np.geomspace(10.0, 1e10, 41)


def dominance_ratio(target, b):
    t1, t2, _ = target_eval(target, b)
    return t1 / t2


def classify_dominance(target, b_grid=None):
    """Compare the one-jump and two-jump terms via r(b) = term1 / term2 on a geometric grid."""
    if target.regime is not Regime.FINITE_VARIANCE:
        raise ValueError("dominance is only defined in the finite-variance regime")
    bs = DOMINANCE_GRID if b_grid is None else np.asarray(b_grid, dtype=float)
    r = np.array([dominance_ratio(target, b) for b in bs])
    d = np.diff(r)
    if np.all(d > 0) and r[-1] > 10:
        return Dominance.ONE_JUMP
    if np.all(d < 0) and r[-1] < 0.1:
        return Dominance.TWO_JUMPS
    return Dominance.COMPARABLE


CSV_FIELDS = ["b", "estimate", "stderr", "term1", "term2", "total", "ratio"]


def target_rows(target, reports):
    """CSV rows pairing {b: EstimateReport} with the target terms."""
    rows = []
    for b, rep in sorted(reports.items()):
        t1, t2, tot = target_eval(target, b)
        rows.append([repr(float(b)), repr(float(rep.point)), repr(float(rep.stderr)), repr(float(t1)),
                     "" if t2 is None else repr(float(t2)), repr(float(tot)), repr(float(rep.point / tot))])
    return rows
