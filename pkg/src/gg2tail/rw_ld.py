"""Maxima of the centred walk S_n = X_1 + ... + X_n and their uniform large-deviation comparators.

Brownian comparator (finite variance):
    P{max_{k<=m} |S_k| > x} <= 3 (P{max_{t<=1} |B(t)| > x / (sigma sqrt m)} + m P{|X| > x})
Stable comparator (alpha in (1, 2), Bbar(x) ~ c x^-alpha):
    P{max_{k<=m} |S_k| > x} <= 3 P{Z* > x / (c m)^(1/alpha)},  Z* = max_{t<=1} Z(t)
"""
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special, stats

from . import _nb
from ._nb import jit
from .estimators import EstimateReport
from .heavytail import XTail
from .streams import run_blocks, split

M0 = 1000  # smallest walk length on which the bounds are asserted
PATH_BLOCK = 1 << 12


@dataclass
class WalkSpec:
    service: object
    arrival: object
    xtail: XTail
    mean: float
    sigma2: float

    @classmethod
    def create(cls, service, arrival):
        xt = XTail(service, arrival)
        mean, var = xt.moments
        return cls(service, arrival, xt, mean, var)

    @property
    def sigma(self):
        return math.sqrt(self.sigma2)

    def abs_tail(self, x):
        return self.xtail.abs_tail(x)


# ---------------------------------------------------------------- kernels

@jit
def _walk_max_block(rng, kind, alpha, c, x0, fam, mean, m, out):
    for i in range(out.shape[0]):
        s = 0.0
        mx = 0.0
        for _ in range(m):
            s += _nb.draw_service(rng, kind, alpha, c, x0) - _nb.draw_arrival(rng, fam, mean)
            a = abs(s)
            if a > mx:
                mx = a
        out[i] = mx


@jit
def _bm_abs_max_block(rng, n_steps, out):
    sd = math.sqrt(1.0 / n_steps)
    for i in range(out.shape[0]):
        s = 0.0
        mx = 0.0
        for _ in range(n_steps):
            s += sd * rng.standard_normal()
            a = abs(s)
            if a > mx:
                mx = a
        out[i] = mx


@jit
def cms_draw(rng, alpha):
    """Standard totally skewed (beta = 1) alpha-stable variate, Chambers-Mallows-Stuck."""
    t = math.tan(math.pi * alpha / 2)
    shift = math.atan(t) / alpha
    scale = (1.0 + t * t) ** (1.0 / (2.0 * alpha))
    v = math.pi * (rng.random() - 0.5)
    w = rng.standard_exponential()
    return (scale * math.sin(alpha * (v + shift)) / math.cos(v) ** (1.0 / alpha)
            * (math.cos(v - alpha * (v + shift)) / w) ** ((1.0 - alpha) / alpha))


@jit
def _stable_max_block(rng, alpha, sigma, n_steps, out):
    inc = sigma * (1.0 / n_steps) ** (1.0 / alpha)
    for i in range(out.shape[0]):
        z = 0.0
        mx = 0.0
        for _ in range(n_steps):
            z += inc * cms_draw(rng, alpha)
            if z > mx:
                mx = z
        out[i] = mx


def _blocked(kernel, n, seed, threads, *args):
    sizes = split(int(n), PATH_BLOCK)

    def block(i, rng):
        out = np.empty(sizes[i])
        kernel(rng, *args, out)
        return out

    return np.concatenate(run_blocks(block, len(sizes), seed, threads))


# ---------------------------------------------------------------- Brownian comparator

def brownian_max_tail(y):
    """P{max_{t<=1} B(t) > y} = 2 Phi-bar(y)."""
    return 2.0 * stats.norm.sf(y)


def brownian_max_abs_tail(y, tol=1e-12):
    """P{max_{t<=1} |B(t)| > y} by the alternating reflection series."""
    if not y > 0:
        raise ValueError("y must be positive")
    total, k = 0.0, 1
    while True:
        term = 4.0 * stats.norm.sf((2 * k - 1) * y)
        total += term if k % 2 else -term
        if term < tol:
            return min(max(total, 0.0), 1.0)
        k += 1


def brownian_grid_abs_max(n_steps, n_paths, seed, threads=None):
    """Grid-walk samples of max |B| on [0, 1]."""
    return _blocked(_bm_abs_max_block, n_paths, seed, threads, int(n_steps))


# ---------------------------------------------------------------- walk maxima

def walk_abs_maxima(spec, m, n_reps, seed, threads=None):
    return _blocked(_walk_max_block, n_reps, seed, threads, *spec.service.params, *spec.arrival.params, int(m))


def _binomial_report(k, n, seed, method):
    p = k / n
    if k == 0:
        return EstimateReport(0.0, 0.0, 0.0, 3.0 / n, n, seed, method)
    return EstimateReport.normal(p, math.sqrt(p * (1 - p) / n), n, seed, method)


def max_abs_walk_tail(spec, m, x, n_reps, seed, threads=None, maxima=None):
    """Monte Carlo P{max_{k<=m} |S_k| > x} with a binomial stderr."""
    if x < math.sqrt(m):
        raise ValueError(f"need x >= sqrt(m); got x={x}, m={m}")
    mx = walk_abs_maxima(spec, m, n_reps, seed, threads) if maxima is None else maxima
    return _binomial_report(int(np.count_nonzero(mx > x)), len(mx), seed, "walk-max")


@dataclass
class BoundRow:
    kind: str
    m: int
    x: float
    empirical: float
    bound: float
    slack: float
    stderr: float
    asserted: bool

    def csv(self):
        return [self.kind, str(self.m)] + [repr(float(v)) for v in
                                           (self.x, self.empirical, self.bound, self.slack, self.stderr)]


CSV_FIELDS = ["kind", "m", "x", "empirical", "bound", "slack", "stderr"]


def nagaev_bound_check(spec, m_list, x_grid_per_m, n_reps, seed, threads=None):
    """Worst slack of the Brownian-plus-one-jump bound; rows below M0 are informational."""
    if not spec.service.alpha > 2:
        raise ValueError("the Brownian comparator needs alpha > 2")
    rows = []
    for j, m in enumerate(m_list):
        mx = walk_abs_maxima(spec, m, n_reps, seed + j, threads)
        for x in x_grid_per_m[j]:
            rep = max_abs_walk_tail(spec, m, x, n_reps, seed, maxima=mx)
            bound = 3.0 * (brownian_max_abs_tail(x / (spec.sigma * math.sqrt(m))) + m * spec.abs_tail(x))
            slack = bound + 3.0 * rep.stderr - rep.point
            rows.append(BoundRow("nagaev", int(m), float(x), rep.point, bound, slack, rep.stderr, m >= M0))
    asserted = [r.slack for r in rows if r.asserted]
    return (min(asserted) if asserted else math.inf), rows


# ---------------------------------------------------------------- stable comparator

def stable_scale(alpha):
    """Scale making the standard CMS variate satisfy P{Z(1) > x} ~ x^-alpha."""
    c_alpha = (1 - alpha) / (special.gamma(2 - alpha) * math.cos(math.pi * alpha / 2))
    return c_alpha ** (-1.0 / alpha)


def _check_stable_alpha(alpha):
    if not 1 < alpha < 2:
        raise ValueError(f"stable comparator needs alpha in (1, 2), got {alpha}")


@lru_cache(maxsize=None)
def stable_max_samples(alpha, n_steps=1000, n_paths=100_000, seed=7, threads=None):
    """Sorted samples of Z* = max_{t<=1} Z(t) on a grid; cached per argument tuple."""
    _check_stable_alpha(alpha)
    out = _blocked(_stable_max_block, n_paths, seed, threads, float(alpha), stable_scale(alpha), int(n_steps))
    out.sort()
    return out


def stable_max_tail(alpha, x, **kw):
    z = stable_max_samples(alpha, **kw)
    k = len(z) - np.searchsorted(z, x, side="right")
    return k / len(z), math.sqrt(max(k, 1) * (len(z) - k) / len(z)) / len(z)


def stable_max_bound_check(spec, m_list, x_grid, n_reps, seed, threads=None, stable_kw=None):
    """Worst slack of the stable-maximum bound for a ConstFactor model with alpha in (1, 2)."""
    alpha = spec.service.alpha
    _check_stable_alpha(alpha)
    if spec.service.slow.kind != "const":
        raise ValueError("stable comparator needs a ConstFactor tail")
    c = spec.service.slow.c
    stable_kw = stable_kw or {}
    rows = []
    for j, m in enumerate(m_list):
        mx = walk_abs_maxima(spec, m, n_reps, seed + j, threads)
        for x in x_grid:
            rep = _binomial_report(int(np.count_nonzero(mx > x)), len(mx), seed, "walk-max")
            zt, _ = stable_max_tail(alpha, x / (c * m) ** (1 / alpha), **stable_kw)
            bound = 3.0 * zt
            slack = bound + 3.0 * rep.stderr - rep.point
            rows.append(BoundRow("stable", int(m), float(x), rep.point, bound, slack, rep.stderr, m >= M0))
    asserted = [r.slack for r in rows if r.asserted]
    return (min(asserted) if asserted else math.inf), rows

