"""Rare-event estimators for the hitting probability P_w{tau_b^(2) < tau0} and lower-bound events.

Importance sampling uses the Lyapunov-function construction

    h_b(z) = int_{b-z}^{b+kappa0} P{X > u} du,     G_b(l) = min(kappa1 h_b(l), 1),

with l = w1 + w2.  Where G_b(l) < 1 the proposal takes a big jump X > a(b - l)
with probability p(w) = P{X > a(b - l)} / (kappa2 h_b(l)) and otherwise a nominal
step conditioned on {X <= a(b - l), W^(2) > 0}.  Where G_b(l) = 1 the nominal
kernel runs with unit likelihood ratio.  Whenever E^theta[ratio G_b(L')] <= G_b(l)
holds on {G_b < 1}, kappa1 h_b(w1 + w2) bounds the hitting probability.

Lower-bound events are evaluated in time units where E[T] = 1 after scaling
b by the mean interarrival time: bs = b / E[T] counts arrivals, time windows
are bs^e * E[T] and the workload level stays b.
"""
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, stats

from . import _nb
from . import queue_core as qc
from .asymptotics import fit_loglog_slope
from .estimators import EstimateReport, mean_cycle_length
from .heavytail import XTail, tail_eval
from .rw_ld import cms_draw, stable_scale
from ._nb import jit
from .streams import run_blocks, split, stream

PATH_BLOCK = 1 << 12
TRIAL_BLOCK = 1 << 12


class NumericalDiagnostic(RuntimeError):
    """A run produced a result that violates a structural guarantee."""


class Kappa2Violation(NumericalDiagnostic):
    pass


class CertificateViolation(NumericalDiagnostic):
    pass


@dataclass(frozen=True)
class LyapunovParams:
    kappa0: float
    kappa1: float
    kappa2: float
    b: float
    a: float = 0.5
    delta_plus: float = 0.25
    c_delta: float = 0.0

    def __post_init__(self):
        if min(self.kappa0, self.kappa1, self.kappa2, self.b) <= 0:
            raise ValueError("kappas and b must be positive")
        if not 0 < self.a < 1:
            raise ValueError("a must lie in (0, 1)")
        if not 0 < self.delta_plus < 0.5:
            raise ValueError("delta_plus must lie in (0, 1/2)")


@dataclass(frozen=True)
class WeightedSample:
    indicator: int
    weight: float
    steps: int


def h_b(z, params, tail):
    """int_{b-z}^{b+kappa0} tail(u) du by adaptive quadrature."""
    if z < 0:
        raise ValueError("z must be nonnegative")
    lo, hi = params.b - z, params.b + params.kappa0
    pts = [p for p in (0.0, 1.0) if lo < p < hi]
    val, _ = integrate.quad(lambda u: float(tail(u)), lo, hi, epsabs=0.0, epsrel=1e-10, limit=400,
                            points=pts or None)
    return val


def G_b(l, params, tail):
    if l < 0:
        raise ValueError("l must be nonnegative")
    return min(params.kappa1 * h_b(l, params, tail), 1.0)


# ---------------------------------------------------------------- kernels

@jit
def _h(ix, dy, b, k0, l):
    return _nb.interp(0.0, dy, ix, b - l) - _nb.interp(0.0, dy, ix, b + k0)


@jit
def _g(ix, dy, b, k0, k1, lstar, l):
    if l >= lstar:
        return 1.0
    v = k1 * _h(ix, dy, b, k0, l)
    return v if v < 1.0 else 1.0


@jit
def _empty_mass(fam, mean, xt, dy, w1, w2):
    """P{W^(2)' = 0} = P{T >= w2, V <= T - w1} for exponential arrivals."""
    return math.exp(-w2 / mean) * (1.0 - _nb.interp(0.0, dy, xt, w2 - w1))


@jit
def _is_step(rng, kind, alpha, c, x0, fam, mean, xt, ix, dy, b, k0, k1, k2, a, lstar, w1, w2):
    """One proposal transition; returns (w1', w2', ratio, branch, clamped).

    branch: 0 nominal (G = 1), 1 big jump, 2 conditioned small step.
    """
    l = w1 + w2
    if l >= lstar:
        v = _nb.draw_service(rng, kind, alpha, c, x0)
        t = _nb.draw_arrival(rng, fam, mean)
        n1, n2 = _nb.step(w1, w2, v, t)
        return n1, n2, 1.0, 0, 0
    h = _h(ix, dy, b, k0, l)
    y = a * (b - l)
    px = _nb.interp(0.0, dy, xt, y)
    p = px / (k2 * h)
    clamped = 0
    if p > 1.0:
        p = 1.0
        clamped = 1
    if rng.random() < p:
        # X | X > y: T nominal, V | V > y + T, accepted with prob Bbar(y + T) / Bbar(y)
        by = _nb.tail(kind, alpha, c, x0, y)
        while True:
            t = _nb.draw_arrival(rng, fam, mean)
            v = _nb.draw_service_above(rng, kind, alpha, c, x0, y + t)
            if by * rng.random() < _nb.tail(kind, alpha, c, x0, y + t):
                break
        n1, n2 = _nb.step(w1, w2, v, t)
        return n1, n2, px / p, 1, clamped
    q = (1.0 - px) - _empty_mass(fam, mean, xt, dy, w1, w2)
    while True:
        v = _nb.draw_service(rng, kind, alpha, c, x0)
        t = _nb.draw_arrival(rng, fam, mean)
        if v - t <= y:
            n1, n2 = _nb.step(w1, w2, v, t)
            if n2 > 0.0:
                return n1, n2, q / (1.0 - p), 2, clamped


@jit
def _is_block(rng, kind, alpha, c, x0, fam, mean, xt, ix, dy, b, k0, k1, k2, a, lstar,
              w1s, w2s, cap, out):
    """Weighted hitting indicators per path; returns (clamps, steps) or (-1, -1) past cap."""
    clamps = 0
    steps = 0
    for i in range(out.shape[0]):
        w1 = w1s
        w2 = w2s
        wt = 1.0
        n = 0
        est = 0.0
        while True:
            w1, w2, r, br, cl = _is_step(rng, kind, alpha, c, x0, fam, mean, xt, ix, dy, b, k0, k1, k2,
                                         a, lstar, w1, w2)
            wt *= r
            n += 1
            clamps += cl
            if w2 > b:
                est = wt
                break
            if w2 == 0.0:
                break
            if n >= cap:
                return -1, -1
        out[i] = est
        steps += n
    return clamps, steps


@jit
def _l1_block(rng, kind, alpha, c, x0, fam, mean, xt, ix, dy, b, k0, k1, k2, a, lstar,
              w1, w2, n, proposal):
    """Sum and sum of squares of ratio * G_b(L') (proposal) or G_b(L') 1{W^(2)' > 0} (nominal)."""
    s = 0.0
    ss = 0.0
    for _ in range(n):
        if proposal:
            n1, n2, r, br, cl = _is_step(rng, kind, alpha, c, x0, fam, mean, xt, ix, dy, b, k0, k1, k2,
                                         a, lstar, w1, w2)
        else:
            v = _nb.draw_service(rng, kind, alpha, c, x0)
            t = _nb.draw_arrival(rng, fam, mean)
            n1, n2 = _nb.step(w1, w2, v, t)
            r = 1.0 if n2 > 0.0 else 0.0
        val = r * _g(ix, dy, b, k0, k1, lstar, n1 + n2)
        s += val
        ss += val * val
    return s, ss


@jit
def _moment_block(rng, kind, alpha, c, x0, fam, mean, xt, ix, dy, b, k0, k1, k2, a, lstar,
                  w1, w2, level, n, proposal, out):
    """Sums of f(W') and f(W')^2 for f = 1, w1', 1{w2' > level}.

    Proposal draws are weighted by the likelihood ratio; nominal draws by the
    indicator of the proposal's support, {X > a(b - l)} or {W^(2)' > 0}.
    """
    l = w1 + w2
    y = a * (b - l)
    for _ in range(n):
        if proposal:
            n1, n2, r, br, cl = _is_step(rng, kind, alpha, c, x0, fam, mean, xt, ix, dy, b, k0, k1, k2,
                                         a, lstar, w1, w2)
        else:
            v = _nb.draw_service(rng, kind, alpha, c, x0)
            t = _nb.draw_arrival(rng, fam, mean)
            n1, n2 = _nb.step(w1, w2, v, t)
            r = 1.0 if (l >= lstar or v - t > y or n2 > 0.0) else 0.0
        f2 = 1.0 if n2 > level else 0.0
        vals = (r, r * n1, r * f2)
        for j in range(3):
            out[0, j] += vals[j]
            out[1, j] += vals[j] * vals[j]


# ---------------------------------------------------------------- Lyapunov sampler

@dataclass
class ISReport:
    report: EstimateReport
    certificate: float
    clamp_rate: float
    mean_steps: float
    seconds: float
    state: qc.QueueState

    @property
    def certified(self):
        return self.report.point <= self.certificate + 3 * self.report.stderr


class LyapunovIS:
    """Tables and kernels for the Lyapunov importance sampler at one level b."""

    def __init__(self, service, arrival, params, xtail=None, dy=None, y_max=None, validate=True):
        if arrival.family != "exp":
            raise ValueError("the importance sampler supports exponential arrivals")
        self.service, self.arrival, self.params = service, arrival, params
        self.xtail = xtail or XTail(service, arrival)
        b = params.b
        self.dy = dy or min(0.002, b / 5000)
        self.y_max = y_max or 10 * b + 2 * params.kappa0 + 2
        self.dy, self.xt, self.ix = self.xtail.grid(self.y_max, self.dy)
        self.l_star = self._solve_l_star()
        if validate:
            sup = kappa2_sup(self, params.kappa0)
            if params.kappa2 < sup:
                raise Kappa2Violation(f"kappa2={params.kappa2:.6g} below the required sup {sup:.6g}")

    @property
    def _args(self):
        p = self.params
        return (*self.service.params, *self.arrival.params, self.xt, self.ix, self.dy, p.b, p.kappa0,
                p.kappa1, p.kappa2, p.a, self.l_star)

    def with_params(self, params):
        return LyapunovIS(self.service, self.arrival, params, self.xtail, self.dy, self.y_max, validate=False)

    def h(self, l):
        p = self.params
        return float(_h(self.ix, self.dy, p.b, p.kappa0, l))

    def G(self, l):
        p = self.params
        if l >= self.l_star:
            return 1.0
        return min(p.kappa1 * self.h(l), 1.0)

    def p(self, state):
        p = self.params
        l = state.load
        return self.xtail_at(p.a * (p.b - l)) / (p.kappa2 * self.h(l))

    def xtail_at(self, y):
        return float(_nb.interp(0.0, self.dy, self.xt, y))

    def _solve_l_star(self):
        p = self.params
        f = lambda l: p.kappa1 * float(_h(self.ix, self.dy, p.b, p.kappa0, l)) - 1.0
        if f(0.0) >= 0:
            return 0.0
        hi = p.b - p.c_delta
        if f(hi) < 0:
            raise ValueError("kappa1 too small: G_b stays below 1 up to b - C_delta")
        return optimize.brentq(f, 0.0, hi, xtol=1e-12)

    def step(self, state, rng):
        """One proposal transition: (next state, likelihood ratio, branch)."""
        n1, n2, r, br, cl = _is_step(rng, *self._args, state.w1, state.w2)
        if cl:
            raise Kappa2Violation(f"p(w) exceeded 1 at {state}")
        return qc.QueueState(n1, n2), r, br

    def sample_path(self, state, rng, cap=qc.DEFAULT_CAP):
        wt, n = 1.0, 0
        while True:
            state, r, _ = self.step(state, rng)
            wt *= r
            n += 1
            if state.w2 > self.params.b:
                return WeightedSample(1, wt, n)
            if state.w2 == 0.0 or n >= cap:
                return WeightedSample(0, wt, n)

    def hitting_probability(self, state, n_paths, seed, threads=None, cap=qc.DEFAULT_CAP, check=True):
        b = self.params.b
        if not state.w2 < b * self.params.delta_plus:
            raise ValueError(f"need w2 < b * delta_plus = {b * self.params.delta_plus}")
        sizes = split(int(n_paths), PATH_BLOCK)
        args = self._args

        def block(i, rng):
            out = np.empty(sizes[i])
            cl, st = _is_block(rng, *args, state.w1, state.w2, cap, out)
            if cl < 0:
                raise qc.CycleCapExceeded(f"an IS path exceeded the cap of {cap} steps")
            return out.sum(), (out * out).sum(), cl, st

        t0 = time.perf_counter()
        parts = run_blocks(block, len(sizes), seed, threads)
        secs = time.perf_counter() - t0
        s = sum(p[0] for p in parts)
        ss = sum(p[1] for p in parts)
        clamps = sum(p[2] for p in parts)
        steps = sum(p[3] for p in parts)
        n = int(n_paths)
        mean = s / n
        se = math.sqrt(max(ss / n - mean * mean, 0.0) / (n - 1))
        rep = EstimateReport.normal(mean, se, n, seed, "IS", clip=(0.0, math.inf))
        out = ISReport(rep, self.params.kappa1 * self.h(state.load), clamps / max(steps, 1), steps / n,
                       secs, state)
        if check and not out.certified:
            raise CertificateViolation(
                f"IS estimate {mean:.4g} exceeds certificate {out.certificate:.4g} + 3 stderr")
        return out

    def l1_values(self, state, n, seed, proposal=True):
        """(estimate, stderr, G_b(l)) of the one-step supermartingale quantity at ``state``."""
        s, ss = _l1_block(stream(seed, 0), *self._args, state.w1, state.w2, int(n), proposal)
        m = s / n
        return m, math.sqrt(max(ss / n - m * m, 0.0) / (n - 1)), self.G(state.load)

    def one_step_moments(self, state, n, seed, level, proposal=True):
        """Means and stderrs of (1, w1', 1{w2' > level}) after one step, see _moment_block."""
        out = np.zeros((2, 3))
        _moment_block(stream(seed, 0), *self._args, state.w1, state.w2, float(level), int(n), proposal, out)
        m = out[0] / n
        return m, np.sqrt(np.maximum(out[1] / n - m * m, 0.0) / (n - 1))

    def l1_states(self, count=20):
        """States with G_b < 1 spread over load and imbalance."""
        ls = self.l_star * np.arange(count) / count
        out = []
        for j, l in enumerate(ls):
            frac = (0.0, 0.25, 0.5)[j % 3]
            out.append(qc.QueueState(frac * l, (1 - frac) * l))
        return out


def kappa2_sup(model, kappa0, n_grid=4000):
    """sup_x P{X > a x} / int_x^{x+kappa0} P{X > u} du on a log grid over [1e-3, 10 b]."""
    p = model.params
    xs = np.geomspace(1e-3, 10 * p.b, n_grid)
    num = np.array([model.xtail_at(p.a * x) for x in xs])
    ix = lambda y: np.interp(y / model.dy, np.arange(len(model.ix)), model.ix)
    den = ix(xs) - ix(xs + kappa0)
    return float(np.max(num / den))


# ---------------------------------------------------------------- calibration

@dataclass
class Calibration:
    params: LyapunovParams
    model: LyapunovIS
    drift: float
    l1_worst: float
    tried: list = field(default_factory=list)


def pilot_drift(service, arrival, b, n=100_000, seed=0):
    """Mean one-step load change at (b/2, b/2)."""
    s, _ = qc._drift_block(stream(seed, 0), *service.params, *arrival.params, b / 2, b / 2, int(n))
    return s / n


def calibrate(service, arrival, b, seed=0, a=None, delta_plus=0.25, n_check=20_000, margin=0.02,
              kappa0_grid=tuple(2.0**k for k in range(9)), a_grid=(0.5, 0.75, 0.9), n_pilot=20_000,
              max_kappa1_doublings=24):
    """Choose theta = (kappa0, kappa1, kappa2) and the jump fraction a.

    For each kappa0, kappa1 runs over powers of two from the smallest value with
    G_b = 1 on [b - C_delta, b] (C_delta is the magnitude of a pilot drift
    estimate) until the nominal one-step check passes with a margin at every
    check state; that check does not involve the proposal, so a is free.  kappa2
    is 1.1 times its defining sup for the given (kappa0, a).  The passing pair with
    the smallest certificate at the empty state is kept, and a is the grid value
    minimising relative variance times mean path length of a pilot run.
    """
    drift = pilot_drift(service, arrival, b, seed=seed)
    c_delta = min(abs(drift), b / 2)
    xt = XTail(service, arrival)
    a_grid = a_grid if a is None else (a,)
    # a huge kappa1 keeps the probe valid; only its tables are reused
    base = LyapunovParams(1.0, 1e12, 1.0, b, a_grid[0], delta_plus, c_delta)
    probe = LyapunovIS(service, arrival, base, xt, validate=False,
                       y_max=10 * b + 2 * max(kappa0_grid) + 2)
    tried, passing = [], []
    for k0 in kappa0_grid:
        need = 1.0 / min(h_from(probe, b - c_delta, k0), h_from(probe, b, k0))
        k1 = 2.0 ** math.ceil(math.log2(need))
        for _ in range(max_kappa1_doublings):
            model = probe.with_params(LyapunovParams(k0, k1, 1.0, b, a_grid[0], delta_plus, c_delta))
            worst = _l1_worst(model, n_check, seed, margin)
            tried.append((k0, k1, worst))
            if worst <= 0:
                passing.append((k0, k1, worst))
                break
            k1 *= 2
    if not passing:
        raise NumericalDiagnostic("no (kappa0, kappa1) pair passed the supermartingale check")
    # tightest certificate at the empty state; it also bounds the estimator's second moment
    cert = lambda k0, k1: min(k1 * h_from(probe, 0.0, k0), 1.0)
    k0, k1, worst = min(passing, key=lambda t: (cert(t[0], t[1]), t[0]))
    best = None
    origin = qc.QueueState(0.0, 0.0)
    for aa in a_grid:
        probe_a = probe.with_params(LyapunovParams(k0, k1, 1.0, b, aa, delta_plus, c_delta))
        params = LyapunovParams(k0, k1, 1.1 * kappa2_sup(probe_a, k0), b, aa, delta_plus, c_delta)
        model = probe.with_params(params)
        pilot = model.hitting_probability(origin, n_pilot, seed + 1, threads=1, check=False)
        r = pilot.report
        score = math.inf if r.point <= 0 else (r.stderr / r.point) ** 2 * r.n * pilot.mean_steps
        if best is None or score < best[0]:
            best = (score, params, model, worst)
    _, params, model, worst = best
    return Calibration(params, model, drift, worst, tried)


def h_from(model, l, kappa0):
    b = model.params.b
    return float(_h(model.ix, model.dy, b, kappa0, l))


def _l1_worst(model, n, seed, margin):
    """Largest (upper 3-sigma estimate) - (1 - margin) G_b(l) over the check states, relative to G_b(l)."""
    worst = -math.inf
    for j, st in enumerate(model.l1_states()):
        m, se, g = model.l1_values(st, n, seed + j, proposal=False)
        worst = max(worst, (m + 3 * se - (1 - margin) * g) / g)
    return worst


def l1_check(model, n=100_000, seed=0, tol=1e-3, states=None):
    """Proposal-weighted check E[ratio G_b(L')] <= G_b(l)(1 + tol) at each state."""
    rows = []
    for j, st in enumerate(states or model.l1_states()):
        m, se, g = model.l1_values(st, n, seed + j, proposal=True)
        rows.append((st, m, se, g, m <= g * (1 + tol)))
    return rows


def is_step(state, model, rng):
    return model.step(state, rng)


def is_hitting_probability(w, model, n_paths, seed, threads=None):
    return model.hitting_probability(w, n_paths, seed, threads)


def crude_hitting_probability(w, b, service, arrival, n_paths, seed, threads=None, cap=qc.DEFAULT_CAP):
    """Plain Monte Carlo of P_w{tau_b^(2) < tau0}; returns (report, seconds)."""
    sizes = split(int(n_paths), PATH_BLOCK)
    args = (*service.params, *arrival.params)

    def block(i, rng):
        k = qc._hit_block(rng, *args, w.w1, w.w2, float(b), sizes[i], cap)
        if k < 0:
            raise qc.CycleCapExceeded(f"a path exceeded the cap of {cap} steps")
        return k

    t0 = time.perf_counter()
    hits = sum(run_blocks(block, len(sizes), seed, threads))
    secs = time.perf_counter() - t0
    n = int(n_paths)
    p = hits / n
    if hits == 0:
        return EstimateReport(0.0, 0.0, 0.0, 3.0 / n, n, seed, "crude"), secs
    return EstimateReport.normal(p, math.sqrt(p * (1 - p) / (n - 1)), n, seed, "crude"), secs


# ---------------------------------------------------------------- lower-bound events

@jit
def _window_block(rng, kind, alpha, c, x0, fam, mean, big, level, n_trials):
    """Count trials in the window event with arrival-count scale ``big`` (bs^2 or bs^alpha).

    N_A(big * mean) >= big/2, N_A(2 big * mean) in [1.5 big, 2.5 big],
    min_{big/2 <= n <= 2.5 big} S_n > level with S_1 = 0, S_n = sum_{k=2}^n (V_{k-1} - T_k),
    and V_1 + ... + V_ceil(2.5 big) <= 3 big * mean.
    """
    n_lo = math.ceil(0.5 * big)
    n_hi = math.floor(2.5 * big)
    n_v = math.ceil(2.5 * big)
    t1 = big * mean
    t2 = 2.0 * big * mean
    hits = 0
    for _ in range(n_trials):
        arr = 0.0
        n_a1 = 0
        n_a2 = 0
        s = 0.0
        vsum = 0.0
        v_prev = 0.0
        ok = True
        k = 1
        while True:
            t = _nb.draw_arrival(rng, fam, mean)
            v = _nb.draw_service(rng, kind, alpha, c, x0)
            arr += t
            if arr <= t1:
                n_a1 += 1
            if arr <= t2:
                n_a2 += 1
            if k >= 2:
                s += v_prev - t
            if n_lo <= k <= n_hi and s <= level:
                ok = False
                break
            if k <= n_v:
                vsum += v
                if vsum > 3.0 * big * mean:
                    ok = False
                    break
            if n_a2 > 2.5 * big:
                ok = False
                break
            v_prev = v
            if k >= n_v and k >= n_hi and arr > t2:
                break
            k += 1
        if ok and n_a1 >= 0.5 * big and 1.5 * big <= n_a2:
            hits += 1
    return hits


@jit
def _d2_block(rng, kind, alpha, c, x0, fam, mean, bs, n_trials, out):
    """Conditional estimator of P(D2) given the arrival stream; out = [sum, sum of squares]."""
    y = 5.0 * bs * mean
    by = _nb.tail(kind, alpha, c, x0, y)
    for _ in range(n_trials):
        t1 = _nb.draw_arrival(rng, fam, mean)
        arr = t1
        n1 = 0
        n2 = 0
        while arr <= 2.0 * bs * mean:
            if arr <= bs * mean:
                n1 += 1
            else:
                n2 += 1
            arr += _nb.draw_arrival(rng, fam, mean)
        val = 0.0
        if 0.5 * bs <= n1 <= 1.5 * bs and 0.5 * bs <= n2 <= 1.5 * bs:
            val = _nb.tail(kind, alpha, c, x0, y + t1) * n1 * by * (1.0 - by) ** (n1 - 1)
        out[0] += val
        out[1] += val * val


@dataclass
class LowerBound:
    method: str
    b: float
    report: EstimateReport
    certificate: float
    certificate_stderr: float
    jump_prob: float
    e_tau0: float
    target: float

    @property
    def ratio(self):
        return self.certificate / self.target


def _e_tau0(service, arrival, seed, n_cycles):
    return mean_cycle_length(service, arrival, n_cycles, seed)


def _window_event(service, arrival, b, exponent, n_trials, seed, threads):
    bs = b / arrival.mean
    big = bs**exponent
    if 0.5 * big < 1:
        raise ValueError(f"window degenerate at b={b}: half the window holds {0.5 * big:.3g} < 1 arrivals")
    sizes = split(int(n_trials), TRIAL_BLOCK)
    args = (*service.params, *arrival.params)
    hits = sum(run_blocks(lambda i, rng: _window_block(rng, *args, big, float(b), sizes[i]),
                          len(sizes), seed, threads))
    n = int(n_trials)
    p = hits / n
    if hits == 0:
        return EstimateReport(0.0, 0.0, 0.0, 3.0 / n, n, seed, "window"), big
    return EstimateReport.normal(p, math.sqrt(p * (1 - p) / (n - 1)), n, seed, "window"), big


def _certify(method, b, rep, scale, jump, e_tau, target):
    tau, tau_se = e_tau
    cert = scale * jump * rep.point / tau
    rel = math.hypot(rep.stderr / rep.point, tau_se / tau) if rep.point > 0 else 0.0
    return LowerBound(method, float(b), rep, cert, cert * rel, jump, tau, target)


def lower_bound_D1(service, arrival, b, n_trials, seed, threads=None, n_cycles=1_000_000):
    if not service.alpha > 2:
        raise ValueError("the D1 construction needs alpha > 2")
    rep, big = _window_event(service, arrival, b, 2.0, n_trials, seed, threads)
    xt = XTail(service, arrival)
    jump = xt.right(6 * big * arrival.mean)
    target = b**2 * tail_eval(service, b**2)
    return _certify("D1", b, rep, big, jump, _e_tau0(service, arrival, seed + 1, n_cycles), target)


def lower_bound_D2(service, arrival, b, n_trials, seed, threads=None, n_cycles=1_000_000):
    if not service.alpha > 2:
        raise ValueError("the D2 construction needs alpha > 2")
    bs = b / arrival.mean
    if 0.5 * bs < 1:
        raise ValueError(f"window degenerate at b={b}: 0.5 b = {0.5 * bs:.3g} < 1 arrivals")
    sizes = split(int(n_trials), TRIAL_BLOCK)
    args = (*service.params, *arrival.params)

    def block(i, rng):
        out = np.zeros(2)
        _d2_block(rng, *args, bs, sizes[i], out)
        return out

    s, ss = sum(run_blocks(block, len(sizes), seed, threads))
    n = int(n_trials)
    m = s / n
    se = math.sqrt(max(ss / n - m * m, 0.0) / (n - 1))
    rep = EstimateReport.normal(m, se, n, seed, "D2")
    target = b**2 * tail_eval(service, b) ** 2
    return _certify("D2", b, rep, 0.5 * bs, 1.0, _e_tau0(service, arrival, seed + 1, n_cycles), target)


def lower_bound_D3(service, arrival, b, n_trials, seed, threads=None, n_cycles=1_000_000):
    if not 1 < service.alpha < 2:
        raise ValueError("the D3 construction needs alpha in (1, 2)")
    if service.slow.kind != "const":
        raise ValueError("the D3 construction needs a ConstFactor tail")
    a = service.alpha
    rep, big = _window_event(service, arrival, b, a, n_trials, seed, threads)
    xt = XTail(service, arrival)
    jump = xt.right(6 * big * arrival.mean)
    target = b**a * tail_eval(service, b**a)
    return _certify("D3", b, rep, big, jump, _e_tau0(service, arrival, seed + 1, n_cycles), target)


def arrival_window_prob(arrival, b):
    """P{N_A(b) in [0.5 bs, 1.5 bs]}, bs = b / E[T], exactly for Poisson arrivals."""
    if arrival.family != "exp":
        raise ValueError("closed form only for exponential arrivals")
    bs = b / arrival.mean
    pois = stats.poisson(bs)
    return float(pois.cdf(math.floor(1.5 * bs)) - pois.cdf(math.ceil(0.5 * bs) - 1))


def brownian_window_prob(sigma):
    """P{inf_{0.5 <= t <= 2.5} sigma B(t) > 1}."""
    c = 1.0 / sigma
    sd = math.sqrt(0.5)
    f = lambda y: stats.norm.pdf(y, scale=sd) * (2 * stats.norm.cdf((y - c) / math.sqrt(2.0)) - 1)
    val, _ = integrate.quad(f, c, np.inf, epsabs=1e-14, epsrel=1e-11)
    return val


@jit
def _bm_window_block(rng, sigma, n_steps, n_paths):
    dt = 2.5 / n_steps
    i_lo = int(round(0.5 / dt))
    sd = sigma * math.sqrt(dt)
    hits = 0
    for _ in range(n_paths):
        z = 0.0
        ok = True
        for k in range(1, n_steps + 1):
            z += sd * rng.standard_normal()
            if k >= i_lo and z <= 1.0:
                ok = False
                break
        if ok:
            hits += 1
    return hits


def brownian_window_grid(sigma, n_steps, n_paths, seed, threads=None):
    """Grid-walk estimate of the Brownian window probability; returns (p, stderr)."""
    sizes = split(int(n_paths), PATH_BLOCK)
    hits = sum(run_blocks(lambda i, rng: _bm_window_block(rng, sigma, int(n_steps), sizes[i]),
                          len(sizes), seed, threads))
    p = hits / n_paths
    return p, math.sqrt(p * (1 - p) / n_paths)


@jit
def _stable_window_block(rng, alpha, scale, level, n_steps, n_paths):
    dt = 2.5 / n_steps
    i_lo = int(round(0.5 / dt))
    inc = scale * dt ** (1.0 / alpha)
    hits = 0
    for _ in range(n_paths):
        z = 0.0
        ok = True
        for k in range(1, n_steps + 1):
            z += inc * cms_draw(rng, alpha)
            if k >= i_lo and z <= level:
                ok = False
                break
        if ok:
            hits += 1
    return hits


def stable_window_prob(alpha, level, n_steps=1000, n_paths=100_000, seed=11, threads=None):
    """P{inf_{0.5 <= t <= 2.5} Z(t) > level} for the stable process with P{Z(1) > x} ~ x^-alpha."""
    sizes = split(int(n_paths), PATH_BLOCK)
    sc = stable_scale(alpha)
    hits = sum(run_blocks(lambda i, rng: _stable_window_block(rng, alpha, sc, level, int(n_steps), sizes[i]),
                          len(sizes), seed, threads))
    p = hits / n_paths
    return p, math.sqrt(p * (1 - p) / n_paths)


def trend_check(bs, values, stderrs, n_sigma=3.0):
    """Log-log slope of values against b; passes when the slope is not negative at n_sigma."""
    slope, se = fit_loglog_slope(zip(bs, values, stderrs))
    return slope, se, slope + n_sigma * se >= 0


CSV_FIELDS = ["b", "method", "point", "stderr", "certificate", "clamp_rate", "seed"]


def lower_bound_row(lb):
    r = lb.report
    return [repr(float(lb.b)), lb.method, repr(float(r.point)), repr(float(r.stderr)), repr(float(lb.certificate)),
            "0.0", str(r.seed)]


def is_row(b, rep):
    r = rep.report
    return [repr(float(b)), "IS", repr(float(r.point)), repr(float(r.stderr)), repr(float(rep.certificate)),
            repr(float(rep.clamp_rate)), str(r.seed)]
