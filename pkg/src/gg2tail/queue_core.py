"""Two-server Kiefer-Wolfowitz workload recursion, stopping times and cycle simulation.

The state seen by an arriving job is the ordered pair (w1, w2) of server
workloads.  Job n brings service V_n to the less loaded server and job n+1
arrives T_{n+1} later.  A regenerative cycle ends at the first n >= 1 with
w2 = 0; the clamp produces exact zeros, so the test is an exact comparison.
"""
import math
from dataclasses import dataclass

import numpy as np

from . import _nb
from ._nb import jit
from .streams import run_blocks, split, stream

DEFAULT_CAP = 10**9


class CycleCapExceeded(RuntimeError):
    """A cycle ran past the step cap; the model is misconfigured or not recurrent."""


@dataclass(frozen=True)
class QueueState:
    w1: float = 0.0
    w2: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.w1 <= self.w2:
            raise ValueError(f"need 0 <= w1 <= w2, got ({self.w1}, {self.w2})")

    @classmethod
    def of(cls, a, b):
        return cls(min(a, b), max(a, b))

    @property
    def load(self):
        return self.w1 + self.w2


def kw_step(state, v, t):
    a = max(state.w1 + v - t, 0.0)
    b = max(state.w2 - t, 0.0)
    return QueueState(min(a, b), max(a, b))


@dataclass
class CycleRecord:
    tau0: int
    exceed_counts: dict
    hit_tau2: dict
    max_w1: float
    max_w2: float
    first_big_index: int | None = None


@dataclass
class StoppingTimes:
    tau1_of: dict
    tau2_of: dict
    tau_bar: int | None = None


# ---------------------------------------------------------------- kernels

@jit
def _cycle(rng, kind, alpha, c, x0, fam, mean, bs, levels, cap, counts, hits):
    """One cycle from (0, 0); returns (tau0, max_w1, max_w2, first_big) or tau0 = -1 past cap."""
    for j in range(bs.shape[0]):
        counts[j] = 0
    for j in range(levels.shape[0]):
        hits[j] = False
    lo_level = np.inf
    for j in range(levels.shape[0]):
        lo_level = min(lo_level, levels[j])
    w1 = 0.0
    w2 = 0.0
    m1 = 0.0
    m2 = 0.0
    first_big = -1
    n = 0
    while True:
        # W_n is (w1, w2); it counts toward the cycle because n < tau0
        for j in range(bs.shape[0]):
            if w1 > bs[j]:
                counts[j] += 1
        v = _nb.draw_service(rng, kind, alpha, c, x0)
        if first_big < 0 and v > lo_level:
            first_big = n
        t = _nb.draw_arrival(rng, fam, mean)
        w1, w2 = _nb.step(w1, w2, v, t)
        n += 1
        m1 = max(m1, w1)
        m2 = max(m2, w2)
        for j in range(levels.shape[0]):
            if w2 > levels[j]:
                hits[j] = True
        if w2 == 0.0:
            return n, m1, m2, first_big
        if n >= cap:
            return -1, m1, m2, first_big


@jit
def _cycle_block(rng, kind, alpha, c, x0, fam, mean, bs, n_cycles, cap, out_n, out_nn, out_nt):
    """Accumulate sufficient statistics of (count_b, tau0) over n_cycles.

    Returns (sum tau, sum tau^2, max tau, status); status -1 means a capped cycle.
    """
    levels = np.empty(0)
    hits = np.zeros(0, dtype=np.bool_)
    counts = np.zeros(bs.shape[0], dtype=np.int64)
    st = 0
    stt = 0.0
    tmax = 0
    for _ in range(n_cycles):
        tau, _m1, _m2, _f = _cycle(rng, kind, alpha, c, x0, fam, mean, bs, levels, cap, counts, hits)
        if tau < 0:
            return st, stt, tmax, -1
        st += tau
        stt += float(tau) * tau
        tmax = max(tmax, tau)
        for j in range(bs.shape[0]):
            out_n[j] += counts[j]
            out_nn[j] += float(counts[j]) * counts[j]
            out_nt[j] += float(counts[j]) * tau
    return st, stt, tmax, 0


@jit
def _decompose_block(rng, kind, alpha, c, x0, fam, mean, b, dm, d, dp, n_cycles, cap, out):
    """Per-block totals ``out = [B1, B2, tau]``, integer counts.

    B1 counts k < tau0 with W_k^(1) > b on cycles where the first passage of W^(1)
    above b*d precedes tau_bar, the first n >= tau_{b*dm}^(2) with W_n^(2) <= b*dp.
    """
    for _ in range(n_cycles):
        w1 = 0.0
        w2 = 0.0
        n = 0
        hit_m = False
        tbar = -1
        t1 = -1
        first_wins = False
        while True:
            if w1 > b:
                if first_wins:
                    out[0] += 1
                else:
                    out[1] += 1
            v = _nb.draw_service(rng, kind, alpha, c, x0)
            t = _nb.draw_arrival(rng, fam, mean)
            w1, w2 = _nb.step(w1, w2, v, t)
            n += 1
            if not hit_m and w2 > b * dm:
                hit_m = True
            if hit_m and tbar < 0 and w2 <= b * dp:
                tbar = n
            if t1 < 0 and w1 > b * d:
                t1 = n
                first_wins = tbar < 0
            if w2 == 0.0:
                break
            if n >= cap:
                return -1
        out[2] += n
    return 0


@jit
def _hit_block(rng, kind, alpha, c, x0, fam, mean, w1s, w2s, b, n_paths, cap):
    """Crude count of paths from (w1, w2) with W^(2) > b before the return to w2 = 0."""
    hits = 0
    for _ in range(n_paths):
        w1 = w1s
        w2 = w2s
        n = 0
        while True:
            v = _nb.draw_service(rng, kind, alpha, c, x0)
            t = _nb.draw_arrival(rng, fam, mean)
            w1, w2 = _nb.step(w1, w2, v, t)
            n += 1
            if w2 > b:
                hits += 1
                break
            if w2 == 0.0:
                break
            if n >= cap:
                return -1
    return hits


@jit
def _overshoot_block(rng, kind, alpha, c, x0, fam, mean, b, n_cycles, cap, out):
    """W^(2) at its first passage above b, for cycles where that happens; returns count stored."""
    k = 0
    for _ in range(n_cycles):
        w1 = 0.0
        w2 = 0.0
        n = 0
        while True:
            v = _nb.draw_service(rng, kind, alpha, c, x0)
            t = _nb.draw_arrival(rng, fam, mean)
            w1, w2 = _nb.step(w1, w2, v, t)
            n += 1
            if w2 > b:
                if k < out.shape[0]:
                    out[k] = w2
                k += 1
                break
            if w2 == 0.0 or n >= cap:
                break
    return k


@jit
def _tau0_block(rng, kind, alpha, c, x0, fam, mean, w1s, w2s, n_paths, cap):
    s = 0.0
    ss = 0.0
    for _ in range(n_paths):
        w1 = w1s
        w2 = w2s
        n = 0
        while True:
            v = _nb.draw_service(rng, kind, alpha, c, x0)
            t = _nb.draw_arrival(rng, fam, mean)
            w1, w2 = _nb.step(w1, w2, v, t)
            n += 1
            if w2 == 0.0:
                break
            if n >= cap:
                return -1.0, -1.0
        s += n
        ss += float(n) * n
    return s, ss


@jit
def _drift_block(rng, kind, alpha, c, x0, fam, mean, w1s, w2s, n):
    s = 0.0
    ss = 0.0
    for _ in range(n):
        v = _nb.draw_service(rng, kind, alpha, c, x0)
        t = _nb.draw_arrival(rng, fam, mean)
        a, b = _nb.step(w1s, w2s, v, t)
        d = (a + b) - (w1s + w2s)
        s += d
        ss += d * d
    return s, ss


@jit
def _domination_block(rng, kind, alpha, c, x0, fam, mean, w1s, w2s, length, n_paths, first_zero):
    """Count paths violating max_k W_k^(i) <= 2 max_k |S_k| + w_i, i = 1, 2."""
    bad = 0
    for _ in range(n_paths):
        w1 = w1s
        w2 = w2s
        s = 0.0
        ms = 0.0
        m1 = 0.0
        m2 = 0.0
        for k in range(length):
            v = _nb.draw_service(rng, kind, alpha, c, x0)
            if k == 0 and first_zero:
                v = 0.0
            t = _nb.draw_arrival(rng, fam, mean)
            w1, w2 = _nb.step(w1, w2, v, t)
            s += v - t
            ms = max(ms, abs(s))
            m1 = max(m1, w1)
            m2 = max(m2, w2)
        if m1 > 2.0 * ms + w1s or m2 > 2.0 * ms + w2s:
            bad += 1
    return bad


@jit
def _ordering_block(rng, kind, alpha, c, x0, fam, mean, n):
    bad = 0
    w1 = 0.0
    w2 = 0.0
    for _ in range(n):
        v = _nb.draw_service(rng, kind, alpha, c, x0)
        t = _nb.draw_arrival(rng, fam, mean)
        w1, w2 = _nb.step(w1, w2, v, t)
        if not (0.0 <= w1 <= w2):
            bad += 1
    return bad


# ---------------------------------------------------------------- python API

def _check_recurrent(arrival, allow_deterministic):
    if arrival.family == "det" and not allow_deterministic:
        raise ValueError("deterministic arrivals do not make (0, 0) recurrent; "
                         "pass allow_deterministic=True for unit tests only")


def simulate_cycle(service, arrival, thresholds, levels, rng, cap=DEFAULT_CAP,
                   allow_deterministic=False):
    _check_recurrent(arrival, allow_deterministic)
    bs = np.asarray(thresholds, dtype=float)
    lv = np.asarray(levels, dtype=float)
    counts = np.zeros(len(bs), dtype=np.int64)
    hits = np.zeros(len(lv), dtype=np.bool_)
    tau, m1, m2, first = _cycle(rng, *service.params, *arrival.params, bs, lv, int(cap), counts, hits)
    if tau < 0:
        raise CycleCapExceeded(f"cycle exceeded {cap} steps (max w2 seen {m2:.4g})")
    return CycleRecord(
        tau0=int(tau),
        exceed_counts={float(b): int(k) for b, k in zip(bs, counts)},
        hit_tau2={float(x): bool(h) for x, h in zip(lv, hits)},
        max_w1=float(m1),
        max_w2=float(m2),
        first_big_index=None if first < 0 else int(first),
    )


def simulate_from(state, service, arrival, horizon, rng, first_service_zero=False):
    """Path [W_0, ..., W_horizon] from ``state``; returns (path, services, interarrivals)."""
    path = [state]
    vs, ts = [], []
    for k in range(horizon):
        v = _nb.draw_service(rng, *service.params)
        if k == 0 and first_service_zero:
            v = 0.0
        t = _nb.draw_arrival(rng, *arrival.params)
        state = kw_step(state, v, t)
        path.append(state)
        vs.append(v)
        ts.append(t)
    return path, np.array(vs), np.array(ts)


def _as_arrays(path):
    if isinstance(path, np.ndarray):
        return path[:, 0], path[:, 1]
    return np.array([s.w1 for s in path]), np.array([s.w2 for s in path])


def detect_stopping(path, levels, delta_minus, delta, delta_plus, b):
    """First-passage indices on a path (sequence of QueueState or (n, 2) array).

    ``tau_bar`` is the first n >= tau_{b*delta_minus}^(2) with W_n^(2) <= b*delta_plus.
    Levels that are never crossed are absent from the maps.
    """
    if not 0 < delta_minus < delta < delta_plus < 1:
        raise ValueError("need 0 < delta_minus < delta < delta_plus < 1")
    w1, w2 = _as_arrays(path)

    def first(arr, x):
        idx = np.flatnonzero(arr > x)
        return int(idx[0]) if len(idx) else None

    tau1 = {float(x): k for x in levels if (k := first(w1, x)) is not None}
    tau2 = {float(x): k for x in levels if (k := first(w2, x)) is not None}
    tau_bar = None
    start = first(w2, b * delta_minus)
    if start is not None:
        idx = np.flatnonzero(w2[start:] <= b * delta_plus)
        tau_bar = int(start + idx[0]) if len(idx) else None
    return StoppingTimes(tau1, tau2, tau_bar)


# ---------------------------------------------------------------- Monte Carlo checks

CYCLE_BLOCK = 1 << 16
PATH_BLOCK = 1 << 12


def _args(service, arrival):
    return (*service.params, *arrival.params)


def ordering_violations(service, arrival, n_steps, seed):
    """Steps of one long path that break 0 <= w1 <= w2."""
    return int(_ordering_block(stream(seed, 0), *_args(service, arrival), int(n_steps)))


def domination_violations(state, service, arrival, length, n_paths, seed, threads=None, first_service_zero=False):
    """Paths where some coordinate's running max exceeds 2 max|S_k| + w_i."""
    sizes = split(int(n_paths), PATH_BLOCK)
    args = _args(service, arrival)
    return int(sum(run_blocks(
        lambda i, rng: _domination_block(rng, *args, state.w1, state.w2, int(length), sizes[i],
                                         first_service_zero),
        len(sizes), seed, threads)))


def drift_at(state, service, arrival, n, seed):
    """Mean one-step change of w1 + w2 from ``state`` with its stderr."""
    s, ss = _drift_block(stream(seed, 0), *_args(service, arrival), state.w1, state.w2, int(n))
    m = s / n
    return m, math.sqrt(max(ss / n - m * m, 0.0) / (n - 1))


def mean_tau0_from(state, service, arrival, n_paths, seed, threads=None, cap=DEFAULT_CAP):
    """E_w[tau0] with stderr, tau0 the first n >= 1 with W_n^(2) = 0."""
    sizes = split(int(n_paths), PATH_BLOCK)
    args = _args(service, arrival)

    def block(i, rng):
        s, ss = _tau0_block(rng, *args, state.w1, state.w2, sizes[i], cap)
        if s < 0:
            raise CycleCapExceeded(f"a path exceeded the cap of {cap} steps")
        return s, ss

    parts = run_blocks(block, len(sizes), seed, threads)
    n = int(n_paths)
    s = sum(p[0] for p in parts)
    ss = sum(p[1] for p in parts)
    m = s / n
    return m, math.sqrt(max(ss / n - m * m, 0.0) / (n - 1))


def first_passage_overshoots(service, arrival, b, n_target, seed, threads=None, cap=DEFAULT_CAP,
                             max_cycles=10**10):
    """Values of W^(2) at tau_b^(2), from cycles started at (0, 0) with tau_b^(2) < tau0.

    Cycles run in rounds of fixed-size blocks until ``n_target`` values are in
    hand, so the sample depends on the seed only.  Returns (values, cycles used).
    """
    _check_recurrent(arrival, False)
    args = _args(service, arrival)
    per_round = 64  # fixed so the sample does not depend on the thread count
    chunks, got, used, offset = [], 0, 0, 0
    while got < n_target:
        if used >= max_cycles:
            raise CycleCapExceeded(f"only {got} passages above b={b} in {used} cycles")

        def block(i, rng):
            out = np.empty(CYCLE_BLOCK)  # at most one passage per cycle
            k = _overshoot_block(rng, *args, float(b), CYCLE_BLOCK, cap, out)
            return out[:k]

        parts = run_blocks(block, per_round, seed, threads, offset=offset)
        offset += per_round
        used += per_round * CYCLE_BLOCK
        for p in parts:
            chunks.append(p)
            got += len(p)
    return np.concatenate(chunks), used


def dkw_epsilon(n, delta=1e-3):
    """Half-width of the Dvoretzky-Kiefer-Wolfowitz band for an n-sample empirical CDF."""
    return math.sqrt(math.log(2.0 / delta) / (2.0 * n))


def overshoot_dominance(samples, xtail, b, x_grid, delta=1e-3):
    """Check F_emp(x) >= F_ref(x) - eps on ``x_grid`` with F_ref the law of X + b given X > b.

    Returns (worst margin, eps); the check passes when the worst margin is >= 0.
    """
    z = np.sort(np.asarray(samples, dtype=float))
    n = len(z)
    eps = dkw_epsilon(n, delta)
    xs = np.asarray(x_grid, dtype=float)
    f_emp = np.searchsorted(z, xs, side="right") / n
    f_ref = xtail.cond_cdf_shift(xs, b)
    worst = float(np.min(f_emp - f_ref + eps))
    return worst, eps
