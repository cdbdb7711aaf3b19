"""Steady-state tail estimators: regenerative ratio, time average, and the B1/B2 split."""
import math
from dataclasses import dataclass

import numpy as np

from . import queue_core as qc
from ._nb import draw_arrival, draw_service, jit, step
from .streams import run_blocks, split, stream

Z95 = 1.959963984540054
CYCLE_BLOCK = 1 << 16


@dataclass(frozen=True)
class EstimateReport:
    point: float
    stderr: float
    ci_low: float
    ci_high: float
    n: int
    seed: int
    method: str
    reliable: bool = True

    def __post_init__(self):
        if self.stderr < 0 or not self.ci_low <= self.point <= self.ci_high:
            raise ValueError(f"inconsistent report {self}")

    @classmethod
    def normal(cls, point, stderr, n, seed, method, reliable=True, clip=(0.0, 1.0)):
        lo = max(point - Z95 * stderr, clip[0])
        hi = min(point + Z95 * stderr, clip[1])
        return cls(point, stderr, min(lo, point), max(hi, point), n, seed, method, reliable)


def ratio_inference(sum_n, sum_t, s_nn, s_tt, s_nt, n):
    """Delta-method stderr of sum_n/sum_t from per-cycle sufficient statistics."""
    r = sum_n / sum_t
    tbar = sum_t / n
    # N - r tau has sample mean zero by construction of r
    var = max((s_nn - 2 * r * s_nt + r * r * s_tt) / (n - 1), 0.0)
    return r, math.sqrt(var / n) / tbar


def _cycle_stats(service, arrival, bs, n_cycles, seed, threads, cap):
    kernel_args = (*service.params, *arrival.params)
    sizes = split(n_cycles, CYCLE_BLOCK)

    def block(i, rng):
        sn = np.zeros(len(bs), dtype=np.int64)
        snn = np.zeros(len(bs))
        snt = np.zeros(len(bs))
        st, stt, tmax, status = qc._cycle_block(rng, *kernel_args, bs, sizes[i], cap, sn, snn, snt)
        if status < 0:
            raise qc.CycleCapExceeded(f"a cycle exceeded the cap of {cap} steps")
        return sn, snn, snt, st, stt

    parts = run_blocks(block, len(sizes), seed, threads)
    sn = sum(p[0] for p in parts)
    snn = sum(p[1] for p in parts)
    snt = sum(p[2] for p in parts)
    st = sum(p[3] for p in parts)
    stt = sum(p[4] for p in parts)
    return sn, snn, snt, st, stt


def regenerative_tail(service, arrival, b_grid, n_cycles, seed, threads=None, cap=qc.DEFAULT_CAP):
    """P{W^(1) > b} as (sum of exceedance counts) / (sum of cycle lengths)."""
    if n_cycles < 2:
        raise ValueError("need at least two cycles")
    qc._check_recurrent(arrival, False)
    bs = np.asarray(b_grid, dtype=float)
    sn, snn, snt, st, stt = _cycle_stats(service, arrival, bs, int(n_cycles), seed, threads, cap)
    out = {}
    for j, b in enumerate(bs):
        if sn[j] == 0:
            out[float(b)] = EstimateReport(0.0, 0.0, 0.0, 3.0 / st, n_cycles, seed, "regenerative")
            continue
        r, se = ratio_inference(float(sn[j]), float(st), snn[j], stt, snt[j], n_cycles)
        out[float(b)] = EstimateReport.normal(r, se, n_cycles, seed, "regenerative")
    return out


def mean_cycle_length(service, arrival, n_cycles, seed, threads=None):
    """E[tau0] with its standard error."""
    _, _, _, st, stt = _cycle_stats(service, arrival, np.empty(0), int(n_cycles), seed, threads,
                                    qc.DEFAULT_CAP)
    m = st / n_cycles
    var = max(stt / n_cycles - m * m, 0.0) * n_cycles / (n_cycles - 1)
    return m, math.sqrt(var / n_cycles)


def time_average_tail(service, arrival, b_grid, n_steps, burn_in=None, seed=0):
    """Fraction of arrivals n in (burn_in, n_steps] with W_n^(1) > b, batch-means stderr."""
    burn_in = n_steps // 10 if burn_in is None else burn_in
    if not n_steps > burn_in >= 0:
        raise ValueError("need n_steps > burn_in >= 0")
    bs = np.asarray(b_grid, dtype=float)
    keep = n_steps - burn_in
    n_batches = max(1, math.isqrt(n_steps))
    n_batches = min(n_batches, keep)
    counts = _time_average(service, arrival, bs, n_steps, burn_in, n_batches, seed)
    out = {}
    for j, b in enumerate(bs):
        batch_len = keep // n_batches
        # the tail of the last batch absorbs the remainder
        sizes = np.full(n_batches, batch_len, dtype=float)
        sizes[-1] += keep - batch_len * n_batches
        frac = counts[:, j] / sizes
        point = float(counts[:, j].sum() / keep)
        if n_batches < 2:
            out[float(b)] = EstimateReport(point, 0.0, point, point, keep, seed, "time-average", False)
            continue
        se = float(frac.std(ddof=1) / math.sqrt(n_batches))
        out[float(b)] = EstimateReport.normal(point, se, keep, seed, "time-average")
    return out


def _time_average(service, arrival, bs, n_steps, burn_in, n_batches, seed):
    rng = stream(seed, 0)
    counts = np.zeros((n_batches, len(bs)), dtype=np.int64)
    _time_average_kernel(rng, *service.params, *arrival.params, bs, n_steps, burn_in, n_batches, counts)
    return counts


@jit
def _time_average_kernel(rng, kind, alpha, c, x0, fam, mean, bs, n_steps, burn_in, n_batches, counts):
    keep = n_steps - burn_in
    batch_len = keep // n_batches
    w1 = 0.0
    w2 = 0.0
    for n in range(1, n_steps + 1):
        v = draw_service(rng, kind, alpha, c, x0)
        t = draw_arrival(rng, fam, mean)
        w1, w2 = step(w1, w2, v, t)
        if n > burn_in:
            k = min((n - burn_in - 1) // batch_len, n_batches - 1)
            for j in range(bs.shape[0]):
                if w1 > bs[j]:
                    counts[k, j] += 1


@dataclass(frozen=True)
class Decomposition:
    b1_hat: float
    b2_hat: float
    tau0_mean: float
    b1_total: int
    b2_total: int
    tau_total: int
    n_cycles: int

    @property
    def point(self):
        return (self.b1_total + self.b2_total) / self.tau_total

    @property
    def ratio(self):
        return self.b2_hat / self.b1_hat if self.b1_total else math.inf


def decompose_cycle_counts(service, arrival, b, delta_triple, n_cycles, seed, threads=None,
                           cap=qc.DEFAULT_CAP):
    """Split exceedance counts by whether W^(1) passes b*delta before W^(2) retreats."""
    dm, d, dp = delta_triple
    if not 0 < dm < d < dp < 1:
        raise ValueError("need 0 < delta_minus < delta < delta_plus < 1")
    qc._check_recurrent(arrival, False)
    sizes = split(int(n_cycles), CYCLE_BLOCK)
    args = (*service.params, *arrival.params)

    def block(i, rng):
        out = np.zeros(3, dtype=np.int64)
        if qc._decompose_block(rng, *args, float(b), dm, d, dp, sizes[i], cap, out) < 0:
            raise qc.CycleCapExceeded(f"a cycle exceeded the cap of {cap} steps")
        return out

    tot = sum(run_blocks(block, len(sizes), seed, threads))
    b1, b2, tau = (int(x) for x in tot)
    return Decomposition(b1 / n_cycles, b2 / n_cycles, tau / n_cycles, b1, b2, tau, int(n_cycles))


CSV_FIELDS = ["b", "point", "stderr", "ci_low", "ci_high", "n", "method", "seed"]


def report_rows(reports):
    """CSV rows from {b: EstimateReport} maps, sorted by (b, method)."""
    rows = []
    for rep_map in reports:
        for b, r in rep_map.items():
            nums = [repr(float(v)) for v in (b, r.point, r.stderr, r.ci_low, r.ci_high)]
            rows.append(nums + [str(r.n), r.method, str(r.seed)])
    rows.sort(key=lambda row: (float(row[0]), row[6]))
    return rows
