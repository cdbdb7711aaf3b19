"""Compiled primitives shared by the simulators.

Service laws are passed around as ``(kind, alpha, c, x0)`` and arrival laws
as ``(family, mean)`` so that kernels only ever see scalars.
"""
import math

import numba as nb

CONST, LOG, INVLOG = 0, 1, 2
EXP, UNIFORM, DET = 0, 1, 2

jit = nb.njit(cache=True, nogil=True)


@jit
def tail(kind, alpha, c, x0, x):
    if x < x0:
        return 1.0
    if kind == CONST:
        v = c * x ** -alpha
    elif kind == LOG:
        v = x ** -alpha * math.log1p(x)
    else:
        v = x ** -alpha / math.log1p(x)
    return v if v < 1.0 else 1.0


@jit
def quantile(kind, alpha, c, x0, u):
    if u >= 1.0:
        return x0
    if kind == CONST:
        return (c / u) ** (1.0 / alpha)
    lo = x0
    hi = 2.0 * x0
    while tail(kind, alpha, c, x0, hi) >= u:
        lo = hi
        hi *= 2.0
    while hi - lo > 1e-12 * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if tail(kind, alpha, c, x0, mid) >= u:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@jit
def draw_service(rng, kind, alpha, c, x0):
    # uniform on (0, 1]
    return quantile(kind, alpha, c, x0, 1.0 - rng.random())


@jit
def draw_service_above(rng, kind, alpha, c, x0, s):
    """V conditioned on V > s, by inversion of the conditional tail."""
    ts = tail(kind, alpha, c, x0, s)
    if ts >= 1.0:
        return draw_service(rng, kind, alpha, c, x0)
    return quantile(kind, alpha, c, x0, ts * (1.0 - rng.random()))


@jit
def draw_arrival(rng, family, mean):
    if family == EXP:
        return mean * rng.standard_exponential()
    if family == UNIFORM:
        return 2.0 * mean * rng.random()
    return mean


@jit
def step(w1, w2, v, t):
    a = w1 + v - t
    if a < 0.0:
        a = 0.0
    b = w2 - t
    if b < 0.0:
        b = 0.0
    if a <= b:
        return a, b
    return b, a


@jit
def interp(y0, dy, table, y):
    """Linear interpolation on a uniform grid, clamped at both ends."""
    pos = (y - y0) / dy
    if pos <= 0.0:
        return table[0]
    n = table.shape[0]
    if pos >= n - 1:
        return table[n - 1]
    i = int(pos)
    f = pos - i
    return table[i] * (1.0 - f) + table[i + 1] * f
