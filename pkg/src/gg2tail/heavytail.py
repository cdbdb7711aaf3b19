"""Regularly varying service laws, matched arrival laws and the law of X = V - T."""
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import integrate, optimize

from . import _nb

_KINDS = {"const": _nb.CONST, "log": _nb.LOG, "invlog": _nb.INVLOG}
_FAMILIES = {"exp": _nb.EXP, "uniform": _nb.UNIFORM, "det": _nb.DET}


@dataclass(frozen=True)
class SlowVariation:
    """Slowly varying factor L: ``const`` (L = c), ``log`` or ``invlog``."""

    kind: str = "const"
    c: float = 1.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown slowly varying kind {self.kind!r}")
        if self.kind == "const" and not self.c > 0:
            raise ValueError("ConstFactor requires c > 0")
        if self.kind != "const" and self.c != 1.0:
            raise ValueError("c is only meaningful for the const kind")

    @classmethod
    def const(cls, c=1.0):
        return cls("const", float(c))

    @classmethod
    def log(cls):
        return cls("log")

    @classmethod
    def invlog(cls):
        return cls("invlog")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "const":
            return np.full_like(x, self.c)
        if self.kind == "log":
            return np.log1p(x)
        return 1.0 / np.log1p(x)


def _power_tail(alpha, slow, x):
    return x**-alpha * slow(x)


def _support_edge(alpha, slow):
    if slow.kind == "const":
        return slow.c ** (1.0 / alpha)
    f = lambda x: float(_power_tail(alpha, slow, x)) - 1.0
    grid = np.logspace(-6, 6, 1201)
    vals = _power_tail(alpha, slow, grid)
    below = np.nonzero(vals <= 1.0)[0]
    if len(below) == 0:
        raise ValueError("tail never drops below 1")
    i = below[0]
    if np.any(np.diff(vals[i:]) >= 0):
        raise ValueError("tail is not decreasing beyond its support edge")
    if i == 0:
        return grid[0]
    return optimize.brentq(f, grid[i - 1], grid[i], xtol=1e-15, rtol=1e-15)


def _slow_of_log(slow, u):
    """L(e^u) without overflow."""
    if slow.kind == "const":
        return slow.c
    lg = float(np.logaddexp(0.0, u))
    return lg if slow.kind == "log" else 1.0 / lg


def _log_moment(alpha, slow, u0, power):
    """int_{e^u0}^inf x^power v(x) dx/x, v(x) = x^-alpha L(x), in the variable u = log x."""
    g = lambda u: math.exp((power - alpha) * u) * _slow_of_log(slow, u)
    val, _ = integrate.quad(g, u0, np.inf, epsabs=0.0, epsrel=1e-11, limit=400)
    return val


@dataclass(frozen=True)
class TailModel:
    """Service law with P{V > x} = min(1, x^-alpha L(x)) for x >= x0, and 1 below x0."""

    alpha: float
    slow: SlowVariation
    x0: float
    mean: float

    @classmethod
    def create(cls, alpha, slow=None):
        slow = SlowVariation.const() if slow is None else slow
        alpha = float(alpha)
        if not alpha > 1:
            raise ValueError("alpha must exceed 1 for a finite mean")
        x0 = float(_support_edge(alpha, slow))
        # E[V] = x0 + int_{x0}^inf Bbar, with x = e^u to tame the algebraic tail
        tail_int = _log_moment(alpha, slow, math.log(x0), 1.0)
        return cls(alpha, slow, x0, x0 + tail_int)

    @property
    def params(self):
        return (_KINDS[self.slow.kind], self.alpha, self.slow.c, self.x0)

    @property
    def spec(self):
        return format_service(self)

    def __call__(self, x):
        return tail_eval(self, x)


@dataclass(frozen=True)
class ArrivalModel:
    """Interarrival law whose mean equals the paired service mean (rho = 1)."""

    family: str
    mean: float

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown arrival family {self.family!r}")
        if not self.mean > 0:
            raise ValueError("mean must be positive")

    @classmethod
    def matched(cls, family, service):
        return cls(family, service.mean)

    @property
    def params(self):
        return (_FAMILIES[self.family], self.mean)

    @property
    def rate(self):
        return 1.0 / self.mean

    @property
    def second_moment(self):
        return {"exp": 2.0, "uniform": 4.0 / 3.0, "det": 1.0}[self.family] * self.mean**2

    def sf(self, t):
        t = np.asarray(t, dtype=float)
        if self.family == "exp":
            return np.where(t < 0, 1.0, np.exp(-np.maximum(t, 0) / self.mean))
        if self.family == "uniform":
            return np.clip(1.0 - t / (2 * self.mean), 0.0, 1.0)
        return np.where(t < self.mean, 1.0, 0.0)


# ---------------------------------------------------------------- spec strings

def _fmt(x):
    x = float(x)
    return str(int(x)) if x.is_integer() else repr(x)


def _kv(body):
    out = {}
    for part in filter(None, body.split(",")):
        if "=" not in part:
            raise ValueError(f"expected key=value, got {part!r}")
        k, v = part.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def parse_service(text):
    """Parse ``pareto:alpha=3``, ``rv:alpha=2.5,slow=log`` or ``rv:alpha=3,slow=invlog``."""
    head, _, body = text.strip().partition(":")
    kv = _kv(body)
    if "alpha" not in kv:
        raise ValueError(f"service spec {text!r} lacks alpha")
    alpha = float(kv.pop("alpha"))
    if head == "pareto":
        slow = SlowVariation.const(float(kv.pop("c", 1.0)))
    elif head == "rv":
        kind = kv.pop("slow", "const")
        slow = SlowVariation.const(float(kv.pop("c", 1.0))) if kind == "const" else SlowVariation(kind)
    else:
        raise ValueError(f"unknown service family {head!r}")
    if kv:
        raise ValueError(f"unexpected keys {sorted(kv)} in {text!r}")
    return TailModel.create(alpha, slow)


def format_service(model):
    a = _fmt(model.alpha)
    if model.slow.kind == "const":
        return f"pareto:alpha={a}" + ("" if model.slow.c == 1.0 else f",c={_fmt(model.slow.c)}")
    return f"rv:alpha={a},slow={model.slow.kind}"


def parse_arrival(text, service):
    family = text.strip()
    if family not in _FAMILIES:
        raise ValueError(f"unknown arrival spec {text!r}; expected one of {sorted(_FAMILIES)}")
    return ArrivalModel.matched(family, service)


# ---------------------------------------------------------------- operations

def tail_eval(model, x):
    """P{V > x}; vectorises over array input."""
    kind, alpha, c, x0 = model.params
    if np.ndim(x) == 0:
        return _nb.tail(kind, alpha, c, x0, float(x))
    x = np.asarray(x, dtype=float)
    xs = np.maximum(x, x0)
    if model.slow.kind == "const":
        v = c * xs**-alpha
    elif model.slow.kind == "log":
        v = xs**-alpha * np.log1p(xs)
    else:
        v = xs**-alpha / np.log1p(xs)
    return np.where(x < x0, 1.0, np.minimum(v, 1.0))


def tail_quantile(model, u):
    """The x with tail_eval(model, x) = u, for u in (0, 1]."""
    u = float(u)
    if not 0.0 < u <= 1.0:
        raise ValueError(f"u must lie in (0, 1], got {u}")
    return _nb.quantile(*model.params, u)


def sample_service(model, rng, size=None):
    if size is None:
        return _nb.draw_service(rng, *model.params)
    u = 1.0 - rng.random(size)
    return np.array([_nb.quantile(*model.params, v) for v in np.ravel(u)]).reshape(np.shape(u))


def sample_interarrival(model, rng, size=None):
    if size is None:
        return _nb.draw_arrival(rng, *model.params)
    if model.family == "exp":
        return model.mean * rng.standard_exponential(size)
    if model.family == "uniform":
        return 2.0 * model.mean * rng.random(size)
    return np.full(size, model.mean)


def karamata_check(alpha, beta, x, slow=None, form="upper"):
    """Numeric integral of u^beta v(u) over the Karamata range, divided by its closed form.

    ``v(u) = u^-alpha L(u)``.  The upper form integrates over (x, inf) and needs
    alpha - beta > 1; the lower form integrates over (0, x) and needs alpha - beta < 1.
    """
    slow = SlowVariation.const() if slow is None else slow
    k = alpha - beta - 1.0
    if k == 0.0:
        raise ValueError("alpha - beta = 1 is the excluded boundary case")
    if form == "upper" and k < 0 or form == "lower" and k > 0:
        raise ValueError(f"{form} form does not apply for alpha - beta = {alpha - beta}")
    if form == "lower" and slow.kind == "invlog" and beta <= alpha:
        # 1/log(1+u) ~ 1/u at 0, so the integrand is not integrable there
        raise ValueError("lower form diverges at 0 for invlog unless beta > alpha")
    lx = math.log(x)
    closed = x ** (beta + 1 - alpha) * _slow_of_log(slow, lx) / abs(k)
    if form == "upper":
        num = _log_moment(alpha, slow, lx, beta + 1.0)
    else:
        g = lambda u: math.exp((beta + 1 - alpha) * u) * _slow_of_log(slow, u)
        num, _ = integrate.quad(g, -np.inf, lx, epsabs=0.0, epsrel=1e-11, limit=400)
    return num / closed


@dataclass
class PotterResult:
    worst_slack: float
    t_eps: float
    n_checked: int


def _potter_slack(model, eps, t, c):
    ratio = tail_eval(model, c * t) / tail_eval(model, t)
    p, m = c ** (-model.alpha + eps), c ** (-model.alpha - eps)
    lo = (1 - eps) * np.minimum(p, m)
    hi = (1 + eps) * np.maximum(p, m)
    return np.minimum(ratio - lo, hi - ratio)


def potter_threshold(model, eps, t_max=1e12, c_range=(1e-3, 1e3)):
    """Smallest scanned t_eps past which Potter's two-sided bound holds on the scan grid."""
    ts = np.logspace(math.log10(model.x0) + 1e-9, math.log10(t_max), 481)
    cs = np.logspace(math.log10(c_range[0]), math.log10(c_range[1]), 121)
    T, C = np.meshgrid(ts, cs, indexing="ij")
    ok = (T * C >= model.x0) & (T * C <= t_max)
    slack = np.where(ok, _potter_slack(model, eps, T, C), np.inf)
    bad = slack < 0
    if not bad.any():
        return float(ts[0])
    worst = np.max(np.minimum(T, T * C)[bad])
    above = ts[ts > worst]
    return float(above[0]) if len(above) else math.inf


def potter_check(model, eps, t_grid, c_grid):
    """Worst signed slack of Potter's bounds over pairs with t, ct >= t_eps."""
    if not 0 < eps < min(model.alpha, 1.0):
        raise ValueError("eps must lie in (0, min(alpha, 1))")
    t_eps = potter_threshold(model, eps)
    worst, n = math.inf, 0
    for t in t_grid:
        for c in c_grid:
            if t >= t_eps and c * t >= t_eps:
                worst = min(worst, float(_potter_slack(model, eps, t, c)))
                n += 1
    return PotterResult(worst, t_eps, n)


# ---------------------------------------------------------------- law of X = V - T

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(12)


def _cell_integrals(edges, f, kink):
    """Gauss-Legendre integral of f(s, cell_lo) over each cell of ``edges``, split at ``kink``."""
    lo, hi = edges[:-1], edges[1:]

    def gl(a, b):
        half = (b - a)[:, None] / 2
        s = (a + b)[:, None] / 2 + half * _GL_NODES[None, :]
        return half[:, 0] * (f(s, a[:, None]) @ _GL_WEIGHTS)

    out = gl(lo, hi)
    j = np.flatnonzero((lo < kink) & (kink < hi))
    for i in j:
        a, b, k = lo[i:i + 1], hi[i:i + 1], np.array([kink])
        half1, half2 = (k - a) / 2, (b - k) / 2
        s1 = (a + k) / 2 + half1 * _GL_NODES
        s2 = (k + b) / 2 + half2 * _GL_NODES
        out[i] = half1[0] * (f(s1, a) @ _GL_WEIGHTS) + half2[0] * (f(s2, a) @ _GL_WEIGHTS)
    return out


class XTail:
    """Exact (quadrature) and tabulated tails of the walk increment X = V - T."""

    def __init__(self, service, arrival):
        self.service = service
        self.arrival = arrival
        self._tables = {}

    def _bbar(self, s):
        return _nb.tail(*self.service.params, s)

    def _over_t(self, g, lo, hi, kink=None):
        """E[g(T); lo < T < hi] for the arrival law."""
        arr = self.arrival
        if arr.family == "det":
            return g(arr.mean) if lo < arr.mean < hi else 0.0
        if arr.family == "exp":
            dens = lambda t: math.exp(-t / arr.mean) / arr.mean
            hi = min(hi, np.inf)
        else:
            dens = lambda t: 1.0 / (2 * arr.mean)
            hi = min(hi, 2 * arr.mean)
        lo = max(lo, 0.0)
        if hi <= lo:
            return 0.0
        f = lambda t: g(t) * dens(t)
        pieces = [lo] + ([kink] if kink is not None and lo < kink < hi else []) + [hi]
        total = 0.0
        for a, b in zip(pieces[:-1], pieces[1:]):
            val, _ = integrate.quad(f, a, b, epsabs=1e-300, epsrel=1e-11, limit=400)
            total += val
        return total

    def right(self, y):
        """P{X > y}."""
        if np.ndim(y):
            return np.array([self.right(v) for v in np.ravel(y)]).reshape(np.shape(y))
        y = float(y)
        return self._over_t(lambda t: self._bbar(y + t), 0.0, np.inf, kink=self.service.x0 - y)

    def left(self, y):
        """P{X < -y} for y >= 0."""
        if np.ndim(y):
            return np.array([self.left(v) for v in np.ravel(y)]).reshape(np.shape(y))
        y = float(y)
        x0 = self.service.x0
        return self._over_t(lambda t: 1.0 - self._bbar(t - y), y + x0, np.inf)

    def abs_tail(self, x):
        return self.right(x) + self.left(x)

    def cond_cdf_shift(self, x, b):
        """CDF of X + b given X > b, evaluated at x."""
        x = np.asarray(x, dtype=float)
        out = 1.0 - self.right(x - b) / self.right(b)
        return np.clip(out, 0.0, 1.0)

    def integral(self, lo, hi):
        """Integral of P{X > u} over (lo, hi)."""
        val, _ = integrate.quad(self.right, lo, hi, epsabs=0.0, epsrel=1e-10, limit=400)
        return val

    def grid(self, y_max, dy):
        """Tail and upper integral on the uniform grid 0, dy, ..., >= y_max.

        Returns ``(dy, tail, upper)`` with ``upper[i]`` the integral of the tail
        from ``i*dy`` to the last grid point.  Cached per (y_max, dy).
        """
        key = (float(y_max), float(dy))
        if key not in self._tables:
            n = int(math.ceil(y_max / dy)) + 1
            ys = dy * np.arange(n)
            vals = self._grid_tail(ys)
            mids = self._grid_tail(ys[:-1] + dy / 2)
            cell = dy / 6.0 * (vals[:-1] + 4 * mids + vals[1:])
            upper = np.concatenate([np.cumsum(cell[::-1])[::-1], [0.0]])
            self._tables[key] = (float(dy), vals, upper)
        return self._tables[key]

    def _grid_tail(self, ys):
        """Tail on an increasing grid, vectorised (no per-point adaptive quadrature)."""
        arr = self.arrival
        if arr.family == "det":
            return tail_eval(self.service, ys + arr.mean)
        if arr.family == "uniform":
            w = 2 * arr.mean
            return (self.service_integral(ys + w) - self.service_integral(ys)) / w
        # exponential: P{X > y} = lam * int_0^inf e^{-lam t} Bbar(y + t) dt, swept down from the top
        lam = arr.rate
        top = self.right(ys[-1])
        out = np.empty_like(ys)
        out[-1] = top
        cells = lam * _cell_integrals(ys, lambda s, lo: np.exp(-lam * (s - lo)) * tail_eval(self.service, s),
                                      self.service.x0)
        decay = np.exp(-lam * np.diff(ys))
        for i in range(len(ys) - 2, -1, -1):
            out[i] = cells[i] + decay[i] * out[i + 1]
        return out

    def service_integral(self, s):
        """int_0^s P{V > u} du, vectorised for s >= 0."""
        s = np.asarray(s, dtype=float)
        m = self.service
        out = np.minimum(s, m.x0)
        above = s > m.x0
        if m.slow.kind == "const":
            out[above] += m.slow.c * (m.x0 ** (1 - m.alpha) - s[above] ** (1 - m.alpha)) / (m.alpha - 1)
        elif above.any():
            # cumulative Gauss-Legendre over a grid refined geometrically from x0
            top = s[above].max()
            knots = m.x0 * np.geomspace(1.0, top / m.x0, 4000) if top > m.x0 else np.array([m.x0])
            edges = np.unique(np.concatenate([[m.x0], knots, s[above]]))
            cum = np.concatenate([[0.0], np.cumsum(_cell_integrals(edges, lambda u, _: tail_eval(m, u), -1.0))])
            out[above] += cum[np.searchsorted(edges, s[above])]
        return out

    @cached_property
    def moments(self):
        """(E[X], Var[X]) by quadrature; the variance is inf when alpha <= 2."""
        s = self.service
        ev2 = math.inf
        if s.alpha > 2:
            ev2 = s.x0**2 + 2 * _log_moment(s.alpha, s.slow, math.log(s.x0), 2.0)
        mean = s.mean - self.arrival.mean
        var = ev2 - s.mean**2 + self.arrival.second_moment - self.arrival.mean**2
        return mean, var
