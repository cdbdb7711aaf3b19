import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from gg2tail import rw_ld
from gg2tail.streams import stream

from conftest import models


@pytest.fixture(scope="module")
def walk3():
    return rw_ld.WalkSpec.create(*models("pareto:alpha=3"))


@pytest.fixture(scope="module")
def walk15():
    return rw_ld.WalkSpec.create(*models("pareto:alpha=1.5"))


def test_walk_spec_moments(walk3, walk15):
    assert walk3.mean == pytest.approx(0.0, abs=1e-12)
    assert walk3.sigma2 == pytest.approx(3.0, rel=1e-9)
    assert walk15.sigma2 == math.inf


def test_single_step_tail_matches_quadrature(walk3):
    for x in (2.0, 5.0):
        rep = rw_ld.max_abs_walk_tail(walk3, 1, x, 10**6, 3)
        p = walk3.abs_tail(x)
        assert abs(rep.point - p) <= 3 * math.sqrt(p * (1 - p) / rep.n)


def test_clt_scale_estimate(walk3):
    m = 10**4
    rep = rw_ld.max_abs_walk_tail(walk3, m, math.sqrt(m), 2000, 4)
    assert 0 < rep.point < 1
    # max |sigma B| over [0, 1] beyond 1/sigma is almost certain at this scale
    assert rep.point > 0.5 * rw_ld.brownian_max_abs_tail(1 / walk3.sigma)


def test_huge_level_rule_of_three(walk3):
    rep = rw_ld.max_abs_walk_tail(walk3, 100, 1e12, 1000, 5)
    assert rep.point == 0.0 and rep.ci_high == pytest.approx(3e-3)


def test_level_precondition(walk3):
    with pytest.raises(ValueError):
        rw_ld.max_abs_walk_tail(walk3, 100, 5.0, 10, 0)


def test_brownian_one_sided():
    assert rw_ld.brownian_max_tail(1.0) == pytest.approx(2 * stats.norm.sf(1.0), rel=1e-15)
    assert rw_ld.brownian_max_tail(1.0) == pytest.approx(0.31731, abs=1e-5)


def test_brownian_deep_tail():
    assert rw_ld.brownian_max_abs_tail(8.0) < 1e-14
    with pytest.raises(ValueError):
        rw_ld.brownian_max_abs_tail(0.0)


def test_brownian_two_sided_series_against_alternative_form():
    # P{max|B| <= y} = (4/pi) sum_k (-1)^k/(2k+1) exp(-(2k+1)^2 pi^2 / (8 y^2))
    for y in (0.5, 1.0, 2.0):
        k = np.arange(200)
        inside = 4 / math.pi * np.sum((-1.0) ** k / (2 * k + 1) * np.exp(-((2 * k + 1) ** 2) * math.pi**2 / (8 * y * y)))
        assert rw_ld.brownian_max_abs_tail(y) == pytest.approx(1 - inside, abs=1e-11)


@given(st.floats(0.05, 6.0), st.floats(0.05, 6.0))
@settings(max_examples=60)
def test_brownian_tails_ordered(y1, y2):
    lo, hi = sorted((y1, y2))
    assert rw_ld.brownian_max_abs_tail(hi) <= rw_ld.brownian_max_abs_tail(lo) + 1e-15
    assert rw_ld.brownian_max_tail(lo) <= rw_ld.brownian_max_abs_tail(lo) + 1e-12


def test_brownian_two_sided_vs_grid_walk():
    n_steps, n_paths = 10_000, 20_000
    mx = rw_ld.brownian_grid_abs_max(n_steps, n_paths, 6)
    # a grid walk under-reads the continuous maximum by about 0.5826 / sqrt(n)
    y = 1.0 - 0.5826 / math.sqrt(n_steps)
    p = np.mean(mx > y)
    exact = rw_ld.brownian_max_abs_tail(1.0)
    assert abs(p - exact) <= 3 * math.sqrt(exact * (1 - exact) / n_paths)


def test_stable_scale_known_value():
    # C_1.5 = 1 / sqrt(2 pi)
    assert rw_ld.stable_scale(1.5) == pytest.approx((2 * math.pi) ** (1 / 3), rel=1e-12)


@pytest.mark.parametrize("alpha", [1.3, 1.5, 1.8])
def test_cms_draw_matches_scipy(alpha):
    s = rw_ld.stable_scale(alpha)
    d = stats.levy_stable(alpha, 1.0, loc=0, scale=s)
    d.dist.parameterization = "S1"
    rng = stream(0, 0)
    n = 100_000
    z = s * np.array([rw_ld.cms_draw(rng, alpha) for _ in range(n)])
    eps = math.sqrt(math.log(2 / 1e-3) / (2 * n))
    for x in (-2.0, 0.0, 1.0, 3.0, 8.0):
        assert abs(np.mean(z <= x) - d.cdf(x)) <= eps


@pytest.mark.parametrize("alpha", [1.3, 1.5])
def test_stable_tail_normalisation(alpha):
    d = stats.levy_stable(alpha, 1.0, loc=0, scale=rw_ld.stable_scale(alpha))
    d.dist.parameterization = "S1"
    assert d.sf(1e3) * 1e3**alpha == pytest.approx(1.0, abs=0.01)


def test_stable_precondition(walk3):
    spec = rw_ld.WalkSpec.create(*models("pareto:alpha=2.1"))
    with pytest.raises(ValueError):
        rw_ld.stable_max_bound_check(spec, [1000], [10.0], 10, 0)
    with pytest.raises(ValueError):
        rw_ld.stable_max_samples(2.1)
    logtail = rw_ld.WalkSpec.create(*models("rv:alpha=1.5,slow=log"))
    with pytest.raises(ValueError):
        rw_ld.stable_max_bound_check(logtail, [1000], [10.0], 10, 0)


def test_nagaev_requires_finite_variance(walk15):
    with pytest.raises(ValueError):
        rw_ld.nagaev_bound_check(walk15, [1000], [[100.0]], 10, 0)


def test_nagaev_small_m_informational(walk3):
    worst, rows = rw_ld.nagaev_bound_check(walk3, [100], [[10.0, 20.0]], 500, 1)
    assert worst == math.inf and not any(r.asserted for r in rows)


def test_nagaev_examples(walk3):
    worst, rows = rw_ld.nagaev_bound_check(walk3, [1000], [[math.sqrt(1000)]], 5000, 2)
    assert worst >= 0
    worst, rows = rw_ld.nagaev_bound_check(walk3, [10**4], [[10 * 100.0]], 10_000, 3)
    assert worst >= 0
    assert rows[0].csv()[0] == "nagaev" and len(rows[0].csv()) == len(rw_ld.CSV_FIELDS)
