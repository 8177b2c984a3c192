import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lorentzlab import BusemannField, LineSpec, busemann_limit, get_chart
from lorentzlab.busemann import (b_minus_r, b_plus_r, check_ordering, check_steepness,
                                 equi_semiconcavity, gradient_fd, lipschitz_bands,
                                 lipschitz_estimate, upper_support_check)
from lorentzlab.metric import lorentz_norm
from lorentzlab.timesep import NEG_INF

# 10 - sqrt(99.75), the closed-form Minkowski value of b+_10 at (0, 0.5)
B10 = 0.0125078222809112


def _fields(chart):
    line = LineSpec(chart, [0.0, 0.0], [1.0, 0.0])
    return BusemannField(line, "forward"), BusemannField(line, "backward")


@pytest.fixture(scope="module")
def mfields():
    return _fields(get_chart("minkowski2d"))


@pytest.fixture(scope="module")
def cfields():
    return _fields(get_chart("product_r_s1"))


def test_line_requires_unit_tangent(mink):
    with pytest.raises(ValueError):
        LineSpec(mink, [0, 0], [2, 0])


def test_plus_closed_form(mfields):
    bp, _ = mfields
    assert b_plus_r(bp, [0, 0.5], 10) == pytest.approx(B10, abs=1e-12)


def test_minus_mirrored(mfields):
    _, bm = mfields
    assert b_minus_r(bm, [0, 0.5], 10) == pytest.approx(-B10, abs=1e-12)


@pytest.mark.parametrize("r", [3.0, 10.0, 50.0])
def test_minus_on_line(mfields, r):
    _, bm = mfields
    assert bm.value_r([-2.0, 0.0], r) == pytest.approx(-2.0, abs=1e-12)


def test_far_spacelike_infinite(mfields):
    bp, bm = mfields
    assert bm.value_r([0, 30.0], 10) == NEG_INF
    assert bp.value_r([0, 30.0], 10) == math.inf


def test_direction_checked(mfields):
    bp, bm = mfields
    with pytest.raises(ValueError):
        b_plus_r(bm, [0, 0], 1)
    with pytest.raises(ValueError):
        BusemannField(bp.line, "+")


@settings(max_examples=15, deadline=None)
@given(st.floats(-1, 1), st.floats(-0.5, 0.5))
def test_limit_is_t_minkowski(t, x):
    bp, bm = _fields(get_chart("minkowski2d"))
    assert busemann_limit(bp, [t, x])[0] == pytest.approx(t, abs=1e-6)
    assert busemann_limit(bm, [t, x])[0] == pytest.approx(t, abs=1e-6)


@pytest.mark.parametrize("x", [(0.3, 0.4), (-0.5, -1.0), (1.0, 2.5)])
def test_limit_is_t_cylinder(cfields, x):
    bp, _ = cfields
    assert bp(np.array(x)) == pytest.approx(x[0], abs=1e-6)


def test_ordering_strict_off_line(mfields):
    rep = check_ordering(*mfields, [0, 0.3], 10)
    assert rep.passed
    s = rep.detail["slacks"]
    assert s[0] > 1e-3 and s[2] > 1e-3


def test_ordering_on_line(mfields):
    rep = check_ordering(*mfields, [1.0, 0.0], 10)
    np.testing.assert_allclose(rep.detail["values"], [1.0] * 4, atol=1e-9)


@pytest.mark.parametrize("x, y, diff", [
    ((0, 0), (1, 0), 1.0),
    ((0, 0), (2, 1), 10 - math.sqrt(63)),
    ((0, 0), (0, 0), 0.0),
])
def test_steepness(mfields, x, y, diff):
    rep = check_steepness(mfields[0], x, y, r=10)
    assert rep.passed
    assert rep.detail["difference"] == pytest.approx(diff, abs=1e-12)


@pytest.mark.parametrize("which", [0, 1])
def test_gradient_is_dt(mfields, which):
    db = gradient_fd(mfields[which], [0.2, 0.1])
    np.testing.assert_allclose(db, [1, 0], atol=1e-6)
    assert lorentz_norm(get_chart("minkowski2d"), [0.2, 0.1], db) == pytest.approx(1, abs=1e-6)


def test_gradient_r_exact(mfields):
    bp, _ = mfields
    # d b+_r = -d l(., gamma(r)) = (r - t, x) / l lowered
    x, r = np.array([0.0, 0.5]), 10.0
    ell = math.sqrt(99.75)
    np.testing.assert_allclose(bp.gradient_r(x, r), [10 / ell, 0.5 / ell], atol=1e-10)


def test_rebase_shift(mfields):
    bp, _ = mfields
    shifted = BusemannField(bp.line.rebased(0.7), "forward")
    x = np.array([0.2, 0.3])
    assert shifted(x) - bp(x) == pytest.approx(-0.7, abs=1e-6)


def test_lipschitz_of_t(mink):
    box = [[-1, 1], [-1, 1]]
    assert lipschitz_estimate(lambda x: x[0], box) == pytest.approx(1.0, abs=0.05)


def test_lipschitz_b10_bounded(mfields):
    box = [[-1, 1], [-0.5, 0.5]]
    L = lipschitz_estimate(lambda x: mfields[0].value_r(x, 10), box, samples=100)
    assert 0.5 < L <= 2.0


def test_semiconcavity_nonincreasing(mfields):
    out = equi_semiconcavity(mfields[0], [[-0.3, 0.3], [-0.3, 0.3]], radii=[5, 10, 20],
                             samples=8)
    assert out[5] >= out[10] >= out[20] - 1e-6
    assert out["max"] < 1.0


def test_upper_support(mfields):
    rep = upper_support_check(mfields[0], [0, 0.2], 10, 1.0, samples=50,
                              rng=np.random.default_rng(3))
    assert rep.passed
    assert rep.detail["equality_error"] <= 1e-6


def test_bands_on_linear_function():
    axes = [np.linspace(-1, 1, 11), np.linspace(-1, 1, 11)]
    rep = lipschitz_bands(lambda x: 2 * x[0] - x[1], axes,
                          [[[-0.4, 0.4]] * 2, [[-1, 1]] * 2])
    np.testing.assert_allclose(rep.lipschitz, [2.0, 2.0])
    assert rep.monotone and rep.growth == pytest.approx(1.0)


def test_bands_collect_infinities():
    axes = [[0.0], np.linspace(-1, 1, 21)]
    rep = lipschitz_bands(lambda x: math.inf if abs(x[1]) > 0.75 else x[1] ** 2, axes,
                          [[[0, 0], [-0.5, 0.5]], [[0, 0], [-1, 1]]])
    assert len(rep.infinite_points) == 6  # |x| in {0.8, 0.9, 1.0}
    assert rep.lipschitz[1] > rep.lipschitz[0]
