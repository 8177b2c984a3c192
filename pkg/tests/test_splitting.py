import math

import numpy as np
import pytest

from lorentzlab import BusemannField, LineSpec, get_chart
from lorentzlab.fields import ScalarFieldSample
from lorentzlab.splitting import (build_level_set, hessian_norm_field, level_set_distance,
                                  level_value_defect, normal_transport_defect,
                                  product_timesep_check, pullback_metric_check,
                                  second_fundamental_form, splitting_map, splitting_map_y)
from lorentzlab.timesep import NEG_INF

T = ScalarFieldSample(lambda X: np.asarray(X)[..., 0], vectorized=True)


def _seeds(t0=0.1, span=0.6, m=9):
    return np.column_stack([np.full(m, t0), np.linspace(-span, span, m)])


@pytest.fixture(scope="module")
def mframe():
    return build_level_set(T, get_chart("minkowski2d"), _seeds())


@pytest.fixture(scope="module")
def cframe():
    chart = get_chart("product_r_s1")
    bp = BusemannField(LineSpec(chart, [0, 0], [1, 0]), "forward")
    return build_level_set(bp, chart, _seeds(span=1.2, m=13))


def test_seeds_land_on_level_set(mframe):
    np.testing.assert_allclose(mframe.points[:, 0], 0.0, atol=1e-6)
    np.testing.assert_allclose(mframe.spatial[:, 0], np.linspace(-0.6, 0.6, 9), atol=1e-12)


def test_seed_on_level_set_unchanged(mink):
    frame = build_level_set(T, mink, [[0.0, 0.25]])
    np.testing.assert_array_equal(frame.points, [[0.0, 0.25]])


def test_busemann_level_set_cylinder(cframe):
    np.testing.assert_allclose(cframe.points[:, 0], 0.0, atol=1e-6)
    np.testing.assert_allclose(cframe.induced_h, np.ones((13, 1, 1)), atol=1e-6)


def test_failed_seed_dropped(mink):
    flat_in_time = ScalarFieldSample(lambda X: np.asarray(X)[..., 1], vectorized=True)
    with pytest.warns(UserWarning, match="dropping seed"):
        frame = build_level_set(flat_in_time, mink, [[0.0, 0.3]])
    assert len(frame.points) == 0 and frame.dropped == [[0.0, 0.3]]


@pytest.mark.parametrize("name", ["minkowski2d", "product_r_s1"])
def test_hessian_vanishes(name):
    chart = get_chart(name)
    bp = BusemannField(LineSpec(chart, [0, 0], [1, 0]), "forward")
    pts = np.random.default_rng(5).uniform(-0.2, 0.2, size=(4, 2))
    assert hessian_norm_field(bp, chart, pts).max_norm <= 1e-3


def test_hessian_desitter_finite_radius(ds):
    bp = BusemannField(LineSpec(ds, [0, 0], [1, 0]), "forward")
    rep = hessian_norm_field(lambda x: bp.value_r(x, 6.0), ds, [[0.0, 0.1], [0.1, -0.1]])
    assert rep.max_norm > 0.1


def test_splitting_map_minkowski(mframe):
    np.testing.assert_allclose(splitting_map(mframe, 2.0, [0.0, 0.4]), [2.0, 0.4], atol=1e-12)


def test_splitting_map_cylinder(cframe):
    np.testing.assert_allclose(splitting_map_y(cframe, -1.0, [0.7]), [-1.0, 0.7], atol=1e-6)


@pytest.mark.parametrize("which", ["mframe", "cframe"])
def test_pullback_is_product(request, which):
    frame = request.getfixturevalue(which)
    rep = pullback_metric_check(frame, [-1.0, 0.5, 1.0], pairs=12,
                                rng=np.random.default_rng(2))
    assert rep.max_deviation <= 1e-4


def test_level_value(cframe):
    assert level_value_defect(cframe, [-1.0, 1.0], [0, 6, 12]) <= 1e-3


def test_totally_geodesic(cframe):
    assert np.abs(second_fundamental_form(cframe, 6)).max() <= 1e-4
    assert normal_transport_defect(cframe, 6, [0.0, 1.0]) <= 1e-4


@pytest.mark.parametrize("ya, yb, expected", [(-0.5, 0.3, 0.8), (0.0, 0.0, 0.0),
                                              (-0.6, 0.6, 1.2)])
def test_distance_euclidean(mframe, ya, yb, expected):
    assert level_set_distance(mframe, [ya], [yb]) == pytest.approx(expected, abs=1e-9)


def test_distance_wraps_on_cylinder(cframe):
    # 0.5 and 2 pi - 0.5 are 1.0 apart going through 0
    assert level_set_distance(cframe, [0.5], [2 * math.pi - 0.5]) == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("which, x, y, t", [("cframe", 0.0, 1.0, 2.0),
                                            ("cframe", -0.4, 0.6, 1.5),
                                            ("mframe", 0.1, -0.3, 1.0)])
def test_product_formula(request, which, x, y, t):
    frame = request.getfixturevalue(which)
    rep = product_timesep_check(frame, (0.0, x), (t, y))
    assert rep.passed
    assert rep.formula == pytest.approx(math.sqrt(t ** 2 - (y - x) ** 2), abs=1e-6)


def test_product_formula_acausal(mframe):
    rep = product_timesep_check(mframe, (0.0, -0.5), (0.3, 0.5))
    assert rep.passed and rep.formula == NEG_INF == rep.measured
