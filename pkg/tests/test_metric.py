import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lorentzlab import christoffel, classify, get_chart, ricci, riemann
from lorentzlab.charts import chart_from_spec, load_chart_file
from lorentzlab.errors import ConfigError, NotTimelikeFuture, OutOfDomain, SingularMetric
from lorentzlab.metric import (check_signature, eval_metric, lorentz_norm, lower_index,
                               raise_index)

# frozen from a sympy evaluation of the closed-form de Sitter metric dt^2 - cosh(t)^2 dth^2
COSH_SINH_07 = 0.952150750725767
TANH_07 = 0.6043677771171635
RIC_DS_05 = [[-1.0, 0.0], [0.0, 1.2715403174076219]]


@pytest.mark.parametrize("name", ["minkowski2d", "minkowski3d", "product_r_s1", "product_r_s2",
                                  "desitter2d"])
def test_builtin_signature(name):
    chart = get_chart(name)
    x = chart.domain_box.mean(axis=1)
    assert check_signature(chart, x)


def test_desitter_christoffels(ds):
    gam = christoffel(ds, [0.7, 0.2])
    expected = np.zeros((2, 2, 2))
    expected[0, 1, 1] = COSH_SINH_07
    expected[1, 0, 1] = expected[1, 1, 0] = TANH_07
    np.testing.assert_allclose(gam, expected, atol=1e-12)


def test_fd_christoffels_match_exact(ds):
    x = [0.4, -0.3]
    np.testing.assert_allclose(christoffel(ds, x, method="fd"), christoffel(ds, x), atol=1e-7)


def test_desitter_ricci_is_minus_metric(ds):
    x = np.array([0.5, 0.0])
    np.testing.assert_allclose(ricci(ds, x), RIC_DS_05, atol=1e-9)
    np.testing.assert_allclose(ricci(ds, x), -ds.g(x), atol=1e-9)


def test_riemann_symmetries(ds):
    R = riemann(ds, [0.3, 0.1])
    # antisymmetric in the last pair
    np.testing.assert_allclose(R, -np.swapaxes(R, 2, 3), atol=1e-10)


@pytest.mark.parametrize("name", ["minkowski2d", "product_r_s1", "product_r_t2"])
def test_flat_curvature_vanishes(name):
    chart = get_chart(name)
    x = chart.domain_box.mean(axis=1) + 0.1
    assert np.abs(riemann(chart, x)).max() < 1e-12


def test_sphere_product_ricci():
    chart = get_chart("product_r_s2")
    x = np.array([0.0, 1.1, 0.3])
    # round unit sphere: Ric_S2 = h, which is -g on the spatial block
    expected = np.diag([0.0, 1.0, math.sin(1.1) ** 2])
    np.testing.assert_allclose(ricci(chart, x), expected, atol=1e-9)


@pytest.mark.parametrize("v, tag, direction", [
    ((1, 0), "timelike", "future"),
    ((1, 1), "null", "future"),
    ((0, 1), "spacelike", "none"),
    ((-1, 0), "timelike", "past"),
    ((0, 0), "zero", "none"),
])
def test_classify_minkowski(mink, v, tag, direction):
    c = classify(mink, [0, 0], v)
    assert (c.tag, c.direction) == (tag, direction)


def test_lorentz_norm_covector(mink):
    assert lorentz_norm(mink, [0, 0], [2, 0]) == pytest.approx(2.0)
    with pytest.raises(NotTimelikeFuture):
        lorentz_norm(mink, [0, 0], [0, 1])


@settings(max_examples=40, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-2, 2), st.floats(-2, 2))
def test_index_round_trip(t, th, a, b):
    ds = get_chart("desitter2d")
    x = [t, th]
    v = np.array([a, b])
    np.testing.assert_allclose(raise_index(ds, x, lower_index(ds, x, v)), v, atol=1e-9)


def test_out_of_domain(mink):
    with pytest.raises(OutOfDomain):
        christoffel(mink, [1e4, 0])


def _spec(**over):
    spec = {"name": "flat", "dimension": 2, "coordinates": ["t", "x"],
            "metric": [["1", "0"], ["0", "-1"]], "time_orientation": ["1", "0"],
            "domain": [[-5, 5], [-5, 5]]}
    spec.update(over)
    return spec


def test_spec_chart_round_trip(tmp_path):
    spec = _spec(name="ds", metric=[["1", "0"], ["0", "-cosh(t)^2"]])
    path = tmp_path / "ds.json"
    path.write_text(json.dumps(spec))
    chart = load_chart_file(path)
    np.testing.assert_allclose(christoffel(chart, [0.7, 0.0])[0, 1, 1], COSH_SINH_07, atol=1e-12)


@pytest.mark.parametrize("over, fragment", [
    ({"metric": [["1", "x"], ["0", "-1"]]}, "metric[1][0]"),
    ({"metric": [["1", "0"], ["0", "-y"]]}, "unknown symbols"),
    ({"metric": [["1", "0"], ["0", "-foo(t)"]]}, "metric[1][1]"),
    ({"dimension": 1}, "dimension"),
    ({"domain": [[1, -1], [0, 1]]}, "domain"),
])
def test_spec_errors_name_the_field(over, fragment):
    with pytest.raises(ConfigError, match=fragment.replace("[", r"\[").replace("]", r"\]")):
        chart_from_spec(_spec(**over))


def test_spec_bad_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"name": "x",\n "dimension": }')
    with pytest.raises(ConfigError, match="line 2"):
        load_chart_file(path)


def test_singular_metric():
    chart = chart_from_spec(_spec(metric=[["1", "0"], ["0", "-x^2"]]))
    with pytest.raises(SingularMetric):
        eval_metric(chart, [0.0, 0.0])
