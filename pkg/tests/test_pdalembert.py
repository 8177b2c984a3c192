import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lorentzlab import BusemannField, LineSpec, get_chart
from lorentzlab import pdalembert as pd
from lorentzlab.errors import NotElliptic, NotTimelikeFuture, QuadratureDomainClip
from lorentzlab.fields import BumpTestFunction, ScalarFieldSample

# sympy evaluation of the nondivergence operator on closed-form functions
BOX_TAU = -0.516397779494322          # u = sqrt(t^2 - x^2) at (2, 0.5), any p
BOX_BR = 0.100045030397799            # u = b+_10 at (0, 0.3), p = 1/2
# scipy dblquad of phi * box_p(t - 0.3 x^2) over the bump support (R = 0.3)
PAIRING = {0.5: -0.045510010932049316, -1.0: -0.04588459521641644}


def tau(X):
    X = np.asarray(X, float)
    return np.sqrt(X[..., 0] ** 2 - X[..., 1] ** 2)


def quad_u(X):
    X = np.asarray(X, float)
    return X[..., 0] - 0.3 * X[..., 1] ** 2


@pytest.mark.parametrize("p", [1.0, 0.0, 1.5])
def test_check_p_rejects(p):
    with pytest.raises(ValueError):
        pd.check_p(p)


def test_check_p_contrast():
    assert pd.check_p(2, allow_contrast=True) == 2.0


@pytest.mark.parametrize("p, expected", [(0.5, -2.0), (-1.0, 1.0), (0.0, 0.0)])
def test_hamiltonian_unit_covector(mink, p, expected):
    assert pd.hamiltonian(mink, [0, 0], [1, 0], p) == pytest.approx(expected)


def test_hamiltonian_off_cone(mink):
    assert pd.hamiltonian(mink, [0, 0], [0, 1], 0.5) == math.inf
    assert pd.hamiltonian(mink, [0, 0], [-1, 0], 0.5) == math.inf


def test_dh_matches_fd(mink):
    v = np.array([1.3, 0.4])
    e = 1e-6
    fd = [(pd.hamiltonian(mink, [0, 0], v + e * d, 0.5)
           - pd.hamiltonian(mink, [0, 0], v - e * d, 0.5)) / (2 * e) for d in np.eye(2)]
    np.testing.assert_allclose(pd.dh(mink, [0, 0], v, 0.5), fd, atol=1e-8)


def test_d2h_unit_covector(mink):
    np.testing.assert_allclose(np.linalg.eigvalsh(pd.d2h(mink, [0, 0], [1, 0], 0.5)),
                               [0.5, 1.0])


@settings(max_examples=60, deadline=None)
@given(st.sampled_from([-2.0, -1.0, 0.5]), st.floats(0.2, 3), st.floats(-0.95, 0.95))
def test_d2h_positive_below_one(p, scale, slope):
    mink = get_chart("minkowski2d")
    v = scale * np.array([1.0, slope])
    assert pd.is_positive_definite(pd.d2h(mink, [0, 0], v, p))


def test_d2h_indefinite_at_two(mink):
    eig = np.linalg.eigvalsh(pd.d2h(mink, [0, 0], [1.2, 0.3], 2.0))
    assert eig.min() < 0 < eig.max()


def test_d2h_rejects_past(mink):
    with pytest.raises(NotTimelikeFuture):
        pd.d2h(mink, [0, 0], [-1, 0], 0.5)


@pytest.mark.parametrize("p", [2.0, 0.5, -1.0])
def test_box_of_distance(mink, p):
    u = ScalarFieldSample(tau, vectorized=True)
    assert pd.box_p_nondiv(mink, u, [2, 0.5], p, h=1e-3) == pytest.approx(BOX_TAU, abs=1e-6)


def test_box_of_finite_busemann(mink):
    bp = BusemannField(LineSpec(mink, [0, 0], [1, 0]), "forward")
    u = ScalarFieldSample(lambda x: bp.value_r(x, 10.0))
    assert pd.box_p_nondiv(mink, u, [0, 0.3], 0.5, h=1e-3) == pytest.approx(BOX_BR, abs=1e-5)


def test_pairing_of_time_function_vanishes(mink):
    u = ScalarFieldSample(lambda X: np.asarray(X)[..., 0], vectorized=True)
    phi = BumpTestFunction([0.1, 0.2], 0.3)
    assert abs(pd.weak_div_pairing(mink, u, phi, 0.5)) < 1e-12


@pytest.mark.parametrize("p", [0.5, -1.0])
def test_pairing_dual_routes(mink, p):
    u = ScalarFieldSample(quad_u, vectorized=True)
    phi = BumpTestFunction([0.0, 0.0], 0.3)
    weak = pd.weak_div_pairing(mink, u, phi, p, order=12, h=1e-4)
    strong = pd.nondiv_pairing(mink, u, phi, p, order=12, h=1e-3)
    assert weak == pytest.approx(PAIRING[p], abs=1e-7)
    assert strong == pytest.approx(PAIRING[p], abs=1e-7)


def test_pairing_busemann_on_cylinder(cyl):
    bp = BusemannField(LineSpec(cyl, [0, 0], [1, 0]), "forward")
    u = ScalarFieldSample(bp, h=1e-3)
    phi = BumpTestFunction([0.2, 0.1], 0.2)
    assert abs(pd.weak_div_pairing(cyl, u, phi, 0.5, order=4)) < 1e-5


def test_pairing_clipped(ds):
    phi = BumpTestFunction([7.9, 0.0], 0.3)
    with pytest.raises(QuadratureDomainClip):
        pd.weak_div_pairing(ds, lambda x: x[0], phi, 0.5)


@pytest.mark.parametrize("chart_name, p", [("minkowski2d", 0.5), ("minkowski2d", -1.0),
                                           ("product_r_s1", 0.5)])
def test_comparison_nonnegative(chart_name, p):
    chart = get_chart(chart_name)
    bp = BusemannField(LineSpec(chart, [0, 0], [1, 0]), "forward")
    phi = BumpTestFunction([0.0, 0.2], 0.2)
    F = pd.weak_comparison_functional(chart, bp, phi, 10.0, p, order=6)
    assert F >= -1e-6
    assert pd.weak_comparison_functional(chart, bp, phi, 10.0, p, order=6,
                                         negative_control=True) < -1e-4


def test_comparison_fails_on_desitter(ds):
    bp = BusemannField(LineSpec(ds, [0, 0], [1, 0]), "forward")
    phi = BumpTestFunction([0.0, 0.3], 0.2)
    assert pd.weak_comparison_functional(ds, bp, phi, 5.0, 0.5, order=6) < -1e-4


def _const(cov):
    cov = np.asarray(cov, float)
    return lambda x: cov


@pytest.mark.parametrize("p", [0.5, -1.0, -2.0])
def test_frozen_bracket_exact_gradient(mink, p):
    axes = pd.grid_axes([[-0.2, 0.2], [-0.2, 0.2]], [5, 5])
    co = pd.frozen_coefficients(mink, _const([1, 0]), _const([1, 0]), axes, p)
    np.testing.assert_allclose(co.a, np.tile(np.diag([1 - p, 1.0]), (25, 1, 1)), atol=1e-12)
    assert co.lambda_min == pytest.approx(min(1 - p, 1.0))


def test_frozen_bracket_boosted(mink):
    db = [math.cosh(0.1), math.sinh(0.1)]
    axes = pd.grid_axes([[-0.1, 0.1], [-0.1, 0.1]], [3, 3])
    co = pd.frozen_coefficients(mink, _const(db), _const(db), axes, 0.5)
    up = np.array([db[0], -db[1]])
    ref = np.linalg.eigvalsh(1.5 * np.outer(up, up) - np.diag([1.0, -1.0]))
    np.testing.assert_allclose(co.eigenvalues[0], ref, atol=1e-12)
    assert co.lambda_min > 0


def test_frozen_bracket_flags_node(mink):
    axes = pd.grid_axes([[-0.1, 0.1], [-0.1, 0.1]], [3, 3])
    with pytest.raises(NotTimelikeFuture, match="grid node"):
        pd.frozen_coefficients(mink, _const([1, 0]), _const([0.1, 1]), axes, 0.5)


@pytest.fixture(scope="module")
def coeffs():
    mink = get_chart("minkowski2d")
    axes = pd.grid_axes([[-0.2, 0.2], [-0.2, 0.2]], [9, 9])
    return pd.frozen_coefficients(mink, _const([1, 0]), _const([1, 0]), axes, 0.5)


def test_operator_is_m_matrix(coeffs):
    L = pd.assemble_operator(coeffs).toarray()
    inner = ~pd.boundary_mask_of(coeffs.shape)
    off = L[inner] - np.diag(np.diag(L))[inner]
    assert off.max() <= 0 and np.all(np.diag(L)[inner] > 0)


def test_operator_on_quadratic(coeffs):
    # L u = -d_j(a^ij d_i u) with a = diag(1/2, 1) and u = -t^2 gives 1
    X = coeffs.points
    Lu = pd.assemble_operator(coeffs) @ (-X[:, 0] ** 2)
    inner = ~pd.boundary_mask_of(coeffs.shape)
    np.testing.assert_allclose(Lu[inner], 1.0, atol=1e-10)


def test_max_principle_zero(coeffs):
    rep = pd.max_principle_check(coeffs, np.zeros(coeffs.shape))
    assert rep.passed and rep.propagation


def test_max_principle_supersolution(coeffs):
    t = coeffs.points[:, 0]
    assert pd.max_principle_check(coeffs, 1 - t ** 2).passed
    bad = pd.max_principle_check(coeffs, t ** 2)
    assert not bad.passed and not bad.supersolution


def test_max_principle_injected_violation(coeffs):
    u = np.zeros(coeffs.shape)
    u[4, 4] = -0.1
    rep = pd.max_principle_check(coeffs, u)
    assert not rep.passed
    assert not rep.min_principle or not rep.comparison


def test_not_elliptic(coeffs):
    a = coeffs.a.copy()
    a[:, 0, 0] = -1.0
    bad = pd.EllipticCoefficients(coeffs.axes, coeffs.points, a, np.linalg.eigvalsh(a), 0.5)
    with pytest.raises(NotElliptic):
        pd.max_principle_check(bad, np.zeros(coeffs.shape))
