import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lorentzlab.bochner import (bochner_lhs, bochner_report, bochner_rhs, convergence_slope,
                                log_profile, positivity_split, power_profile, verify_identity)
from lorentzlab.errors import OutOfDomain, SquareRootFailure
from lorentzlab.fields import ScalarFieldSample

# de Sitter, u = t, p = 1/2 at t = 0.3: H^i = (f'(1/2), 0) = (-1, 0), Ric_tt = -1,
# Hess u = -Gamma^t so the trace term is tanh(0.3)^2 and the sum is -sech(0.3)^2
DS_LHS = -0.915136961826629
DS_RICCI = -1.0
DS_TRACE = math.tanh(0.3) ** 2

T = ScalarFieldSample(lambda X: np.asarray(X)[..., 0], vectorized=True)
WAVY = ScalarFieldSample(lambda X: np.asarray(X)[..., 0] + 0.05 * np.sin(np.asarray(X)[..., 1]),
                         vectorized=True)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([-2.0, -1.0, 0.5, 0.0]), st.floats(0.2, 4.0))
def test_profile_derivatives(p, s):
    prof = power_profile(p)
    e = 1e-5 * s
    for f, df in ((prof.f, prof.f1), (prof.f1, prof.f2), (prof.f2, prof.f3)):
        assert df(s) == pytest.approx((f(s + e) - f(s - e)) / (2 * e), rel=1e-6)


def test_log_profile_is_p_zero():
    assert power_profile(0).name == log_profile().name
    assert log_profile().f(0.5) == pytest.approx(0.0)


@pytest.mark.parametrize("p", [-1.0, 0.5, -2.0])
def test_time_function_exact(mink, p):
    ver = verify_identity(mink, T, power_profile(p), [[0.0, 0.3]])
    assert ver.passed
    assert max(abs(r.residual) for r in ver.reports) <= 1e-10


@pytest.mark.parametrize("p", [-1.0, 0.5])
def test_perturbed_second_order(mink, p):
    ver = verify_identity(mink, WAVY, power_profile(p), [[0.0, 0.3]],
                          h_schedule=(0.04, 0.02, 0.01))
    assert ver.passed and ver.slopes[0] >= 1.7
    assert max(abs(r.rhs_ricci) for r in ver.reports) <= 1e-8


def test_desitter_closed_form(ds):
    rep = bochner_report(ds, T, power_profile(0.5), [0.3, 0.0], 0.01)
    assert rep.lhs == pytest.approx(DS_LHS, abs=1e-3)
    assert rep.rhs_ricci == pytest.approx(DS_RICCI, abs=1e-9)
    assert rep.rhs_trace == pytest.approx(DS_TRACE, abs=1e-3)


def test_desitter_converges(ds):
    ver = verify_identity(ds, T, power_profile(0.5), [[0.3, 0.0]])
    assert ver.passed and ver.slopes[0] >= 1.7


def test_lhs_rhs_agree_on_desitter(ds):
    lhs = bochner_lhs(ds, T, power_profile(-1.0), [0.2, 0.1], 0.005)
    tr, ric = bochner_rhs(ds, T, power_profile(-1.0), [0.2, 0.1], 0.005)
    assert lhs == pytest.approx(tr + ric, abs=1e-3)


def test_convergence_slope():
    hs = [0.04, 0.02, 0.01]
    assert convergence_slope(hs, [3 * h ** 2 for h in hs]) == pytest.approx(2.0)
    assert convergence_slope(hs, [0, 0, 0]) == math.inf


def test_edge_rejected(ds):
    with pytest.raises(OutOfDomain):
        bochner_lhs(ds, T, power_profile(0.5), [7.99, 0.0], 0.01)


def test_positivity_zero_hessian(mink):
    rep = positivity_split(mink, T, power_profile(0.5), [0.0, 0.0])
    assert rep.value == pytest.approx(0.0, abs=1e-12)
    assert rep.nonnegative and rep.equivalence


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3).filter(
    lambda c: max(abs(v) for v in c) > 1e-2))
def test_positivity_injected_hessian(c):
    from lorentzlab import get_chart
    mink = get_chart("minkowski2d")
    U = np.array([[c[0], c[1]], [c[1], c[2]]])
    rep = positivity_split(mink, T, power_profile(0.5), [0.0, 0.0], hessian=U)
    # D2H = diag(1/2, 1) here, so the value is |D2H^(1/2) U D2H^(1/2)|_F^2
    S = np.diag([math.sqrt(0.5), 1.0])
    assert rep.value == pytest.approx(np.linalg.norm(S @ U @ S) ** 2, rel=1e-10)
    assert rep.value > 0 and rep.equivalence


def test_positivity_needs_definite(mink):
    with pytest.raises(SquareRootFailure):
        positivity_split(mink, T, power_profile(2.0), [0.0, 0.0])
