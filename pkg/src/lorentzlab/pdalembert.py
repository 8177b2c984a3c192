"""The p-Hamiltonian, the p-d'Alembertian, weak pairings and frozen coefficients.

Sign conventions: ``H(v) = -(1/p) |v|^p`` on future timelike covectors and
``-box_p u = div(|du|^{p-2} grad u)``, so that in nondivergence form

    box_p u = |du|^{p-2} [ (2-p) Hess u(du, du)/|du|^2 - g^{ij} Hess_ij u ].
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from . import _kernels
from .errors import NotElliptic, NotTimelikeFuture, OutOfDomain, QuadratureDomainClip
from .fields import BumpTestFunction, ScalarFieldSample, gauss_legendre_box, gauss_legendre_unit
from .metric import MetricChart, christoffel, classify, eval_metric
from .timesep import NEG_INF, ell_shooting


def check_p(p: float, allow_contrast: bool = False) -> float:
    """Validate the exponent: ``p < 1, p != 0`` (``p = 2`` only for contrast checks)."""
    p = float(p)
    if allow_contrast and p == 2.0:
        return p
    if not p < 1 or p == 0:
        raise ValueError(f"p must satisfy p < 1 and p != 0 (got {p})")
    return p


def _raise_future(chart, x, v):
    """Raise the covector ``v`` and check it is future timelike; return ``(v_up, |v|^2)``."""
    g, ginv, _ = eval_metric(chart, x)
    up = ginv @ v
    q = float(v @ up)
    cls = classify(chart, x, up)
    if cls.tag != "timelike" or cls.direction != "future":
        raise NotTimelikeFuture(f"covector {v} is {cls.tag}/{cls.direction} at {x}")
    return up, q, ginv


def hamiltonian(chart: MetricChart, x, v, p: float) -> float:
    """``-(1/p)|v|^p`` (``-log|v|`` for ``p = 0``) on future timelike covectors, else ``+inf``."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    try:
        _, q, _ = _raise_future(chart, x, v)
    except NotTimelikeFuture:
        return math.inf
    norm = math.sqrt(q)
    if p == 0:
        return -math.log(norm)
    return -(norm ** p) / p


def dh(chart: MetricChart, x, v, p: float) -> np.ndarray:
    """``H^i = -|v|^{p-2} v^i``."""
    up, q, _ = _raise_future(chart, np.asarray(x, float), np.asarray(v, float))
    return -q ** (0.5 * p - 1.0) * up


def d2h(chart: MetricChart, x, v, p: float) -> np.ndarray:
    """``H^{ij} = |v|^{p-2} [ (2-p) v^i v^j / |v|^2 - g^{ij} ]``."""
    up, q, ginv = _raise_future(chart, np.asarray(x, float), np.asarray(v, float))
    M = q ** (0.5 * p - 1.0) * ((2.0 - p) * np.outer(up, up) / q - ginv)
    return 0.5 * (M + M.T)


def is_positive_definite(M, tol: float = 0.0) -> bool:
    return bool(np.linalg.eigvalsh(0.5 * (M + M.T)).min() > tol)


def _as_field(u) -> ScalarFieldSample:
    return u if isinstance(u, ScalarFieldSample) else ScalarFieldSample(u)


def covariant_hessian(chart: MetricChart, u, x, h=None):
    """``(du, Hess u)`` with ``Hess_ij = d_i d_j u - Gamma^k_ij d_k u``."""
    u = _as_field(u)
    x = np.asarray(x, dtype=float)
    du = u.gradient(x, h)
    D2 = u.hessian(x, h)
    gam = christoffel(chart, x)
    return du, D2 - np.einsum("kij,k->ij", gam, du)


def box_p_nondiv(chart: MetricChart, u, x, p: float, h=None) -> float:
    """Nondivergence-form ``box_p u`` at ``x`` from FD derivatives of ``u``."""
    x = np.asarray(x, dtype=float)
    if not chart.contains(x):
        raise OutOfDomain(f"{x} outside {chart.name}")
    du, hess = covariant_hessian(chart, u, x, h)
    up, q, ginv = _raise_future(chart, x, du)
    bracket = (2.0 - p) * np.outer(up, up) / q - ginv
    return float(q ** (0.5 * p - 1.0) * np.sum(bracket * hess))


def _quadrature(chart, box, order, cells):
    box = np.asarray(box, dtype=float)
    dom = chart.domain_box
    if np.any(box[:, 0] < dom[:, 0]) or np.any(box[:, 1] > dom[:, 1]):
        raise QuadratureDomainClip(f"support {box.tolist()} leaves the domain of {chart.name}")
    X, W = gauss_legendre_box(box, order, cells)
    G = chart.g(X)
    ginv = np.linalg.inv(G)
    sqrtg = np.sqrt(np.abs(np.linalg.det(G)))
    return X, W, ginv, sqrtg


def _flux(ginv, du, p, tau):
    """``|du|^{p-2} du^up`` per node; raises if some ``du`` is not future timelike."""
    up = np.einsum("cij,cj->ci", ginv, du)
    q = np.einsum("ci,ci->c", up, du)
    fut = np.einsum("ci,ci->c", tau, up)
    bad = np.nonzero((q <= 0) | (fut <= 0))[0]
    if bad.size:
        raise NotTimelikeFuture(f"du not future timelike at {bad.size} quadrature nodes")
    return q[:, None] ** (0.5 * p - 1.0) * up


def weak_div_pairing(chart: MetricChart, u, phi: BumpTestFunction, p: float,
                     order: int = 8, cells: int = 1, h=None) -> float:
    """``int g(dphi, |du|^{p-2} du) dvol_g`` over the support of ``phi``.

    This equals ``int phi box_p u dvol_g``; a value ``<= tol`` certifies the
    weak inequality against this single test function.
    """
    u = _as_field(u)
    X, W, ginv, sqrtg = _quadrature(chart, phi.support_box, order, cells)
    du = np.array([u.gradient(x, h) for x in X])
    flux = _flux(ginv, du, p, chart.tau(X))
    dphi = phi.gradient(X)
    return float(np.sum(W * sqrtg * np.einsum("ci,ci->c", dphi, flux)))


def nondiv_pairing(chart: MetricChart, u, phi: BumpTestFunction, p: float,
                   order: int = 8, cells: int = 1, h=None) -> float:
    """``int phi box_p u dvol_g`` with ``box_p`` in nondivergence form (FD route)."""
    X, W, _, sqrtg = _quadrature(chart, phi.support_box, order, cells)
    vals = np.array([box_p_nondiv(chart, u, x, p, h) for x in X])
    return float(np.sum(W * sqrtg * phi(X) * vals))


def weak_comparison_functional(chart: MetricChart, field, phi: BumpTestFunction, r: float,
                               p: float, order: int = 8, cells: int = 1,
                               negative_control: bool = False) -> float:
    """``int [(n-1) phi / l(., o) + g(dphi, dl / |dl|^{2-p})] dvol_g`` with ``o = gamma(r)``.

    ``dl(., o)`` at each quadrature node comes from the maximising geodesic to
    ``o`` (``dl = -v_flat/|v|`` for initial velocity ``v``).  With
    ``negative_control`` the sign of the ``(n-1) phi / l`` term is flipped,
    which must drive the functional negative.
    """
    n = chart.dimension
    o = field.line.point(r)
    X, W, ginv, sqrtg = _quadrature(chart, phi.support_box, order, cells)
    G = chart.g(X)
    lvals = np.empty(len(X))
    dl = np.empty((len(X), n))
    for c, x in enumerate(X):
        ts = ell_shooting(chart, x, o)
        if ts.value == NEG_INF or ts.value <= 0:
            raise NotTimelikeFuture(f"quadrature node {x} is not in the timelike past of {o}")
        v = ts.meta["velocity"]
        lvals[c] = ts.value
        dl[c] = -(G[c] @ v) / ts.value
    up = np.einsum("cij,cj->ci", ginv, dl)
    q = np.einsum("ci,ci->c", up, dl)
    flux = q[:, None] ** (0.5 * p - 1.0) * up
    sign = -1.0 if negative_control else 1.0
    integrand = sign * (n - 1) * phi(X) / lvals + np.einsum("ci,ci->c", phi.gradient(X), flux)
    return float(np.sum(W * sqrtg * integrand))


# ---------------------------------------------------------------------------
# frozen coefficients and the discrete maximum principle
# ---------------------------------------------------------------------------

@dataclass
class EllipticCoefficients:
    """Nodal symmetric matrices ``a^{ij}`` on a tensor grid (C order)."""
    axes: list
    points: np.ndarray
    a: np.ndarray
    eigenvalues: np.ndarray
    p: float
    meta: dict = field(default_factory=dict)

    @property
    def shape(self) -> tuple:
        return tuple(len(ax) for ax in self.axes)

    @property
    def spacing(self) -> np.ndarray:
        return np.array([ax[1] - ax[0] for ax in self.axes])

    @property
    def lambda_min(self) -> float:
        return float(self.eigenvalues.min())

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues.max())

    def to_dict(self) -> dict:
        return {"p": self.p, "axes": [list(map(float, ax)) for ax in self.axes],
                "nodes": self.points.tolist(), "a": self.a.tolist(),
                "eigenvalues": self.eigenvalues.tolist(),
                "lambda_min": self.lambda_min, "lambda_max": self.lambda_max}


def grid_axes(box, counts) -> list:
    box = np.asarray(box, dtype=float)
    return [np.linspace(lo, hi, int(m)) for (lo, hi), m in zip(box, counts)]


def _covector_field(b) -> Callable:
    if hasattr(b, "gradient"):
        return b.gradient
    return b


def frozen_coefficients(chart: MetricChart, b_plus, b_minus, axes, p: float,
                        t_order: int = 16) -> EllipticCoefficients:
    """``a^{ij} = sqrt|g| int_0^1 |db|^{p-2} [(2-p) db^i db^j/|db|^2 - g^{ij}] dt``.

    ``b(t) = b^- + t (b^+ - b^-)``; ``b_plus`` and ``b_minus`` are scalar
    fields (anything with ``.gradient(x)``) or callables returning covectors.
    """
    p = check_p(p)
    axes = [np.asarray(ax, dtype=float) for ax in axes]
    mesh = np.meshgrid(*axes, indexing="ij")
    X = np.stack([m.ravel() for m in mesh], axis=-1)
    if not np.all(chart.contains(X)):
        raise OutOfDomain("grid leaves the chart domain")
    gp, gm = _covector_field(b_plus), _covector_field(b_minus)
    dbp = np.ascontiguousarray([gp(x) for x in X], dtype=float)
    dbm = np.ascontiguousarray([gm(x) for x in X], dtype=float)
    G = chart.g(X)
    ginv = np.ascontiguousarray(np.linalg.inv(G))
    sqrtg = np.sqrt(np.abs(np.linalg.det(G)))
    tau = np.ascontiguousarray(chart.tau(X))
    tn, tw = gauss_legendre_unit(t_order)
    a, bad = _kernels.frozen_bracket(dbp, dbm, ginv, sqrtg, tau, float(p), tn, tw)
    if np.any(bad >= 0):
        node = int(np.argmax(bad >= 0))
        raise NotTimelikeFuture(f"db(t) not future timelike at grid node {node} ({X[node]})")
    a = 0.5 * (a + np.swapaxes(a, -1, -2))
    eig = np.linalg.eigvalsh(a)
    return EllipticCoefficients(axes, X, a, eig, p)


def assemble_operator(coeffs: EllipticCoefficients):
    """Sparse finite-volume matrix of ``L u = -d_j(a^{ij} d_i u)``; boundary rows are identity."""
    shape = np.array(coeffs.shape, dtype=np.int64)
    rows, cols, vals = _kernels.fv_assemble(np.ascontiguousarray(coeffs.a), shape,
                                            coeffs.spacing.astype(float))
    N = int(np.prod(shape))
    return sps.csr_matrix((vals, (rows, cols)), shape=(N, N))


def boundary_mask_of(shape) -> np.ndarray:
    mask = np.zeros(shape, dtype=bool)
    for k in range(len(shape)):
        sl = [slice(None)] * len(shape)
        sl[k] = 0
        mask[tuple(sl)] = True
        sl[k] = -1
        mask[tuple(sl)] = True
    return mask.ravel()


@dataclass
class MaxPrincipleReport:
    passed: bool
    m_matrix: bool
    supersolution: bool
    min_residual: float
    min_principle: bool
    comparison: bool
    propagation: bool
    detail: dict = field(default_factory=dict)


def max_principle_check(coeffs: EllipticCoefficients, u_grid, boundary_mask=None,
                        tol: float = 1e-9) -> MaxPrincipleReport:
    """Discrete weak-supersolution and strong-minimum checks for ``u`` on the grid.

    * ``L`` must be an M-matrix on interior rows (nonpositive off-diagonals,
      positive diagonal, nonnegative row sums).
    * ``(L u)_k * cell volume >= -tol`` at interior nodes (pairing with nodal
      bumps).
    * ``v`` solving ``L v = 0`` with the boundary values of ``u`` obeys the
      minimum principle and ``u >= v - tol`` (comparison).
    * If ``u >= -tol`` has an interior zero, ``u <= tol`` on the whole connected
      interior component of that zero.
    """
    if coeffs.lambda_min <= 0:
        raise NotElliptic(f"lambda_min = {coeffs.lambda_min:.3e} <= 0")
    u = np.asarray(u_grid, dtype=float).ravel()
    L = assemble_operator(coeffs)
    N = L.shape[0]
    bmask = boundary_mask_of(coeffs.shape) if boundary_mask is None else np.asarray(
        boundary_mask, dtype=bool).ravel()
    interior = ~bmask
    Li = L[interior]
    diag = L.diagonal()[interior]
    off = Li.tolil(copy=True)
    ii = np.arange(Li.shape[0])
    off[ii, np.nonzero(interior)[0]] = 0.0
    off = off.tocsr()
    scale = float(np.abs(diag).max()) if diag.size else 1.0
    m_matrix = bool(np.all(diag > 0) and (off.data.size == 0 or off.data.max() <= 1e-12 * scale)
                    and np.all(np.asarray(Li.sum(axis=1)).ravel() >= -1e-9 * scale))
    vol = float(np.prod(coeffs.spacing))
    resid = (Li @ u) * vol
    min_res = float(resid.min()) if resid.size else 0.0
    supersolution = min_res >= -tol

    rhs = np.where(bmask, u, 0.0)
    A = L.tolil(copy=True)
    for k in np.nonzero(bmask)[0]:
        A.rows[k] = [k]
        A.data[k] = [1.0]
    v = spla.spsolve(A.tocsc(), rhs)
    bmin = float(u[bmask].min())
    min_principle = bool(v[interior].min() >= bmin - tol) if interior.any() else True
    comparison = bool(np.all(u[interior] >= v[interior] - tol))

    propagation = True
    if u.min() >= -tol:
        zeros = interior & (u <= tol)
        if zeros.any():
            idx = np.nonzero(interior)[0]
            sub = abs(L[idx][:, idx]) > 0
            _, labels = connected_components(sub, directed=False)
            hit = np.unique(labels[np.searchsorted(idx, np.nonzero(zeros)[0])])
            comp = np.isin(labels, hit)
            propagation = bool(np.all(u[idx[comp]] <= tol))
    passed = m_matrix and supersolution and min_principle and comparison and propagation
    return MaxPrincipleReport(passed, m_matrix, supersolution, min_res, min_principle,
                              comparison, propagation,
                              {"nodes": N, "interior": int(interior.sum()),
                               "v_interior_min": float(v[interior].min()) if interior.any()
                               else None, "boundary_min": bmin})
