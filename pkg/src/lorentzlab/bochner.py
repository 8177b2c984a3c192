"""Numerical check of the Lorentzian Bochner-Ohta identity for ``H = f(g(v, v)/2)``.

Left side::

    div(D2H dH) - DH . d(div DH)

with everything composed with ``du``; right side::

    Tr[D2H Hess(u) D2H Hess(u)] + Ric(DH, DH).

Only ``u`` is differentiated by finite differences (at most three nested
central differences); ``f`` and its derivatives are closed forms.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import NotTimelikeFuture, OutOfDomain, SquareRootFailure
from .fields import ScalarFieldSample
from .metric import MetricChart, christoffel, ricci


@dataclass(frozen=True)
class HamiltonianProfile:
    """``f`` and its first three derivatives on ``s > 0``."""
    name: str
    f: Callable[[np.ndarray], np.ndarray]
    f1: Callable[[np.ndarray], np.ndarray]
    f2: Callable[[np.ndarray], np.ndarray]
    f3: Callable[[np.ndarray], np.ndarray]


def power_profile(p: float) -> HamiltonianProfile:
    """``f(s) = -(1/p) (2s)^{p/2}``, so that ``H(v) = -(1/p)|v|^p``."""
    if p == 0:
        return log_profile()
    return HamiltonianProfile(
        f"power({p:g})",
        lambda s: -((2 * s) ** (p / 2)) / p,
        lambda s: -((2 * s) ** (p / 2 - 1)),
        lambda s: (2 - p) * (2 * s) ** (p / 2 - 2),
        lambda s: (2 - p) * (p - 4) * (2 * s) ** (p / 2 - 3),
    )


def log_profile() -> HamiltonianProfile:
    """``f(s) = -log(2s)/2``, so that ``H(v) = -log|v|``."""
    return HamiltonianProfile(
        "log",
        lambda s: -0.5 * np.log(2 * s),
        lambda s: -0.5 / s,
        lambda s: 0.5 / s ** 2,
        lambda s: -1.0 / s ** 3,
    )


@dataclass
class BochnerReport:
    x: list
    h: float
    lhs: float
    rhs_trace: float
    rhs_ricci: float

    @property
    def residual(self) -> float:
        return self.lhs - (self.rhs_trace + self.rhs_ricci)

    def as_row(self) -> dict:
        d = asdict(self)
        d["residual"] = self.residual
        return d


def _as_field(u) -> ScalarFieldSample:
    return u if isinstance(u, ScalarFieldSample) else ScalarFieldSample(u)


def _grad(fn: Callable, Y: np.ndarray, h: float) -> np.ndarray:
    """Central differences of ``fn: (m, n) -> (m, ...)``; returns ``(m, n, ...)``."""
    m, n = Y.shape
    E = np.eye(n) * h
    pts = np.concatenate([(Y[:, None, :] + E[None]).reshape(-1, n),
                          (Y[:, None, :] - E[None]).reshape(-1, n)])
    vals = np.asarray(fn(pts))
    tail = vals.shape[1:]
    plus = vals[: m * n].reshape((m, n) + tail)
    minus = vals[m * n:].reshape((m, n) + tail)
    return (plus - minus) / (2 * h)


class _Composed:
    """Fields ``du``, ``H|du``, ``DH|du``, ``D2H|du`` evaluated on point stacks."""

    def __init__(self, chart: MetricChart, u: ScalarFieldSample, profile, h: float):
        self.chart, self.u, self.prof, self.h = chart, u, profile, h

    def du(self, Y):
        return _grad(self.u.evaluate_many, Y, self.h)

    def _parts(self, Y):
        du = self.du(Y)
        G = self.chart.g(Y)
        ginv = np.linalg.inv(G)
        up = np.einsum("mij,mj->mi", ginv, du)
        q = np.einsum("mi,mi->m", up, du)
        fut = np.einsum("mi,mi->m", self.chart.tau(Y), up)
        if np.any(q <= 0) or np.any(fut <= 0):
            raise NotTimelikeFuture("du not future timelike on the stencil")
        s = 0.5 * q
        sqrtg = np.sqrt(np.abs(np.linalg.det(G)))
        return du, ginv, up, s, sqrtg

    def H(self, Y):
        _, _, _, s, _ = self._parts(Y)
        return self.prof.f(s)

    def DH(self, Y):
        _, _, up, s, _ = self._parts(Y)
        return self.prof.f1(s)[:, None] * up

    def D2H(self, Y):
        _, ginv, up, s, _ = self._parts(Y)
        return (self.prof.f2(s)[:, None, None] * np.einsum("mi,mj->mij", up, up)
                + self.prof.f1(s)[:, None, None] * ginv)

    def divergence(self, field: Callable, Y):
        """``(1/sqrt g) d_i (sqrt g V^i)`` for a vector field ``V`` on stacks."""
        def dens(Z):
            G = self.chart.g(Z)
            return np.sqrt(np.abs(np.linalg.det(G)))[:, None] * field(Z)
        J = _grad(dens, Y, self.h)                   # (m, n_deriv, n_comp)
        sqrtg = np.sqrt(np.abs(np.linalg.det(self.chart.g(Y))))
        return np.einsum("mii->m", J) / sqrtg


def _prepare(chart, u, x, h):
    x = np.asarray(x, dtype=float)
    if not chart.contains(x, margin=4 * h):
        raise OutOfDomain(f"{x} too close to the edge of {chart.name}")
    return _Composed(chart, _as_field(u), None, h), x[None]


def bochner_lhs(chart: MetricChart, u, profile: HamiltonianProfile, x, h: float = 1e-2) -> float:
    """``div(D2H dH) - DH . d(div DH)`` at ``x`` by nested central differences."""
    c, X = _prepare(chart, u, x, h)
    c.prof = profile

    def flux(Y):
        return np.einsum("mij,mj->mi", c.D2H(Y), _grad(c.H, Y, h))

    a = c.divergence(flux, X)[0]
    grad_div = _grad(lambda Y: c.divergence(c.DH, Y), X, h)[0]
    b = float(c.DH(X)[0] @ grad_div)
    return float(a - b)


def covariant_hessian_fd(chart: MetricChart, u, x, h: float) -> np.ndarray:
    """``d_i d_j u - Gamma^k_ij d_k u`` from central differences of ``u``."""
    u = _as_field(u)
    x = np.asarray(x, dtype=float)
    du = u.gradient(x, h)
    return u.hessian(x, h) - np.einsum("kij,k->ij", christoffel(chart, x), du)


def bochner_rhs(chart: MetricChart, u, profile: HamiltonianProfile, x, h: float = 1e-2):
    """``(Tr[D2H Hess D2H Hess], Ric(DH, DH))`` at ``x``."""
    c, X = _prepare(chart, u, x, h)
    c.prof = profile
    A = c.D2H(X)[0]
    Hi = c.DH(X)[0]
    U = covariant_hessian_fd(chart, c.u, X[0], h)
    trace = float(np.trace(A @ U @ A @ U))
    ric = float(Hi @ ricci(chart, X[0]) @ Hi)
    return trace, ric


def bochner_report(chart, u, profile, x, h) -> BochnerReport:
    lhs = bochner_lhs(chart, u, profile, x, h)
    tr, ric = bochner_rhs(chart, u, profile, x, h)
    return BochnerReport(list(map(float, np.asarray(x, float))), float(h), lhs, tr, ric)


def convergence_slope(hs: Sequence[float], residuals: Sequence[float]) -> float:
    """Least-squares slope of ``log|residual|`` against ``log h``."""
    hs = np.asarray(hs, dtype=float)
    r = np.abs(np.asarray(residuals, dtype=float))
    if np.any(r == 0):
        return math.inf
    return float(np.polyfit(np.log(hs), np.log(r), 1)[0])


@dataclass
class IdentityVerdict:
    passed: bool
    slopes: list
    reports: list
    floor: float


def verify_identity(chart: MetricChart, u, profile: HamiltonianProfile, points,
                    h_schedule=(0.04, 0.02, 0.01), min_slope: float = 1.7,
                    floor: float = 1e-10) -> IdentityVerdict:
    """Evaluate both sides over ``points`` × ``h_schedule`` and check O(h^2) decay.

    A point passes if every residual is below ``floor`` (exact case) or the
    log-log slope of ``|residual|`` against ``h`` is at least ``min_slope``.
    """
    reports, slopes, ok = [], [], True
    for x in np.atleast_2d(np.asarray(points, dtype=float)):
        reps = [bochner_report(chart, u, profile, x, h) for h in h_schedule]
        reports.extend(reps)
        res = [r.residual for r in reps]
        if max(abs(v) for v in res) <= floor:
            slopes.append(math.inf)
            continue
        s = convergence_slope(h_schedule, res)
        slopes.append(s)
        ok = ok and s >= min_slope
    return IdentityVerdict(ok, slopes, reports, floor)


@dataclass
class PositivityReport:
    value: float
    hessian_norm: float
    d2h_eigenvalues: list
    nonnegative: bool
    equivalence: bool


def sqrtm_spd(A: np.ndarray) -> np.ndarray:
    """Symmetric square root by eigendecomposition; fails unless ``A`` is positive definite."""
    S = 0.5 * (A + A.T)
    w, V = np.linalg.eigh(S)
    if w.min() <= 0:
        raise SquareRootFailure(f"D2H has eigenvalue {w.min():.3e} <= 0")
    return (V * np.sqrt(w)) @ V.T


def positivity_split(chart: MetricChart, u, profile: HamiltonianProfile, x, h: float = 1e-3,
                     hessian=None, tol: float = 1e-8) -> PositivityReport:
    """``Tr[sqrt(D2H) Hess D2H Hess sqrt(D2H)]`` with its sign and zero-equivalence.

    ``hessian`` overrides the FD covariant Hessian (for injected perturbations).
    """
    c, X = _prepare(chart, u, x, h)
    c.prof = profile
    A = c.D2H(X)[0]
    A = 0.5 * (A + A.T)
    S = sqrtm_spd(A)
    U = covariant_hessian_fd(chart, c.u, X[0], h) if hessian is None else np.asarray(hessian, float)
    U = 0.5 * (U + U.T)
    val = float(np.trace(S @ U @ A @ U @ S))
    hn = float(np.linalg.norm(U))
    return PositivityReport(val, hn, np.linalg.eigvalsh(A).tolist(), val >= -tol,
                            (abs(val) <= tol) == (hn <= tol))
