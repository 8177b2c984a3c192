"""Coordinate charts carrying a Lorentzian metric, and pointwise geometry.

A :class:`MetricChart` bundles vectorised callables for ``g_ij``, its first and
second coordinate derivatives and the time-orientation covector.  Charts built
from symbolic expressions (see :mod:`lorentzlab.charts`) supply exact
derivatives; charts built from a bare callable fall back to fourth-order
central differences.

Index conventions: ``dg[..., k, i, j] = d_k g_ij``,
``Gamma[..., k, i, j] = Gamma^k_ij`` and
``Riemann[..., r, s, m, v] = R^r_{s m v}`` with
``R^r_{smv} = d_m Gamma^r_{vs} - d_v Gamma^r_{ms} + Gamma^r_{ml} Gamma^l_{vs}
- Gamma^r_{vl} Gamma^l_{ms}`` and ``Ric_sv = R^r_{srv}``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels
from .errors import NotTimelikeFuture, OutOfDomain, SingularMetric

NULL_BAND = 1e-9
DET_THRESHOLD = 1e-12


@dataclass(frozen=True)
class CausalClass:
    tag: str        # timelike | null | spacelike | zero
    direction: str  # future | past | none

    def __post_init__(self):
        causal = self.tag in ("timelike", "null")
        if causal == (self.direction == "none"):
            raise ValueError(f"inconsistent causal class {self.tag}/{self.direction}")

    @property
    def future_causal(self) -> bool:
        return self.direction == "future" or self.tag == "zero"


class MetricChart:
    """A single coordinate chart with a metric of fixed signature.

    Parameters
    ----------
    name : str
    dimension : int
    component_fn : callable
        Vectorised map ``(..., n) -> (..., n, n)``.
    time_orientation : callable
        Vectorised map ``(..., n) -> (..., n)`` giving a future covector.
    domain_box : array_like, shape (n, 2)
    dg_fn, d2g_fn : callable, optional
        Exact first and second derivatives; finite differences otherwise.
    gamma_kernel : callable, optional
        Scalar kernel ``gamma(x, out)`` filling ``out[k, i, j]`` for the
        geodesic integrator.  ``gamma_jitted`` tells whether it is numba code.
    periods : sequence of float or None
        Period of each coordinate when the chart covers a cylinder/torus.
    contractible_periods : bool
        True when the periodic coordinates are angles whose loops are
        contractible (e.g. longitude on a sphere).  Shifted lifts are then the
        same point reached the long way round, and only the lift nearest to
        the base point is used.
    flat : bool
        True when ``g`` is constant, so geodesics are coordinate lines.
    signature : {"lorentzian", "riemannian"}
    strong_energy : bool or None
        Whether Ric(v, v) >= 0 on timelike v is known to hold (metadata).
    """

    def __init__(self, name: str, dimension: int, component_fn: Callable,
                 time_orientation: Callable, domain_box, *,
                 dg_fn: Optional[Callable] = None, d2g_fn: Optional[Callable] = None,
                 gamma_kernel: Optional[Callable] = None, gamma_jitted: bool = False,
                 periods: Optional[Sequence[Optional[float]]] = None, flat: bool = False,
                 signature: str = "lorentzian", strong_energy: Optional[bool] = None,
                 coordinates: Optional[Sequence[str]] = None, fd_step: Optional[float] = None,
                 spec: Optional[dict] = None, contractible_periods: bool = False):
        if dimension < 2:
            raise ValueError("dimension must be at least 2")
        box = np.asarray(domain_box, dtype=float)
        if box.shape != (dimension, 2) or np.any(box[:, 0] >= box[:, 1]):
            raise ValueError("domain_box must be n pairs (lo, hi) with lo < hi")
        if signature not in ("lorentzian", "riemannian"):
            raise ValueError(f"unknown signature {signature!r}")
        self.name = name
        self.dimension = int(dimension)
        self.component_fn = component_fn
        self.time_orientation = time_orientation
        self.domain_box = box
        self.signature = signature
        self.strong_energy = strong_energy
        self.flat = bool(flat)
        self.coordinates = tuple(coordinates) if coordinates else tuple(
            f"x{i}" for i in range(dimension))
        self.periods = tuple(periods) if periods is not None else (None,) * dimension
        self.contractible_periods = bool(contractible_periods)
        widths = box[:, 1] - box[:, 0]
        self.fd_step = np.full(dimension, fd_step) if fd_step else 1e-4 * widths
        self._dg_fn = dg_fn
        self._d2g_fn = d2g_fn
        self.analytic = dg_fn is not None
        self.spec = spec
        if gamma_kernel is None:
            gamma_kernel = self._fd_gamma_kernel()
            gamma_jitted = False
        self.gamma_kernel = gamma_kernel
        self.gamma_jitted = gamma_jitted

    def __repr__(self):
        return f"MetricChart({self.name!r}, n={self.dimension})"

    # -- vectorised evaluation --------------------------------------------
    def g(self, X) -> np.ndarray:
        return self.component_fn(np.asarray(X, dtype=float))

    def tau(self, X) -> np.ndarray:
        return self.time_orientation(np.asarray(X, dtype=float))

    def dg(self, X, h=None) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self._dg_fn is not None and h is None:
            return self._dg_fn(X)
        h = self.fd_step if h is None else np.broadcast_to(np.asarray(h, float), (self.dimension,))
        outs = []
        for k in range(self.dimension):
            e = np.zeros(self.dimension)
            e[k] = h[k]
            outs.append((-self.g(X + 2 * e) + 8 * self.g(X + e) - 8 * self.g(X - e)
                         + self.g(X - 2 * e)) / (12 * h[k]))
        return np.stack(outs, axis=-3)

    def d2g(self, X, h=None) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self._d2g_fn is not None and h is None:
            return self._d2g_fn(X)
        h = self.fd_step if h is None else np.broadcast_to(np.asarray(h, float), (self.dimension,))
        outs = []
        for k in range(self.dimension):
            e = np.zeros(self.dimension)
            e[k] = h[k]
            outs.append((-self.dg(X + 2 * e, h) + 8 * self.dg(X + e, h) - 8 * self.dg(X - e, h)
                         + self.dg(X - 2 * e, h)) / (12 * h[k]))
        return np.stack(outs, axis=-4)

    def christoffel_batch(self, X, h=None) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self.flat:
            return np.zeros(X.shape[:-1] + (self.dimension,) * 3)
        return _kernels.levi_civita_numpy(np.linalg.inv(self.g(X)), self.dg(X, h))

    def contains(self, X, margin=0.0) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        lo = self.domain_box[:, 0] + margin
        hi = self.domain_box[:, 1] - margin
        return np.all((X >= lo) & (X <= hi), axis=-1)

    def wrap(self, x) -> np.ndarray:
        """Map periodic coordinates into the fundamental cell centred at 0."""
        x = np.array(x, dtype=float)
        for k, per in enumerate(self.periods):
            if per:
                x[..., k] = (x[..., k] + 0.5 * per) % per - 0.5 * per
        return x

    def lifts(self, y, radius: int = 1, near=None) -> list:
        """Copies of ``y`` shifted by whole periods that stay inside the box.

        With ``contractible_periods`` and a base point ``near`` only the copy
        closest to ``near`` is returned.
        """
        y = np.asarray(y, dtype=float)
        shifts = [np.zeros(self.dimension)]
        for k, per in enumerate(self.periods):
            if not per:
                continue
            new = []
            for s in shifts:
                for m in range(-radius, radius + 1):
                    t = s.copy()
                    t[k] += m * per
                    new.append(t)
            shifts = new
        out = [p for p in (y + s for s in shifts) if self.contains(p)]
        if self.contractible_periods and near is not None and out:
            near = np.asarray(near, dtype=float)
            out = [min(out, key=lambda p: float(np.linalg.norm(p - near)))]
        return out

    def auxiliary(self) -> "MetricChart":
        """Chart-Euclidean Riemannian metric used for Lipschitz/semiconcavity probes."""
        n = self.dimension

        def comp(X):
            X = np.asarray(X, float)
            return np.broadcast_to(np.eye(n), X.shape[:-1] + (n, n)).copy()

        def zeros(X, order):
            X = np.asarray(X, float)
            return np.zeros(X.shape[:-1] + (n,) * (2 + order))

        return MetricChart(self.name + "_aux", n, comp, self.time_orientation, self.domain_box,
                           dg_fn=lambda X: zeros(X, 1), d2g_fn=lambda X: zeros(X, 2),
                           gamma_kernel=_zero_gamma, gamma_jitted=False, flat=True,
                           signature="riemannian", periods=self.periods,
                           coordinates=self.coordinates)

    # -- integrator kernel for callable-only charts -----------------------
    def _fd_gamma_kernel(self):
        chart = self

        def gamma(x, out):
            out[:] = chart.christoffel_batch(x)

        return gamma


def _zero_gamma(x, out):
    out[:] = 0.0


# ---------------------------------------------------------------------------
# pointwise operations
# ---------------------------------------------------------------------------

def _check_point(chart: MetricChart, x, margin=0.0) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (chart.dimension,):
        raise ValueError(f"expected a point of dimension {chart.dimension}, got shape {x.shape}")
    if not chart.contains(x, margin):
        raise OutOfDomain(f"{x} outside domain of {chart.name} (margin {margin})")
    return x


def eval_metric(chart: MetricChart, x):
    """Return ``(g, g_inv, sqrt|det g|)`` at ``x``."""
    x = _check_point(chart, x)
    g = chart.g(x)
    det = np.linalg.det(g)
    if abs(det) < DET_THRESHOLD:
        raise SingularMetric(f"|det g| = {abs(det):.3e} at {x}")
    return g, np.linalg.inv(g), float(np.sqrt(abs(det)))


def _fd_margin(chart, h, order):
    h = chart.fd_step if h is None else np.broadcast_to(np.asarray(h, float), (chart.dimension,))
    return 2.0 * order * float(np.max(h))


def christoffel(chart: MetricChart, x, method: str = "auto", h=None) -> np.ndarray:
    """Christoffel symbols ``Gamma[k, i, j]`` at ``x``.

    ``method="fd"`` forces the finite-difference path even when exact
    derivatives are available (``h`` overrides the default step).
    """
    use_fd = method == "fd" or (method == "auto" and not chart.analytic)
    margin = _fd_margin(chart, h, 1) if use_fd else 0.0
    x = _check_point(chart, x, margin)
    if use_fd:
        hh = chart.fd_step if h is None else h
        return _kernels.levi_civita_numpy(np.linalg.inv(chart.g(x)), chart.dg(x, hh))
    return chart.christoffel_batch(x)


def _christoffel_derivative(chart, x, use_fd, h):
    """``dGamma[a, k, i, j] = d_a Gamma^k_ij``."""
    n = chart.dimension
    if not use_fd:
        g = chart.g(x)
        ginv = np.linalg.inv(g)
        dg = chart.dg(x)
        d2g = chart.d2g(x)
        gam = _kernels.levi_civita_numpy(ginv, dg)
        low = 0.5 * (np.swapaxes(d2g, -3, -2) + np.moveaxis(d2g, -3, -1) - d2g)
        # low[a, l, i, j] = 1/2 (d_a d_i g_lj + d_a d_j g_li - d_a d_l g_ij)
        term1 = -np.einsum("km,amp,pij->akij", ginv, dg, gam)
        term2 = np.einsum("kl,alij->akij", ginv, low)
        return term1 + term2
    hh = chart.fd_step if h is None else np.broadcast_to(np.asarray(h, float), (n,))

    def gam_at(y):
        return _kernels.levi_civita_numpy(np.linalg.inv(chart.g(y)), chart.dg(y, hh))

    outs = []
    for a in range(n):
        e = np.zeros(n)
        e[a] = hh[a]
        outs.append((-gam_at(x + 2 * e) + 8 * gam_at(x + e) - 8 * gam_at(x - e)
                     + gam_at(x - 2 * e)) / (12 * hh[a]))
    return np.stack(outs)


def riemann(chart: MetricChart, x, method: str = "auto", h=None) -> np.ndarray:
    """Riemann tensor ``R[r, s, m, v] = R^r_{smv}`` at ``x``."""
    use_fd = method == "fd" or (method == "auto" and not chart.analytic)
    margin = _fd_margin(chart, h, 2) if use_fd else 0.0
    x = _check_point(chart, x, margin)
    n = chart.dimension
    if chart.flat and not use_fd:
        return np.zeros((n,) * 4)
    if use_fd:
        hh = chart.fd_step if h is None else h
        gam = _kernels.levi_civita_numpy(np.linalg.inv(chart.g(x)), chart.dg(x, hh))
    else:
        gam = chart.christoffel_batch(x)
    dgam = _christoffel_derivative(chart, x, use_fd, h)
    # dgam[a, k, i, j] = d_a Gamma^k_ij
    R = (np.einsum("mrvs->rsmv", dgam) - np.einsum("vrms->rsmv", dgam)
         + np.einsum("rml,lvs->rsmv", gam, gam) - np.einsum("rvl,lms->rsmv", gam, gam))
    return R


def ricci(chart: MetricChart, x, method: str = "auto", h=None) -> np.ndarray:
    """Ricci tensor ``R_ij``, symmetrised."""
    R = riemann(chart, x, method=method, h=h)
    ric = np.einsum("rsrv->sv", R)
    return 0.5 * (ric + ric.T)


def classify(chart: MetricChart, x, v) -> CausalClass:
    """Causal character of the vector ``v`` at ``x``."""
    x = _check_point(chart, x)
    v = np.asarray(v, dtype=float)
    nrm2 = float(v @ v)
    if nrm2 == 0.0:
        return CausalClass("zero", "none")
    q = float(v @ chart.g(x) @ v)
    if q > NULL_BAND * nrm2:
        tag = "timelike"
    elif q >= -NULL_BAND * nrm2:
        tag = "null"
    else:
        return CausalClass("spacelike", "none")
    t = float(chart.tau(x) @ v)
    return CausalClass(tag, "future" if t > 0 else "past")


def raise_index(chart: MetricChart, x, v) -> np.ndarray:
    return np.linalg.solve(chart.g(np.asarray(x, float)), np.asarray(v, float))


def lower_index(chart: MetricChart, x, v) -> np.ndarray:
    return chart.g(np.asarray(x, float)) @ np.asarray(v, float)


def lorentz_norm(chart: MetricChart, x, v, kind: str = "covector") -> float:
    """Lorentzian magnitude of a future timelike covector (default) or vector."""
    x = _check_point(chart, x)
    v = np.asarray(v, dtype=float)
    vec = raise_index(chart, x, v) if kind == "covector" else v
    cls = classify(chart, x, vec)
    if cls != CausalClass("timelike", "future"):
        raise NotTimelikeFuture(f"{kind} {v} is {cls.tag}/{cls.direction} at {x}")
    return float(np.sqrt(vec @ chart.g(x) @ vec))


def check_signature(chart: MetricChart, x) -> bool:
    """True when g(x) is symmetric with the chart's declared signature."""
    g = chart.g(np.asarray(x, float))
    if not np.allclose(g, g.T, rtol=0, atol=1e-12 * max(1.0, np.abs(g).max())):
        return False
    ev = np.linalg.eigvalsh(0.5 * (g + g.T))
    if chart.signature == "riemannian":
        return bool(np.all(ev > 0))
    return int(np.sum(ev > 0)) == 1 and int(np.sum(ev < 0)) == chart.dimension - 1
