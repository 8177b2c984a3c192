"""Geodesic integration, exponential map and two-point shooting."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .errors import (ExitedDomain, NoConvergence, NotCausallyConnectable, OutOfDomain,
                     StepSizeUnderflow)
from .metric import CausalClass, MetricChart, classify

MAX_STEPS = 20_000
MIN_CONTINUATION_STEP = 1.0 / 64
LOOSE_INT_TOL = 1e-8
STAGE_MAX_ITER = 20


@dataclass
class Geodesic:
    """Samples ``(s, x(s), x'(s))`` of an affinely parameterised geodesic.

    ``status`` is ``"ok"`` when the requested parameter range was covered
    and ``"exited_domain"`` when the curve left the chart box first.
    """
    chart: MetricChart
    s: np.ndarray
    x: np.ndarray
    v: np.ndarray
    a: np.ndarray
    causal_class: CausalClass
    proper_time: float
    status: str = "ok"
    s_requested: float = 1.0
    meta: dict = field(default_factory=dict)

    @property
    def start(self) -> np.ndarray:
        return self.x[0]

    @property
    def end(self) -> np.ndarray:
        return self.x[-1]

    @property
    def s_end(self) -> float:
        return float(self.s[-1])

    def sample_at(self, s: float):
        """Position and velocity at parameter ``s`` by cubic Hermite interpolation."""
        if s < self.s[0] - 1e-12 or s > self.s[-1] + 1e-12:
            raise ValueError(f"s={s} outside sampled range [{self.s[0]}, {self.s[-1]}]")
        if len(self.s) == 1:
            return self.x[0].copy(), self.v[0].copy()
        k = int(np.clip(np.searchsorted(self.s, s) - 1, 0, len(self.s) - 2))
        s0, s1 = self.s[k], self.s[k + 1]
        h = s1 - s0
        u = (s - s0) / h
        h00 = 2 * u**3 - 3 * u**2 + 1
        h10 = u**3 - 2 * u**2 + u
        h01 = -2 * u**3 + 3 * u**2
        h11 = u**3 - u**2
        x = h00 * self.x[k] + h10 * h * self.v[k] + h01 * self.x[k + 1] + h11 * h * self.v[k + 1]
        v = h00 * self.v[k] + h10 * h * self.a[k] + h01 * self.v[k + 1] + h11 * h * self.a[k + 1]
        return x, v

    def norms(self) -> np.ndarray:
        G = self.chart.g(self.x)
        return np.einsum("mij,mi,mj->m", G, self.v, self.v)

    def norm_drift(self) -> float:
        q = self.norms()
        return float(np.max(np.abs(q - q[0])))


def _box_exit(chart, x0, v0):
    """Largest s with x0 + s v0 inside the box (inf when v0 = 0)."""
    lo, hi = chart.domain_box[:, 0], chart.domain_box[:, 1]
    s_exit = np.inf
    for k in range(chart.dimension):
        if abs(v0[k]) < 1e-300:  # subnormal components never reach the wall
            continue
        if v0[k] > 0:
            s_exit = min(s_exit, (hi[k] - x0[k]) / v0[k])
        elif v0[k] < 0:
            s_exit = min(s_exit, (lo[k] - x0[k]) / v0[k])
    return s_exit


def _proper_time(cls: CausalClass, q0: float, span: float) -> float:
    if cls.tag == "timelike":
        return float(np.sqrt(q0) * span)
    return 0.0


def integrate(chart: MetricChart, x0, v0, s_max: float = 1.0, tol: float = 1e-10) -> Geodesic:
    """Integrate the geodesic equation from ``(x0, v0)`` over ``[0, s_max]``.

    Flat charts are handled exactly (straight lines).  Otherwise a
    Dormand-Prince 5(4) integrator with relative and absolute tolerance
    ``tol`` is used.  Leaving the chart box ends the curve early with status
    ``"exited_domain"``.
    """
    x0 = np.array(x0, dtype=float)
    v0 = np.array(v0, dtype=float)
    if not chart.contains(x0):
        raise OutOfDomain(f"start point {x0} outside {chart.name}")
    if not s_max > 0:
        raise ValueError("s_max must be positive")
    cls = classify(chart, x0, v0)
    q0 = float(v0 @ chart.g(x0) @ v0)
    n = chart.dimension

    if chart.flat or not np.any(v0):
        s_exit = _box_exit(chart, x0, v0)
        s_end = min(s_max, s_exit)
        status = "ok" if s_exit >= s_max else "exited_domain"
        m = 9
        S = np.linspace(0.0, s_end, m)
        X = x0[None] + S[:, None] * v0[None]
        V = np.repeat(v0[None], m, axis=0)
        A = np.zeros((m, n))
        return Geodesic(chart, S, X, V, A, cls, _proper_time(cls, q0, s_end), status, s_max)

    S, X, V, A, status = _solve(chart, x0, v0, s_max, tol)
    return Geodesic(chart, S, X, V, A, cls, _proper_time(cls, q0, S[-1]), status, s_max)


def _solve(chart, x0, v0, s_max, tol):
    """Run the DOPRI5 kernel; returns trimmed samples and the exit status."""
    use_jit = _kernels.USE_NUMBA and chart.gamma_jitted
    solver = _kernels.NUMBA_KERNELS["dopri5"] if use_jit else _kernels.NUMPY_KERNELS["dopri5"]
    lo = chart.domain_box[:, 0].copy()
    hi = chart.domain_box[:, 1].copy()
    try:
        S, X, V, A, count, code = solver(chart.gamma_kernel, x0, v0, float(s_max), tol, tol,
                                         lo, hi, MAX_STEPS)
    except (np.linalg.LinAlgError, ZeroDivisionError, FloatingPointError) as exc:
        # a trial stage wandered far outside the chart and the metric degenerated
        raise StepSizeUnderflow(f"non-finite geodesic state from {x0}: {exc}") from exc
    if code == _kernels.UNDERFLOW or code == _kernels.MAX_STEPS:
        raise StepSizeUnderflow(f"adaptive step control stalled at s={S[count - 1]:.6g} "
                                f"(code {code})")
    status = "exited_domain" if code == _kernels.EXITED else "ok"
    return S[:count].copy(), X[:count].copy(), V[:count].copy(), A[:count].copy(), status


def exp_map(chart: MetricChart, x, v, tol: float = 1e-10) -> np.ndarray:
    """Endpoint at affine parameter 1 of the geodesic with initial data ``(x, v)``."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if not np.any(v):
        if not chart.contains(x):
            raise OutOfDomain(f"{x} outside {chart.name}")
        return x.copy()
    if chart.flat:
        geod = integrate(chart, x, v, 1.0, tol)
        S, X, status = geod.s, geod.x, geod.status
    else:
        if not chart.contains(x):
            raise OutOfDomain(f"start point {x} outside {chart.name}")
        S, X, _, _, status = _solve(chart, x.copy(), v.copy(), 1.0, tol)
    if status != "ok":
        raise ExitedDomain(f"geodesic from {x} with velocity {v} leaves {chart.name} "
                           f"at s={S[-1]:.6g}")
    return X[-1].copy()


def _residual(chart, x, v, y, tol):
    return exp_map(chart, x, v, tol) - y


def _newton(chart, x, y, v, tol, int_tol, max_iter):
    """Damped Newton iteration on ``v -> exp_x(v) - y`` with an FD Jacobian.

    Shots are integrated at a loose tolerance while the residual is large;
    convergence is only accepted on a residual integrated at ``int_tol``.
    """
    n = chart.dimension
    loose = max(int_tol, LOOSE_INT_TOL)

    def tol_for(err):
        return loose if err > 1e3 * loose else int_tol

    try:
        F = _residual(chart, x, v, y, loose)
    except (ExitedDomain, StepSizeUnderflow) as exc:
        raise NoConvergence(f"initial shot from {x} with {v} failed: {exc}") from exc
    f_tol = loose
    err = float(np.linalg.norm(F))
    history = [err]
    it = 0
    while True:
        cur_tol = tol_for(err)
        if cur_tol < f_tol:
            # residual was integrated loosely; re-evaluate before deciding
            try:
                F = _residual(chart, x, v, y, cur_tol)
            except (ExitedDomain, StepSizeUnderflow) as exc:
                raise NoConvergence(f"re-shot from {x} failed: {exc}") from exc
            f_tol = cur_tol
            err = float(np.linalg.norm(F))
            continue
        if err <= tol and f_tol == int_tol:
            return v
        if it >= max_iter:
            raise NoConvergence(f"shooting {x} -> {y}: residual {err:.3e} after {it} iterations")
        if it >= 8 and err > 0.5 * history[-6]:
            # damped steps no longer contract
            raise NoConvergence(f"shooting {x} -> {y}: stalled at residual {err:.3e}")
        it += 1
        scale = max(float(np.linalg.norm(v)), 1e-3)
        step = 1e-6 * scale
        J = np.empty((n, n))
        for k in range(n):
            e = np.zeros(n)
            e[k] = step
            try:
                J[:, k] = (_residual(chart, x, v + e, y, cur_tol) - F) / step
            except (ExitedDomain, StepSizeUnderflow):
                try:
                    J[:, k] = (F - _residual(chart, x, v - e, y, cur_tol)) / step
                except (ExitedDomain, StepSizeUnderflow) as exc:
                    raise NoConvergence(f"Jacobian probe failed for {x} -> {y}") from exc
        try:
            dv = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError as exc:
            raise NoConvergence(f"singular shooting Jacobian for {x} -> {y}") from exc
        lam = 1.0
        while True:
            trial = v + lam * dv
            try:
                Ft = _residual(chart, x, trial, y, cur_tol)
                et = float(np.linalg.norm(Ft))
            except (ExitedDomain, StepSizeUnderflow):
                et = np.inf
            if et < err or lam < 1e-6:
                break
            lam *= 0.5
        if not np.isfinite(et) or et >= err:
            raise NoConvergence(f"shooting {x} -> {y}: line search stalled at residual {err:.3e}")
        v, F, err, f_tol = trial, Ft, et, cur_tol
        history.append(err)


def _continuation(chart, x, y, tol, int_tol, max_iter, budget=60):
    """Newton along targets ``x + lam (y - x)``, lam increasing from small to 1."""
    lam, v = 0.0, np.zeros_like(x)
    step = 0.25
    for _ in range(budget):
        nxt = min(1.0, lam + step)
        guess = (y - x) * nxt if lam == 0.0 else v * (nxt / lam)
        target = x + nxt * (y - x)
        try:
            v = _newton(chart, x, target, guess, tol if nxt == 1.0 else 10 * tol,
                        int_tol, min(max_iter, STAGE_MAX_ITER))
            lam = nxt
            if lam == 1.0:
                return v
            step *= 1.5
        except NoConvergence:
            step *= 0.5
            if step < MIN_CONTINUATION_STEP:
                break
    raise NoConvergence(f"continuation from {x} to {y} stopped at lambda={lam:.4g}")


def shoot_bvp(chart: MetricChart, x, y, v_guess=None, tol: float = 1e-9,
              max_iter: int = 50, require_causal: bool = True):
    """Find ``v`` with ``exp_x(v) = y`` by damped Newton iteration.

    When Newton from ``v_guess`` fails, the target is moved in from ``x``
    along the coordinate chord and each converged velocity seeds the next
    stage (natural-parameter continuation).

    Parameters
    ----------
    v_guess : array_like, optional
        Initial velocity; defaults to the coordinate difference ``y - x``.
    tol : float
        Euclidean tolerance on the endpoint.
    require_causal : bool
        When true, a converged velocity that is not future-causal raises
        :class:`NotCausallyConnectable`.

    Returns
    -------
    v : ndarray
    geod : Geodesic
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    for p in (x, y):
        if not chart.contains(p):
            raise OutOfDomain(f"{p} outside {chart.name}")
    v = (y - x) if v_guess is None else np.array(v_guess, dtype=float)
    int_tol = min(1e-11, 1e-2 * tol)

    if chart.flat:
        v = y - x
    else:
        try:
            v = _newton(chart, x, y, v, tol, int_tol, max_iter)
        except NoConvergence:
            v = _continuation(chart, x, y, tol, int_tol, max_iter)

    geod = integrate(chart, x, v, 1.0, int_tol)
    geod.meta["velocity"] = v.copy()
    if require_causal and not classify(chart, x, v).future_causal:
        raise NotCausallyConnectable(f"{y} is not in the causal future of {x} "
                                     f"(connecting geodesic is {geod.causal_class.tag})")
    return v, geod
