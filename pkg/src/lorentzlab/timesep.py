"""Time separation by geodesic shooting and by direct action maximisation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.linalg import solve_banded

from . import _kernels
from .errors import (ExitedDomain, Indeterminate, NoConvergence, NotCausal,
                     NotCausallyConnectable, OutOfDomain, StepSizeUnderflow)
from .geodesic import Geodesic, shoot_bvp
from .metric import MetricChart, classify

NEG_INF = -math.inf
EPS_NULL = 1e-7


@dataclass
class CausalCurve:
    """Piecewise-linear curve in chart coordinates; chords use the midpoint metric."""
    chart: MetricChart
    nodes: np.ndarray

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        if self.nodes.ndim != 2 or self.nodes.shape[0] < 2:
            raise ValueError("a curve needs at least two nodes")

    def chords(self):
        d = np.diff(self.nodes, axis=0)
        mid = 0.5 * (self.nodes[:-1] + self.nodes[1:])
        return d, mid

    def chord_flags(self, eps_null: float = EPS_NULL) -> np.ndarray:
        d, mid = self.chords()
        return _causal_flags(self.chart, d, mid, eps_null)


@dataclass
class TimeSep:
    value: float
    method: str
    witness: Union[Geodesic, CausalCurve, None] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.value != NEG_INF and not self.value >= 0:
            raise ValueError(f"time separation must be -inf or >= 0, got {self.value}")

    @property
    def finite(self) -> bool:
        return self.value != NEG_INF


def _causal_flags(chart, d, mid, eps_null):
    G = chart.g(mid)
    q = np.einsum("cij,ci,cj->c", G, d, d)
    nrm = np.einsum("ci,ci->c", d, d)
    fut = np.einsum("ci,ci->c", chart.tau(mid), d)
    zero = nrm == 0.0
    return zero | ((q >= -eps_null * eps_null * nrm) & (fut > 0.0))


def action(curve: CausalCurve, eps_null: float = EPS_NULL) -> float:
    """Lorentzian length: sum over chords of ``sqrt(g_mid(d, d))``.

    Raises :class:`NotCausal` if a chord is not future-causal.
    """
    d, mid = curve.chords()
    flags = _causal_flags(curve.chart, d, mid, eps_null)
    if not np.all(flags):
        bad = int(np.argmin(flags))
        raise NotCausal(f"chord {bad} ({curve.nodes[bad]} -> {curve.nodes[bad + 1]}) "
                        "is not future-causal")
    lengths, _ = _kernels.action_terms(np.ascontiguousarray(curve.chart.g(mid)), d, eps_null)
    return float(np.sum(lengths))


# ---------------------------------------------------------------------------
# shooting
# ---------------------------------------------------------------------------

def ell_shooting(chart: MetricChart, x, y, tol: float = 1e-9) -> TimeSep:
    """Time separation from the connecting geodesic(s).

    On charts with periodic coordinates every lift of ``y`` inside the box
    is tried and the largest value kept.  Shooting failures with no causal
    alternative raise :class:`Indeterminate`.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    for p in (x, y):
        if not chart.contains(p):
            raise OutOfDomain(f"{p} outside {chart.name}")
    best = TimeSep(NEG_INF, "shooting")
    failures = []
    for target in chart.lifts(y, near=x):
        if np.array_equal(target, x):
            return TimeSep(0.0, "shooting", None, {"velocity": np.zeros_like(x), "target": x})
        try:
            v, geod = shoot_bvp(chart, x, target, tol=tol)
        except NotCausallyConnectable:
            continue
        except (NoConvergence, ExitedDomain, StepSizeUnderflow) as exc:
            failures.append(str(exc))
            continue
        if geod.proper_time > best.value or not best.finite:
            best = TimeSep(geod.proper_time, "shooting", geod, {"velocity": v, "target": target})
    if failures and not best.finite:
        raise Indeterminate("; ".join(failures))
    return best


# ---------------------------------------------------------------------------
# action maximisation
# ---------------------------------------------------------------------------

def _chord_lengths(chart, P, eps_null):
    d = np.diff(P, axis=0)
    mid = 0.5 * (P[:-1] + P[1:])
    lengths, _ = _kernels.action_terms(np.ascontiguousarray(chart.g(mid)), d, eps_null)
    return lengths


def _is_causal(chart, P, eps_null):
    d = np.diff(P, axis=0)
    mid = 0.5 * (P[:-1] + P[1:])
    if not np.all(chart.contains(P)):
        return False
    return bool(np.all(_causal_flags(chart, d, mid, eps_null)))


def _action_gradient(chart, P, eps_null, h):
    """Central-difference gradient of the action with respect to interior nodes.

    Nodes are perturbed in two interleaved colour classes, so each chord sees
    at most one moving endpoint and one chord-length sweep serves many nodes.
    """
    N = P.shape[0] - 1
    n = P.shape[1]
    grad = np.zeros((N + 1, n))
    for colour in (0, 1):
        nodes = np.arange(1 + colour, N, 2)
        if nodes.size == 0:
            continue
        for j in range(n):
            Lp = P.copy()
            Lm = P.copy()
            Lp[nodes, j] += h
            Lm[nodes, j] -= h
            lp = _chord_lengths(chart, Lp, eps_null)
            lm = _chord_lengths(chart, Lm, eps_null)
            grad[nodes, j] = (lp[nodes - 1] + lp[nodes] - lm[nodes - 1] - lm[nodes]) / (2 * h)
    return grad[1:-1]


def _precondition(grad):
    """Apply the inverse discrete Laplacian (an H^1 metric on node space)."""
    m = grad.shape[0]
    ab = np.zeros((3, m))
    ab[0, 1:] = -1.0
    ab[1, :] = 2.0
    ab[2, :-1] = -1.0
    return solve_banded((1, 1), ab, grad)


def _ascend(chart, P, iters, eps_null, rel_tol):
    scale = float(np.linalg.norm(P[-1] - P[0])) or 1.0
    h = 1e-7 * scale
    L = float(np.sum(_chord_lengths(chart, P, eps_null)))
    step = 1.0
    for _ in range(iters):
        grad = _action_gradient(chart, P, eps_null, h)
        if not np.any(grad):
            break
        direction = _precondition(grad)
        gnorm = float(np.max(np.abs(direction)))
        if gnorm == 0.0:
            break
        alpha = step * scale / gnorm
        slope = float(np.sum(grad * direction))
        improved = False
        for _ in range(40):
            trial = P.copy()
            trial[1:-1] += alpha * direction
            if _is_causal(chart, trial, eps_null):
                Lt = float(np.sum(_chord_lengths(chart, trial, eps_null)))
                if Lt >= L + 1e-4 * alpha * slope and Lt > L:
                    improved = True
                    break
            alpha *= 0.5
        if not improved:
            break
        gain = Lt - L
        P, L = trial, Lt
        step = min(1.0, 2.0 * alpha * gnorm / scale)
        if gain <= rel_tol * max(L, 1e-300):
            break
    return P, L


def _random_initialiser(chart, x, y, N, rng):
    s = np.linspace(0.0, 1.0, N + 1)[:, None]
    P = x[None] + s * (y - x)[None]
    span = float(np.linalg.norm(y - x)) or 1.0
    n = chart.dimension
    amp = rng.normal(scale=0.3 * span, size=(3, n))
    for m in range(3):
        P = P + amp[m][None] * np.sin((m + 1) * np.pi * s)
    # push the time coordinate forward early: a time-first bias helps reach
    # causal curves when the straight chord is spacelike
    tau = chart.tau(x)
    if np.any(tau):
        bias = rng.uniform(0.0, 1.0) * np.sin(np.pi * s) * 0.5 * span
        P = P + bias * (tau / np.linalg.norm(tau))[None]
    return P


def ell_action(chart: MetricChart, x, y, N: int = 100, iters: int = 2000,
               restarts: int = 12, seed: Optional[int] = 0, eps_null: float = EPS_NULL,
               rel_tol: float = 1e-13) -> TimeSep:
    """Time separation by maximising the discrete action over causal curves.

    Starts from the straight coordinate chord (and its periodic lifts) and
    performs preconditioned gradient ascent with backtracking, rejecting any
    move that makes a chord non-causal.  When no causal initial curve is
    found after ``restarts`` randomised attempts the result is ``-inf``: this
    is a heuristic, not a proof of causal disconnection.
    """
    if N < 2:
        raise ValueError("N must be at least 2")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    for p in (x, y):
        if not chart.contains(p):
            raise OutOfDomain(f"{p} outside {chart.name}")
    if np.array_equal(x, y):
        return TimeSep(0.0, "action", CausalCurve(chart, np.stack([x, y])))
    rng = np.random.default_rng(seed)
    s = np.linspace(0.0, 1.0, N + 1)[:, None]
    best: Optional[TimeSep] = None
    for target in chart.lifts(y, near=x):
        P = x[None] + s * (target - x)[None]
        attempt = 0
        while not _is_causal(chart, P, eps_null):
            if attempt >= restarts:
                P = None
                break
            attempt += 1
            P = _random_initialiser(chart, x, target, N, rng)
        if P is None:
            continue
        P, L = _ascend(chart, P, iters, eps_null, rel_tol)
        if best is None or L > best.value:
            best = TimeSep(L, "action", CausalCurve(chart, P), {"target": target,
                                                                "restarts": attempt})
    return best if best is not None else TimeSep(NEG_INF, "action")


def ell(chart: MetricChart, x, y, **kw) -> TimeSep:
    """Shooting first, action maximisation when shooting is indeterminate."""
    try:
        return ell_shooting(chart, x, y, tol=kw.pop("tol", 1e-9))
    except Indeterminate:
        return ell_action(chart, x, y, **kw)


# ---------------------------------------------------------------------------
# reverse triangle inequality
# ---------------------------------------------------------------------------

@dataclass
class RTIReport:
    passed: bool
    slack: float
    ell_xz: float
    ell_xy: float
    ell_yz: float
    tol: float


def extended_sum(a: float, b: float) -> float:
    """Sum with the convention that ``inf - inf = -inf``."""
    if a == NEG_INF or b == NEG_INF:
        return NEG_INF
    return a + b


def check_rti(chart: MetricChart, x, y, z, tol: float = 1e-6, **kw) -> RTIReport:
    """Check ``l(x, z) >= l(x, y) + l(y, z) - tol``."""
    lxz = ell(chart, x, z, **dict(kw)).value
    lxy = ell(chart, x, y, **dict(kw)).value
    lyz = ell(chart, y, z, **dict(kw)).value
    rhs = extended_sum(lxy, lyz)
    if rhs == NEG_INF:
        return RTIReport(True, math.inf, lxz, lxy, lyz, tol)
    slack = lxz - rhs
    return RTIReport(bool(slack >= -tol), slack, lxz, lxy, lyz, tol)
