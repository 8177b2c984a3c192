"""Approximate Busemann functions of a timelike line and their regularity probes."""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import NotConverged, OutOfDomain
from .geodesic import Geodesic, _box_exit, exp_map, integrate
from .metric import MetricChart, classify, lorentz_norm
from .timesep import NEG_INF, ell

POS_INF = math.inf
BASE_SCHEDULE = (5.0, 10.0, 20.0, 40.0)


class LineSpec:
    """A unit-speed future timelike geodesic ``r -> gamma(r)`` through ``base``.

    Parameters
    ----------
    chart : MetricChart
    base : array_like
        The point ``gamma(0)``.
    tangent : array_like
        Future timelike unit vector ``gamma'(0)``.
    r_max : float, optional
        Parameter range ``[-r_max, r_max]``; by default 90% of the range over
        which the geodesic stays inside the chart box.
    """

    def __init__(self, chart: MetricChart, base, tangent, r_max: Optional[float] = None):
        self.chart = chart
        self.base = np.array(base, dtype=float)
        self.tangent = np.array(tangent, dtype=float)
        norm = lorentz_norm(chart, self.base, self.tangent, kind="vector")
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"tangent must be unit timelike, |T| = {norm!r}")
        if r_max is None:
            r_max = 0.9 * min(self._reach(1.0), self._reach(-1.0))
        self.r_max = float(r_max)
        fwd = integrate(chart, self.base, self.tangent, self.r_max, 1e-11)
        bwd = integrate(chart, self.base, -self.tangent, self.r_max, 1e-11)
        if fwd.status != "ok" or bwd.status != "ok":
            raise OutOfDomain(f"line leaves {chart.name} before parameter {self.r_max}")
        self.forward_geodesic: Geodesic = fwd
        self.backward_geodesic: Geodesic = bwd
        self._points = {0.0: self.base.copy()}
        self._lock = threading.Lock()

    def _reach(self, sign):
        if self.chart.flat:
            return _box_exit(self.chart, self.base, sign * self.tangent)
        v = sign * self.tangent
        lo = integrate(self.chart, self.base, v, 1e4, 1e-9).s_end
        hi = 2.0 * lo + 1.0
        while integrate(self.chart, self.base, v, hi, 1e-9).status == "ok":
            lo, hi = hi, 2.0 * hi
            if hi > 1e6:
                return lo
        for _ in range(40):
            mid = 0.5 * (lo + hi)
            if integrate(self.chart, self.base, v, mid, 1e-9).status == "ok":
                lo = mid
            else:
                hi = mid
        return lo

    def point(self, r: float) -> np.ndarray:
        """``gamma(r)`` via the exponential map (memoised)."""
        r = float(r)
        if abs(r) > self.r_max * (1 + 1e-12):
            raise OutOfDomain(f"r={r} outside line range +-{self.r_max}")
        with self._lock:
            hit = self._points.get(r)
        if hit is None:
            hit = exp_map(self.chart, self.base, r * self.tangent, 1e-12)
            with self._lock:
                self._points[r] = hit
        return hit.copy()

    def velocity(self, r: float) -> np.ndarray:
        geod = self.forward_geodesic if r >= 0 else self.backward_geodesic
        _, v = geod.sample_at(abs(r))
        return v if r >= 0 else -v

    def rebased(self, s: float) -> "LineSpec":
        """The same line parameterised from ``gamma(s)``."""
        if self.chart.flat:
            return LineSpec(self.chart, self.point(s), self.tangent, self.r_max - abs(s))
        geod = integrate(self.chart, self.base, np.sign(s) * self.tangent, abs(s), 1e-12)
        v = geod.v[-1] * np.sign(s) if s != 0 else self.tangent
        return LineSpec(self.chart, geod.end, v, self.r_max - abs(s))


def default_schedule(line: LineSpec) -> tuple:
    """The base radii (5, 10, 20, 40) rescaled so the largest fills the line range."""
    scale = line.r_max / BASE_SCHEDULE[-1]
    return tuple(r * scale for r in BASE_SCHEDULE)


@dataclass
class ConvergenceReport:
    radii: list
    values: list
    differences: list
    monotone: bool
    extrapolated: float
    extrapolation_change: float
    converged: bool


class BusemannField:
    """``b^+_r`` (direction ``"forward"``) or ``b^-_{-r}`` (``"backward"``) of a line."""

    def __init__(self, line: LineSpec, direction: str = "forward",
                 r_schedule: Optional[Sequence[float]] = None, tol: float = 1e-5):
        if direction not in ("forward", "backward"):
            raise ValueError("direction must be 'forward' or 'backward'")
        self.line = line
        self.chart = line.chart
        self.direction = direction
        self.r_schedule = tuple(r_schedule) if r_schedule is not None else default_schedule(line)
        if any(b <= a for a, b in zip(self.r_schedule, self.r_schedule[1:])):
            raise ValueError("r_schedule must be increasing")
        self.tol = tol
        self.values_at: dict = {}
        self._anchor: dict = {}
        self.sign = 1.0 if direction == "forward" else -1.0

    # -- per-radius values ------------------------------------------------
    def _anchor_value(self, r):
        hit = self._anchor.get(r)
        if hit is None:
            o = self.line.point(self.sign * r)
            if self.sign > 0:
                hit = ell(self.chart, self.line.base, o).value
            else:
                hit = ell(self.chart, o, self.line.base).value
            self._anchor[r] = hit
        return hit

    def value_r(self, x, r: float, with_witness: bool = False):
        """``b^+_r(x)`` for forward fields, ``b^-_{-r}(x)`` for backward ones (``r > 0``)."""
        x = np.asarray(x, dtype=float)
        r = abs(float(r))
        key = (tuple(x.tolist()), r)
        hit = self.values_at.get(key)
        if hit is not None and not with_witness:
            return hit[0]
        o = self.line.point(self.sign * r)
        if self.sign > 0:
            ts = ell(self.chart, x, o)
            val = POS_INF if ts.value == NEG_INF else self._anchor_value(r) - ts.value
        else:
            ts = ell(self.chart, o, x)
            val = NEG_INF if ts.value == NEG_INF else ts.value - self._anchor_value(r)
        self.values_at[key] = (val, None)
        return (val, ts) if with_witness else val

    def gradient_r(self, x, r: float) -> np.ndarray:
        """Exact differential of ``b_r`` at ``x`` from the maximising geodesic.

        For the forward field ``d b^+_r = v_flat / |v|`` with ``v`` the initial
        velocity from ``x`` to ``gamma(r)``; the backward field mirrors this
        with the final velocity into ``x``.
        """
        x = np.asarray(x, dtype=float)
        val, ts = self.value_r(x, r, with_witness=True)
        if not np.isfinite(val) or ts.witness is None or ts.value <= 0:
            raise NotConverged(f"no timelike witness at {x} for r={r}")
        geod = ts.witness
        if self.sign > 0:
            v = geod.v[0]
        else:
            v = geod.v[-1]
        g = self.chart.g(x)
        return g @ v / math.sqrt(float(v @ g @ v))

    # -- limits -----------------------------------------------------------
    def limit(self, x, r_schedule=None, tol: Optional[float] = None):
        return busemann_limit(self, x, r_schedule, self.tol if tol is None else tol)

    def __call__(self, x) -> float:
        return self.limit(x)[0]


def b_plus_r(field: BusemannField, x, r: float) -> float:
    if field.direction != "forward":
        raise ValueError("b_plus_r needs a forward field")
    return field.value_r(x, r)


def b_minus_r(field: BusemannField, x, r: float) -> float:
    """``b^-_r(x) = l(gamma(r), x) - l(gamma(r), gamma(0))`` for ``r < 0``."""
    if field.direction != "backward":
        raise ValueError("b_minus_r needs a backward field")
    return field.value_r(x, r)


def _extrapolate(radii, values):
    """Fit ``b + c1/r + c2/r^2`` exactly through three samples, return ``b``."""
    u = 1.0 / np.asarray(radii, dtype=float)
    V = np.vander(u, 3, increasing=True)
    return float(np.linalg.solve(V, np.asarray(values, dtype=float))[0])


def busemann_limit(field: BusemannField, x, r_schedule=None, tol: float = 1e-5):
    """Extrapolated limit of ``b_r(x)`` as ``r -> infinity``.

    Values at the schedule radii are extrapolated in ``1/r`` (exact quadratic
    through the last three finite radii).  The change between the estimates
    from the last two radius triples must be at most ``tol``.

    Returns
    -------
    limit : float
    report : ConvergenceReport
    """
    radii = list(r_schedule or field.r_schedule)
    values = [field.value_r(x, r) for r in radii]
    diffs = [b - a for a, b in zip(values, values[1:]) if np.isfinite(a) and np.isfinite(b)]
    sgn = -field.sign  # forward values decrease, backward increase
    monotone = all(sgn * d >= -1e-6 for d in diffs)
    finite = [(r, v) for r, v in zip(radii, values) if np.isfinite(v)]
    if not np.isfinite(values[-1]):
        rep = ConvergenceReport(radii, values, diffs, monotone, values[-1], 0.0, True)
        return values[-1], rep
    if len(finite) < 3:
        rep = ConvergenceReport(radii, values, diffs, monotone, values[-1], math.inf, False)
        raise NotConverged(f"fewer than three finite radii at {x}: {values}")
    fr, fv = zip(*finite)
    est = _extrapolate(fr[-3:], fv[-3:])
    change = abs(est - _extrapolate(fr[-4:-1], fv[-4:-1])) if len(finite) >= 4 else abs(
        fv[-1] - fv[-2])
    rep = ConvergenceReport(radii, values, diffs, monotone, est, change, change <= tol)
    if change > tol:
        raise NotConverged(f"Busemann limit at {x} not settled: last change {change:.3e}")
    return est, rep


# ---------------------------------------------------------------------------
# property checks
# ---------------------------------------------------------------------------

@dataclass
class CheckReport:
    passed: bool
    value: float
    detail: dict = field(default_factory=dict)


def check_ordering(field_fwd: BusemannField, field_bwd: BusemannField, x, r: float,
                   tol: float = 1e-6) -> CheckReport:
    """Check ``b^+_r >= b^+ >= b^- >= b^-_{-r}`` at ``x``."""
    bpr = field_fwd.value_r(x, r)
    bp = busemann_limit(field_fwd, x)[0]
    bm = busemann_limit(field_bwd, x)[0]
    bmr = field_bwd.value_r(x, r)
    chain = [bpr, bp, bm, bmr]
    slacks = []
    for a, b in zip(chain, chain[1:]):
        slacks.append(math.inf if (a == POS_INF or b == NEG_INF) else a - b)
    ok = all(s >= -tol for s in slacks)
    return CheckReport(ok, min(slacks), {"values": chain, "slacks": slacks})


def check_steepness(field: BusemannField, x, y, r: Optional[float] = None,
                    tol: float = 1e-6) -> CheckReport:
    """Check ``b_r(y) - b_r(x) >= l(x, y)``."""
    r = field.r_schedule[-1] if r is None else r
    lxy = ell(field.chart, x, y).value
    by, bx = field.value_r(y, r), field.value_r(x, r)
    if lxy == NEG_INF:
        return CheckReport(True, math.inf, {"ell": lxy, "difference": by - bx})
    diff = by - bx
    return CheckReport(bool(diff >= lxy - tol), diff - lxy, {"ell": lxy, "difference": diff})


def gradient_fd(field: BusemannField, x, h=None) -> np.ndarray:
    """Central-difference differential of the Busemann limit at ``x``."""
    x = np.asarray(x, dtype=float)
    n = field.chart.dimension
    widths = field.chart.domain_box[:, 1] - field.chart.domain_box[:, 0]
    hh = 1e-4 * widths if h is None else np.broadcast_to(np.asarray(h, float), (n,))
    out = np.empty(n)
    for k in range(n):
        e = np.zeros(n)
        e[k] = hh[k]
        out[k] = (field(x + e) - field(x - e)) / (2 * hh[k])
    return out


def _region_sampler(region, rng, count):
    region = np.asarray(region, dtype=float)
    return rng.uniform(region[:, 0], region[:, 1], size=(count, region.shape[0]))


def semiconcavity_estimate(f: Callable, region, aux: Optional[MetricChart] = None,
                           w_scale: Optional[float] = None, samples: int = 20,
                           rng: Optional[np.random.Generator] = None,
                           n_random_dirs: int = 20) -> float:
    """Largest symmetric second difference quotient of ``f`` over ``region``.

    For each sampled point ``x`` and unit direction ``w`` (chart-Euclidean
    auxiliary metric) the quotient ``(f(x+w) + f(x-w) - 2 f(x)) / |w|^2`` is
    formed at three scales and Richardson-extrapolated.  Infinite values are
    skipped.  This is an estimator, not a certificate.
    """
    region = np.asarray(region, dtype=float)
    n = region.shape[0]
    rng = rng if rng is not None else np.random.default_rng(0)
    if w_scale is None:
        w_scale = 1e-2 * float(np.max(region[:, 1] - region[:, 0]))
    dirs = [np.eye(n)[k] * s for k in range(n) for s in (1.0, -1.0)]
    R = rng.normal(size=(n_random_dirs, n))
    dirs += list(R / np.linalg.norm(R, axis=1, keepdims=True))
    best = -math.inf
    for x in _region_sampler(region, rng, samples):
        fx = f(x)
        if not np.isfinite(fx):
            continue
        for w in dirs:
            q = []
            for m in range(3):
                step = w_scale / 2**m
                a, b = f(x + step * w), f(x - step * w)
                if not (np.isfinite(a) and np.isfinite(b)):
                    break
                q.append((a + b - 2 * fx) / step**2)
            if len(q) < 3:
                continue
            r1 = (4 * q[1] - q[0]) / 3
            r2 = (4 * q[2] - q[1]) / 3
            best = max(best, (16 * r2 - r1) / 15)
    return best


def equi_semiconcavity(field: BusemannField, region, radii=None, **kw) -> dict:
    """Semiconcavity estimates of ``b_r`` for each radius plus their maximum."""
    radii = radii or field.r_schedule
    out = {}
    for r in radii:
        out[r] = semiconcavity_estimate(lambda y, r=r: field.value_r(y, r), region,
                                        rng=np.random.default_rng(kw.get("seed", 0)),
                                        **{k: v for k, v in kw.items() if k != "seed"})
    out["max"] = max(out[r] for r in radii)
    return out


def lipschitz_estimate(f: Callable, region, samples: int = 200,
                       rng: Optional[np.random.Generator] = None,
                       pair_scale: float = 0.05, points=None) -> float:
    """Largest difference quotient of ``f`` over sampled nearby pairs.

    Pairs are ``(x, x + delta)`` with ``delta`` uniform in a cube of side
    ``pair_scale`` times the region width; distances are chart-Euclidean.
    Pairs with an infinite value are excluded.  ``points`` may supply the
    base points explicitly (they are then not redrawn).
    """
    region = np.asarray(region, dtype=float)
    rng = rng if rng is not None else np.random.default_rng(0)
    widths = region[:, 1] - region[:, 0]
    X = _region_sampler(region, rng, samples) if points is None else np.asarray(points, float)
    D = rng.uniform(-0.5, 0.5, size=X.shape) * pair_scale * widths
    best = 0.0
    for x, d in zip(X, D):
        y = np.clip(x + d, region[:, 0], region[:, 1])
        dist = float(np.linalg.norm(y - x))
        if dist == 0.0:
            continue
        a, b = f(x), f(y)
        if not (np.isfinite(a) and np.isfinite(b)):
            continue
        best = max(best, abs(a - b) / dist)
    return best


def upper_support_check(field: BusemannField, x, r: float, s: float, samples: int = 50,
                        radius: float = 0.1, tol: float = 1e-6,
                        rng: Optional[np.random.Generator] = None) -> CheckReport:
    """Check that ``u_r = b^+_r(x) + l(x, sigma(s)) - l(., sigma(s))`` supports ``b^+_r``.

    ``sigma`` is the maximising geodesic from ``x`` to ``gamma(r)`` in
    proper-time parameterisation.  Asserts ``u_r >= b^+_r`` at sampled points
    within ``radius`` of ``x`` and equality at points of ``sigma([0, s])``.
    """
    if field.direction != "forward":
        raise ValueError("upper supports are defined for the forward field")
    x = np.asarray(x, dtype=float)
    rng = rng if rng is not None else np.random.default_rng(0)
    bx, ts = field.value_r(x, r, with_witness=True)
    if not np.isfinite(bx) or ts.witness is None or ts.value <= 0:
        raise NotConverged(f"{x} has no timelike maximiser to gamma({r})")
    geod = ts.witness
    L = ts.value
    if not 0 < s <= L:
        raise ValueError(f"s must lie in (0, {L}]")
    z, _ = geod.sample_at(s / L) if not field.chart.flat else (geod.start + (s / L) * (
        geod.end - geod.start), None)
    lxz = ell(field.chart, x, z).value
    chart = field.chart

    def u(y):
        lyz = ell(chart, y, z).value
        return POS_INF if lyz == NEG_INF else bx + lxz - lyz

    worst = math.inf
    n = chart.dimension
    for _ in range(samples):
        d = rng.normal(size=n)
        y = x + radius * rng.uniform() ** (1 / n) * d / np.linalg.norm(d)
        uy, by = u(y), field.value_r(y, r)
        if uy == POS_INF:
            continue
        worst = min(worst, uy - by if np.isfinite(by) else math.inf)
    eq_err = 0.0
    for frac in np.linspace(0.0, 1.0, 6):
        if chart.flat:
            y = geod.start + frac * (s / L) * (geod.end - geod.start)
        else:
            y, _ = geod.sample_at(frac * s / L)
        eq_err = max(eq_err, abs(u(y) - field.value_r(y, r)))
    ok = worst >= -tol and eq_err <= tol
    return CheckReport(ok, worst, {"equality_error": eq_err, "support_point": z.tolist()})


@dataclass
class BandReport:
    """Lipschitz constants of ``f`` over nested regions, with infinite samples."""
    bands: list
    lipschitz: list
    growth: float
    monotone: bool
    infinite_points: list
    values: list


def lipschitz_bands(f: Callable, axes: Sequence, bands: Sequence) -> BandReport:
    """Difference quotients of ``f`` over lattice neighbours inside nested boxes.

    ``axes`` lists the lattice coordinates per chart axis (a single value
    freezes that axis).  For each box in ``bands`` (innermost first) the
    constant is the largest ``|f(a) - f(b)| / |a - b|`` over neighbouring
    lattice points of that box with both values finite; infinite values are
    collected separately.  Boxes must be nested, so the sequence of constants
    is nondecreasing by construction and ``growth`` compares outermost with
    innermost.
    """
    axes = [np.atleast_1d(np.asarray(a, dtype=float)) for a in axes]
    mesh = np.meshgrid(*axes, indexing="ij")
    X = np.stack([m.ravel() for m in mesh], axis=-1)
    vals = np.array([f(x) for x in X]).reshape(mesh[0].shape)
    infinite = X[~np.isfinite(vals.ravel())].tolist()
    consts = []
    for box in bands:
        box = np.asarray(box, dtype=float)
        inside = np.all((X >= box[:, 0] - 1e-12) & (X <= box[:, 1] + 1e-12), axis=-1)
        inside = inside.reshape(vals.shape)
        best = 0.0
        for k, ax in enumerate(axes):
            if len(ax) < 2:
                continue
            a = [slice(None)] * len(axes)
            b = [slice(None)] * len(axes)
            a[k] = slice(0, -1)
            b[k] = slice(1, None)
            va, vb = vals[tuple(a)], vals[tuple(b)]
            ok = inside[tuple(a)] & inside[tuple(b)] & np.isfinite(va) & np.isfinite(vb)
            if np.any(ok):
                step = np.diff(ax)
                shape = [1] * len(axes)
                shape[k] = -1
                with np.errstate(invalid="ignore"):
                    q = np.abs(vb - va) / step.reshape(shape)
                best = max(best, float(q[ok].max()))
        consts.append(best)
    growth = consts[-1] / consts[0] if consts and consts[0] > 0 else math.inf
    monotone = all(b >= a for a, b in zip(consts, consts[1:]))
    return BandReport([np.asarray(b, float).tolist() for b in bands], consts, growth, monotone,
                      infinite, vals.ravel().tolist())
