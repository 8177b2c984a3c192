"""Splitting-map checks built on a Busemann limit ``b``.

The level set ``S = {b = 0}`` is parametrised by the spatial coordinates
``y = (x_1, ..., x_{n-1})`` of the chart (it is a graph ``t = t(y)`` as long as
``db`` has a nonzero time component), and ``E(r, y) = exp_{S(y)}(r grad b)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

from .busemann import BusemannField, LineSpec
from .errors import NewtonFail
from .fields import ScalarFieldSample
from .geodesic import exp_map
from .metric import MetricChart, christoffel
from .timesep import NEG_INF, ell


def busemann_sample(bfield: BusemannField, h: float = 1e-2) -> ScalarFieldSample:
    """Wrap the Busemann limit as a finite-difference-ready scalar field."""
    return ScalarFieldSample(lambda x: bfield.limit(x, tol=bfield.tol)[0],
                             provenance="busemann_limit", h=h)


def _as_sample(f, h) -> ScalarFieldSample:
    if isinstance(f, ScalarFieldSample):
        return f
    if isinstance(f, BusemannField):
        return busemann_sample(f, h)
    return ScalarFieldSample(f, h=h)


@dataclass
class HessianNormReport:
    max_norm: float
    norms: list
    points: list


def hessian_norm_field(f, chart: MetricChart, points, h: float = 0.05) -> HessianNormReport:
    """Largest Frobenius norm (chart-Euclidean auxiliary metric) of the covariant Hessian.

    ``f`` is a :class:`BusemannField` (its limit is used), a scalar field or a
    plain callable.
    """
    u = _as_sample(f, h)
    norms = []
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    for x in pts:
        du = u.gradient(x, h)
        H = u.hessian(x, h) - np.einsum("kij,k->ij", christoffel(chart, x), du)
        norms.append(float(np.linalg.norm(H)))
    return HessianNormReport(max(norms), norms, pts.tolist())


@dataclass
class SplitFrame:
    """Sampled level set ``{b = 0}`` with normals and induced Riemannian metric."""
    chart: MetricChart
    b: ScalarFieldSample
    points: np.ndarray
    normals: np.ndarray          # db (covectors)
    normals_up: np.ndarray       # grad b (vectors)
    tangents: np.ndarray         # (m, n, n-1): columns span ker db
    induced_h: np.ndarray        # (m, n-1, n-1)
    h: float = 1e-2
    tol: float = 1e-8
    line: Optional[LineSpec] = None
    dropped: list = field(default_factory=list)

    @property
    def spatial(self) -> np.ndarray:
        return self.points[:, 1:]

    def level_point(self, y) -> np.ndarray:
        """The point of ``S`` with spatial coordinates ``y``."""
        y = np.asarray(y, dtype=float)
        t0 = 0.0
        if len(self.points):
            t0 = float(self.points[np.argmin(np.linalg.norm(self.spatial - y, axis=1)), 0])
        return _project_time(self.b, np.concatenate([[t0], y]), self.tol, self.h)

    def local_frame(self, x):
        return _frame_at(self.chart, self.b, x, self.h)

    def to_dict(self) -> dict:
        return {"points": self.points.tolist(), "normals": self.normals.tolist(),
                "induced_h": self.induced_h.tolist(), "dropped": self.dropped}


def _frame_at(chart, b, x, h):
    db = b.gradient(x, h)
    G = chart.g(x)
    up = np.linalg.solve(G, db)
    n = len(x)
    if abs(db[0]) < 1e-12:
        raise NewtonFail(f"level set is not a graph over space at {x}")
    T = np.zeros((n, n - 1))
    for a in range(1, n):
        T[0, a - 1] = -db[a] / db[0]
        T[a, a - 1] = 1.0
    hmat = -T.T @ G @ T
    return db, up, T, 0.5 * (hmat + hmat.T)


def _project_time(b: ScalarFieldSample, x0, tol, h, max_iter: int = 30):
    """Newton in the time coordinate onto ``{b = 0}``."""
    x = np.array(x0, dtype=float)
    for _ in range(max_iter):
        val = b(x)
        if not np.isfinite(val):
            raise NewtonFail(f"b not finite at {x}")
        if abs(val) <= tol:
            return x
        e = np.zeros_like(x)
        e[0] = h
        dt = (b(x + e) - b(x - e)) / (2 * h)
        if not np.isfinite(dt) or abs(dt) < 1e-12:
            raise NewtonFail(f"degenerate time derivative at {x}")
        x[0] -= val / dt
    raise NewtonFail(f"level-set projection did not converge from {x0}")


def build_level_set(f, chart: MetricChart, seeds, tol: float = 1e-8, h: float = 1e-2,
                    line: Optional[LineSpec] = None, max_iter: int = 30) -> SplitFrame:
    """Move each seed onto ``{b = 0}`` by 1-D Newton along ``grad b``.

    Seeds that fail are dropped with a warning.
    """
    b = _as_sample(f, h)
    if isinstance(f, BusemannField) and line is None:
        line = f.line
    pts, dbs, ups, Ts, hs, dropped = [], [], [], [], [], []
    for s in np.atleast_2d(np.asarray(seeds, dtype=float)):
        try:
            x = s.copy()
            for _ in range(max_iter):
                val = b(x)
                if not np.isfinite(val):
                    raise NewtonFail(f"b not finite at {x}")
                if abs(val) <= tol:
                    break
                db = b.gradient(x, h)
                up = np.linalg.solve(chart.g(x), db)
                q = float(db @ up)
                if q <= 0:
                    raise NewtonFail(f"grad b not timelike at {x}")
                x = x - val * up / q
            else:
                raise NewtonFail(f"no convergence from seed {s}")
            db, up, T, hm = _frame_at(chart, b, x, h)
        except NewtonFail as exc:
            warnings.warn(f"dropping seed {s.tolist()}: {exc}")
            dropped.append(s.tolist())
            continue
        pts.append(x); dbs.append(db); ups.append(up); Ts.append(T); hs.append(hm)
    n = chart.dimension
    return SplitFrame(chart, b, np.array(pts).reshape(-1, n), np.array(dbs).reshape(-1, n),
                      np.array(ups).reshape(-1, n), np.array(Ts).reshape(-1, n, n - 1),
                      np.array(hs).reshape(-1, n - 1, n - 1), h, tol, line, dropped)


def splitting_map(frame: SplitFrame, r: float, x) -> np.ndarray:
    """``E(r, x) = exp_x(r grad b)`` for ``x`` on the level set."""
    x = np.asarray(x, dtype=float)
    if r == 0:
        return x.copy()
    _, up, _, _ = frame.local_frame(x)
    return exp_map(frame.chart, x, r * up)


def splitting_map_y(frame: SplitFrame, r: float, y) -> np.ndarray:
    """``E`` in the coordinates ``(r, y)`` of the product."""
    return splitting_map(frame, r, frame.level_point(y))


@dataclass
class PullbackReport:
    max_deviation: float
    deviations: list
    samples: list


def pullback_metric_check(frame: SplitFrame, r_list: Sequence[float], pairs: int = 50,
                          rng: Optional[np.random.Generator] = None,
                          h_fd: float = 1e-3) -> PullbackReport:
    """Compare ``g(dE d, dE d')`` with ``(dr^2 - h)(d, d')`` on random tangent pairs.

    ``dE`` is taken by central differences in ``(r, y)``.  Pairs are drawn as
    random unit vectors in ``(r, y)``-space, so they mix ``r`` and ``y``
    directions.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    chart = frame.chart
    n = chart.dimension
    devs, samples = [], []
    for k in range(pairs):
        i = int(rng.integers(len(frame.points)))
        r = float(r_list[k % len(r_list)])
        y = frame.spatial[i]
        base = frame.level_point(y)
        _, _, _, hmat = frame.local_frame(base)
        J = np.empty((n, n))
        for c in range(n):
            e = np.zeros(n)
            e[c] = h_fd
            plus = splitting_map_y(frame, r + e[0], y + e[1:])
            minus = splitting_map_y(frame, r - e[0], y - e[1:])
            J[:, c] = (plus - minus) / (2 * h_fd)
        E = splitting_map_y(frame, r, y)
        pulled = J.T @ chart.g(E) @ J
        product = np.zeros((n, n))
        product[0, 0] = 1.0
        product[1:, 1:] = -hmat
        d1 = rng.normal(size=n); d1 /= np.linalg.norm(d1)
        d2 = rng.normal(size=n); d2 /= np.linalg.norm(d2)
        dev = abs(float(d1 @ (pulled - product) @ d2))
        devs.append(dev)
        samples.append({"r": r, "y": y.tolist(), "d1": d1.tolist(), "d2": d2.tolist()})
    return PullbackReport(max(devs), devs, samples)


# ---------------------------------------------------------------------------
# distance on the level set and the product time-separation formula
# ---------------------------------------------------------------------------

def _chord(frame: SplitFrame, a, b) -> float:
    """Length of the chord ``a -> b`` in ``(S, h)`` with ``h`` at the midpoint."""
    mid = 0.5 * (a + b)
    _, _, _, hm = frame.local_frame(frame.level_point(mid))
    d = b - a
    return math.sqrt(max(float(d @ hm @ d), 0.0))


def _graph_path(frame: SplitFrame, ya, yb, k: int):
    nodes = np.vstack([ya, yb, frame.spatial])
    tree = cKDTree(nodes)
    kk = min(k + 1, len(nodes))
    dist, idx = tree.query(nodes, kk)
    rows, cols, vals = [], [], []
    hs = np.concatenate([[frame.local_frame(frame.level_point(ya))[3],
                          frame.local_frame(frame.level_point(yb))[3]], frame.induced_h])
    for a in range(len(nodes)):
        for b in np.atleast_1d(idx[a])[1:]:
            d = nodes[b] - nodes[a]
            hm = 0.5 * (hs[a] + hs[b])
            rows.append(a); cols.append(b); vals.append(math.sqrt(max(float(d @ hm @ d), 0.0)))
    A = csr_matrix((vals, (rows, cols)), shape=(len(nodes), len(nodes)))
    dist, pred = dijkstra(A, directed=False, indices=0, return_predecessors=True)
    if not np.isfinite(dist[1]):
        return None
    path = [1]
    while path[-1] != 0:
        path.append(pred[path[-1]])
    return nodes[path[::-1]]


def level_set_distance(frame: SplitFrame, ya, yb, k: int = 8, interior: int = 6) -> float:
    """Riemannian distance ``d_h`` between two points of ``S`` (spatial coordinates).

    A k-nearest-neighbour graph over the frame samples gives an initial path
    (Dijkstra with chord weights from ``h``); the polyline through ``interior``
    resampled nodes is then shortened by L-BFGS-B with the endpoints fixed and
    the nodes kept within the bounding box of the initial path (padded by a
    quarter of its extent).  Periodic coordinates are handled by taking the
    minimum over lifts of ``yb``; a lift is skipped when
    ``sqrt(min eig h) * |coordinate gap|`` already exceeds the best distance,
    with the eigenvalue bound taken over the frame samples.
    """
    chart = frame.chart
    ya = np.asarray(ya, dtype=float)
    yb = np.asarray(yb, dtype=float)
    lifts = [np.asarray(p)[1:] for p in chart.lifts(np.concatenate([[0.0], yb]), near=np.concatenate([[0.0], ya]))]
    lifts.sort(key=lambda t: float(np.linalg.norm(t - ya)))
    lam = float(np.linalg.eigvalsh(frame.induced_h).min()) if len(frame.points) else 0.0
    floor = math.sqrt(max(lam, 0.0))
    best = math.inf
    for target in lifts:
        if floor * float(np.linalg.norm(target - ya)) >= best:
            continue
        path = _graph_path(frame, ya, target, k) if len(frame.points) else None
        if path is None:
            path = np.vstack([ya, target])
        # resample to a fixed number of interior nodes along the graph path
        seg = np.linalg.norm(np.diff(path, axis=0), axis=1)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        if cum[-1] == 0:
            return 0.0
        s = np.linspace(0, cum[-1], interior + 2)
        init = np.stack([np.interp(s, cum, path[:, c]) for c in range(path.shape[1])], axis=1)
        lo, hi = init.min(axis=0), init.max(axis=0)
        pad = 0.25 * (hi - lo) + 1e-3
        bounds = [(a, b) for a, b in zip(np.tile(lo - pad, interior), np.tile(hi + pad, interior))]

        def length(z, init=init):
            P = np.vstack([init[0], z.reshape(-1, init.shape[1]), init[-1]])
            return sum(_chord(frame, P[j], P[j + 1]) for j in range(len(P) - 1))

        z0 = init[1:-1].ravel()
        graph_len = length(z0)
        res = minimize(length, z0, method="L-BFGS-B", bounds=bounds, options={"maxiter": 200})
        best = min(best, graph_len, float(res.fun))
    return best


@dataclass
class ProductTimesepReport:
    passed: bool
    measured: float
    formula: float
    deviation: float
    d_h: float


def product_timesep_check(frame: SplitFrame, sx, ty, tol: float = 1e-3) -> ProductTimesepReport:
    """Compare ``ell(E(s, x), E(t, y))`` with ``sqrt((t - s)^2 - d_h(x, y)^2)``.

    ``sx = (s, x)`` and ``ty = (t, y)`` with ``x, y`` spatial coordinates on
    ``S``; the formula is ``-inf`` when ``t - s < d_h``.
    """
    s, x = float(sx[0]), np.atleast_1d(np.asarray(sx[1], dtype=float))
    t, y = float(ty[0]), np.atleast_1d(np.asarray(ty[1], dtype=float))
    dh = level_set_distance(frame, x, y)
    formula = math.sqrt((t - s) ** 2 - dh ** 2) if t - s >= dh else NEG_INF
    p = splitting_map_y(frame, s, x)
    q = splitting_map_y(frame, t, y)
    measured = ell(frame.chart, p, q).value
    if formula == NEG_INF or measured == NEG_INF:
        ok = formula == measured
        dev = 0.0 if ok else math.inf
    else:
        dev = abs(measured - formula)
        ok = measured >= formula - tol and dev <= tol
    return ProductTimesepReport(bool(ok), measured, formula, dev, dh)


def level_value_defect(frame: SplitFrame, r_list, indices=None) -> float:
    """``max |b(E(r, x)) - r|`` over sampled ``r`` and frame points."""
    idx = range(len(frame.points)) if indices is None else indices
    return max(abs(frame.b(splitting_map(frame, r, frame.points[i])) - r)
               for i in idx for r in r_list)


def second_fundamental_form(frame: SplitFrame, i: int) -> np.ndarray:
    """``Hess b`` restricted to the tangent space of ``S`` at sample ``i``."""
    x = frame.points[i]
    db = frame.b.gradient(x, frame.h)
    H = frame.b.hessian(x, frame.h) - np.einsum("kij,k->ij", christoffel(frame.chart, x), db)
    T = frame.tangents[i]
    return T.T @ H @ T


def normal_transport_defect(frame: SplitFrame, i: int, r_list, dr: float = 1e-2) -> float:
    """``max |D N / dr|`` along ``r -> E(r, x_i)`` (covariant derivative of ``grad b``)."""
    x = frame.points[i]
    worst = 0.0
    for r in r_list:
        c0 = splitting_map(frame, r, x)
        cp = splitting_map(frame, r + dr, x)
        cm = splitting_map(frame, r - dr, x)
        Np = frame.local_frame(cp)[1]
        Nm = frame.local_frame(cm)[1]
        N0 = frame.local_frame(c0)[1]
        vel = (cp - cm) / (2 * dr)
        DN = (Np - Nm) / (2 * dr) + np.einsum("kij,i,j->k", christoffel(frame.chart, c0), vel, N0)
        worst = max(worst, float(np.linalg.norm(DN)))
    return worst
