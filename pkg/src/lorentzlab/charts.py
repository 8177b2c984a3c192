"""Chart construction from symbolic metric expressions.

Metrics are written as sympy expressions in the chart coordinates.  From
these we derive exact first and second derivatives, vectorised numpy
evaluators, and a scalar Christoffel kernel (generated source, compiled with
numba when that backend is active) for the geodesic integrator.
"""
from __future__ import annotations

import functools
import json
import math
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import sympy as sp
from sympy.parsing.sympy_parser import convert_xor, parse_expr, standard_transformations
from sympy.printing.pycode import pycode

from . import _kernels
from .errors import ConfigError
from .metric import MetricChart

ALLOWED_FUNCTIONS = {
    "sin": sp.sin, "cos": sp.cos, "sinh": sp.sinh, "cosh": sp.cosh, "tanh": sp.tanh,
    "exp": sp.exp, "log": sp.log, "sqrt": sp.sqrt, "pi": sp.pi,
}


def _vectorise(symbols, exprs, shape):
    """Numpy evaluator ``(..., n) -> (..., *shape)`` for a flat list of expressions."""
    fn = sp.lambdify(symbols, list(exprs), modules="numpy", cse=True)
    n = len(symbols)

    def evaluate(X):
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != n:
            raise ValueError(f"expected trailing dimension {n}, got {X.shape}")
        vals = fn(*(X[..., k] for k in range(n)))
        if X.ndim == 1:
            return np.array(vals, dtype=float).reshape(shape)
        base = X.shape[:-1]
        out = np.empty(base + (len(vals),))
        for m, v in enumerate(vals):
            out[..., m] = np.broadcast_to(np.asarray(v, dtype=float), base)
        return out.reshape(base + tuple(shape))

    return evaluate


def christoffel_symbolic(symbols, g):
    """``Gamma[k][i][j]`` as sympy expressions."""
    n = len(symbols)
    ginv = g.inv() if any(g[i, j] != 0 for i in range(n) for j in range(n) if i != j) \
        else sp.diag(*[1 / g[i, i] for i in range(n)])
    dg = [g.diff(s) for s in symbols]
    gam = [[[0] * n for _ in range(n)] for _ in range(n)]
    for k in range(n):
        for i in range(n):
            for j in range(i, n):
                e = sum(ginv[k, l] * (dg[i][l, j] + dg[j][l, i] - dg[l][i, j])
                        for l in range(n)) / 2
                gam[k][i][j] = gam[k][j][i] = sp.simplify(e) if n <= 3 else e
    return gam


def _gamma_source(symbols, gam):
    """Source of ``gamma(x, out)`` filling ``out[k, i, j]`` at one point."""
    n = len(symbols)
    plain = [sp.Symbol(f"x_{k}") for k in range(n)]
    index = [(k, i, j) for k in range(n) for i in range(n) for j in range(i, n)]
    flat = [sp.sympify(gam[k][i][j]).subs(dict(zip(symbols, plain)), simultaneous=True)
            for k, i, j in index]
    reps, reduced = sp.cse(flat, symbols=sp.numbered_symbols("c_"))
    lines = ["def gamma(x, out):"]
    lines += [f"    x_{k} = x[{k}]" for k in range(n)]
    for sym, e in reps:
        lines.append(f"    {sym} = {pycode(e, fully_qualified_modules=True)}")
    for (k, i, j), e in zip(index, reduced):
        code = pycode(sp.Float(e) if e.is_number else e, fully_qualified_modules=True)
        lines.append(f"    out[{k}, {i}, {j}] = {code}")
        if i != j:
            lines.append(f"    out[{k}, {j}, {i}] = out[{k}, {i}, {j}]")
    return "\n".join(lines) + "\n"


def compile_gamma_kernel(symbols, g):
    src = _gamma_source(symbols, christoffel_symbolic(symbols, g))
    namespace = {"math": math, "np": np}
    exec(compile(src, "<gamma-kernel>", "exec"), namespace)
    return _kernels.jit_dynamic(namespace["gamma"]), _kernels.USE_NUMBA


def symbolic_chart(name: str, coords: Sequence[str], metric, time_orientation, domain, *,
                   periods=None, strong_energy: Optional[bool] = None,
                   spec: Optional[dict] = None, contractible_periods: bool = False) -> MetricChart:
    """Build a :class:`MetricChart` from sympy expressions.

    ``metric`` is an n x n nested sequence of expressions (symmetrised on
    input), ``time_orientation`` a length-n sequence.
    """
    syms = sp.symbols(list(coords), real=True)
    syms = list(syms) if isinstance(syms, (list, tuple)) else [syms]
    n = len(syms)
    local = dict(zip(coords, syms))
    g = sp.Matrix(n, n, lambda i, j: sp.sympify(metric[i][j], locals=local))
    g = (g + g.T) / 2
    dg = [g.diff(s) for s in syms]
    d2g = [[dgk.diff(s) for dgk in dg] for s in syms]
    tau = [sp.sympify(e, locals=local) for e in time_orientation]
    flat = all(sp.simplify(e) == 0 for d in dg for e in d)

    g_fn = _vectorise(syms, list(g), (n, n))
    dg_fn = _vectorise(syms, [e for d in dg for e in d], (n, n, n))
    d2g_fn = _vectorise(syms, [e for row in d2g for d in row for e in d], (n, n, n, n))
    tau_fn = _vectorise(syms, tau, (n,))
    gamma, jitted = compile_gamma_kernel(syms, g)
    return MetricChart(name, n, g_fn, tau_fn, domain, dg_fn=dg_fn, d2g_fn=d2g_fn,
                       gamma_kernel=gamma, gamma_jitted=jitted, periods=periods, flat=flat,
                       strong_energy=strong_energy, coordinates=list(coords), spec=spec,
                       contractible_periods=contractible_periods)


# ---------------------------------------------------------------------------
# built-in charts
# ---------------------------------------------------------------------------

TWO_PI = 2.0 * math.pi


@functools.lru_cache(maxsize=None)
def minkowski(n: int = 2, extent: float = 500.0) -> MetricChart:
    """Minkowski space ``dt^2 - sum dx_k^2`` on a large cube."""
    coords = ["t"] + [f"x{k}" for k in range(1, n)]
    metric = [[(1 if i == j == 0 else -1 if i == j else 0) for j in range(n)] for i in range(n)]
    tau = [1] + [0] * (n - 1)
    return symbolic_chart(f"minkowski{n}d", coords, metric, tau, [[-extent, extent]] * n,
                          strong_energy=True)


@functools.lru_cache(maxsize=None)
def flat_torus_product(n: int = 2, circumference: float = TWO_PI,
                       t_extent: float = 500.0) -> MetricChart:
    """``R x T^{n-1}`` with the flat metric; spatial coordinates are periodic.

    The box covers three periods per spatial axis so that the lifts needed
    for shortest-arc searches stay inside the chart.
    """
    coords = ["t"] + [f"theta{k}" for k in range(1, n)]
    metric = [[(1 if i == j == 0 else -1 if i == j else 0) for j in range(n)] for i in range(n)]
    tau = [1] + [0] * (n - 1)
    half = 1.5 * circumference
    box = [[-t_extent, t_extent]] + [[-half, half]] * (n - 1)
    name = "product_r_s1" if n == 2 else f"product_r_t{n - 1}"
    return symbolic_chart(name, coords, metric, tau, box,
                          periods=[None] + [circumference] * (n - 1), strong_energy=True)


@functools.lru_cache(maxsize=None)
def sphere_product(radius: float = 1.0, t_extent: float = 500.0) -> MetricChart:
    """``R x S^2(radius)`` in polar coordinates, away from the poles."""
    R = sp.nsimplify(radius)
    t, th, ph = sp.symbols("t theta phi", real=True)
    metric = [[1, 0, 0], [0, -R ** 2, 0], [0, 0, -R ** 2 * sp.sin(th) ** 2]]
    box = [[-t_extent, t_extent], [0.2, math.pi - 0.2], [-3 * math.pi, 3 * math.pi]]
    return symbolic_chart("product_r_s2", ["t", "theta", "phi"], metric, [1, 0, 0], box,
                          periods=[None, None, TWO_PI], strong_energy=True,
                          contractible_periods=True)


@functools.lru_cache(maxsize=None)
def desitter2d(t_extent: float = 8.0) -> MetricChart:
    """Two-dimensional de Sitter space ``dt^2 - cosh(t)^2 dtheta^2``."""
    t, th = sp.symbols("t theta", real=True)
    metric = [[1, 0], [0, -sp.cosh(t) ** 2]]
    box = [[-t_extent, t_extent], [-3.5, 3.5]]
    return symbolic_chart("desitter2d", ["t", "theta"], metric, [1, 0], box,
                          periods=[None, TWO_PI], strong_energy=False)


BUILTINS = {
    "minkowski2d": lambda: minkowski(2),
    "minkowski3d": lambda: minkowski(3),
    "minkowski4d": lambda: minkowski(4),
    "product_r_s1": lambda: flat_torus_product(2),
    "product_r_t2": lambda: flat_torus_product(3),
    "product_r_s2": lambda: sphere_product(1.0),
    "desitter2d": lambda: desitter2d(),
}


# ---------------------------------------------------------------------------
# metric-spec files
# ---------------------------------------------------------------------------

_TRANSFORMS = standard_transformations + (convert_xor,)


def _parse(text, local, where):
    if isinstance(text, (int, float)):
        return sp.nsimplify(text) if float(text).is_integer() else sp.Float(text)
    if not isinstance(text, str):
        raise ConfigError(f"{where}: expected expression string, got {type(text).__name__}")
    try:
        expr = parse_expr(text, local_dict=dict(local, **ALLOWED_FUNCTIONS),
                          global_dict={"Integer": sp.Integer, "Float": sp.Float,
                                       "Rational": sp.Rational, "Symbol": sp.Symbol},
                          transformations=_TRANSFORMS)
    except Exception as exc:  # sympy raises a zoo of types here
        raise ConfigError(f"{where}: cannot parse {text!r}: {exc}") from exc
    unknown = {s.name for s in expr.free_symbols} - set(local)
    if unknown:
        raise ConfigError(f"{where}: unknown symbols {sorted(unknown)} in {text!r}")
    bad = [f for f in expr.atoms(sp.Function)
           if type(f).__name__.lower() not in ALLOWED_FUNCTIONS]
    if bad:
        raise ConfigError(f"{where}: unsupported functions {sorted(map(str, bad))}")
    return expr


def chart_from_spec(spec: dict, source: str = "<spec>") -> MetricChart:
    """Build a chart from a parsed metric-spec mapping."""
    for key in ("name", "dimension", "coordinates", "metric", "time_orientation", "domain"):
        if key not in spec:
            raise ConfigError(f"{source}: missing field '{key}'")
    n = spec["dimension"]
    if not isinstance(n, int) or n < 2:
        raise ConfigError(f"{source}: field 'dimension' must be an integer >= 2")
    coords = spec["coordinates"]
    if len(coords) != n or len(set(coords)) != n:
        raise ConfigError(f"{source}: field 'coordinates' must list {n} distinct names")
    if coords and any(c in ALLOWED_FUNCTIONS for c in coords):
        raise ConfigError(f"{source}: coordinate names clash with function names")
    local = {c: sp.Symbol(c, real=True) for c in coords}
    M = spec["metric"]
    if len(M) != n or any(len(row) != n for row in M):
        raise ConfigError(f"{source}: field 'metric' must be {n}x{n}")
    exprs = [[_parse(M[i][j], local, f"{source}: metric[{i}][{j}]") for j in range(n)]
             for i in range(n)]
    for i in range(n):
        for j in range(i):
            if sp.simplify(exprs[i][j] - exprs[j][i]) != 0:
                raise ConfigError(f"{source}: metric[{i}][{j}] != metric[{j}][{i}]")
    tau = spec["time_orientation"]
    if len(tau) != n:
        raise ConfigError(f"{source}: field 'time_orientation' must have {n} entries")
    tau = [_parse(e, local, f"{source}: time_orientation[{k}]") for k, e in enumerate(tau)]
    dom = spec["domain"]
    try:
        box = np.asarray(dom, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: field 'domain' is not numeric") from exc
    if box.shape != (n, 2) or np.any(box[:, 0] >= box[:, 1]):
        raise ConfigError(f"{source}: field 'domain' must be {n} pairs [lo, hi] with lo < hi")
    periods = spec.get("periods")
    if periods is not None and len(periods) != n:
        raise ConfigError(f"{source}: field 'periods' must have {n} entries")
    return symbolic_chart(str(spec["name"]), coords, exprs, tau, box.tolist(),
                          periods=periods, spec=spec)


def load_chart_file(path) -> MetricChart:
    path = Path(path)
    try:
        spec = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read metric-spec file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(spec, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return chart_from_spec(spec, str(path))


def get_chart(name_or_path) -> MetricChart:
    """Resolve a built-in chart name or a metric-spec JSON path."""
    if isinstance(name_or_path, MetricChart):
        return name_or_path
    key = str(name_or_path)
    if key in BUILTINS:
        return BUILTINS[key]()
    if key.endswith(".json") or Path(key).exists():
        return load_chart_file(key)
    raise ConfigError(f"unknown chart {key!r}; built-ins are {sorted(BUILTINS)}")
