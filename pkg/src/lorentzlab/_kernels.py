"""Hot numeric kernels with a numba path and a pure-numpy path.

Every kernel below exists twice: a loop form that numba compiles with
``@njit`` and a vectorised numpy form.  The active set is chosen once, at
import time, from the ``LORENTZLAB_NUMBA`` environment variable (``0`` /
``off`` disables numba).  If numba cannot be imported the numpy set is used
regardless.  Both sets are importable explicitly (``NUMBA_KERNELS`` and
``NUMPY_KERNELS``) so tests and the benchmark can compare them directly.
"""
from __future__ import annotations

import os
import types

import numpy as np

try:  # pragma: no cover - exercised implicitly
    import numba
except ImportError:  # pragma: no cover
    numba = None


def _flag_enabled() -> bool:
    raw = os.environ.get("LORENTZLAB_NUMBA", "1").strip().lower()
    return raw not in ("0", "false", "no", "off")


HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and _flag_enabled()

# integrator status codes
OK, EXITED, UNDERFLOW, MAX_STEPS = 0, 1, 2, 3


def jit_dynamic(fn):
    """Compile a generated Christoffel kernel when the numba path is active."""
    if USE_NUMBA:
        return numba.njit(GAMMA_SIGNATURE)(fn)
    return fn


def _njit(fn):
    if HAVE_NUMBA:
        return numba.njit(cache=True)(fn)
    return fn


# ---------------------------------------------------------------------------
# Levi-Civita connection from metric and first derivatives
# ---------------------------------------------------------------------------

def _levi_civita_loops(g, dg, out):
    # dg[k, i, j] = d_k g_ij ; out[k, i, j] = Gamma^k_ij
    n = g.shape[0]
    ginv = np.linalg.inv(g)
    out[:] = 0.0
    for i in range(n):
        for j in range(i, n):
            for l in range(n):
                low = 0.5 * (dg[i, l, j] + dg[j, l, i] - dg[l, i, j])
                if low == 0.0:
                    continue
                for k in range(n):
                    out[k, i, j] += ginv[k, l] * low
    for k in range(n):
        for i in range(n):
            for j in range(i):
                out[k, i, j] = out[k, j, i]


def levi_civita_numpy(ginv, dg):
    """Batched Christoffel symbols; ``ginv`` (..., n, n), ``dg`` (..., n, n, n)."""
    low = 0.5 * (np.swapaxes(dg, -3, -2) + np.moveaxis(dg, -3, -1) - dg)
    # low[..., l, i, j] = 1/2 (d_i g_lj + d_j g_li - d_l g_ij)
    gam = np.einsum("...kl,...lij->...kij", ginv, low)
    return 0.5 * (gam + np.swapaxes(gam, -1, -2))


# ---------------------------------------------------------------------------
# Geodesic right-hand side and Dormand-Prince 5(4) integrator
# ---------------------------------------------------------------------------

def _accel_loops(gamma, x, v, G, out):
    gamma(x, G)
    n = x.shape[0]
    for k in range(n):
        acc = 0.0
        for i in range(n):
            vi = v[i]
            if vi == 0.0:
                continue
            for j in range(n):
                acc += G[k, i, j] * vi * v[j]
        out[k] = -acc


def _accel_numpy(gamma, x, v, G, out):
    gamma(x, G)
    out[:] = -np.einsum("kij,i,j->k", G, v, v)


# Dormand-Prince coefficients
_C2, _C3, _C4, _C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0
_A21 = 1.0 / 5.0
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
_A61, _A62, _A63, _A64, _A65 = (9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0,
                                49.0 / 176.0, -5103.0 / 18656.0)
_B1, _B3, _B4, _B5, _B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
_E1, _E3, _E4, _E5, _E6, _E7 = (71.0 / 57600.0, -71.0 / 16695.0, 71.0 / 1920.0,
                                -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0)


def _box_step(v, lo, hi):
    # a step never crosses more than a quarter of the box along any axis
    out = np.inf
    for i in range(v.shape[0]):
        if v[i] != 0.0:
            c = 0.25 * (hi[i] - lo[i]) / abs(v[i])
            if c < out:
                out = c
    return out


def _dopri5_loops(gamma, x0, v0, s_end, rtol, atol, lo, hi, max_steps):
    """Integrate x'' = -Gamma(x)(x', x') from s=0 to s_end.

    Returns (s, X, V, A, count, status); rows beyond ``count`` are junk.
    Integration stops early when the state leaves the box [lo, hi].
    """
    n = x0.shape[0]
    S = np.empty(max_steps + 1)
    X = np.empty((max_steps + 1, n))
    V = np.empty((max_steps + 1, n))
    A = np.empty((max_steps + 1, n))
    G = np.empty((n, n, n))
    x = x0.copy()
    v = v0.copy()
    a = np.empty(n)
    _accel(gamma, x, v, G, a)
    S[0] = 0.0
    X[0] = x
    V[0] = v
    A[0] = a
    count = 1
    s = 0.0
    # velocity scale sets the first step
    vmag = 0.0
    amag = 0.0
    for i in range(n):
        vmag += v[i] * v[i]
        amag += a[i] * a[i]
    vmag = np.sqrt(vmag)
    amag = np.sqrt(amag)
    h = 0.1 * s_end
    h_max = _box_step(v, lo, hi)
    if h_max < h:
        h = 0.2 * h_max
    if amag > 0.0:
        h2 = 0.1 * np.sqrt((1.0 + vmag) / amag)
        if h2 < h:
            h = h2
    h_min = 1e-14 * max(s_end, 1.0)
    k1x = v.copy()
    k1v = a.copy()
    k2x = np.empty(n); k2v = np.empty(n)
    k3x = np.empty(n); k3v = np.empty(n)
    k4x = np.empty(n); k4v = np.empty(n)
    k5x = np.empty(n); k5v = np.empty(n)
    k6x = np.empty(n); k6v = np.empty(n)
    k7x = np.empty(n); k7v = np.empty(n)
    xs = np.empty(n); vs = np.empty(n)
    xn = np.empty(n); vn = np.empty(n)
    status = 0
    while s < s_end:
        if count > max_steps:
            status = 3
            break
        if s + h > s_end:
            h = s_end - s
        xs[:] = x + h * _A21 * k1x
        vs[:] = v + h * _A21 * k1v
        k2x[:] = vs
        _accel(gamma, xs, vs, G, k2v)
        xs[:] = x + h * (_A31 * k1x + _A32 * k2x)
        vs[:] = v + h * (_A31 * k1v + _A32 * k2v)
        k3x[:] = vs
        _accel(gamma, xs, vs, G, k3v)
        xs[:] = x + h * (_A41 * k1x + _A42 * k2x + _A43 * k3x)
        vs[:] = v + h * (_A41 * k1v + _A42 * k2v + _A43 * k3v)
        k4x[:] = vs
        _accel(gamma, xs, vs, G, k4v)
        xs[:] = x + h * (_A51 * k1x + _A52 * k2x + _A53 * k3x + _A54 * k4x)
        vs[:] = v + h * (_A51 * k1v + _A52 * k2v + _A53 * k3v + _A54 * k4v)
        k5x[:] = vs
        _accel(gamma, xs, vs, G, k5v)
        xs[:] = x + h * (_A61 * k1x + _A62 * k2x + _A63 * k3x + _A64 * k4x + _A65 * k5x)
        vs[:] = v + h * (_A61 * k1v + _A62 * k2v + _A63 * k3v + _A64 * k4v + _A65 * k5v)
        k6x[:] = vs
        _accel(gamma, xs, vs, G, k6v)
        xn[:] = x + h * (_B1 * k1x + _B3 * k3x + _B4 * k4x + _B5 * k5x + _B6 * k6x)
        vn[:] = v + h * (_B1 * k1v + _B3 * k3v + _B4 * k4v + _B5 * k5v + _B6 * k6v)
        k7x[:] = vn
        _accel(gamma, xn, vn, G, k7v)
        err = 0.0
        for i in range(n):
            ex = h * (_E1 * k1x[i] + _E3 * k3x[i] + _E4 * k4x[i] + _E5 * k5x[i]
                      + _E6 * k6x[i] + _E7 * k7x[i])
            ev = h * (_E1 * k1v[i] + _E3 * k3v[i] + _E4 * k4v[i] + _E5 * k5v[i]
                      + _E6 * k6v[i] + _E7 * k7v[i])
            sx = atol + rtol * max(abs(x[i]), abs(xn[i]))
            sv = atol + rtol * max(abs(v[i]), abs(vn[i]))
            err += (ex / sx) ** 2 + (ev / sv) ** 2
        err = np.sqrt(err / (2 * n))
        if not np.isfinite(err):
            err = 1e10
        if err <= 1.0:
            s += h
            x[:] = xn
            v[:] = vn
            k1x[:] = k7x
            k1v[:] = k7v
            S[count] = s
            X[count] = x
            V[count] = v
            A[count] = k7v
            count += 1
            inside = True
            for i in range(n):
                if x[i] < lo[i] or x[i] > hi[i]:
                    inside = False
            if not inside:
                count -= 1
                status = 1
                break
            fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
            h *= fac
            h_max = _box_step(v, lo, hi)
            if h > h_max:
                h = h_max
        else:
            h *= max(0.2, 0.9 * err ** -0.2)
            if h < h_min:
                status = 2
                break
    return S, X, V, A, count, status


def _with_accel(fn, accel):
    """Copy of ``fn`` whose global ``_accel`` is bound to ``accel``."""
    glb = dict(fn.__globals__)
    glb["_accel"] = accel
    glb["_box_step"] = _box_step
    return types.FunctionType(fn.__code__, glb, fn.__name__, fn.__defaults__, fn.__closure__)


def _action_terms_loops(G, d, eps_null):
    N = d.shape[0]
    n = d.shape[1]
    q = np.empty(N)
    lengths = np.empty(N)
    for c in range(N):
        acc = 0.0
        nrm = 0.0
        for i in range(n):
            nrm += d[c, i] * d[c, i]
            for j in range(n):
                acc += G[c, i, j] * d[c, i] * d[c, j]
        q[c] = acc
        if acc <= eps_null * eps_null * nrm:
            lengths[c] = 0.0
        else:
            lengths[c] = np.sqrt(acc)
    return lengths, q


def _action_terms_numpy(G, d, eps_null):
    q = np.einsum("cij,ci,cj->c", G, d, d)
    nrm = np.einsum("ci,ci->c", d, d)
    lengths = np.where(q > eps_null * eps_null * nrm, np.sqrt(np.abs(q)), 0.0)
    return lengths, q


# ---------------------------------------------------------------------------
# Frozen-coefficient bracket integrated over the segment b- -> b+
# ---------------------------------------------------------------------------

def _frozen_loops(dbp, dbm, ginv, sqrtg, tau, p, tnodes, tweights):
    N = dbp.shape[0]
    n = dbp.shape[1]
    a = np.zeros((N, n, n))
    bad = np.full(N, -1)
    up = np.empty(n)
    db = np.empty(n)
    for c in range(N):
        for m in range(tnodes.shape[0]):
            t = tnodes[m]
            for i in range(n):
                db[i] = dbm[c, i] + t * (dbp[c, i] - dbm[c, i])
            q = 0.0
            fut = 0.0
            for i in range(n):
                acc = 0.0
                for j in range(n):
                    acc += ginv[c, i, j] * db[j]
                up[i] = acc
                q += acc * db[i]
                fut += tau[c, i] * acc
            if q <= 0.0 or fut <= 0.0:
                bad[c] = m
                continue
            scale = tweights[m] * q ** (0.5 * p - 1.0)
            for i in range(n):
                for j in range(n):
                    a[c, i, j] += scale * ((2.0 - p) * up[i] * up[j] / q - ginv[c, i, j])
        for i in range(n):
            for j in range(n):
                a[c, i, j] *= sqrtg[c]
    return a, bad


def _frozen_numpy(dbp, dbm, ginv, sqrtg, tau, p, tnodes, tweights):
    t = tnodes[:, None, None]
    db = dbm[None] + t * (dbp - dbm)[None]                      # (T, N, n)
    up = np.einsum("cij,tcj->tci", ginv, db)
    q = np.einsum("tci,tci->tc", up, db)
    fut = np.einsum("ci,tci->tc", tau, up)
    ok = (q > 0.0) & (fut > 0.0)
    qs = np.where(ok, q, 1.0)
    scale = np.where(ok, tweights[:, None] * qs ** (0.5 * p - 1.0), 0.0)
    bracket = (2.0 - p) * np.einsum("tci,tcj->tcij", up, up) / qs[..., None, None] - ginv[None]
    a = np.einsum("tc,tcij->cij", scale, bracket) * sqrtg[:, None, None]
    bad = np.full(dbp.shape[0], -1)
    rows, cols = np.nonzero(~ok.T)
    bad[rows] = cols  # last offending t index per node
    return a, bad


# ---------------------------------------------------------------------------
# Divergence-form operator -d_j(a^ij d_i u) on a tensor grid
# ---------------------------------------------------------------------------

def _fv_assemble_loops(a, shape, spacing):
    n = shape.shape[0]
    total = 1
    for k in range(n):
        total *= shape[k]
    strides = np.empty(n, dtype=np.int64)
    acc = 1
    for k in range(n - 1, -1, -1):
        strides[k] = acc
        acc *= shape[k]
    cap = total * (1 + 2 * n + 6 * (n * (n - 1)) // 2) + 1
    rows = np.empty(cap, dtype=np.int64)
    cols = np.empty(cap, dtype=np.int64)
    vals = np.empty(cap)
    nnz = 0
    mi = np.empty(n, dtype=np.int64)
    for node in range(total):
        rem = node
        interior = True
        for k in range(n):
            mi[k] = rem // strides[k]
            rem -= mi[k] * strides[k]
            if mi[k] == 0 or mi[k] == shape[k] - 1:
                interior = False
        if not interior:
            rows[nnz] = node; cols[nnz] = node; vals[nnz] = 1.0; nnz += 1
            continue
        diag = 0.0
        for k in range(n):
            h2 = spacing[k] * spacing[k]
            akk = a[node, k, k]
            for sgn in (-1, 1):
                nb = node + sgn * strides[k]
                anb = a[nb, k, k]
                face = 2.0 * akk * anb / (akk + anb) if akk + anb != 0.0 else 0.0
                rows[nnz] = node; cols[nnz] = nb; vals[nnz] = -face / h2; nnz += 1
                diag += face / h2
        for k in range(n):
            for l in range(k + 1, n):
                akl = 0.5 * (a[node, k, l] + a[node, l, k])
                if akl == 0.0:
                    continue
                c = abs(akl) / (spacing[k] * spacing[l])
                sl = strides[l] if akl > 0.0 else -strides[l]
                # diagonal pair along (+k, +sl) and (-k, -sl)
                rows[nnz] = node; cols[nnz] = node + strides[k] + sl; vals[nnz] = -c; nnz += 1
                rows[nnz] = node; cols[nnz] = node - strides[k] - sl; vals[nnz] = -c; nnz += 1
                rows[nnz] = node; cols[nnz] = node + strides[k]; vals[nnz] = c; nnz += 1
                rows[nnz] = node; cols[nnz] = node - strides[k]; vals[nnz] = c; nnz += 1
                rows[nnz] = node; cols[nnz] = node + sl; vals[nnz] = c; nnz += 1
                rows[nnz] = node; cols[nnz] = node - sl; vals[nnz] = c; nnz += 1
                diag -= 2.0 * c
        rows[nnz] = node; cols[nnz] = node; vals[nnz] = diag; nnz += 1
    return rows[:nnz], cols[:nnz], vals[:nnz]


def _fv_assemble_numpy(a, shape, spacing):
    shape = tuple(int(s) for s in shape)
    n = len(shape)
    total = int(np.prod(shape))
    idx = np.arange(total).reshape(shape)
    strides = np.array([int(np.prod(shape[k + 1:])) for k in range(n)], dtype=np.int64)
    interior_mask = np.ones(shape, dtype=bool)
    for k in range(n):
        sl = [slice(None)] * n
        sl[k] = 0
        interior_mask[tuple(sl)] = False
        sl[k] = shape[k] - 1
        interior_mask[tuple(sl)] = False
    inner = idx[interior_mask]
    bnd = idx[~interior_mask]
    rows = [bnd]
    cols = [bnd]
    vals = [np.ones(bnd.size)]
    diag = np.zeros(inner.size)
    for k in range(n):
        h2 = spacing[k] ** 2
        akk = a[inner, k, k]
        for sgn in (-1, 1):
            nb = inner + sgn * strides[k]
            anb = a[nb, k, k]
            den = akk + anb
            face = np.where(den != 0.0, 2.0 * akk * anb / np.where(den != 0.0, den, 1.0), 0.0)
            rows.append(inner); cols.append(nb); vals.append(-face / h2)
            diag += face / h2
    for k in range(n):
        for l in range(k + 1, n):
            akl = 0.5 * (a[inner, k, l] + a[inner, l, k])
            nz = akl != 0.0
            if not np.any(nz):
                continue
            node = inner[nz]
            c = np.abs(akl[nz]) / (spacing[k] * spacing[l])
            sl = np.where(akl[nz] > 0.0, strides[l], -strides[l])
            for off, sign in ((strides[k] + sl, -1.0), (-strides[k] - sl, -1.0),
                              (strides[k], 1.0), (-strides[k], 1.0), (sl, 1.0), (-sl, 1.0)):
                rows.append(node); cols.append(node + off); vals.append(sign * c)
            d = np.zeros(inner.size)
            d[nz] = -2.0 * c
            diag += d
    rows.append(inner); cols.append(inner); vals.append(diag)
    return (np.concatenate(rows).astype(np.int64), np.concatenate(cols).astype(np.int64),
            np.concatenate(vals))


# ---------------------------------------------------------------------------
# kernel tables
# ---------------------------------------------------------------------------

NUMPY_KERNELS = {
    "dopri5": _with_accel(_dopri5_loops, _accel_numpy),
    "action_terms": _action_terms_numpy,
    "frozen_bracket": _frozen_numpy,
    "fv_assemble": _fv_assemble_numpy,
    "levi_civita_scalar": _levi_civita_loops,
}

if HAVE_NUMBA:
    # the Christoffel kernel enters as a first-class function of fixed type so
    # that one cached compilation of the integrator serves every chart
    _nt = numba.types
    _arr1 = _nt.float64[::1]
    _arr2 = _nt.float64[:, ::1]
    GAMMA_SIGNATURE = _nt.void(_arr1, _nt.float64[:, :, ::1])
    _dopri5_sig = _nt.Tuple((_arr1, _arr2, _arr2, _arr2, _nt.int64, _nt.int64))(
        _nt.FunctionType(GAMMA_SIGNATURE), _arr1, _arr1, _nt.float64, _nt.float64,
        _nt.float64, _arr1, _arr1, _nt.int64)
    _accel = _njit(_accel_loops)
    _box_step = _njit(_box_step)
    NUMBA_KERNELS = {
        "dopri5": numba.njit(_dopri5_sig, cache=True)(_dopri5_loops),
        "action_terms": _njit(_action_terms_loops),
        "frozen_bracket": _njit(_frozen_loops),
        "fv_assemble": _njit(_fv_assemble_loops),
        "levi_civita_scalar": _njit(_levi_civita_loops),
    }
else:  # pragma: no cover
    NUMBA_KERNELS = dict(NUMPY_KERNELS)

ACTIVE = NUMBA_KERNELS if USE_NUMBA else NUMPY_KERNELS

dopri5 = ACTIVE["dopri5"]
action_terms = ACTIVE["action_terms"]
frozen_bracket = ACTIVE["frozen_bracket"]
fv_assemble = ACTIVE["fv_assemble"]
levi_civita_scalar = ACTIVE["levi_civita_scalar"]


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
