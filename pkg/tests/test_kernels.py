"""The numba and numpy kernel sets must agree."""
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from lorentzlab import _kernels
from lorentzlab.fields import gauss_legendre_unit

pytestmark = pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba not installed")

NB, NP = _kernels.NUMBA_KERNELS, _kernels.NUMPY_KERNELS


def test_levi_civita(rng):
    g = np.diag([1.0, -2.0, -3.0]) + 0.05 * rng.normal(size=(3, 3))
    g = 0.5 * (g + g.T)
    dg = rng.normal(size=(3, 3, 3))
    dg = 0.5 * (dg + np.swapaxes(dg, 1, 2))
    a, b = np.zeros((3, 3, 3)), np.zeros((3, 3, 3))
    NB["levi_civita_scalar"](g, dg, a)
    NP["levi_civita_scalar"](g, dg, b)
    np.testing.assert_allclose(a, b, atol=1e-13)
    np.testing.assert_allclose(a, _kernels.levi_civita_numpy(np.linalg.inv(g), dg), atol=1e-12)


def test_action_terms(rng):
    G = np.broadcast_to(np.diag([1.0, -1.0]), (50, 2, 2)).copy()
    d = np.column_stack([rng.uniform(0.5, 1, 50), rng.uniform(-1.2, 1.2, 50)])
    la, fa = NB["action_terms"](G, d, 1e-10)
    lb, fb = NP["action_terms"](G, d, 1e-10)
    np.testing.assert_allclose(la, lb, atol=1e-14)
    np.testing.assert_array_equal(fa, fb)


@pytest.mark.parametrize("p", [-1.0, 0.5])
def test_frozen_bracket(rng, p):
    N = 40
    dbp = np.column_stack([1 + 0.1 * rng.random(N), 0.2 * rng.normal(size=N)])
    dbm = np.column_stack([1 + 0.1 * rng.random(N), 0.2 * rng.normal(size=N)])
    dbm[7] = [0.1, 1.0]  # spacelike at one end: must be flagged by both
    ginv = np.broadcast_to(np.diag([1.0, -1.0]), (N, 2, 2)).copy()
    sqrtg = np.ones(N)
    tau = np.tile([1.0, 0.0], (N, 1))
    tn, tw = gauss_legendre_unit(16)
    a1, bad1 = NB["frozen_bracket"](dbp, dbm, ginv, sqrtg, tau, p, tn, tw)
    a2, bad2 = NP["frozen_bracket"](dbp, dbm, ginv, sqrtg, tau, p, tn, tw)
    ok = bad1 < 0
    np.testing.assert_array_equal(ok, bad2 < 0)
    assert not ok[7]
    np.testing.assert_allclose(a1[ok], a2[ok], atol=1e-13)


def test_fv_assemble(rng):
    shape = np.array([6, 5], dtype=np.int64)
    a = np.tile(np.diag([0.5, 1.0]), (30, 1, 1))
    a[:, 0, 1] = a[:, 1, 0] = 0.1 * rng.normal(size=30)
    spacing = np.array([0.1, 0.2])

    def dense(parts):
        r, c, v = parts
        M = np.zeros((30, 30))
        np.add.at(M, (r, c), v)
        return M

    np.testing.assert_allclose(dense(NB["fv_assemble"](a, shape, spacing)),
                               dense(NP["fv_assemble"](a, shape, spacing)), atol=1e-12)


def test_dopri5(ds):
    lo, hi = ds.domain_box[:, 0].copy(), ds.domain_box[:, 1].copy()
    x0, v0 = np.array([0.1, 0.0]), np.array([1.0, 0.4])
    outs = []
    for table in (NB, NP):
        S, X, V, A, count, code = table["dopri5"](ds.gamma_kernel, x0, v0, 1.5, 1e-10, 1e-10,
                                                  lo, hi, 100000)
        outs.append((X[count - 1], code))
    np.testing.assert_allclose(outs[0][0], outs[1][0], atol=1e-12)
    assert outs[0][1] == outs[1][1] == _kernels.OK


@pytest.mark.parametrize("flag, backend", [("0", "numpy"), ("off", "numpy"), ("1", "numba")])
def test_env_flag_selects_backend(flag, backend):
    code = ("import json; from lorentzlab import _kernels, get_chart, ell_shooting;"
            "v = ell_shooting(get_chart('desitter2d'), [0, 0], [1.5, 0.8]).value;"
            "print(json.dumps([_kernels.backend(), v]))")
    env = dict(os.environ, LORENTZLAB_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True).stdout
    name, value = json.loads(out.strip().splitlines()[-1])
    assert name == backend
    # closed form acosh(cosh(1.5) cos(0.8)) from the hyperboloid embedding
    assert value == pytest.approx(1.077541010020132, abs=1e-8)
