"""Scalar fields with finite-difference derivatives, bump test functions, quadrature."""
from __future__ import annotations

from typing import Callable, Optional

import numpy as np


class ScalarFieldSample:
    """A scalar function known by evaluation.

    Parameters
    ----------
    evaluator : callable
        ``f(x) -> float`` for one point, or ``f(X) -> (...)`` on stacks of
        points when ``vectorized`` is true.
    provenance : {"analytic", "busemann_limit", "grid"}
    h : float or array, optional
        Default finite-difference step (per axis).
    gradient_fn : callable, optional
        Exact differential, used instead of finite differences when given.
    """

    def __init__(self, evaluator: Callable, provenance: str = "analytic", h=1e-4,
                 vectorized: bool = False, gradient_fn: Optional[Callable] = None):
        if provenance not in ("analytic", "busemann_limit", "grid"):
            raise ValueError(f"unknown provenance {provenance!r}")
        self.evaluator = evaluator
        self.provenance = provenance
        self.h = h
        self.vectorized = vectorized
        self.gradient_fn = gradient_fn

    def __call__(self, x):
        return self.evaluator(np.asarray(x, dtype=float))

    def evaluate_many(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self.vectorized:
            return np.asarray(self.evaluator(X), dtype=float)
        flat = X.reshape(-1, X.shape[-1])
        return np.array([self.evaluator(p) for p in flat]).reshape(X.shape[:-1])

    def _steps(self, n, h):
        h = self.h if h is None else h
        return np.broadcast_to(np.asarray(h, dtype=float), (n,))

    def gradient(self, x, h=None) -> np.ndarray:
        """Central O(h^2) differential (or the exact one if supplied)."""
        x = np.asarray(x, dtype=float)
        if self.gradient_fn is not None and h is None:
            return np.asarray(self.gradient_fn(x), dtype=float)
        n = x.shape[-1]
        hh = self._steps(n, h)
        E = np.eye(n) * hh[:, None]
        pts = np.concatenate([x + E, x - E])
        vals = self.evaluate_many(pts)
        return (vals[:n] - vals[n:]) / (2 * hh)

    def hessian(self, x, h=None) -> np.ndarray:
        """Central O(h^2) Hessian in coordinates (9-point stencil in 2-D)."""
        x = np.asarray(x, dtype=float)
        n = x.shape[-1]
        hh = self._steps(n, h)
        E = np.eye(n) * hh[:, None]
        pts = [x]
        for k in range(n):
            pts += [x + E[k], x - E[k]]
        pairs = [(k, l) for k in range(n) for l in range(k + 1, n)]
        for k, l in pairs:
            pts += [x + E[k] + E[l], x + E[k] - E[l], x - E[k] + E[l], x - E[k] - E[l]]
        vals = self.evaluate_many(np.array(pts))
        f0 = vals[0]
        H = np.empty((n, n))
        for k in range(n):
            H[k, k] = (vals[1 + 2 * k] - 2 * f0 + vals[2 + 2 * k]) / hh[k] ** 2
        base = 1 + 2 * n
        for m, (k, l) in enumerate(pairs):
            pp, pm, mp, mm = vals[base + 4 * m: base + 4 * m + 4]
            H[k, l] = H[l, k] = (pp - pm - mp + mm) / (4 * hh[k] * hh[l])
        return H


class BumpTestFunction:
    """Nonnegative C^2 bump ``A * prod_k (1 - ((x_k - c_k)/R)^2)^3`` on the cube ``|x - c|_inf < R``."""

    def __init__(self, center, radius: float, amplitude: float = 1.0):
        self.center = np.asarray(center, dtype=float)
        if radius <= 0 or amplitude < 0:
            raise ValueError("radius must be positive and amplitude nonnegative")
        self.radius = float(radius)
        self.amplitude = float(amplitude)

    @property
    def support_box(self) -> np.ndarray:
        return np.stack([self.center - self.radius, self.center + self.radius], axis=1)

    def _factors(self, X):
        s = (np.asarray(X, dtype=float) - self.center) / self.radius
        inside = np.abs(s) < 1.0
        w = np.where(inside, 1.0 - s * s, 0.0)
        return s, w

    def __call__(self, X) -> np.ndarray:
        _, w = self._factors(X)
        return self.amplitude * np.prod(w ** 3, axis=-1)

    def gradient(self, X) -> np.ndarray:
        s, w = self._factors(X)
        f = w ** 3
        df = -6.0 * s * w ** 2 / self.radius
        n = f.shape[-1]
        out = np.empty(f.shape)
        for k in range(n):
            others = np.prod(np.delete(f, k, axis=-1), axis=-1)
            out[..., k] = df[..., k] * others
        return self.amplitude * out


def gauss_legendre_box(box, order: int = 8, cells: int = 1):
    """Tensor-product Gauss-Legendre nodes and weights on an axis-aligned box.

    Each axis is split into ``cells`` equal cells with ``order`` nodes each.
    """
    box = np.asarray(box, dtype=float)
    n = box.shape[0]
    t, w = np.polynomial.legendre.leggauss(order)
    axes, wts = [], []
    for k in range(n):
        lo, hi = box[k]
        edges = np.linspace(lo, hi, cells + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[:-1] + edges[1:])
        axes.append((mid[:, None] + half[:, None] * t[None]).ravel())
        wts.append((half[:, None] * w[None]).ravel())
    mesh = np.meshgrid(*axes, indexing="ij")
    wmesh = np.meshgrid(*wts, indexing="ij")
    X = np.stack([m.ravel() for m in mesh], axis=-1)
    W = np.prod(np.stack([m.ravel() for m in wmesh], axis=-1), axis=-1)
    return X, W


def gauss_legendre_unit(order: int = 16):
    """Gauss-Legendre nodes and weights on ``[0, 1]``."""
    t, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (t + 1.0), 0.5 * w
