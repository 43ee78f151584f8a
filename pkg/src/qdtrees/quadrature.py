"""Quadrature rules and branch-tracked integrals of sqrt(phi)."""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre


@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = roots_legendre(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def triangle_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Collapsed (Duffy) Gauss rule on the reference triangle.

    Returns barycentric coordinates of shape (m, 3) and weights summing to 1,
    so that ``area * sum(w * f(nodes))`` integrates f over any triangle.
    Exact for polynomials of total degree <= 2n - 1.
    """
    xj, wj = roots_jacobi(n, 1.0, 0.0)
    u = 0.5 * (xj + 1.0)
    wu = wj / 4.0
    v, wv = gauss_legendre(n)
    U, V = np.meshgrid(u, v, indexing="ij")
    W = np.outer(wu, wv)
    x = U.ravel()
    y = (V * (1.0 - U)).ravel()
    bary = np.column_stack([1.0 - x - y, x, y])
    w = W.ravel()
    return bary, w / w.sum()


def continue_branch(values: np.ndarray, ref: complex | np.ndarray) -> np.ndarray:
    """Flip signs along the last axis of square-root samples so they vary continuously.

    ``values`` holds +-sqrt samples ordered along a path; ``ref`` fixes the
    sign of the first sample.
    """
    out = np.array(values, dtype=complex, copy=True)
    prev = np.asarray(ref, dtype=complex)
    for k in range(out.shape[-1]):
        cur = out[..., k]
        flip = (cur * np.conj(prev)).real < 0
        cur = np.where(flip, -cur, cur)
        out[..., k] = cur
        prev = cur
    return out


def sqrt_integral_segment(phi, a, b, ref, n: int = 8):
    """Integrate sqrt(phi) dz along straight segments a -> b with branch tracking.

    ``a``, ``b`` and ``ref`` broadcast together; ``ref`` is the branch of
    sqrt(phi) at ``a``. Returns (integral, branch of sqrt(phi) at b).
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    t, w = gauss_legendre(n)
    dz = b - a
    pts = a[..., None] + dz[..., None] * t
    s = np.sqrt(phi(pts).astype(complex))
    s = continue_branch(s, ref)
    sb = np.sqrt(complex(1) * phi(b))
    last = s[..., -1]
    sb = np.where((sb * np.conj(last)).real < 0, -sb, sb)
    return (s * w).sum(axis=-1) * dz, sb


def sqrt_integral_polyline(phi, points, ref, n: int = 6, substeps: int = 1):
    """Integrate sqrt(phi) dz along a polyline, tracking the branch.

    Returns (cumulative integral at each vertex, branch at each vertex). The
    first vertex has integral 0 and branch aligned with ``ref``.
    """
    pts = np.asarray(points, dtype=complex)
    m = len(pts)
    cum = np.zeros(m, dtype=complex)
    br = np.zeros(m, dtype=complex)
    s0 = np.sqrt(complex(phi(pts[0])))
    if (s0 * np.conj(ref)).real < 0:
        s0 = -s0
    br[0] = s0
    cur = s0
    total = 0j
    for k in range(m - 1):
        a, b = pts[k], pts[k + 1]
        for j in range(substeps):
            aa = a + (b - a) * j / substeps
            bb = a + (b - a) * (j + 1) / substeps
            val, cur = sqrt_integral_segment(phi, aa, bb, cur, n)
            total += complex(val)
            cur = complex(cur)
        cum[k + 1] = total
        br[k + 1] = cur
    return cum, br
