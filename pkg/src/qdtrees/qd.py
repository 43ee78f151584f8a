"""Polynomial quadratic differentials phi(z) dz^2 and their basic invariants."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import polynomial as P
from scipy import integrate, optimize

from .quadrature import gauss_legendre


@dataclass(frozen=True)
class PolynomialQD:
    """phi(z) dz^2 with phi(z) = sum_j coeffs[j] z**j (ascending order).

    Trailing zero coefficients are trimmed; the zero differential is kept as
    ``coeffs == (0,)`` and reports ``is_zero``.
    """

    coeffs: tuple

    def __init__(self, coeffs: Sequence[complex]):
        c = [complex(a) for a in coeffs] or [0j]
        while len(c) > 1 and c[-1] == 0:
            c.pop()
        object.__setattr__(self, "coeffs", tuple(c))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def is_zero(self) -> bool:
        return self.coeffs == (0j,)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.coeffs, dtype=complex)

    def __call__(self, z):
        return P.polyval(np.asarray(z, dtype=complex), self.array)

    def __neg__(self) -> "PolynomialQD":
        return PolynomialQD([-a for a in self.coeffs])

    def __sub__(self, other: "PolynomialQD") -> "PolynomialQD":
        return PolynomialQD(P.polysub(self.array, other.array))

    def scale(self, c: complex) -> "PolynomialQD":
        return PolynomialQD([c * a for a in self.coeffs])

    def derivative(self, m: int = 1) -> "PolynomialQD":
        if self.degree < m:
            return PolynomialQD([0])
        return PolynomialQD(P.polyder(self.array, m))

    def coeff_scale(self) -> float:
        return float(np.max(np.abs(self.array)))

    def to_json(self) -> dict:
        return {"coeffs": [[a.real, a.imag] for a in self.coeffs]}

    @classmethod
    def from_json(cls, doc: dict | str) -> "PolynomialQD":
        if isinstance(doc, str):
            doc = json.loads(doc)
        return cls([complex(re, im) for re, im in doc["coeffs"]])

    @classmethod
    def parse(cls, text: str) -> "PolynomialQD":
        """Parse the inline form ``"re,im;re,im;..."`` (ascending coefficients)."""
        coeffs = []
        for part in text.strip().split(";"):
            if not part.strip():
                continue
            re, _, im = part.partition(",")
            coeffs.append(complex(float(re), float(im or 0.0)))
        if not coeffs:
            raise ValueError("empty coefficient list")
        return cls(coeffs)

    def __repr__(self) -> str:
        return f"PolynomialQD({list(self.coeffs)!r})"


def eval_qd(phi: PolynomialQD, z):
    return phi(z)


@dataclass(frozen=True)
class ZeroSet:
    zeros: tuple  # of (location, multiplicity)

    @property
    def locations(self) -> np.ndarray:
        return np.array([z for z, _ in self.zeros], dtype=complex)

    @property
    def multiplicities(self) -> list[int]:
        return [m for _, m in self.zeros]

    def __len__(self) -> int:
        return len(self.zeros)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.locations))) if self.zeros else 0.0


def find_zeros(phi: PolynomialQD, tol: float = 1e-3) -> ZeroSet:
    """Zeros of phi with multiplicity.

    Companion-matrix eigenvalues, clustered within ``tol * (1 + max|root|)``.
    Simple roots are Newton-polished; a cluster of m roots is replaced by its
    centroid, which is accurate to rounding even though individual members
    are perturbed by O(eps**(1/m)).
    """
    if phi.degree < 1:
        return ZeroSet(())
    roots = np.roots(phi.array[::-1])
    radius = tol * (1.0 + np.max(np.abs(roots)))
    unused = list(range(len(roots)))
    clusters = []
    while unused:
        i = unused.pop(0)
        members = [i]
        changed = True
        while changed:
            changed = False
            for j in list(unused):
                if np.min(np.abs(roots[j] - roots[members])) < radius:
                    members.append(j)
                    unused.remove(j)
                    changed = True
        clusters.append(members)
    dphi = phi.derivative()
    out = []
    for members in clusters:
        z0 = complex(np.mean(roots[members]))
        m = len(members)
        if m == 1:
            for _ in range(20):
                d = dphi(z0)
                if d == 0:
                    break
                step = phi(z0) / d
                z0 -= step
                if abs(step) < 1e-15 * (1 + abs(z0)):
                    break
        out.append((complex(z0), m))
    out.sort(key=lambda zm: (round(zm[0].real, 12), round(zm[0].imag, 12)))
    return ZeroSet(tuple(out))


def local_leading_coeff(phi: PolynomialQD, z0: complex, m: int) -> complex:
    """c with phi(z) ~ c (z - z0)^m near a zero of multiplicity m."""
    from math import factorial

    return complex(phi.derivative(m)(z0)) / factorial(m)


@dataclass(frozen=True)
class PathPolyline:
    points: tuple
    closed: bool = False

    def __init__(self, points: Sequence[complex], closed: bool = False):
        pts = tuple(complex(p) for p in points)
        if len(pts) < 2:
            raise ValueError("a path needs at least 2 points")
        if any(a == b for a, b in zip(pts, pts[1:])):
            raise ValueError("consecutive path points must be distinct")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "closed", closed)

    def segments(self):
        pts = list(self.points)
        if self.closed and pts[0] != pts[-1]:
            pts.append(pts[0])
        return list(zip(pts, pts[1:]))


def _measure_integrand(phi, kind):
    part = np.real if kind == "vertical" else np.imag

    def f(t, a, b):
        z = a + (b - a) * t
        return abs(part(np.sqrt(complex(phi(z))) * (b - a)))

    return f


def transverse_measure(phi: PolynomialQD, path: PathPolyline, kind: str = "vertical",
                       epsabs: float = 1e-12) -> float:
    """Integral of |Re sqrt(phi) dz| (vertical) or |Im sqrt(phi) dz| (horizontal) along a path.

    The absolute value makes the integrand independent of the sign of the
    square root, so no branch bookkeeping is needed here.
    """
    if kind not in ("vertical", "horizontal"):
        raise ValueError(f"unknown kind {kind!r}")
    f = _measure_integrand(phi, kind)
    total = 0.0
    for a, b in path.segments():
        val, _ = integrate.quad(f, 0.0, 1.0, args=(a, b), epsabs=epsabs, epsrel=1e-12, limit=400)
        total += val
    return total


@dataclass(frozen=True)
class QuadratureSpec:
    n_radial: int = 32
    n_angular: int = 64
    abs_tol: float = 1e-10
    max_refine: int = 6


def _polar_l1(f, radius, nr, nt):
    r, wr = gauss_legendre(nr)
    r = r * radius
    wr = wr * radius
    th = np.arange(nt) * (2 * np.pi / nt)
    z = r[:, None] * np.exp(1j * th)[None, :]
    vals = np.abs(f(z))
    return float(((vals * r[:, None]) * wr[:, None]).sum() * (2 * np.pi / nt))


def l1_norm(phi, radius: float = 1.0, quadrature: QuadratureSpec | None = None) -> float:
    """Integral of |phi| over the disk of the given radius.

    Polar tensor rule (Gauss-Legendre in r, trapezoid in angle) refined by
    doubling until successive values agree to ``abs_tol``. ``phi`` may be any
    vectorized callable.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    q = quadrature or QuadratureSpec()
    nr, nt = q.n_radial, q.n_angular
    prev = _polar_l1(phi, radius, nr, nt)
    for _ in range(q.max_refine):
        nr, nt = 2 * nr, 2 * nt
        cur = _polar_l1(phi, radius, nr, nt)
        if abs(cur - prev) <= q.abs_tol:
            return cur
        prev = cur
    return prev


def l1_norm_box(phi, xmin: float, xmax: float, ymin: float, ymax: float, n: int = 64) -> float:
    """Integral of |phi| over an axis-aligned box (tensor Gauss-Legendre)."""
    x, wx = gauss_legendre(n)
    y, wy = gauss_legendre(n)
    X = xmin + (xmax - xmin) * x
    Y = ymin + (ymax - ymin) * y
    vals = np.abs(phi(X[:, None] + 1j * Y[None, :]))
    return float((vals * np.outer(wx, wy)).sum() * (xmax - xmin) * (ymax - ymin))


def hyperbolic_density(z) -> float | np.ndarray:
    """Curvature -1 density 4 / (1 - |z|^2)^2 on the unit disk."""
    a = np.abs(np.asarray(z))
    if np.any(a >= 1):
        raise ValueError("hyperbolic density is defined only for |z| < 1")
    out = 4.0 / (1.0 - a**2) ** 2
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class GridSpec:
    n_radial: int = 400
    n_angular: int = 256
    boundary_depth: float = 1e-6
    polish: bool = True


def bers_norm(phi, grid: GridSpec | None = None) -> float:
    """sup over the unit disk of |phi(z)| / rho(z), rho the hyperbolic density.

    Grid search on a polar grid clustered towards the boundary, then a local
    Nelder-Mead polish from the best grid point.
    """
    g = grid or GridSpec()
    if isinstance(phi, PolynomialQD) and phi.is_zero:
        return 0.0
    half = g.n_radial // 2
    r_in = np.linspace(0.0, 0.9, half)
    r_out = 1.0 - np.geomspace(0.1, g.boundary_depth, g.n_radial - half)
    r = np.concatenate([r_in, r_out])
    th = np.arange(g.n_angular) * (2 * np.pi / g.n_angular)
    z = r[:, None] * np.exp(1j * th)[None, :]
    w = (1.0 - np.abs(z) ** 2) ** 2 / 4.0
    vals = np.abs(phi(z)) * w
    i, j = np.unravel_index(np.argmax(vals), vals.shape)
    best = float(vals[i, j])
    if not g.polish:
        return best

    def neg(p):
        zz = complex(p[0], p[1])
        if abs(zz) >= 1:
            return 0.0
        return -float(abs(phi(zz)) * (1 - abs(zz) ** 2) ** 2 / 4.0)

    res = optimize.minimize(neg, [z[i, j].real, z[i, j].imag], method="Nelder-Mead",
                            options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 4000})
    return max(best, -float(res.fun))


def cayley(z, direction: str = "disk->halfplane"):
    """Cayley transform C(z) = i(1+z)/(1-z) from the disk to the upper half-plane, or its inverse."""
    z = np.asarray(z, dtype=complex)
    if direction == "disk->halfplane":
        if np.any(z == 1):
            raise ValueError("z = 1 is sent to infinity")
        out = 1j * (1 + z) / (1 - z)
    elif direction == "halfplane->disk":
        if np.any(z == -1j):
            raise ValueError("w = -i is excluded")
        out = (z - 1j) / (z + 1j)
    else:
        raise ValueError(f"unknown direction {direction!r}")
    return complex(out) if out.ndim == 0 else out


def cayley_derivative(z):
    z = np.asarray(z, dtype=complex)
    return 2j / (1 - z) ** 2


@dataclass
class ConformalMetric:
    """A conformal metric density(w) |dw|^2."""

    density: Callable
    tag: str = "custom"

    def __call__(self, w):
        return self.density(w)

    @classmethod
    def flat(cls, scale: float = 1.0) -> "ConformalMetric":
        return cls(lambda w: np.full(np.shape(w), float(scale)), "flat")

    @classmethod
    def hyperbolic(cls) -> "ConformalMetric":
        return cls(hyperbolic_density, "hyperbolic")

    @classmethod
    def cayley_pullback(cls, literal: bool = False) -> "ConformalMetric":
        """Pullback of the flat half-plane metric by the Cayley transform.

        ``literal=True`` gives |C'(z)| |dz|^2 instead of the true pullback
        |C'(z)|^2 |dz|^2.
        """
        if literal:
            return cls(lambda w: np.abs(cayley_derivative(w)), "cayley-pullback-literal")
        return cls(lambda w: np.abs(cayley_derivative(w)) ** 2, "cayley-pullback")
