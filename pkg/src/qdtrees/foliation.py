"""Vertical and horizontal trajectories of a polynomial differential.

Everything is phrased for the vertical foliation of an effective differential
``psi``; the horizontal foliation of phi is the vertical foliation of -phi.
"""
from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .qd import PolynomialQD, ZeroSet, find_zeros, local_leading_coeff
from .quadrature import gauss_legendre

KINDS = ("vertical", "horizontal")


def effective(phi: PolynomialQD, kind: str) -> PolynomialQD:
    if kind == "vertical":
        return phi
    if kind == "horizontal":
        return -phi
    raise ValueError(f"unknown kind {kind!r}")


def _horner(coeffs):
    rev = list(reversed(coeffs))

    def f(z):
        acc = 0j
        for a in rev:
            acc = acc * z + a
        return acc

    return f


def _normalize_line(v: complex) -> complex:
    if v.real < 0 or (v.real == 0 and v.imag < 0):
        return -v
    return v


def direction_field(phi: PolynomialQD, z: complex, kind: str = "vertical") -> complex:
    """Unit vector spanning the leaf through z (sign normalized to Re v >= 0)."""
    val = complex(effective(phi, kind)(z))
    if val == 0:
        raise ValueError("direction field is undefined at a zero of phi")
    s = cmath.sqrt(val)
    v = 1j * s.conjugate() / abs(s)
    return _normalize_line(v)


def guard_radius(zeros: ZeroSet) -> float:
    return 1e-3 * (1.0 + zeros.max_abs())


def default_clip_radius(zeros: ZeroSet) -> float:
    return 2.0 + 2.0 * zeros.max_abs()


@dataclass
class TrajectorySegment:
    points: np.ndarray
    kind: str
    start_kind: str = "regular"  # "regular" or "separatrix"
    zero_id: int | None = None
    prong: int | None = None
    end_kind: str = "clip"  # "clip", "zero", "truncated"
    end_zero: int | None = None
    clipped_at: float | None = None

    @property
    def truncated(self) -> bool:
        return self.end_kind == "truncated"

    def arclength(self) -> float:
        return float(np.abs(np.diff(self.points)).sum())

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "start_kind": self.start_kind,
            "zero_id": self.zero_id,
            "prong": self.prong,
            "end_kind": self.end_kind,
            "end_zero": self.end_zero,
            "clipped_at": self.clipped_at,
            "points": [[round(p.real, 12), round(p.imag, 12)] for p in self.points],
        }


# Dormand-Prince 5(4) tableau
_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_DP_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40)


class LeafTracer:
    """Integrates the unit line field of the vertical foliation of ``psi``.

    After each accepted step the new point is pushed back onto the leaf with a
    Newton correction on Re W, W = integral of sqrt(psi), so the polyline has
    zero transverse measure up to quadrature error regardless of step size.
    """

    def __init__(self, psi: PolynomialQD, zeros: ZeroSet | None = None, rtol: float = 1e-9):
        self.psi = psi
        self.f = _horner(list(psi.coeffs))
        self.zeros = zeros if zeros is not None else find_zeros(psi)
        self.zlocs = [z for z, _ in self.zeros.zeros]
        self.mults = [m for _, m in self.zeros.zeros]
        self.guard = guard_radius(self.zeros)
        self.rtol = rtol
        self._gl = gauss_legendre(8)

    def sqrt_at(self, z: complex, ref: complex) -> complex:
        s = cmath.sqrt(self.f(z))
        return -s if (s * ref.conjugate()).real < 0 else s

    def field(self, z: complex, ref: complex) -> complex:
        val = self.f(z)
        if val == 0:
            return ref
        s = cmath.sqrt(val)
        v = 1j * s.conjugate() / abs(s)
        return -v if (v * ref.conjugate()).real < 0 else v

    def chord_integral(self, a: complex, b: complex, s_a: complex) -> tuple[complex, complex]:
        t, w = self._gl
        dz = b - a
        total = 0j
        cur = s_a
        for tk, wk in zip(t, w):
            cur = self.sqrt_at(a + dz * tk, cur)
            total += wk * cur
        return total * dz, self.sqrt_at(b, cur)

    def nearest_zero(self, z: complex) -> tuple[int | None, float]:
        best, dist = None, math.inf
        for k, z0 in enumerate(self.zlocs):
            d = abs(z - z0)
            if d < dist:
                best, dist = k, d
        return best, dist

    def _project_to_leaf(self, z: complex, s: complex, excess: float) -> complex:
        return z - excess / abs(s) * (s.conjugate() / abs(s))

    def trace(self, z0: complex, d0: complex, s0: complex, level: float, w0: float,
              step: float, clip_radius: float, max_steps: int,
              skip_zero: int | None = None):
        """Trace one direction. Returns (points, end_kind, end_zero).

        ``w0`` is Re W at z0 for the branch ``s0``; ``level`` is the target Re W.
        """
        pts = [z0]
        z, d, s, rew = z0, d0, s0, w0
        h = min(step, 0.2 * max(self.nearest_zero(z)[1], self.guard))
        inside_skip = skip_zero is not None
        for _ in range(max_steps):
            k_near, dist = self.nearest_zero(z)
            if inside_skip and k_near == skip_zero and dist > 2 * self.guard:
                inside_skip = False
            hmax = step
            if dist < math.inf:
                hmax = min(step, 0.2 * max(dist, 0.2 * self.guard))
            h = min(h, hmax)
            ks = []
            ref = d
            for i in range(7):
                zi = z + h * sum(a * kk for a, kk in zip(_DP_A[i], ks))
                ks.append(self.field(zi, ref))
            z5 = z + h * sum(b * kk for b, kk in zip(_DP_B5, ks))
            z4 = z + h * sum(b * kk for b, kk in zip(_DP_B4, ks))
            err = abs(z5 - z4)
            tol = self.rtol * max(h, 1e-12) + 1e-14
            if err > tol and h > 1e-10:
                h *= max(0.2, 0.9 * (tol / err) ** 0.2)
                continue
            znew = z5
            dW, snew = self.chord_integral(z, znew, s)
            rnew = rew + dW.real
            for _ in range(2):
                excess = rnew - level
                if abs(excess) < 1e-15:
                    break
                znew = self._project_to_leaf(znew, snew, excess)
                dW, snew = self.chord_integral(z, znew, s)
                rnew = rew + dW.real
            dnew = self.field(znew, ks[-1])
            # leaving the clip disk
            if abs(znew) >= clip_radius:
                zc = self._clip(z, znew, clip_radius)
                zc, _ = self._circle_correct(zc, z, s, rew, level)
                pts.append(zc)
                return pts, "clip", None
            # entering a zero's guard disk
            k_new, dist_new = self.nearest_zero(znew)
            if k_new is not None and dist_new < self.guard and not (inside_skip and k_new == skip_zero):
                zk = self.zlocs[k_new]
                dz_end, _ = self.chord_integral(znew, zk, snew)
                gap = abs(rnew + dz_end.real - level)
                m = self.mults[k_new]
                c = abs(local_leading_coeff(self.psi, zk, m))
                scale = math.sqrt(c) * self.guard ** ((m + 2) / 2)
                if gap < 1e-2 * scale:
                    pts.append(znew)
                    pts.append(zk)
                    return pts, "zero", k_new
            pts.append(znew)
            z, d, s, rew = znew, dnew, snew, rnew
            if err > 0:
                h = min(hmax, h * min(5.0, 0.9 * (tol / err) ** 0.2))
            else:
                h = min(hmax, 5 * h)
        return pts, "truncated", None

    @staticmethod
    def _clip(a: complex, b: complex, R: float) -> complex:
        # solve |a + t (b - a)| = R for t in [0, 1]
        d = b - a
        A = abs(d) ** 2
        B = 2 * (a.conjugate() * d).real
        C = abs(a) ** 2 - R * R
        disc = max(B * B - 4 * A * C, 0.0)
        t = (-B + math.sqrt(disc)) / (2 * A)
        return a + min(max(t, 0.0), 1.0) * d

    def _circle_correct(self, zc: complex, zprev: complex, sprev: complex, rprev: float, level: float):
        """Slide zc along its circle until Re W matches the leaf level."""
        R = abs(zc)
        for _ in range(4):
            dW, sc = self.chord_integral(zprev, zc, sprev)
            excess = rprev + dW.real - level
            rate = (sc * 1j * zc).real
            if abs(excess) < 1e-15 or rate == 0:
                break
            zc = zc * cmath.exp(-1j * excess / rate)
            zc = zc / abs(zc) * R
        return zc, excess


def _prong_start(tracer: LeafTracer, z0: complex, m: int, j: int, rho: float):
    """Start point on prong j at distance rho from a zero, with Re W(start) = Re W(z0)."""
    psi = tracer.psi
    c = local_leading_coeff(psi, z0, m)
    theta = (math.pi - cmath.phase(c) + 2 * math.pi * j) / (m + 2)
    u, w = gauss_legendre(24)

    def integral(th):
        p = z0 + rho * cmath.exp(1j * th)
        dz = p - z0
        # zeta = z0 + dz u^2 removes the root singularity at the zero
        zeta = z0 + dz * u**2
        vals = np.sqrt(psi(zeta).astype(complex))
        # local model branch: sqrt(c) (zeta - z0)^(m/2)
        model = cmath.sqrt(c) * np.exp(0.5 * m * np.log(dz * u**2))
        vals = np.where((vals * np.conj(model)).real < 0, -vals, vals)
        val = complex((vals * 2 * u * w).sum() * dz)
        return val, complex(vals[-1]), p

    th = theta
    val, s_end, p = integral(th)
    for _ in range(6):
        if abs(val.real) < 1e-16:
            break
        h = 1e-7
        v2, _, _ = integral(th + h)
        der = (v2.real - val.real) / h
        if der == 0:
            break
        th -= val.real / der
        val, s_end, p = integral(th)
    s_p = tracer.sqrt_at(p, s_end)
    return p, cmath.exp(1j * th), s_p, val.real


def trace_trajectory(phi: PolynomialQD, z0: complex, kind: str = "vertical", step: float = 0.05,
                     clip_radius: float | None = None, max_steps: int = 20000,
                     prong: tuple[int, int] | None = None, zeros: ZeroSet | None = None,
                     rtol: float = 1e-9) -> TrajectorySegment:
    """Trace the leaf through z0, or a separatrix when ``prong=(zero_id, j)``.

    Regular leaves are traced in both directions and joined; separatrices go
    outward from the prong.
    """
    psi = effective(phi, kind)
    zeros = zeros if zeros is not None else find_zeros(psi)
    tracer = LeafTracer(psi, zeros, rtol)
    R = clip_radius if clip_radius is not None else default_clip_radius(zeros)
    if prong is not None:
        zid, j = prong
        zc, m = zeros.zeros[zid]
        p, d0, s0, w0 = _prong_start(tracer, zc, m, j, tracer.guard)
        pts, end, end_zero = tracer.trace(p, d0, s0, 0.0, w0, step, R, max_steps, skip_zero=zid)
        return TrajectorySegment(np.array([zc] + pts), kind, "separatrix", zid, j, end, end_zero,
                                 R if end == "clip" else None)
    z0 = complex(z0)
    if psi(z0) == 0:
        raise ValueError("z0 is a zero of phi; pass prong=(zero_id, j)")
    s0 = cmath.sqrt(complex(psi(z0)))
    v = direction_field(phi, z0, kind)
    fwd, end_f, ez_f = tracer.trace(z0, v, s0, 0.0, 0.0, step, R, max_steps)
    bwd, end_b, ez_b = tracer.trace(z0, -v, s0, 0.0, 0.0, step, R, max_steps)
    pts = list(reversed(bwd)) + fwd[1:]
    order = {"truncated": 0, "zero": 1, "clip": 2}
    end = min(end_f, end_b, key=order.get)
    ez = ez_f if end_f == end else ez_b
    return TrajectorySegment(np.array(pts), kind, "regular", None, None, end, ez,
                             R if end == "clip" else None)


@dataclass
class CriticalGraph:
    phi: PolynomialQD
    kind: str
    zeros: ZeroSet
    separatrices: list = field(default_factory=list)
    clip_radius: float = 0.0

    def by_zero(self, zid: int) -> list:
        return [s for s in self.separatrices if s.zero_id == zid]

    def saddle_connections(self) -> list[tuple[int, int]]:
        return sorted({tuple(sorted((s.zero_id, s.end_zero))) for s in self.separatrices
                       if s.end_kind == "zero"})

    @property
    def complete(self) -> bool:
        return not any(s.truncated for s in self.separatrices)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "clip_radius": self.clip_radius,
            "zeros": [{"re": z.real, "im": z.imag, "multiplicity": m} for z, m in self.zeros.zeros],
            "separatrices": [s.to_json() for s in self.separatrices],
        }


class AmbiguousGraphError(RuntimeError):
    pass


def critical_graph(phi: PolynomialQD, kind: str = "vertical", clip_radius: float | None = None,
                   step: float = 0.05, zeros: ZeroSet | None = None,
                   max_steps: int = 20000) -> CriticalGraph:
    """Trace all m+2 separatrices from every zero of multiplicity m."""
    psi = effective(phi, kind)
    zeros = zeros if zeros is not None else find_zeros(psi)
    R = clip_radius if clip_radius is not None else default_clip_radius(zeros)
    if zeros.zeros and R <= 2 * zeros.max_abs():
        raise ValueError("clip radius must exceed twice the largest zero modulus")
    seps = []
    for zid, (_, m) in enumerate(zeros.zeros):
        for j in range(m + 2):
            seps.append(trace_trajectory(phi, 0, kind, step, R, max_steps, prong=(zid, j), zeros=zeros))
    g = CriticalGraph(phi, kind, zeros, seps, R)
    _check_saddles(g)
    return g


def _check_saddles(g: CriticalGraph) -> None:
    # a saddle connection must be seen from both of its ends
    ends = [(s.zero_id, s.end_zero) for s in g.separatrices if s.end_kind == "zero"]
    for a, b in ends:
        if ends.count((a, b)) != ends.count((b, a)):
            raise AmbiguousGraphError(f"saddle connection {a}-{b} found from one end only")
    for s in g.separatrices:
        if s.end_kind == "clip":
            continue
        if s.end_kind == "zero" and s.end_zero == s.zero_id:
            raise AmbiguousGraphError("separatrix returned to its own zero")


def sample_leaves(phi: PolynomialQD, kind: str, n: int, radius: float, clip_radius: float,
                  step: float = 0.05) -> list[TrajectorySegment]:
    """Regular leaves through an evenly spaced set of seed points (for pictures)."""
    psi = effective(phi, kind)
    zeros = find_zeros(psi)
    g = guard_radius(zeros)
    out = []
    xs = np.linspace(-radius, radius, n)
    for x in xs:
        for y in xs:
            z = complex(x, y)
            if abs(z) > radius or (len(zeros) and np.min(np.abs(zeros.locations - z)) < 10 * g):
                continue
            out.append(trace_trajectory(phi, z, kind, step, clip_radius, 4000, zeros=zeros))
    return out


def segments_to_json(segs) -> str:
    return json.dumps([s.to_json() for s in segs], sort_keys=True)
