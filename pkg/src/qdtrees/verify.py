"""Numerical checks of the inequalities and identities relating quadratic differentials,
leaf-space projections and quasiconformal deformations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .maps import beltrami_of, ks_energy, plane_map, reich_strebel_sides, rs_density, tree_map
from .mesh import DiskMesh, build_mesh, build_rect_mesh
from .qd import PolynomialQD, cayley_derivative, l1_norm, l1_norm_box
from .quadrature import gauss_legendre, triangle_rule
from .tree import build_tree


# compactly supported deformations --------------------------------------------

def _bump_profile(s):
    """exp(1 - 1/(1 - s)) on s < 1 and its derivative; 1 at s = 0, smooth, zero for s >= 1."""
    s = np.asarray(s, dtype=float)
    inside = s < 1
    si = np.where(inside, s, 0.0)
    b = np.where(inside, np.exp(1.0 - 1.0 / (1.0 - si)), 0.0)
    db = np.where(inside, -b / (1.0 - si) ** 2, 0.0)
    return b, db


@dataclass(frozen=True)
class Bump:
    """Displacement ``amplitude * beta(|z - center|^2 / radius^2)``."""

    center: complex
    radius: float
    amplitude: complex

    def parts(self, z):
        w = np.asarray(z, dtype=complex) - self.center
        b, db = _bump_profile(np.abs(w) ** 2 / self.radius**2)
        bz = db * np.conj(w) / self.radius**2
        bzb = db * w / self.radius**2
        return self.amplitude * b, self.amplitude * bz, self.amplitude * bzb


@dataclass(frozen=True)
class BumpMap:
    """The map z + sum of bump displacements."""

    bumps: tuple = ()

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        out = z.copy()
        for b in self.bumps:
            out = out + b.parts(z)[0]
        return out

    def wirtinger(self, z):
        z = np.asarray(z, dtype=complex)
        fz = np.ones_like(z)
        fzb = np.zeros_like(z)
        for b in self.bumps:
            _, bz, bzb = b.parts(z)
            fz = fz + bz
            fzb = fzb + bzb
        return fz, fzb

    def beltrami(self, z):
        fz, fzb = self.wirtinger(z)
        return fzb / fz

    def scaled(self, t: float) -> "BumpMap":
        return BumpMap(tuple(Bump(b.center, b.radius, t * b.amplitude) for b in self.bumps))

    def dilatation(self, n: int = 64) -> float:
        """sup |mu| sampled on polar grids over every support disk."""
        k = 0.0
        for b in self.bumps:
            z, _ = disk_rule(b.center, b.radius, n)
            k = max(k, float(np.max(np.abs(self.beltrami(z)), initial=0.0)))
        return k


def disk_rule(center: complex, radius: float, n: int = 64):
    """Polar tensor rule on a disk: Gauss-Legendre in r (weight r), trapezoid in angle."""
    x, w = gauss_legendre(n)
    r = radius * x
    th = 2 * np.pi * np.arange(2 * n) / (2 * n)
    z = center + r[:, None] * np.exp(1j * th[None, :])
    W = (w * r * radius)[:, None] * np.full(2 * n, 2 * np.pi / (2 * n))[None, :]
    return z.ravel(), W.ravel()


def random_qd(rng: np.random.Generator, max_degree: int = 6, degree: int | None = None) -> PolynomialQD:
    d = int(rng.integers(0, max_degree + 1)) if degree is None else degree
    c = rng.normal(size=d + 1) + 1j * rng.normal(size=d + 1)
    if abs(c[-1]) < 0.1:
        c[-1] += 0.5
    return PolynomialQD(tuple(c))


def _random_bump(rng, avoid=(), r_range=(0.3, 0.45), reach=0.95, amplitude=0.05, off_center=False, tries=500):
    for _ in range(tries):
        r = rng.uniform(*r_range)
        # off-centre first bumps leave room for a disjoint second one on the far side
        lo = r / (reach - r) if off_center else 0.0
        rho = (reach - r) * math.sqrt(rng.uniform(lo**2, 1.0))
        c = rho * complex(np.exp(2j * np.pi * rng.uniform()))
        if all(abs(c - o.center) >= r + o.radius for o in avoid):
            return Bump(c, r, amplitude * complex(np.exp(2j * np.pi * rng.uniform())))
    raise ValueError("could not place a bump with disjoint support")


def generate_boundary_matched_pair(seed: int, amplitude: float = 0.05, support=None, mesh: DiskMesh | None = None,
                                   disjoint: bool = True, k_max: float = 0.5):
    """Two identity-plus-bump self-maps of the unit disk, both the identity on the circle.

    ``support`` may fix (center, radius) of both bumps; otherwise they are
    random, with disjoint supports unless ``disjoint`` is False. Raises when
    the sampled dilatation reaches ``k_max`` or the PL maps fold a triangle.
    """
    rng = np.random.default_rng(seed)
    mesh = mesh or build_mesh(1.0, 0.05)
    if support is not None:
        c, r = support
        b1 = Bump(complex(c), float(r), amplitude * complex(np.exp(2j * np.pi * rng.uniform())))
        b2 = Bump(complex(c), float(r), amplitude * complex(np.exp(2j * np.pi * rng.uniform())))
    else:
        b1 = _random_bump(rng, amplitude=amplitude, off_center=disjoint)
        b2 = _random_bump(rng, avoid=(b1,) if disjoint else (), amplitude=amplitude)
    out = []
    for b in (b1, b2):
        f = BumpMap((b,)) if amplitude != 0 else BumpMap()
        if f.dilatation() >= k_max:
            raise ValueError(f"amplitude {amplitude} too large: dilatation reaches {k_max}")
        m = plane_map(mesh, f)
        if beltrami_of(m, mesh).k >= k_max:  # also raises on folded triangles
            raise ValueError(f"amplitude {amplitude} too large: mesh dilatation reaches {k_max}")
        out.append(m)
    return out[0], out[1]


# the inequality ----------------------------------------------------------------

def _describe(phi) -> str:
    if isinstance(phi, PolynomialQD):
        return ";".join(f"{c.real:.17g},{c.imag:.17g}" for c in phi.coeffs)
    return getattr(phi, "__name__", repr(phi))


@dataclass
class NmiReport:
    lhs: float
    rhs: float
    margin: float
    k: float
    phi: str
    seed: int | None = None

    def to_json(self) -> dict:
        return {"lhs": self.lhs, "rhs": self.rhs, "margin": self.margin, "k": self.k, "phi": self.phi,
                "seed": self.seed}


def triangle_integrals(f: Callable, mesh: DiskMesh, n: int = 8) -> np.ndarray:
    """Per-triangle integrals of f with a collapsed Gauss rule (exact to degree 2n - 1)."""
    bary, w = triangle_rule(n)
    p = mesh.vertices[mesh.triangles]
    z = p @ bary.T  # (nt, m)
    return mesh.areas * (f(z) @ w)


def check_nmi(phi, mu1, mu2, mesh: DiskMesh, seed: int | None = None, n: int | None = None) -> NmiReport:
    """Both sides of the inequality for the pair (phi, -phi) and per-triangle Beltrami fields.

    lhs = Re sum_i int phi_i mu_i / (1 - |mu_i|^2),
    rhs = sum_i int |phi_i| |mu_i|^2 / (1 - |mu_i|^2).
    Integrals of phi are exact for polynomials of degree below 2n.
    """
    m1 = getattr(mu1, "mu", mu1)
    m2 = getattr(mu2, "mu", mu2)
    k = float(max(np.max(np.abs(m1), initial=0), np.max(np.abs(m2), initial=0)))
    if k >= 1:
        raise ValueError("Beltrami coefficients must have sup norm below 1")
    if n is None:
        n = max(8, (phi.degree + 2) // 2 + 1) if isinstance(phi, PolynomialQD) else 10
    I_phi = triangle_integrals(phi, mesh, n)
    I_abs = triangle_integrals(lambda z: np.abs(phi(z)), mesh, max(n, 10))
    lhs = rhs = 0.0
    for sign, mu in ((1.0, m1), (-1.0, m2)):
        q = 1.0 - np.abs(mu) ** 2
        lhs += float(np.sum((sign * I_phi * mu / q).real))
        rhs += float(np.sum(I_abs * np.abs(mu) ** 2 / q))
    return NmiReport(lhs, rhs, rhs - lhs, k, _describe(phi), seed)


def nmi_trial(seed: int, mesh: DiskMesh, max_degree: int = 6, k_max: float = 0.5) -> NmiReport:
    rng = np.random.default_rng(seed)
    phi = random_qd(rng, max_degree)
    # k is about a / (1 - a) with a = 1.085 amp / r; amp <= 0.09 keeps k < 0.5 for r >= 0.3
    amp = float(rng.uniform(0.02, 0.09))
    f1, f2 = generate_boundary_matched_pair(int(rng.integers(2**31)), amp, mesh=mesh, k_max=k_max)
    return check_nmi(phi, beltrami_of(f1, mesh), beltrami_of(f2, mesh), mesh, seed=seed)


def continuity_constant(k: float) -> float:
    return (k + 2 * k * k) / (1 - k * k)


@dataclass
class ContinuityReport:
    margin_target: float
    margin_poly: float
    l1_distance: float
    k: float
    bound: float

    @property
    def holds(self) -> bool:
        return abs(self.margin_target - self.margin_poly) <= self.bound * (1 + 1e-9) + 1e-14


def continuity_trial(seed: int, mesh: DiskMesh, degree: int | None = None) -> ContinuityReport:
    """Margin for a non-polynomial differential against its Taylor truncation, same deformation pair."""
    rng = np.random.default_rng(seed)
    pole = (1.3 + rng.uniform(0, 1.5)) * complex(np.exp(2j * np.pi * rng.uniform()))
    a = complex(rng.normal(), rng.normal())
    base = random_qd(rng, 3)

    def target(z):
        return base(z) + a / (z - pole) ** 2

    deg = int(rng.integers(1, 9)) if degree is None else degree
    p, err = approximate_by_polynomial(target, deg)
    f1, f2 = generate_boundary_matched_pair(int(rng.integers(2**31)), float(rng.uniform(0.03, 0.09)), mesh=mesh)
    m1, m2 = beltrami_of(f1, mesh), beltrami_of(f2, mesh)
    r_t = check_nmi(target, m1, m2, mesh, n=12)
    r_p = check_nmi(p, m1, m2, mesh, n=12)
    k = max(m1.k, m2.k)
    return ContinuityReport(r_t.margin, r_p.margin, err, k, continuity_constant(k) * err)


# Reich-Strebel refinement study -----------------------------------------------------

@dataclass
class RSTable:
    levels: list
    direct: list
    rs_discrete: list
    reference: float | None
    errors: list
    slope: float | None

    def to_json(self) -> dict:
        return {"levels": self.levels, "direct": self.direct, "rs_discrete": self.rs_discrete,
                "reference": self.reference, "errors": self.errors, "slope": self.slope}


def rs_reference(hopf_fn: Callable, e_fn: Callable, f: BumpMap, n: int = 96) -> float:
    """Continuum integral side for analytic Hopf differential, energy density and deformation."""
    total = 0.0
    for b in f.bumps:
        z, w = disk_rule(b.center, b.radius, n)
        total += float(np.sum(w * rs_density(hopf_fn(z), e_fn(z), f.beltrami(z))))
    return total


def verify_reich_strebel(phi: PolynomialQD | None = None, f: BumpMap | None = None,
                         levels=(0.01, 0.005, 0.0025), kind: str = "vertical") -> RSTable:
    """Refinement study of the energy-change formula for a leaf-space projection and a bump.

    Each level meshes the bump's support disk, where all the change happens.
    The direct side (energy of the transported PL map) is compared with the
    continuum integral using Hopf = +-phi and e = 2|phi|.
    """
    phi = phi or PolynomialQD((0, 1))
    f = f or BumpMap((Bump(0.5, 0.3, 0.05 * (1 + 0.5j)),))
    tree = build_tree(phi, kind)
    sign = 1.0 if kind == "vertical" else -1.0
    if not f.bumps:
        return RSTable(list(levels), [0.0] * len(levels), [0.0] * len(levels), 0.0, [0.0] * len(levels), None)
    ref = rs_reference(lambda z: sign * phi(z), lambda z: 2 * np.abs(phi(z)), f)
    direct, rsd, errs = [], [], []
    for h in levels:
        d = r = 0.0
        for b in f.bumps:
            m = build_mesh(b.radius, h, center=b.center)
            dd, rr = reich_strebel_sides(tree_map(m, tree), plane_map(m, f), m)
            d += dd
            r += rr
        direct.append(d)
        rsd.append(r)
        errs.append(abs(d - ref) / abs(ref) if ref else abs(d))
    slope = None
    if len(errs) >= 2 and errs[-1] > 0 and errs[-2] > 0:
        slope = math.log(errs[-2] / errs[-1]) / math.log(levels[-2] / levels[-1])
    return RSTable(list(levels), direct, rsd, ref, errs, slope)


@dataclass
class AffineRSReport:
    direct: float
    rs_discrete: float
    closed_form: float

    @property
    def max_error(self) -> float:
        return max(abs(self.direct - self.closed_form), abs(self.rs_discrete - self.closed_form))


def _affine_matrix(a: complex, b: complex) -> np.ndarray:
    """Real 2x2 matrix of z -> a z + b conj(z)."""
    return np.array([[(a + b).real, (b - a).imag], [(a + b).imag, (a - b).real]])


def affine_reich_strebel(h_coeffs=(1.0, -0.25), f_coeffs=(1.1 + 0.2j, 0.3 - 0.1j), box=(-1.0, 1.0, 0.0, 1.0),
                         n: int = 8) -> AffineRSReport:
    """Affine h and f on a rectangle; every quantity is constant so all three values must agree."""
    ha, hb = h_coeffs
    fa, fb = f_coeffs
    if abs(fb) >= abs(fa):
        raise ValueError("f must be orientation preserving")
    mesh = build_rect_mesh(*box, n, n)
    h = plane_map(mesh, lambda z: ha * z + hb * np.conj(z))
    f = plane_map(mesh, lambda z: fa * z + fb * np.conj(z))
    d, r = reich_strebel_sides(h, f, mesh)
    H = _affine_matrix(ha, hb)
    F = _affine_matrix(fa, fb)
    area = (box[1] - box[0]) * (box[3] - box[2])
    G = H @ np.linalg.inv(F)
    closed = area * (np.linalg.det(F) * 0.5 * np.sum(G * G) - 0.5 * np.sum(H * H))
    return AffineRSReport(d, r, float(closed))


# Example A -------------------------------------------------------------------

def _hopf_affine(a: complex, b: complex) -> complex:
    """Hopf differential of z -> a z + b conj(z) into the flat plane: a conj(b)."""
    return complex(a * np.conj(b))


@dataclass
class ExampleAReport:
    k: float
    hopf_h: complex
    hopf_g: complex
    hopf_sum: complex
    hopf_h_display: complex  # times 4, the other common normalization
    mu_f: complex
    mu_tau: complex
    mu_f_mesh_error: float
    boundary_discrepancy: float
    interior_discrepancy: list
    interior_xi_spread: float
    l1_growth: list
    growth_ratios: list
    hopf_conformal: tuple
    l1_conformal: float
    bers_blowup: list = field(default_factory=list)

    def to_json(self) -> dict:
        def c(z):
            return [z.real, z.imag]
        return {
            "k": self.k, "hopf_h": c(self.hopf_h), "hopf_g": c(self.hopf_g), "hopf_sum": c(self.hopf_sum),
            "hopf_h_x4": c(self.hopf_h_display), "mu_f": c(self.mu_f), "mu_tau": c(self.mu_tau),
            "mu_f_mesh_error": self.mu_f_mesh_error, "boundary_discrepancy": self.boundary_discrepancy,
            "interior_discrepancy": self.interior_discrepancy, "interior_xi_spread": self.interior_xi_spread,
            "l1_growth": self.l1_growth, "growth_ratios": self.growth_ratios,
            "hopf_conformal": [c(z) for z in self.hopf_conformal], "l1_conformal": self.l1_conformal,
            "bers_blowup": self.bers_blowup,
        }


def example_a(k: float, box=(8.0, 8.0), doublings: int = 3, n_boundary: int = 101) -> ExampleAReport:
    """Two minimal diffeomorphisms of the upper half-plane with the same boundary values.

    h_k = xi + i k eta and g_k = k xi + i eta have opposite Hopf differentials,
    f_k = h_k o g_k^-1 = xi/k + i k eta. The conformal pair sqrt(1/k) zeta and
    sqrt(k) zeta composes to tau_k = zeta / k, which matches f_k on the real line.
    """
    if not (k > 0) or not math.isfinite(k):
        raise ValueError("k must be positive")
    if k == 1:
        raise ValueError("k must differ from 1")
    # affine maps as z -> a z + b conj(z)
    h = ((1 + k) / 2, (1 - k) / 2)
    g = ((k + 1) / 2, (k - 1) / 2)
    f = ((1 / k + k) / 2, (1 / k - k) / 2)
    hopf_h, hopf_g = _hopf_affine(*h), _hopf_affine(*g)
    mu_f = complex(f[1] / f[0])

    def fk(z):
        return z.real / k + 1j * k * z.imag

    def tauk(z):
        return z / k

    L, H = box
    mesh = build_rect_mesh(-L, L, 0.0, H, 8, 8)
    mu_mesh = beltrami_of(plane_map(mesh, fk), mesh).mu
    xi = np.linspace(-L, L, n_boundary)
    bdisc = float(np.max(np.abs(fk(xi + 0j) - tauk(xi + 0j))))
    inner = [complex(fk(x + 1j) - tauk(x + 1j)) for x in xi]
    spread = float(np.max(np.abs(np.array(inner) - inner[0])))
    growth = []
    for j in range(doublings + 1):
        s = 2.0**j
        growth.append(l1_norm_box(lambda z: np.full(z.shape, hopf_h), -L * s, L * s, 0.0, H * s))
    ratios = [growth[j + 1] / growth[j] for j in range(doublings)]
    conformal = (_hopf_affine(k ** -0.5, 0.0), _hopf_affine(k**0.5, 0.0))
    l1_conf = sum(l1_norm_box(lambda z, c=c: np.full(z.shape, c), -L, L, 0.0, H) for c in conformal)
    # conjugate to the disk: the differential pulls back by C'(z)^2; C sends z = 1 to infinity
    bers = []
    for j in range(1, 7):
        r = 1 - 10.0**-j
        q = abs(hopf_h * cayley_derivative(r) ** 2) * (1 - r * r) ** 2 / 4
        bers.append([r, float(q)])
    return ExampleAReport(k, hopf_h, hopf_g, hopf_h + hopf_g, 4 * hopf_h, mu_f, 0j,
                          float(np.max(np.abs(mu_mesh - mu_f))), bdisc, [[z.real, z.imag] for z in inner[:3]],
                          spread, growth, ratios, conformal, l1_conf, bers)


# stability ------------------------------------------------------------------

@dataclass
class MinimalPair:
    """Hopf differentials and energy densities of the two factor maps of a minimal pair."""

    hopf1: Callable
    e1: Callable
    hopf2: Callable
    e2: Callable
    name: str
    affine: tuple | None = None  # (h, g) as (a, b) coefficient pairs when both maps are affine

    @classmethod
    def projection(cls, phi: PolynomialQD) -> "MinimalPair":
        def e(z):
            return 2 * np.abs(phi(z))
        return cls(phi, e, lambda z: -phi(z), e, _describe(phi))

    @classmethod
    def example_a(cls, k: float) -> "MinimalPair":
        h = ((1 + k) / 2, (1 - k) / 2)
        g = ((k + 1) / 2, (k - 1) / 2)
        ph, pg = _hopf_affine(*h), _hopf_affine(*g)
        eh = 0.5 * (1 + k * k)
        return cls(lambda z: np.full(np.shape(z), ph), lambda z: np.full(np.shape(z), eh),
                   lambda z: np.full(np.shape(z), pg), lambda z: np.full(np.shape(z), eh),
                   f"example-a k={k}", (h, g))


@dataclass
class VariationSpec:
    """Independent bump deformations of the two factors, sharing one support disk."""

    center: complex
    radius: float
    direction1: complex
    direction2: complex

    @property
    def delta(self) -> float:
        return 1e-3 * self.radius

    def maps(self, t: float) -> tuple[BumpMap, BumpMap]:
        return (BumpMap((Bump(self.center, self.radius, t * self.direction1),)),
                BumpMap((Bump(self.center, self.radius, t * self.direction2),)))

    @classmethod
    def random(cls, seed: int, center_box=(-0.6, 0.6, -0.6, 0.6), r_range=(0.15, 0.35)) -> "VariationSpec":
        rng = np.random.default_rng(seed)
        c = complex(rng.uniform(center_box[0], center_box[1]), rng.uniform(center_box[2], center_box[3]))
        r = float(rng.uniform(*r_range))
        d1, d2 = (complex(rng.normal(), rng.normal()) * r for _ in range(2))
        return cls(c, r, d1, d2)


@dataclass
class StabilityReport:
    first: float
    second: float
    scale: float
    values: list

    @property
    def minimal(self) -> bool:
        return abs(self.first) <= 1e-8 * self.scale

    @property
    def stable(self) -> bool:
        return self.second >= -1e-6 * self.scale


def stability_second_variation(pair: MinimalPair, variation: VariationSpec, method: str = "density",
                               mesh_h: float | None = None, n: int = 96) -> StabilityReport:
    """Five-point finite differences of the summed energy change at t = 0.

    ``density`` integrates the pointwise energy-change formula with the
    analytic Beltrami coefficients; ``transport`` (affine pairs only) moves a
    mesh of the support disk and recomputes the PL energies.
    """
    d = variation.delta
    ts = (-2 * d, -d, 0.0, d, 2 * d)
    z, w = disk_rule(variation.center, variation.radius, n)
    base = float(np.sum(w * (pair.e1(z) + pair.e2(z))))
    dv = 0.0
    for dirn in (variation.direction1, variation.direction2):
        _, bz, bzb = Bump(variation.center, variation.radius, dirn).parts(z)
        dv = max(dv, float(np.max(np.abs(bz) + np.abs(bzb))))
    scale = base * max(dv, 1e-300) ** 2

    if method == "density":
        h1, e1, h2, e2 = pair.hopf1(z), pair.e1(z), pair.hopf2(z), pair.e2(z)

        def S(t):
            f1, f2 = variation.maps(t)
            return float(np.sum(w * (rs_density(h1, e1, f1.beltrami(z)) + rs_density(h2, e2, f2.beltrami(z)))))
    elif method == "transport":
        if pair.affine is None:
            raise ValueError("transport needs an affine pair")
        mesh = build_mesh(variation.radius, mesh_h or variation.radius / 20, center=variation.center)
        hs = [plane_map(mesh, lambda q, a=a, b=b: a * q + b * np.conj(q)) for a, b in pair.affine]
        E0 = [ks_energy(hm, mesh) for hm in hs]

        def S(t):
            out = 0.0
            for hm, f, e0 in zip(hs, variation.maps(t), E0):
                out += ks_energy(hm, mesh.moved(f(mesh.vertices))) - e0
            return out
    else:
        raise ValueError(f"unknown method {method!r}")
    vals = [S(t) for t in ts]
    first = (vals[0] - 8 * vals[1] + 8 * vals[3] - vals[4]) / (12 * d)
    second = (-vals[0] + 16 * vals[1] - 30 * vals[2] + 16 * vals[3] - vals[4]) / (12 * d * d)
    return StabilityReport(first, second, scale, vals)


# polynomial approximation --------------------------------------------------------

def approximate_by_polynomial(target: Callable, degree: int, n_samples: int = 512,
                              radius: float = 1.0) -> tuple[PolynomialQD, float]:
    """Taylor truncation from FFT samples on the circle, with the L1 error over the disk."""
    if degree < 0:
        raise ValueError("degree must be non-negative")
    n = max(n_samples, 2 * degree + 2)
    th = 2 * np.pi * np.arange(n) / n
    vals = target(radius * np.exp(1j * th))
    c = np.fft.fft(vals) / n
    coeffs = c[: degree + 1] / radius ** np.arange(degree + 1)
    # drop roundoff-level coefficients so exact polynomials come back exactly
    tiny = np.abs(coeffs) < 1e-14 * max(1.0, float(np.max(np.abs(coeffs))))
    coeffs = np.where(tiny, 0.0, coeffs)
    p = PolynomialQD(tuple(coeffs))
    err = l1_norm(lambda z: target(z) - p(z), radius)
    return p, err
