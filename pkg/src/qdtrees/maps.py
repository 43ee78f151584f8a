"""Piecewise-linear maps on triangulated disks and their Korevaar-Schoen data.

Every map is affine on each triangle, so the pullback metric g, the energy
density e = (g11 + g22) / 2, the Hopf differential (g11 - g22 - 2i g12) / 4
and the Beltrami coefficient are all constant per triangle.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .mesh import DiskMesh
from .qd import ConformalMetric
from .tree import LeafTree, ProductTree, SimplicialTree

TARGETS = ("plane", "metric-disk", "tree", "product")


@dataclass
class DiscreteMap:
    """Per-vertex values of a map on a mesh.

    ``values`` is a complex array for plane and metric-disk targets, a pair
    (edge ids, offsets) for a tree, and a pair of such pairs for a product.
    ``formula`` optionally evaluates the underlying map at arbitrary points
    (same value layout), which lets it be resampled on other meshes.
    """

    target: str
    values: object
    metric: ConformalMetric | None = None
    tree: object = None
    formula: Callable | None = None

    def __post_init__(self):
        if self.target not in TARGETS:
            raise ValueError(f"unknown target {self.target!r}")
        if self.target == "metric-disk" and self.metric is None:
            raise ValueError("metric-disk target needs a ConformalMetric")
        if self.target in ("tree", "product") and self.tree is None:
            raise ValueError("tree targets need their tree")

    def resample(self, points) -> "DiscreteMap":
        if self.formula is None:
            raise ValueError("map has no analytic formula")
        return DiscreteMap(self.target, self.formula(points), self.metric, self.tree, self.formula)

    def factor(self, i: int) -> "DiscreteMap":
        if self.target != "product":
            raise ValueError("not a product map")
        f = None
        if self.formula is not None:
            f = lambda z, i=i: self.formula(z)[i]  # noqa: E731
        return DiscreteMap("tree", self.values[i], None, self.tree.factors[i], f)


def plane_map(mesh: DiskMesh, f: Callable, metric: ConformalMetric | None = None) -> DiscreteMap:
    target = "plane" if metric is None else "metric-disk"
    return DiscreteMap(target, np.asarray(f(mesh.vertices), dtype=complex), metric, None, f)


def tree_map(mesh: DiskMesh, tree: LeafTree) -> DiscreteMap:
    """The sampled leaf-space projection into one tree."""
    return DiscreteMap("tree", tree.project_many(mesh.vertices), None, tree, tree.project_many)


def product_map(mesh: DiskMesh, prod: ProductTree) -> DiscreteMap:
    return DiscreteMap("product", prod.project_many(mesh.vertices), None, prod, prod.project_many)


@dataclass
class MetricSample:
    g11: np.ndarray
    g12: np.ndarray
    g22: np.ndarray

    def __add__(self, other: "MetricSample") -> "MetricSample":
        return MetricSample(self.g11 + other.g11, self.g12 + other.g12, self.g22 + other.g22)

    @property
    def det(self) -> np.ndarray:
        return self.g11 * self.g22 - self.g12**2

    @property
    def trace(self) -> np.ndarray:
        return self.g11 + self.g22


@dataclass
class BeltramiField:
    mu: np.ndarray

    @property
    def k(self) -> float:
        return float(np.max(np.abs(self.mu))) if len(self.mu) else 0.0


def affine_gradients(mesh: DiskMesh, values) -> tuple[np.ndarray, np.ndarray]:
    """Per-triangle partial derivatives (d/dx, d/dy) of the PL interpolant."""
    p = mesh.vertices[mesh.triangles]
    u = np.asarray(values)[mesh.triangles]
    x, y = p.real, p.imag
    x1, x2 = x[:, 1] - x[:, 0], x[:, 2] - x[:, 0]
    y1, y2 = y[:, 1] - y[:, 0], y[:, 2] - y[:, 0]
    u1, u2 = u[:, 1] - u[:, 0], u[:, 2] - u[:, 0]
    det = x1 * y2 - x2 * y1
    ux = (u1 * y2 - u2 * y1) / det
    uy = (x1 * u2 - x2 * u1) / det
    return ux, uy


def wirtinger(mesh: DiskMesh, values) -> tuple[np.ndarray, np.ndarray]:
    fx, fy = affine_gradients(mesh, values)
    return 0.5 * (fx - 1j * fy), 0.5 * (fx + 1j * fy)


def beltrami_of(fmap, mesh: DiskMesh, strict: bool = True) -> BeltramiField:
    """Beltrami coefficient f_zbar / f_z of a PL map into the plane."""
    vals = fmap.values if isinstance(fmap, DiscreteMap) else fmap
    fz, fzb = wirtinger(mesh, vals)
    with np.errstate(divide="ignore", invalid="ignore"):
        mu = fzb / fz
    if strict and (not np.all(np.isfinite(mu)) or np.any(np.abs(mu) >= 1)):
        raise ValueError("map is not orientation-preserving quasiconformal on every triangle")
    return BeltramiField(mu)


def _gram_from_distances(mesh: DiskMesh, d01, d02, d12) -> MetricSample:
    """Solve e^T g e = d^2 on the three edge vectors of each triangle."""
    p = mesh.vertices[mesh.triangles]
    E = [p[:, 1] - p[:, 0], p[:, 2] - p[:, 0], p[:, 2] - p[:, 1]]
    rhs = np.stack([d01**2, d02**2, d12**2], axis=-1)
    A = np.stack([np.stack([e.real**2, 2 * e.real * e.imag, e.imag**2], axis=-1) for e in E], axis=1)
    sol = np.linalg.solve(A, rhs[..., None])[..., 0]
    return MetricSample(sol[:, 0], sol[:, 1], sol[:, 2])


def _tree_pullback(mesh: DiskMesh, tree: SimplicialTree, values) -> MetricSample:
    e, o = values
    e = np.asarray(e)[mesh.triangles]
    o = np.asarray(o)[mesh.triangles]
    d01 = tree.distances(e[:, 0], o[:, 0], e[:, 1], o[:, 1])
    d02 = tree.distances(e[:, 0], o[:, 0], e[:, 2], o[:, 2])
    d12 = tree.distances(e[:, 1], o[:, 1], e[:, 2], o[:, 2])
    return _gram_from_distances(mesh, d01, d02, d12)


def pullback_metric(fmap: DiscreteMap, mesh: DiskMesh) -> MetricSample:
    """Per-triangle pullback metric of a PL map.

    For tree targets the triangle's corner images are replaced by the flat
    triangle with the same three tree distances.
    """
    if fmap.target in ("plane", "metric-disk"):
        fx, fy = affine_gradients(mesh, fmap.values)
        lam = 1.0
        if fmap.target == "metric-disk":
            lam = fmap.metric(np.asarray(fmap.values)[mesh.triangles].mean(axis=1))
        return MetricSample(lam * np.abs(fx) ** 2, lam * (fx * np.conj(fy)).real, lam * np.abs(fy) ** 2)
    if fmap.target == "tree":
        return _tree_pullback(mesh, fmap.tree, fmap.values)
    g1 = _tree_pullback(mesh, fmap.tree.factors[0], fmap.values[0])
    g2 = _tree_pullback(mesh, fmap.tree.factors[1], fmap.values[1])
    return g1 + g2


def energy_density(g: MetricSample) -> np.ndarray:
    return 0.5 * (g.g11 + g.g22)


def hopf(g: MetricSample) -> np.ndarray:
    return 0.25 * (g.g11 - g.g22 - 2j * g.g12)


def parse_mask(spec) -> Callable | None:
    """``None``, a callable on centroids, or the string ``"disk:r"``."""
    if spec is None or callable(spec):
        return spec
    kind, _, arg = str(spec).partition(":")
    if kind == "disk":
        r = float(arg)
        return lambda c: np.abs(c) <= r
    raise ValueError(f"unknown mask {spec!r}")


def _mask_weights(mesh: DiskMesh, mask) -> np.ndarray:
    m = parse_mask(mask)
    if m is None:
        return mesh.areas
    return mesh.areas * np.asarray(m(mesh.centroids), dtype=float)


def ks_energy(fmap: DiscreteMap, mesh: DiskMesh, mask=None) -> float:
    return float((_mask_weights(mesh, mask) * energy_density(pullback_metric(fmap, mesh))).sum())


def ks_area(fmap: DiscreteMap, mesh: DiskMesh, mask=None) -> float:
    g = pullback_metric(fmap, mesh)
    return float((_mask_weights(mesh, mask) * np.sqrt(np.maximum(g.det, 0.0))).sum())


def rs_density(hopf_vals, e_vals, mu) -> np.ndarray:
    """Pointwise energy change under precomposition by the inverse of a map with Beltrami mu."""
    q = 1.0 - np.abs(mu) ** 2
    return -4.0 * (hopf_vals * mu / q).real + 2.0 * e_vals * np.abs(mu) ** 2 / q


def invert_map(f: Callable, w, iters: int = 50, tol: float = 1e-14, eps: float = 1e-7):
    """Solve f(z) = w by Newton's method with finite-difference Wirtinger derivatives."""
    w = np.asarray(w, dtype=complex)
    z = w.copy()
    for _ in range(iters):
        r = f(z) - w
        if np.max(np.abs(r), initial=0.0) < tol:
            break
        fx = (f(z + eps) - f(z - eps)) / (2 * eps)
        fy = (f(z + 1j * eps) - f(z - 1j * eps)) / (2 * eps)
        fz, fzb = 0.5 * (fx - 1j * fy), 0.5 * (fx + 1j * fy)
        # solve fz dz + fzb conj(dz) = -r
        det = np.abs(fz) ** 2 - np.abs(fzb) ** 2
        dz = (-np.conj(fz) * r + fzb * np.conj(r)) / det
        z = z + dz
    return z


def reich_strebel_sides(h: DiscreteMap, f: DiscreteMap, mesh: DiskMesh, method: str = "transport",
                        f_inverse: Callable | None = None) -> tuple[float, float]:
    """Both sides of the energy-change formula for precomposition by f^{-1}.

    ``direct`` is E(f(Omega), h o f^-1) - E(Omega, h). With ``transport`` the
    composed map lives on the moved mesh f(mesh) with h's vertex values, which
    is exact for PL data. With ``resample`` f must map the meshed domain onto
    itself and h must carry a formula; h o f^-1 is re-interpolated on the
    original mesh. The integral side always uses the per-triangle e(h),
    Hopf(h) and the Beltrami coefficient of the PL interpolant of f.
    """
    if f.target != "plane":
        raise ValueError("f must be a map into the plane")
    mu = beltrami_of(f, mesh).mu
    g = pullback_metric(h, mesh)
    rs = float((mesh.areas * rs_density(hopf(g), energy_density(g), mu)).sum())
    E0 = float((mesh.areas * energy_density(g)).sum())
    if method == "transport":
        moved = mesh.moved(f.values)
        E1 = ks_energy(h, moved)
    elif method == "resample":
        if f_inverse is None:
            if f.formula is None:
                raise ValueError("resample needs f's formula or inverse")
            pre = invert_map(f.formula, mesh.vertices)
        else:
            pre = f_inverse(mesh.vertices)
        E1 = ks_energy(h.resample(pre), mesh)
    else:
        raise ValueError(f"unknown method {method!r}")
    return E1 - E0, rs
