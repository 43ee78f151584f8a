import math

import numpy as np
import pytest

from qdtrees.maps import (DiscreteMap, beltrami_of, energy_density, hopf, invert_map, ks_area, ks_energy,
                          parse_mask, plane_map, product_map, pullback_metric, reich_strebel_sides,
                          rs_density, tree_map)
from qdtrees.mesh import build_mesh
from qdtrees.qd import ConformalMetric, PolynomialQD, l1_norm
from qdtrees.tree import ProductTree, build_tree


@pytest.fixture(scope="module")
def disk():
    return build_mesh(1.0, 0.05)


def test_identity_is_conformal(disk):
    f = plane_map(disk, lambda z: z)
    assert beltrami_of(f, disk).k < 1e-14
    g = pullback_metric(f, disk)
    assert np.allclose(g.g11, 1) and np.allclose(g.g22, 1) and np.allclose(g.g12, 0, atol=1e-14)
    assert ks_energy(f, disk) == pytest.approx(disk.areas.sum())
    assert ks_area(f, disk) == pytest.approx(disk.areas.sum())


def test_affine_beltrami(disk):
    f = plane_map(disk, lambda z: z + 0.1 * np.conj(z))
    assert np.allclose(beltrami_of(f, disk).mu, 0.1)
    k = 3.0
    f = plane_map(disk, lambda z: z.real + 1j * k * z.imag)
    assert np.allclose(beltrami_of(f, disk).mu, (1 - k) / (1 + k))


def test_beltrami_rejects_orientation_reversal(disk):
    with pytest.raises(ValueError):
        beltrami_of(plane_map(disk, np.conj), disk)


def test_stretch_metric_and_hopf(disk):
    k = 0.5
    g = pullback_metric(plane_map(disk, lambda z: z.real + 1j * k * z.imag), disk)
    assert np.allclose(g.g11, 1) and np.allclose(g.g22, k * k)
    assert np.allclose(energy_density(g), (1 + k * k) / 2)
    assert np.allclose(hopf(g), (1 - k * k) / 4)


def test_conformal_target_metric(disk):
    m = ConformalMetric.cayley_pullback()
    f = plane_map(disk, lambda z: 0.1 * z, metric=m)
    assert np.allclose(hopf(pullback_metric(f, disk)), 0, atol=1e-14)
    assert ks_energy(f, disk) == pytest.approx(ks_area(f, disk), rel=1e-12)


def test_projection_to_line_tree(disk):
    one = PolynomialQD((1,))
    t = build_tree(one, "vertical")
    g = pullback_metric(tree_map(disk, t), disk)
    assert np.allclose(g.g11, 4) and np.allclose(g.g12, 0, atol=1e-10) and np.allclose(g.g22, 0, atol=1e-10)
    assert np.allclose(energy_density(g), 2)
    assert np.allclose(hopf(g), 1)


def test_single_tree_has_zero_area(disk):
    t = build_tree(PolynomialQD((0, 1)), "vertical")
    f = tree_map(disk, t)
    # only triangles whose image straddles the vertex carry any area, and it is tiny
    assert ks_area(f, disk) <= 1e-7 * ks_energy(f, disk)


@pytest.mark.parametrize("coeffs", [(1,), (0, 1), (-1, 0, 1)])
def test_projection_energy_is_twice_l1(coeffs):
    p = PolynomialQD(coeffs)
    mesh = build_mesh(1.0, 0.02)
    for kind in ("vertical", "horizontal"):
        E = ks_energy(tree_map(mesh, build_tree(p, kind)), mesh)
        assert E == pytest.approx(2 * l1_norm(p, 1.0), rel=2e-3)


def test_projection_hopf_matches_differential(disk):
    p = PolynomialQD((0, 1))
    g = pullback_metric(tree_map(disk, build_tree(p, "vertical")), disk)
    c = disk.centroids
    err = np.abs(hopf(g) - p(c)) / np.maximum(np.abs(p(c)), 1e-12)
    far = np.abs(c) > 0.3
    assert np.mean(err[far]) < 0.03


def test_product_energy_sums_factors(disk):
    p = PolynomialQD((0, 1))
    prod = ProductTree(p)
    f = product_map(disk, prod)
    total = ks_energy(f, disk)
    parts = ks_energy(f.factor(0), disk) + ks_energy(f.factor(1), disk)
    assert total == pytest.approx(parts, rel=1e-12)
    # the two factors are orthogonal leaf spaces: Hopf contributions cancel
    assert np.abs(hopf(pullback_metric(f, disk))).mean() < 0.05 * np.abs(p(disk.centroids)).mean()


def test_area_is_at_most_energy():
    rng = np.random.default_rng(0)
    mesh = build_mesh(1.0, 0.1)
    for _ in range(10):
        a, b = rng.normal(size=2) + 1j * rng.normal(size=2)
        f = plane_map(mesh, lambda z: a * z + b * np.conj(z) + 0.2 * z * z)
        assert ks_area(f, mesh) <= ks_energy(f, mesh) * (1 + 1e-12)


def test_masks(disk):
    f = plane_map(disk, lambda z: z)
    inner = ks_energy(f, disk, mask="disk:0.5")
    assert inner == pytest.approx(math.pi / 4, rel=0.05)
    assert ks_energy(f, disk, mask=lambda c: np.abs(c) <= 0.5) == inner
    with pytest.raises(ValueError):
        parse_mask("square:1")


def test_rs_density_vanishes_for_conformal():
    assert np.all(rs_density(np.array([1 + 1j]), np.array([3.0]), np.array([0j])) == 0)


def test_rs_identity_is_trivial(disk):
    h = tree_map(disk, build_tree(PolynomialQD((0, 1)), "vertical"))
    d, rs = reich_strebel_sides(h, plane_map(disk, lambda z: z), disk)
    assert d == pytest.approx(0, abs=1e-12) and rs == pytest.approx(0, abs=1e-12)


def test_rs_transport_is_exact_for_pl_data(disk):
    h = tree_map(disk, build_tree(PolynomialQD((0, 1)), "vertical"))
    f = plane_map(disk, lambda z: z + 0.05 * (1 - np.abs(z) ** 2) ** 2 * np.conj(z))
    d, rs = reich_strebel_sides(h, f, disk)
    assert d == pytest.approx(rs, rel=1e-10)


def test_invert_map():
    f = lambda z: z + 0.1 * np.conj(z) ** 2  # noqa: E731
    w = np.array([0.1 + 0.2j, -0.5j, 0.3])
    assert np.allclose(f(invert_map(f, w)), w, atol=1e-12)


def test_unknown_target():
    with pytest.raises(ValueError):
        DiscreteMap("sphere", np.zeros(3))
