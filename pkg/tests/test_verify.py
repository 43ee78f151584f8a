import math

import numpy as np
import pytest

from qdtrees.maps import beltrami_of
from qdtrees.mesh import build_mesh
from qdtrees.qd import PolynomialQD
from qdtrees.verify import (Bump, BumpMap, MinimalPair, VariationSpec, affine_reich_strebel,
                            approximate_by_polynomial, check_nmi, continuity_constant, continuity_trial,
                            disk_rule, example_a, generate_boundary_matched_pair, nmi_trial,
                            stability_second_variation, triangle_integrals, verify_reich_strebel)


@pytest.fixture(scope="module")
def mesh():
    return build_mesh(1.0, 0.05)


def test_bump_is_identity_off_support():
    f = BumpMap((Bump(0.3, 0.2, 0.05j),))
    z = np.array([0.6, -0.5j, 0.3 + 0.21j])
    assert np.array_equal(f(z), z)
    assert f.beltrami(np.array([0.3 + 0.5j]))[0] == 0


def test_bump_wirtinger_matches_finite_differences():
    f = BumpMap((Bump(0.1 + 0.1j, 0.4, 0.08 * (1 - 1j)),))
    z = np.array([0.2 + 0.05j, -0.1 + 0.3j])
    fz, fzb = f.wirtinger(z)
    eps = 1e-6
    fx = (f(z + eps) - f(z - eps)) / (2 * eps)
    fy = (f(z + 1j * eps) - f(z - 1j * eps)) / (2 * eps)
    assert np.allclose(fz, 0.5 * (fx - 1j * fy), atol=1e-8)
    assert np.allclose(fzb, 0.5 * (fx + 1j * fy), atol=1e-8)


def test_disk_rule_integrates_polynomials():
    z, w = disk_rule(0.5j, 0.3, 32)
    assert w.sum() == pytest.approx(math.pi * 0.09)
    assert np.sum(w * np.abs(z - 0.5j) ** 2) == pytest.approx(math.pi * 0.3**4 / 2)


def test_boundary_matched_pair(mesh):
    f1, f2 = generate_boundary_matched_pair(0, mesh=mesh)
    b = mesh.boundary_loop
    assert np.array_equal(f1.values[b], mesh.vertices[b])
    assert np.array_equal(f2.values[b], mesh.vertices[b])
    assert max(beltrami_of(f1, mesh).k, beltrami_of(f2, mesh).k) < 0.5


def test_pair_rejects_large_amplitude(mesh):
    with pytest.raises(ValueError):
        generate_boundary_matched_pair(0, amplitude=0.5, mesh=mesh)


def test_triangle_integrals_exact_for_polynomials(mesh):
    I = triangle_integrals(lambda z: z * z * np.conj(z), mesh, 4).sum()
    ref = sum(triangle_integrals(lambda z: z * z * np.conj(z), mesh, 8))
    assert I == pytest.approx(ref, abs=1e-13)


def test_nmi_is_equality_for_conformal(mesh):
    zero = np.zeros(mesh.n_triangles, dtype=complex)
    rep = check_nmi(PolynomialQD((0, 1)), zero, zero, mesh)
    assert rep.lhs == 0 and rep.rhs == 0


def test_nmi_equal_fields_cancel(mesh):
    # with mu1 = mu2 the phi terms cancel, leaving the nonnegative right side
    mu = beltrami_of(generate_boundary_matched_pair(2, mesh=mesh)[0], mesh)
    rep = check_nmi(PolynomialQD((1, 2j, 0.5)), mu, mu, mesh)
    assert rep.lhs == pytest.approx(0, abs=1e-15)
    assert rep.rhs > 0


def test_nmi_rejects_large_mu(mesh):
    mu = np.ones(mesh.n_triangles)
    with pytest.raises(ValueError):
        check_nmi(PolynomialQD((1,)), mu, mu, mesh)


@pytest.mark.parametrize("seed", range(5))
def test_nmi_trials_hold(mesh, seed):
    rep = nmi_trial(seed, mesh)
    assert rep.margin >= -1e-9 * max(1.0, rep.rhs)


def test_continuity():
    mesh = build_mesh(1.0, 0.1)
    assert continuity_constant(0.0) == 0
    for seed in range(3):
        assert continuity_trial(seed, mesh).holds


def test_affine_rs_closed_form():
    rep = affine_reich_strebel()
    assert rep.max_error <= 1e-12 * max(1.0, abs(rep.closed_form))


def test_rs_study_improves_with_refinement():
    tab = verify_reich_strebel(levels=(0.04, 0.02))
    assert tab.errors[1] < tab.errors[0]
    assert tab.slope > 1.0  # coarse levels, not yet in the asymptotic regime


def test_rs_zero_bump_is_trivial():
    tab = verify_reich_strebel(f=BumpMap(), levels=(0.02,))
    assert tab.direct == [0.0]


@pytest.mark.parametrize("k", [0.5, 2.0, 5.0])
def test_example_a(k):
    rep = example_a(k)
    assert rep.hopf_h == pytest.approx((1 - k * k) / 4)
    assert rep.hopf_g == pytest.approx(-(1 - k * k) / 4)
    assert abs(rep.hopf_sum) <= 1e-14 * abs(rep.hopf_h)
    assert rep.mu_f == pytest.approx((1 - k * k) / (1 + k * k))
    assert rep.mu_f_mesh_error < 1e-12
    assert rep.boundary_discrepancy <= 1e-15 * 8
    assert rep.interior_xi_spread < 1e-12
    assert abs(complex(*rep.interior_discrepancy[0])) == pytest.approx(abs(k - 1 / k))
    assert all(r == pytest.approx(4.0) for r in rep.growth_ratios)
    assert rep.hopf_conformal == (0j, 0j) and rep.l1_conformal == 0
    blow = [q for _, q in rep.bers_blowup]
    assert all(b > a for a, b in zip(blow, blow[1:]))


def test_example_a_rejects_k_one():
    with pytest.raises(ValueError):
        example_a(1.0)


def test_stability_of_example_a():
    pair = MinimalPair.example_a(2.0)
    for seed in range(3):
        v = VariationSpec.random(seed, center_box=(-1, 1, 1, 2))
        rep = stability_second_variation(pair, v)
        assert rep.minimal and rep.stable and rep.second > 0


def test_stability_methods_agree():
    pair = MinimalPair.example_a(0.5)
    v = VariationSpec(1.5j, 0.3, 0.2 + 0.1j, -0.1j)
    a = stability_second_variation(pair, v, "density")
    b = stability_second_variation(pair, v, "transport", mesh_h=0.015)
    assert b.second == pytest.approx(a.second, rel=0.05)


def test_stability_of_projection_pair():
    pair = MinimalPair.projection(PolynomialQD((-1, 0, 1)))
    rep = stability_second_variation(pair, VariationSpec.random(4))
    assert rep.minimal and rep.stable


def test_transport_needs_affine_pair():
    with pytest.raises(ValueError):
        stability_second_variation(MinimalPair.projection(PolynomialQD((1,))), VariationSpec.random(0), "transport")


def test_polynomial_approximation():
    p, err = approximate_by_polynomial(lambda z: 1 / (z - 2), 4)
    assert p.coeffs[0] == pytest.approx(-0.5)
    _, err8 = approximate_by_polynomial(lambda z: 1 / (z - 2), 8)
    assert err8 < err / 10
    exact, e0 = approximate_by_polynomial(lambda z: 1 + 2 * z * z, 5)
    assert np.allclose(exact.coeffs, (1, 0, 2), atol=1e-14) and e0 < 1e-12
    _, ez = approximate_by_polynomial(lambda z: z, 0)
    assert ez == pytest.approx(2 * math.pi / 3, rel=1e-9)
