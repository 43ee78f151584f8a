"""The eight acceptance criteria at their stated tolerances.

Each test prints one PASS/FAIL line; the lines are also collected into a
summary section at the end of the pytest run. Run alone with
``pytest tests/test_acceptance.py -s`` or ``python tests/test_acceptance.py``.
"""
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))
from conftest import ACCEPTANCE_LINES  # noqa: E402

from qdtrees.maps import (hopf, ks_area, ks_energy, plane_map, product_map, pullback_metric,  # noqa: E402
                          tree_map)
from qdtrees.mesh import build_mesh  # noqa: E402
from qdtrees.plateau import PlateauProblem, compare_with_projection, solve  # noqa: E402
from qdtrees.qd import ConformalMetric, PolynomialQD, find_zeros, l1_norm  # noqa: E402
from qdtrees.tree import ProductTree, build_tree  # noqa: E402
from qdtrees.verify import (MinimalPair, VariationSpec, affine_reich_strebel, continuity_trial,  # noqa: E402
                            example_a, nmi_trial, random_qd, stability_second_variation,
                            verify_reich_strebel)

DZ2 = PolynomialQD((1,))
Z = PolynomialQD((0, 1))
Z4 = PolynomialQD((0, 0, 0, 0, 1))
Z2M1 = PolynomialQD((-1, 0, 1))


def report(n, title, ok, detail, t0):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n} ({title}): {detail} [{time.perf_counter() - t0:.1f}s]"
    ACCEPTANCE_LINES[n] = line
    print(line)
    assert ok, line


def _simple_zero_polys(count, seed=2024):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        p = random_qd(rng, degree=int(rng.integers(1, 7)))
        if all(m == 1 for m in find_zeros(p).multiplicities):
            out.append(p)
    return out


def test_criterion_1_tree_combinatorics():
    t0 = time.perf_counter()
    phis = [DZ2, Z, Z4, Z2M1] + _simple_zero_polys(20)
    bad = []
    for i, p in enumerate(phis):
        for kind in ("vertical", "horizontal"):
            t = build_tree(p, kind)
            if t.n_rays != p.degree + 2 or not t.satisfies_tree_identity():
                bad.append((i, kind, t.n_rays, p.degree))
    report(1, "tree combinatorics", not bad, f"{2 * len(phis)} trees, {len(bad)} wrong", t0)


def test_criterion_2_leaf_space_energetics():
    t0 = time.perf_counter()
    mesh = build_mesh(1.0, 0.02)
    c = mesh.centroids
    worst_e = worst_h = 0.0
    for p in (DZ2, Z, Z2M1):
        ref = 2 * l1_norm(p, 1.0)
        for kind, sign in (("vertical", 1), ("horizontal", -1)):
            f = tree_map(mesh, build_tree(p, kind))
            worst_e = max(worst_e, abs(ks_energy(f, mesh) - ref) / ref)
            q = p(c)
            worst_h = max(worst_h, float(np.mean(np.abs(hopf(pullback_metric(f, mesh)) - sign * q) / np.abs(q))))
    ok = worst_e <= 0.02 and worst_h <= 0.05
    report(2, "leaf-space energetics", ok,
           f"max energy rel err {worst_e:.2e} (<= 2e-2), max mean Hopf rel err {worst_h:.2e} (<= 5e-2)", t0)


def test_criterion_3_reich_strebel():
    t0 = time.perf_counter()
    aff = affine_reich_strebel()
    tab = verify_reich_strebel(levels=(0.01, 0.005, 0.0025))
    ok = aff.max_error <= 1e-12 and tab.errors[-1] <= 1e-3 and tab.slope >= 1.8
    report(3, "Reich-Strebel identity", ok,
           f"affine err {aff.max_error:.1e} (<= 1e-12), bump errors "
           + ", ".join(f"{e:.2e}" for e in tab.errors) + f" (finest <= 1e-3), slope {tab.slope:.2f} (>= 1.8)", t0)


def test_criterion_4_main_inequality():
    t0 = time.perf_counter()
    mesh = build_mesh(1.0, 0.05)
    reps = [nmi_trial(seed, mesh, max_degree=6, k_max=0.5) for seed in range(100)]
    fails = [r for r in reps if r.margin < -1e-9 * (1 + r.rhs)]
    kmax = max(r.k for r in reps)
    cont = [continuity_trial(seed, mesh) for seed in range(20)]
    cfails = [c for c in cont if not c.holds]
    ok = not fails and not cfails and kmax <= 0.5
    report(4, "main inequality", ok,
           f"100 trials, min margin {min(r.margin for r in reps):.3e}, max k {kmax:.3f}, "
           f"{len(fails)} failures; continuity bound {20 - len(cfails)}/20", t0)


def test_criterion_5_plateau_solver():
    t0 = time.perf_counter()
    monotone = True

    def run(phi, h):
        nonlocal monotone
        prob = PlateauProblem.from_projection(build_mesh(1.0, h), ProductTree(phi), tolerance=0.0,
                                              max_sweeps=20000)
        st = solve(prob)
        hist = np.array(st.energy_history)
        monotone = monotone and bool(np.all(np.diff(hist) <= 0))
        return compare_with_projection(st, phi, prob)

    flat = run(DZ2, 0.05)
    coarse = run(Z, 0.05)
    fine = run(Z, 0.025)
    target = 4 * math.pi / 3
    e_err = max(abs(e - target) / target for e in fine.factor_energies + coarse.factor_energies)
    ratio = fine.sup_distance / coarse.sup_distance
    ok = flat.sup_distance <= 1e-6 and e_err <= 0.05 and ratio <= 0.7 and monotone
    report(5, "Plateau solver", ok,
           f"dz^2 sup err {flat.sup_distance:.1e} (<= 1e-6); z dz^2 energy per factor "
           f"{fine.factor_energies[0]:.5f} vs {target:.5f} (rel {e_err:.1e}); sup "
           f"{coarse.sup_distance:.2e} -> {fine.sup_distance:.2e}, ratio {ratio:.3f} (<= 0.7); "
           f"monotone {monotone}", t0)


def test_criterion_6_example_a():
    t0 = time.perf_counter()
    notes = []
    ok = True
    for k in (0.5, 2.0, 5.0):
        r = example_a(k)
        mu = (1 - k * k) / (1 + k * k)
        gap = [complex(*z) for z in r.interior_discrepancy]
        checks = [
            r.hopf_sum == 0,
            abs(r.mu_f - mu) <= 1e-12 and r.mu_f_mesh_error <= 1e-12,
            r.boundary_discrepancy <= 1e-15 * 8,
            all(abs(abs(g) - abs(k - 1 / k)) <= 1e-12 for g in gap) and abs(gap[0]) > 0,
            all(abs(q - 4) <= 1e-9 for q in r.growth_ratios),
            r.hopf_conformal == (0j, 0j),
        ]
        ok = ok and all(checks)
        notes.append(f"k={k:g} checks {sum(checks)}/6")
    report(6, "Example A", ok, ", ".join(notes), t0)


def test_criterion_7_stability():
    t0 = time.perf_counter()
    pairs = [(MinimalPair.example_a(2.0), (-2.0, 2.0, 1.0, 3.0)),
             (MinimalPair.projection(Z), (-0.6, 0.6, -0.6, 0.6)),
             (MinimalPair.projection(Z2M1), (-0.6, 0.6, -0.6, 0.6))]
    notes = []
    ok = True
    for pair, box in pairs:
        reps = [stability_second_variation(pair, VariationSpec.random(seed, center_box=box)) for seed in range(20)]
        good = sum(r.minimal and r.stable for r in reps)
        ok = ok and good == 20
        worst = min(r.second / r.scale for r in reps)
        notes.append(f"{pair.name}: {good}/20, min second/scale {worst:.2e}")
    report(7, "stability", ok, "; ".join(notes), t0)


def test_criterion_8_energy_dominates_area():
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    mesh = build_mesh(1.0, 0.1)
    trees = [ProductTree(p) for p in (Z, Z2M1, PolynomialQD((0.5, 1j, 0, 1)))]
    viol = 0
    for i in range(50):
        kind = i % 4
        if kind == 0:
            # arbitrary PL map, possibly folded
            f = plane_map(mesh, lambda z: z + 0.3 * (rng.normal(size=z.shape) + 1j * rng.normal(size=z.shape)))
        elif kind == 1:
            a, b = rng.normal(size=2) + 1j * rng.normal(size=2)
            s = 0.2 / (abs(a) + abs(b))  # image stays well inside the unit disk
            f = plane_map(mesh, lambda z: s * (a * z + b * np.conj(z)) + 0.1 * z * z,
                          metric=ConformalMetric.cayley_pullback())
        elif kind == 2:
            f = tree_map(mesh, trees[i % 3].first)
        else:
            f = product_map(mesh, trees[i % 3])
        E, A = ks_energy(f, mesh), ks_area(f, mesh)
        viol += A > E * (1 + 1e-12)
    worst = 0.0
    for _ in range(10):
        a, b = complex(*rng.normal(size=2)), complex(*rng.normal(size=2))
        metric = ConformalMetric.cayley_pullback() if rng.random() < 0.5 else None
        s = 0.3 / abs(a) if metric is not None else 1.0
        f = plane_map(mesh, lambda z: s * a * z + 0.1 * b, metric=metric)
        E, A = ks_energy(f, mesh), ks_area(f, mesh)
        worst = max(worst, (E - A) / E)
    ok = viol == 0 and worst <= 1e-9
    report(8, "energy dominates area", ok,
           f"50 maps, {viol} with A > E; conformal max (E - A)/E {worst:.1e} (<= 1e-9)", t0)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
