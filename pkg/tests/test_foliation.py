import cmath
import math

import numpy as np
import pytest

from qdtrees.foliation import (AmbiguousGraphError, critical_graph, direction_field, segments_to_json,
                               trace_trajectory)
from qdtrees.qd import PolynomialQD

Z = PolynomialQD((0, 1))
ONE = PolynomialQD((1,))


def test_direction_field_constant():
    assert direction_field(ONE, 0.4 + 2j, "vertical") == pytest.approx(1j)
    assert direction_field(ONE, -3, "horizontal") == pytest.approx(1)


def test_direction_field_is_a_leaf_direction():
    p = PolynomialQD((1 + 1j, -2, 0.5j))
    for z in (0.3 + 0.2j, -1 + 2j, 2.5):
        v = direction_field(p, z, "vertical")
        q = p(z) * v * v
        assert abs(v) == pytest.approx(1)
        assert abs(q.imag) < 1e-12 * abs(q) and q.real < 0
        assert v.real > 0 or (v.real == 0 and v.imag > 0)


def test_direction_field_rejects_zero():
    with pytest.raises(ValueError):
        direction_field(Z, 0, "vertical")


def test_vertical_rays_of_z():
    # along the ray at angle theta, z v^2 < 0 with v radial means 3 theta = pi mod 2 pi
    for th in (math.pi / 3, math.pi, 5 * math.pi / 3):
        z = cmath.exp(1j * th)
        v = direction_field(Z, z, "vertical")
        assert abs((v / z).imag) < 1e-12


def test_constant_leaf_is_a_vertical_line():
    seg = trace_trajectory(ONE, 0.3, "vertical", 0.05, 3.0)
    assert np.allclose(seg.points.real, 0.3, atol=1e-12)
    assert seg.end_kind == "clip"
    assert np.max(np.abs(seg.points)) == pytest.approx(3.0, rel=1e-9)


def test_prong_ray_of_z():
    seg = trace_trajectory(Z, 0, "vertical", 0.05, 3.0, prong=(0, 0))
    ang = np.angle(seg.points[1:])
    assert np.allclose(ang, math.pi / 3, atol=1e-7)


def test_leaf_keeps_its_natural_coordinate_level():
    # Re of the integral of sqrt(phi) from the start must not drift along a vertical leaf
    from qdtrees.quadrature import sqrt_integral_polyline
    p = PolynomialQD((0.5, -1j, 0, 1))
    seg = trace_trajectory(p, 0.7 + 0.4j, "vertical", 0.05, 4.0)
    pts = seg.points
    keep = np.concatenate([[True], np.abs(np.diff(pts)) > 1e-12])
    pts = pts[keep]
    cum, _ = sqrt_integral_polyline(p, pts, ref=cmath.sqrt(p(pts[0])))
    assert np.max(np.abs(cum.real)) <= 1e-6 * seg.arclength()


def test_reversibility():
    p = PolynomialQD((1, 0, 1))
    a = trace_trajectory(p, 0.5 + 0.5j, "vertical", 0.05, 5.0)
    end = a.points[-1] * (1 - 1e-3)
    b = trace_trajectory(p, end, "vertical", 0.05, 5.0)
    d = np.min(np.abs(b.points - (0.5 + 0.5j)))
    assert d < 10 * 0.05


@pytest.mark.parametrize("coeffs,expected", [((0, 1), 3), ((0, 0, 0, 0, 1), 6), ((1,), 0)])
def test_prong_counts(coeffs, expected):
    for kind in ("vertical", "horizontal"):
        g = critical_graph(PolynomialQD(coeffs), kind)
        assert len(g.separatrices) == expected
        assert g.complete


def test_prong_counts_monomials():
    for n in range(1, 7):
        g = critical_graph(PolynomialQD((0,) * n + (1,)), "vertical")
        assert len(g.by_zero(0)) == n + 2


def test_prong_counts_random_simple_zeros():
    rng = np.random.default_rng(11)
    for _ in range(6):
        d = int(rng.integers(1, 7))
        p = PolynomialQD(tuple(rng.normal(size=d + 1) + 1j * rng.normal(size=d + 1)))
        try:
            g = critical_graph(p, "vertical")
        except AmbiguousGraphError:
            continue
        for zid, (_, m) in enumerate(g.zeros.zeros):
            assert len(g.by_zero(zid)) == m + 2


def test_saddle_connection_of_z2_minus_1():
    g = critical_graph(PolynomialQD((-1, 0, 1)), "vertical", clip_radius=3.0)
    assert g.saddle_connections() == [(0, 1)]
    assert len(g.separatrices) == 6


def test_clip_radius_precondition():
    with pytest.raises(ValueError):
        critical_graph(PolynomialQD((-4, 0, 1)), "vertical", clip_radius=3.0)


def test_json_export_is_deterministic():
    g1 = critical_graph(Z, "vertical")
    g2 = critical_graph(Z, "vertical")
    assert segments_to_json(g1.separatrices) == segments_to_json(g2.separatrices)
