import math

import numpy as np
import pytest

from qdtrees.mesh import DiskMesh, build_mesh, build_rect_mesh


@pytest.mark.parametrize("h", [0.2, 0.1, 0.05])
def test_disk_mesh_quality(h):
    m = build_mesh(1.0, h)
    assert m.euler_characteristic() == 1
    assert m.min_angle() > math.radians(20)
    assert np.all(m.signed_areas > 0)
    # polygon inscribed in the unit circle
    assert m.areas.sum() == pytest.approx(math.pi, rel=5 * h * h)
    assert np.allclose(np.abs(m.vertices[m.boundary_loop]), 1.0)


def test_boundary_loop_is_exactly_the_boundary():
    m = build_mesh(1.0, 0.1)
    e = np.sort(np.concatenate([m.triangles[:, [0, 1]], m.triangles[:, [1, 2]], m.triangles[:, [2, 0]]]), axis=1)
    uniq, count = np.unique(e, axis=0, return_counts=True)
    bverts = set(uniq[count == 1].ravel().tolist())
    assert bverts == set(m.boundary_loop.tolist())
    assert not m.interior[m.boundary_loop].any()


def test_mesh_is_shifted_by_center():
    a = build_mesh(0.5, 0.1)
    b = build_mesh(0.5, 0.1, center=1 + 2j)
    assert np.allclose(b.vertices - a.vertices, 1 + 2j)


def test_invalid_parameters():
    with pytest.raises(ValueError):
        build_mesh(1.0, 0.0)
    with pytest.raises(ValueError):
        build_rect_mesh(0, 1, 0, 1, 0, 3)


def test_degenerate_triangles_rejected():
    with pytest.raises(ValueError):
        DiskMesh([0, 1, 2], [[0, 1, 2]], [0, 1, 2])


def test_rect_mesh():
    m = build_rect_mesh(-1, 1, 0, 2, 4, 4)
    assert m.areas.sum() == pytest.approx(4.0)
    assert m.euler_characteristic() == 1
    assert len(m.boundary_loop) == 16


def test_cotan_laplacian_reproduces_linear_functions():
    m = build_mesh(1.0, 0.1)
    edges, w = m.cotan_weights
    for u in (m.vertices.real, m.vertices.imag, (m.vertices.real + 2 * m.vertices.imag)):
        lap = np.zeros(m.n_vertices)
        d = u[edges[:, 1]] - u[edges[:, 0]]
        np.add.at(lap, edges[:, 0], w * d)
        np.add.at(lap, edges[:, 1], -w * d)
        assert np.max(np.abs(lap[m.interior])) < 1e-10


def test_cotan_energy_of_linear_function():
    # 1/2 sum w (du)^2 equals the Dirichlet energy 1/2 int |grad u|^2 = area / 2
    m = build_mesh(1.0, 0.1)
    edges, w = m.cotan_weights
    u = m.vertices.real
    assert 0.5 * np.sum(w * (u[edges[:, 1]] - u[edges[:, 0]]) ** 2) == pytest.approx(m.areas.sum() / 2)


def test_json_roundtrip():
    m = build_mesh(1.0, 0.3)
    m2 = DiskMesh.from_json(m.to_json())
    assert np.array_equal(m2.vertices, m.vertices)
    assert np.array_equal(m2.triangles, m.triangles)


def test_moved_mesh():
    m = build_mesh(1.0, 0.2)
    m2 = m.moved(2 * m.vertices)
    assert m2.areas.sum() == pytest.approx(4 * m.areas.sum())
