"""Triangulated disks and boxes."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.spatial import Delaunay


@dataclass
class DiskMesh:
    vertices: np.ndarray  # complex, shape (nv,)
    triangles: np.ndarray  # int, shape (nt, 3), counter-clockwise
    boundary_loop: np.ndarray  # int, ordered boundary vertex ids

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=complex)
        self.triangles = np.asarray(self.triangles, dtype=int)
        self.boundary_loop = np.asarray(self.boundary_loop, dtype=int)
        a = self.signed_areas
        if np.any(a <= 0):
            raise ValueError("mesh has degenerate or negatively oriented triangles")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (np.conj(e1) * e2).imag

    @cached_property
    def areas(self) -> np.ndarray:
        return self.signed_areas

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    @cached_property
    def edges(self) -> np.ndarray:
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e = np.sort(e, axis=1)
        return np.unique(e, axis=0)

    @cached_property
    def interior(self) -> np.ndarray:
        mask = np.ones(self.n_vertices, dtype=bool)
        mask[self.boundary_loop] = False
        return mask

    def euler_characteristic(self) -> int:
        return self.n_vertices - len(self.edges) + self.n_triangles

    def min_angle(self) -> float:
        p = self.vertices[self.triangles]
        out = []
        for i in range(3):
            a = p[:, (i + 1) % 3] - p[:, i]
            b = p[:, (i + 2) % 3] - p[:, i]
            out.append(np.abs(np.angle(b / a)))
        return float(np.degrees(np.min(out)))

    @cached_property
    def cotan_weights(self) -> tuple[np.ndarray, np.ndarray]:
        """(edges, w) with w_ij = (cot a + cot b) / 2 over the opposite angles."""
        p = self.vertices[self.triangles]
        idx, val = [], []
        for i in range(3):
            j, k = (i + 1) % 3, (i + 2) % 3
            a = p[:, j] - p[:, i]
            b = p[:, k] - p[:, i]
            cot = (np.conj(a) * b).real / (np.conj(a) * b).imag
            idx.append(np.sort(self.triangles[:, [j, k]], axis=1))
            val.append(0.5 * cot)
        idx = np.concatenate(idx)
        val = np.concatenate(val)
        edges, inv = np.unique(idx, axis=0, return_inverse=True)
        w = np.zeros(len(edges))
        np.add.at(w, inv.ravel(), val)
        return edges, w

    def moved(self, new_vertices) -> "DiskMesh":
        """Same connectivity at new vertex positions (raises if a triangle flips)."""
        return DiskMesh(np.asarray(new_vertices, dtype=complex), self.triangles, self.boundary_loop)

    def to_json(self) -> dict:
        return {
            "vertices": [[v.real, v.imag] for v in self.vertices],
            "triangles": self.triangles.tolist(),
            "boundary_loop": self.boundary_loop.tolist(),
        }

    @classmethod
    def from_json(cls, doc) -> "DiskMesh":
        if isinstance(doc, str):
            doc = json.loads(doc)
        v = np.array([complex(x, y) for x, y in doc["vertices"]])
        return cls(v, np.array(doc["triangles"]), np.array(doc["boundary_loop"]))


def _orient(vertices, tris):
    p = vertices[tris]
    area = ((np.conj(p[:, 1] - p[:, 0])) * (p[:, 2] - p[:, 0])).imag
    tris = tris.copy()
    flip = area < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return tris


def build_mesh(radius: float = 1.0, target_edge_length: float = 0.1, center: complex = 0j) -> DiskMesh:
    """Delaunay triangulation of concentric rings, about 2*pi*k points on ring k."""
    h = target_edge_length
    if not (h > 0) or not (radius > 0):
        raise ValueError("radius and target edge length must be positive")
    K = max(1, int(round(radius / h)))
    if K > 2000:
        raise ValueError("edge length too small for this radius")
    pts = [0j]
    for k in range(1, K + 1):
        n = max(6, int(round(2 * math.pi * k)))
        th = 2 * math.pi * (np.arange(n) + 0.5 * (k % 2)) / n
        pts.append(radius * k / K * np.exp(1j * th))
    v = np.concatenate([np.atleast_1d(np.asarray(p)) for p in pts])
    tri = Delaunay(np.column_stack([v.real, v.imag]))
    tris = _orient(v, tri.simplices)
    # drop slivers Delaunay may put along the polygonal hull
    p = v[tris]
    area = 0.5 * ((np.conj(p[:, 1] - p[:, 0])) * (p[:, 2] - p[:, 0])).imag
    tris = tris[area > 1e-12 * h * h]
    n_last = max(6, int(round(2 * math.pi * K)))
    boundary = np.arange(len(v) - n_last, len(v))
    return DiskMesh(v + center, tris, boundary)


def build_rect_mesh(xmin: float, xmax: float, ymin: float, ymax: float, nx: int, ny: int) -> DiskMesh:
    """Structured triangulation of a box, alternating diagonals."""
    if nx < 1 or ny < 1 or xmax <= xmin or ymax <= ymin:
        raise ValueError("invalid box")
    xs = np.linspace(xmin, xmax, nx + 1)
    ys = np.linspace(ymin, ymax, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    v = (X + 1j * Y).ravel()

    def vid(i, j):
        return i * (ny + 1) + j

    tris = []
    for i in range(nx):
        for j in range(ny):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            if (i + j) % 2 == 0:
                tris += [(a, b, c), (a, c, d)]
            else:
                tris += [(a, b, d), (b, c, d)]
    loop = [vid(i, 0) for i in range(nx)] + [vid(nx, j) for j in range(ny)]
    loop += [vid(i, ny) for i in range(nx, 0, -1)] + [vid(0, j) for j in range(ny, 0, -1)]
    return DiskMesh(v, np.array(tris), np.array(loop))
