"""Dual simplicial R-trees of polynomial foliations and the leaf-space projection.

The complement of the vertical critical graph of a polynomial differential
is a union of half-plane and strip domains. Clipping at a large circle, each
domain meets the circle in one arc (half-plane) or two arcs (strip) bounded
by separatrix endpoints. Half-planes become rays at the vertex of their
boundary cluster; strips become finite edges between the two clusters they
separate, with length equal to the jump of Re W across the arc, where
W = integral of sqrt(phi) dz is the natural coordinate.

A point z is projected by following its vertical leaf out to the circle and
reading off Re W there; the integral of sqrt(phi) along the traced path
carries Re W back to z exactly, so tracing error only matters for deciding
which arc the leaf exits through.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from .foliation import (AmbiguousGraphError, CriticalGraph, critical_graph, effective,
                        guard_radius)
from .qd import PolynomialQD, find_zeros
from .quadrature import continue_branch, gauss_legendre, sqrt_integral_polyline

RAY = -1
METRIC_SCALE = 2.0
ENERGY_CONVENTION = "e(pi)=2|phi| on (T,2d)"


@dataclass(frozen=True)
class TreePoint:
    edge: int
    offset: float


@dataclass(frozen=True)
class ProductTreePoint:
    first: TreePoint
    second: TreePoint


class SimplicialTree:
    """Finite metric tree with finite edges and rays; offsets run from ``edge_from``."""

    def __init__(self, n_vertices: int, edge_from, edge_to, edge_len, metric_scale: float = METRIC_SCALE,
                 vertex_tags=None):
        self.n_vertices = int(n_vertices)
        self.edge_from = np.asarray(edge_from, dtype=int)
        self.edge_to = np.asarray(edge_to, dtype=int)
        self.edge_len = np.asarray(edge_len, dtype=float)
        self.metric_scale = float(metric_scale)
        self.vertex_tags = list(vertex_tags) if vertex_tags is not None else [None] * self.n_vertices
        finite = self.edge_to >= 0
        if np.any(self.edge_len[finite] <= 0):
            raise ValueError("finite edge lengths must be positive")
        if np.any(np.isfinite(self.edge_len[~finite])):
            raise ValueError("rays must have infinite length")
        if self.n_vertices:
            g = csr_matrix((self.edge_len[finite], (self.edge_from[finite], self.edge_to[finite])),
                           shape=(self.n_vertices, self.n_vertices))
            self.vdist = shortest_path(g, directed=False)
        else:
            self.vdist = np.zeros((0, 0))
        self.incident = [[] for _ in range(self.n_vertices)]
        for e in range(self.n_edges):
            self.incident[self.edge_from[e]].append(e)
            if self.edge_to[e] >= 0:
                self.incident[self.edge_to[e]].append(e)

    @property
    def n_edges(self) -> int:
        return len(self.edge_from)

    @property
    def n_rays(self) -> int:
        return int(np.sum(self.edge_to < 0))

    @property
    def n_finite(self) -> int:
        return int(np.sum(self.edge_to >= 0))

    def valence(self, v: int) -> int:
        return len(self.incident[v])

    def satisfies_tree_identity(self) -> bool:
        connected = self.n_vertices == 0 or bool(np.all(np.isfinite(self.vdist)))
        return connected and self.n_finite == self.n_vertices - 1

    # points ---------------------------------------------------------------
    def vertex_point(self, v: int) -> TreePoint:
        e = min(self.incident[v])
        return TreePoint(e, 0.0 if self.edge_from[e] == v else float(self.edge_len[e]))

    def canonical(self, p: TreePoint, tol: float = 1e-12) -> TreePoint:
        e, t = p.edge, p.offset
        L = self.edge_len[e]
        if t <= tol:
            return self.vertex_point(self.edge_from[e])
        if self.edge_to[e] >= 0 and t >= L - tol:
            return self.vertex_point(self.edge_to[e])
        return TreePoint(int(e), float(t))

    def point_vertex(self, p: TreePoint, tol: float = 1e-12) -> int | None:
        if p.offset <= tol:
            return int(self.edge_from[p.edge])
        if self.edge_to[p.edge] >= 0 and p.offset >= self.edge_len[p.edge] - tol:
            return int(self.edge_to[p.edge])
        return None

    def dist_to_vertex(self, p: TreePoint, v: int) -> float:
        e, t = p.edge, p.offset
        a, b = self.edge_from[e], self.edge_to[e]
        da = t + self.vdist[a, v]
        if b < 0:
            return float(da)
        return float(min(da, self.edge_len[e] - t + self.vdist[b, v]))

    def distance(self, p: TreePoint, q: TreePoint) -> float:
        if p.edge == q.edge:
            return abs(p.offset - q.offset)
        e = q.edge
        a, b = self.edge_from[e], self.edge_to[e]
        d = q.offset + self.dist_to_vertex(p, a)
        if b >= 0:
            d = min(d, self.edge_len[e] - q.offset + self.dist_to_vertex(p, b))
        return float(d)

    def distances(self, e1, o1, e2, o2) -> np.ndarray:
        """Vectorized distance between point arrays (edge ids, offsets)."""
        e1 = np.asarray(e1, dtype=int)
        e2 = np.asarray(e2, dtype=int)
        o1 = np.asarray(o1, dtype=float)
        o2 = np.asarray(o2, dtype=float)
        same = e1 == e2
        out = np.abs(o1 - o2)
        if np.all(same):
            return out
        a1, b1 = self.edge_from[e1], self.edge_to[e1]
        a2, b2 = self.edge_from[e2], self.edge_to[e2]
        L1, L2 = self.edge_len[e1], self.edge_len[e2]
        D = self.vdist
        b1s = np.where(b1 >= 0, b1, 0)
        b2s = np.where(b2 >= 0, b2, 0)
        inf = np.inf
        to1 = np.where(b1 >= 0, L1 - o1, inf)
        to2 = np.where(b2 >= 0, L2 - o2, inf)
        with np.errstate(invalid="ignore"):
            cands = np.stack([
                o1 + D[a1, a2] + o2,
                o1 + D[a1, b2s] + to2,
                to1 + D[b1s, a2] + o2,
                to1 + D[b1s, b2s] + to2,
            ])
        cands = np.where(np.isnan(cands), inf, cands)
        return np.where(same, out, cands.min(axis=0))

    def to_json(self) -> dict:
        verts = []
        for v in range(self.n_vertices):
            rec = {"id": v, "valence": self.valence(v)}
            tag = self.vertex_tags[v]
            if tag is not None:
                rec["source"] = tag
            verts.append(rec)
        edges = []
        for e in range(self.n_edges):
            rec = {"id": e, "from": int(self.edge_from[e])}
            if self.edge_to[e] >= 0:
                rec["to"] = int(self.edge_to[e])
                rec["length"] = float(self.edge_len[e])
            else:
                rec["to"] = "RAY"
                rec["length"] = "INF"
            edges.append(rec)
        return {"metric_scale": self.metric_scale, "vertices": verts, "edges": edges}


def tree_distance(tree: SimplicialTree, a: TreePoint, b: TreePoint) -> float:
    return tree.distance(a, b)


def product_distance(trees, p: ProductTreePoint, q: ProductTreePoint) -> float:
    t1, t2 = trees
    return math.hypot(t1.distance(p.first, q.first), t2.distance(p.second, q.second))


@dataclass
class _Arc:
    start: float  # angle of the starting separatrix endpoint
    span: float
    c_start: int  # cluster of the separatrix endpoint at the start
    c_end: int
    angles: np.ndarray
    cum: np.ndarray  # W(angle) - W(start) along the arc
    branch: np.ndarray
    edge: int = -1
    from_start: bool = True


class LeafTree(SimplicialTree):
    """Leaf space of the vertical foliation of ``psi`` with its projection."""

    def __init__(self, phi: PolynomialQD, kind: str, graph: CriticalGraph | None, n_vertices, edge_from,
                 edge_to, edge_len, vertex_tags, arcs, clusters, metric_scale=METRIC_SCALE):
        super().__init__(n_vertices, edge_from, edge_to, edge_len, metric_scale, vertex_tags)
        self.phi = phi
        self.kind = kind
        self.psi = effective(phi, kind)
        self.graph = graph
        self.arcs = arcs
        self.clusters = clusters  # zero id -> vertex id
        self.zeros = graph.zeros if graph is not None else find_zeros(self.psi)
        self.clip_radius = graph.clip_radius if graph is not None else math.inf
        self.guard = guard_radius(self.zeros)
        self._arc_starts = np.array([a.start for a in arcs]) if arcs else np.zeros(0)
        if self.zeros.zeros:
            self._sqrt_c0 = None
        else:
            self._sqrt_c0 = cmath.sqrt(self.psi.coeffs[0])

    # projection -----------------------------------------------------------
    def project_many(self, z, step: float = 0.05, max_iter: int = 200000):
        """Project points to the tree; returns (edge ids, offsets) in the scaled metric."""
        z = np.atleast_1d(np.asarray(z, dtype=complex)).ravel()
        edges = np.zeros(len(z), dtype=int)
        offs = np.zeros(len(z))
        s = self.metric_scale
        if self._sqrt_c0 is not None:
            w = (self._sqrt_c0 * z).real
            edges[:] = np.where(w >= 0, 0, 1)
            offs[:] = np.abs(w) * s
            return edges, offs
        zl = self.zeros.locations
        dist = np.abs(z[:, None] - zl[None, :])
        near = dist.min(axis=1) < self.guard
        for i in np.nonzero(near)[0]:
            v = self.clusters[int(np.argmin(dist[i]))]
            p = self.vertex_point(v)
            edges[i], offs[i] = p.edge, p.offset
        idx = np.nonzero(~near)[0]
        if len(idx):
            e, o = self._project_traced(z[idx], step, max_iter)
            edges[idx], offs[idx] = e, o
        return edges, offs

    def project(self, z: complex) -> TreePoint:
        e, o = self.project_many([z])
        return self.canonical(TreePoint(int(e[0]), float(o[0])))

    def _field(self, z, s_ref, d_ref):
        s = np.sqrt(self.psi(z).astype(complex))
        s = np.where((s * np.conj(s_ref)).real < 0, -s, s)
        a = np.abs(s)
        a = np.where(a == 0, 1.0, a)
        v = 1j * np.conj(s) / a
        v = np.where((v * np.conj(d_ref)).real < 0, -v, v)
        return v

    def _project_traced(self, z, step, max_iter):
        psi = self.psi
        R = self.clip_radius
        zl = self.zeros.locations
        t_gl, w_gl = gauss_legendre(6)
        cur = z.copy()
        s = np.sqrt(psi(cur).astype(complex))
        s0 = s.copy()
        d0 = 1j * np.conj(s) / np.abs(s)
        d = d0.copy()
        W = np.zeros(len(z), dtype=complex)
        active = np.ones(len(z), dtype=bool)
        reversed_ = np.zeros(len(z), dtype=bool)
        at_vertex = np.full(len(z), -1)
        for _ in range(max_iter):
            ia = np.nonzero(active)[0]
            if not len(ia):
                break
            zc, sc, dc = cur[ia], s[ia], d[ia]
            dzs = np.abs(zc[:, None] - zl[None, :])
            dz0 = dzs.min(axis=1)
            # a leaf running into a zero is a separatrix: retrace the other way,
            # and if that also ends at a zero the point sits on a saddle connection
            stuck = dz0 < 0.5 * self.guard
            if np.any(stuck):
                for i_loc in np.nonzero(stuck)[0]:
                    i = ia[i_loc]
                    if reversed_[i]:
                        at_vertex[i] = self.clusters[int(np.argmin(dzs[i_loc]))]
                        active[i] = False
                    else:
                        reversed_[i] = True
                        cur[i], s[i], d[i], W[i] = z[i], s0[i], -d0[i], 0
                continue
            h = np.minimum(step, 0.25 * dz0)
            k1 = self._field(zc, sc, dc)
            k2 = self._field(zc + 0.5 * h * k1, sc, k1)
            k3 = self._field(zc + 0.5 * h * k2, sc, k2)
            k4 = self._field(zc + h * k3, sc, k3)
            dnew = (k1 + 2 * k2 + 2 * k3 + k4) / 6
            znew = zc + h * dnew
            out = np.abs(znew) >= R
            if np.any(out):
                a, b = zc[out], znew[out]
                dd = b - a
                A = np.abs(dd) ** 2
                B = 2 * (np.conj(a) * dd).real
                C = np.abs(a) ** 2 - R * R
                t = (-B + np.sqrt(np.maximum(B * B - 4 * A * C, 0))) / (2 * A)
                znew[out] = a + np.clip(t, 0, 1) * dd
            # chord integral with branch continuation
            dz = znew - zc
            nodes = zc[:, None] + dz[:, None] * t_gl[None, :]
            vals = np.sqrt(psi(nodes).astype(complex))
            vals = continue_branch(vals, sc)
            W[ia] += (vals * w_gl).sum(axis=1) * dz
            send = np.sqrt(psi(znew).astype(complex))
            send = np.where((send * np.conj(vals[:, -1])).real < 0, -send, send)
            cur[ia] = znew
            s[ia] = send
            d[ia] = k4
            active[ia[out]] = False
        if np.any(active):
            raise RuntimeError(f"{int(active.sum())} leaves did not reach the clip circle")
        edges = np.zeros(len(z), dtype=int)
        offs = np.zeros(len(z))
        done = at_vertex < 0
        if np.any(done):
            edges[done], offs[done] = self._read_exit(cur[done], s[done], W[done])
        for i in np.nonzero(~done)[0]:
            p = self.vertex_point(int(at_vertex[i]))
            edges[i], offs[i] = p.edge, p.offset
        return edges, offs

    def _read_exit(self, e, s_fwd, Wpath):
        """Tree coordinates of points whose leaves exit the circle at e."""
        ang = np.mod(np.angle(e), 2 * np.pi)
        rel = np.mod(ang[:, None] - self._arc_starts[None, :], 2 * np.pi)
        spans = np.array([a.span for a in self.arcs])
        inside = rel <= spans[None, :]
        rel_masked = np.where(inside, rel, np.inf)
        j = np.argmin(rel_masked, axis=1)
        edges = np.zeros(len(e), dtype=int)
        offs = np.zeros(len(e))
        for k in np.unique(j):
            sel = np.nonzero(j == k)[0]
            arc = self.arcs[k]
            r = np.minimum(rel[sel, k], arc.span)
            i0 = np.clip(np.searchsorted(arc.angles, r, side="right") - 1, 0, len(arc.angles) - 1)
            R = self.clip_radius
            za = R * np.exp(1j * (arc.start + arc.angles[i0]))
            t_gl, w_gl = gauss_legendre(6)
            dz = e[sel] - za
            nodes = za[:, None] + dz[:, None] * t_gl[None, :]
            vals = continue_branch(np.sqrt(self.psi(nodes).astype(complex)), arc.branch[i0])
            W_arc_e = arc.cum[i0] + (vals * w_gl).sum(axis=1) * dz
            s_arc_e = vals[:, -1]
            sigma = np.where((s_arc_e * np.conj(s_fwd[sel])).real < 0, -1.0, 1.0)
            A = np.abs((W_arc_e - sigma * Wpath[sel]).real)
            L = self.edge_len[arc.edge] / self.metric_scale
            if math.isfinite(L):
                A = np.clip(A, 0.0, L)
                off = A if arc.from_start else L - A
            else:
                off = A
            edges[sel] = arc.edge
            offs[sel] = off * self.metric_scale
        return edges, offs


def _line_tree(phi: PolynomialQD, kind: str) -> LeafTree:
    return LeafTree(phi, kind, None, 1, [0, 0], [RAY, RAY], [np.inf, np.inf], ["junction"], [], {})


def build_leaf_tree(graph: CriticalGraph | None, phi: PolynomialQD, kind: str | None = None,
                    arc_step: float = 0.01, length_rtol: float = 1e-6) -> LeafTree:
    """Dual tree of the foliation described by ``graph`` (or of ``kind`` when graph is None)."""
    if graph is None:
        if kind is None:
            raise ValueError("need a critical graph or a kind")
        if phi.degree == 0:
            return _line_tree(phi, kind)
        graph = critical_graph(phi, kind)
    kind = graph.kind
    if phi.is_zero:
        raise ValueError("the zero differential has no foliation")
    if phi.degree == 0:
        return _line_tree(phi, kind)
    if not graph.complete:
        raise AmbiguousGraphError("critical graph has truncated separatrices")
    psi = effective(phi, kind)
    nz = len(graph.zeros)
    parent = list(range(nz))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in graph.saddle_connections():
        parent[find(a)] = find(b)
    roots = sorted({find(i) for i in range(nz)})
    vid = {r: k for k, r in enumerate(roots)}
    clusters = {i: vid[find(i)] for i in range(nz)}
    tags = [[] for _ in roots]
    for i in range(nz):
        tags[clusters[i]].append(i)

    ends = [(float(np.mod(np.angle(s.points[-1]), 2 * np.pi)), clusters[s.zero_id])
            for s in graph.separatrices if s.end_kind == "clip"]
    ends.sort()
    R = graph.clip_radius
    arcs = []
    for k, (th, c) in enumerate(ends):
        th2, c2 = ends[(k + 1) % len(ends)]
        span = np.mod(th2 - th, 2 * np.pi)
        if len(ends) == 1:
            span = 2 * np.pi
        m = max(16, int(math.ceil(span * R / arc_step)))
        angles = np.linspace(0.0, span, m + 1)
        pts = R * np.exp(1j * (th + angles))
        cum, br = sqrt_integral_polyline(psi, pts, ref=np.sqrt(complex(psi(pts[0]))), n=6)
        arcs.append(_Arc(th, float(span), c, c2, angles, cum, br))

    edge_from, edge_to, edge_len = [], [], []
    strip_edges = {}
    ray_arcs = []
    for k, arc in enumerate(arcs):
        if arc.c_start == arc.c_end:
            ray_arcs.append(k)
            continue
        key = tuple(sorted((arc.c_start, arc.c_end)))
        width = abs(arc.cum[-1].real)
        if key in strip_edges:
            e = strip_edges[key]
            ref = edge_len[e] / METRIC_SCALE
            if abs(width - ref) > length_rtol * max(ref, 1.0) + 1e-8:
                raise AmbiguousGraphError(f"strip {key} has inconsistent widths {ref} vs {width}")
        else:
            e = len(edge_from)
            strip_edges[key] = e
            edge_from.append(key[0])
            edge_to.append(key[1])
            edge_len.append(width * METRIC_SCALE)
        arc.edge = e
        arc.from_start = arc.c_start == key[0]
    for k in ray_arcs:
        arcs[k].edge = len(edge_from)
        arcs[k].from_start = True
        edge_from.append(arcs[k].c_start)
        edge_to.append(RAY)
        edge_len.append(np.inf)

    tree = LeafTree(phi, kind, graph, len(roots), edge_from, edge_to, edge_len, tags, arcs, clusters)
    if tree.n_rays != phi.degree + 2 or not tree.satisfies_tree_identity():
        raise AmbiguousGraphError(
            f"inconsistent combinatorics: {tree.n_rays} rays for degree {phi.degree}, "
            f"{tree.n_finite} finite edges for {tree.n_vertices} vertices")
    return tree


def build_tree(phi: PolynomialQD, kind: str = "vertical", clip_radius: float | None = None,
               step: float = 0.05) -> LeafTree:
    """Critical graph plus dual tree, enlarging the clip radius if the combinatorics fail."""
    if phi.degree == 0:
        return _line_tree(phi, kind)
    R = clip_radius
    last = None
    for _ in range(3):
        graph = critical_graph(phi, kind, R, step)
        try:
            return build_leaf_tree(graph, phi)
        except AmbiguousGraphError as exc:
            last = exc
            R = 2 * graph.clip_radius
    raise last


def project(phi: PolynomialQD, tree: LeafTree, z: complex, kind: str = "vertical") -> TreePoint:
    if tree.kind != kind or tree.phi != phi:
        raise ValueError("tree was built for a different differential or kind")
    return tree.project(z)


class ProductTree:
    """(T1, 2d1) x (T2, 2d2): vertical and horizontal leaf spaces of phi."""

    def __init__(self, phi: PolynomialQD, clip_radius: float | None = None):
        self.phi = phi
        self.first = build_tree(phi, "vertical", clip_radius)
        self.second = build_tree(phi, "horizontal", clip_radius)

    @property
    def factors(self):
        return (self.first, self.second)

    def project(self, z: complex) -> ProductTreePoint:
        return ProductTreePoint(self.first.project(z), self.second.project(z))

    def project_many(self, z):
        return self.first.project_many(z), self.second.project_many(z)

    def distance(self, p: ProductTreePoint, q: ProductTreePoint) -> float:
        return product_distance(self.factors, p, q)


@dataclass
class InjectivityReport:
    pairs: int
    violations: int
    min_ratio: float  # min product distance / |z - w|

    @property
    def ok(self) -> bool:
        return self.violations == 0


def injectivity_spot_check(phi: PolynomialQD, samples: int = 1000, seed: int = 0, radius: float = 1.0,
                           product: ProductTree | None = None, tol: float = 1e-9) -> InjectivityReport:
    """Random pairs z != w in the disk must have distinct product projections."""
    rng = np.random.default_rng(seed)
    prod = product or ProductTree(phi)

    def rand_pts(n):
        r = radius * np.sqrt(rng.random(n))
        return r * np.exp(2j * np.pi * rng.random(n))

    z, w = rand_pts(samples), rand_pts(samples)
    (e1z, o1z), (e2z, o2z) = prod.project_many(z)
    (e1w, o1w), (e2w, o2w) = prod.project_many(w)
    d1 = prod.first.distances(e1z, o1z, e1w, o1w)
    d2 = prod.second.distances(e2z, o2z, e2w, o2w)
    d = np.hypot(d1, d2)
    sep = np.abs(z - w)
    bad = (d <= tol) & (sep > tol)
    ratio = np.where(sep > 0, d / np.maximum(sep, 1e-300), np.inf)
    return InjectivityReport(samples, int(bad.sum()), float(ratio.min()))


@dataclass
class ConvexFiberReport:
    first_spread: float  # max distance between pi_1 images of leaf points
    monotone: bool
    geodesic_defect: float  # sum of steps minus end-to-end distance
    length: float

    @property
    def ok(self) -> bool:
        return self.monotone and self.geodesic_defect <= 1e-6 * max(1.0, self.length)


def convex_fiber_spot_check(phi: PolynomialQD, leaf, product: ProductTree | None = None,
                            radius: float | None = None) -> ConvexFiberReport:
    """The horizontal-tree image of a vertical leaf must run along a single geodesic."""
    prod = product or ProductTree(phi)
    pts = np.asarray(leaf.points if hasattr(leaf, "points") else leaf, dtype=complex)
    if radius is not None:
        pts = pts[np.abs(pts) <= radius]
    if len(pts) < 2:
        return ConvexFiberReport(0.0, True, 0.0, 0.0)
    e1, o1 = prod.first.project_many(pts)
    e2, o2 = prod.second.project_many(pts)
    t1, t2 = prod.first, prod.second
    spread = float(t1.distances(e1, o1, np.full(len(pts), e1[0]), np.full(len(pts), o1[0])).max())
    from_start = t2.distances(np.full(len(pts), e2[0]), np.full(len(pts), o2[0]), e2, o2)
    steps = t2.distances(e2[:-1], o2[:-1], e2[1:], o2[1:])
    tol = 1e-9 * max(1.0, float(from_start.max()))
    monotone = bool(np.all(np.diff(from_start) >= -tol))
    defect = float(steps.sum() - from_start[-1])
    return ConvexFiberReport(spread, monotone, defect, float(from_start[-1]))
