"""Discrete harmonic maps from a triangulated disk into trees and products of two trees.

The discrete energy is the cotangent graph energy 1/2 sum w_ij d(u_i, u_j)^2.
Minimization is coordinate descent: each interior vertex moves to the weighted
tree barycenter of its neighbors. Vertices are grouped into independent sets
(a greedy coloring), so updating one color class at once is the same as
updating its vertices one after another.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .maps import DiscreteMap, ks_energy
from .mesh import DiskMesh
from .qd import PolynomialQD, l1_norm
from .tree import ProductTree, SimplicialTree, TreePoint

log = logging.getLogger(__name__)


# weighted barycenters on a tree ---------------------------------------------

def _dist_to_vertex(tree: SimplicialTree, E, O, v):
    """Distance from points (E, O) to vertices v (broadcasting)."""
    a, b = tree.edge_from[E], tree.edge_to[E]
    d = O + tree.vdist[a, v]
    fin = b >= 0
    bs = np.where(fin, b, 0)
    with np.errstate(invalid="ignore"):
        alt = np.where(fin, tree.edge_len[E] - O + tree.vdist[bs, v], np.inf)
    return np.minimum(d, alt)


def _edge_tables(tree: SimplicialTree):
    cache = getattr(tree, "_plateau_tables", None)
    if cache is not None:
        return cache
    maxval = max((len(i) for i in tree.incident), default=1)
    inc = -np.ones((tree.n_vertices, maxval), dtype=int)
    for v, lst in enumerate(tree.incident):
        inc[v, :len(lst)] = lst
    vp = [tree.vertex_point(v) for v in range(tree.n_vertices)]
    vp_edge = np.array([p.edge for p in vp], dtype=int)
    vp_off = np.array([p.offset for p in vp], dtype=float)
    cache = (inc, vp_edge, vp_off)
    tree._plateau_tables = cache
    return cache


def _canonical(tree: SimplicialTree, e, t, tol=1e-12):
    _, vp_edge, vp_off = _edge_tables(tree)
    e = np.asarray(e, dtype=int).copy()
    t = np.asarray(t, dtype=float).copy()
    a, b, L = tree.edge_from[e], tree.edge_to[e], tree.edge_len[e]
    at_a = t <= tol
    at_b = (b >= 0) & (t >= L - tol)
    e[at_a], t[at_a] = vp_edge[a[at_a]], vp_off[a[at_a]]
    e[at_b], t[at_b] = vp_edge[b[at_b]], vp_off[b[at_b]]
    return e, t


def _unfold(tree: SimplicialTree, e, E, O):
    """Coordinates of points (E, O) along edge e (one edge per row) measured from its start.

    Along edge e the distance to each point is exactly |t - c|.
    """
    a, b, L = tree.edge_from[e], tree.edge_to[e], tree.edge_len[e]
    a2, b2, L2 = a[:, None], b[:, None], L[:, None]
    dA = _dist_to_vertex(tree, E, O, a2)
    fin = b2 >= 0
    dB = _dist_to_vertex(tree, E, O, np.where(fin, b2, 0))
    tol = 1e-12 * (1.0 + np.where(np.isfinite(L2), L2, 0.0) + dA)
    with np.errstate(invalid="ignore"):
        beyond_b = fin & (dA >= dB + L2 - tol) & (dB > tol)
        c = np.where(beyond_b, L2 + dB, -dA)
    c = np.where(E == e[:, None], O, c)
    return c


def batch_weighted_mean(tree: SimplicialTree, E, O, W, start_edge=None, max_iter=None):
    """Weighted tree barycenters for a batch of point sets.

    E, O, W have shape (B, K); zero weights pad ragged rows. Returns canonical
    (edges, offsets). Starting from ``start_edge``, the exact minimizer on the
    current edge is computed in closed form; when it lands on a vertex the
    unique descent direction (if any) selects the next edge.
    """
    E = np.atleast_2d(np.asarray(E, dtype=int))
    O = np.atleast_2d(np.asarray(O, dtype=float))
    W = np.atleast_2d(np.asarray(W, dtype=float))
    B = E.shape[0]
    inc, _, _ = _edge_tables(tree)
    cur = E[np.arange(B), np.argmax(W, axis=1)] if start_edge is None else np.asarray(start_edge, int).copy()
    res_e = cur.copy()
    res_t = np.zeros(B)
    active = np.ones(B, dtype=bool)
    came_from = -np.ones(B, dtype=int)
    wsum = W.sum(axis=1)
    if np.any(wsum <= 0):
        raise ValueError("every point set needs positive total weight")
    for _ in range(max_iter or (tree.n_edges + 3)):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        e = cur[idx]
        c = _unfold(tree, e, E[idx], O[idx])
        mean = (W[idx] * c).sum(axis=1) / wsum[idx]
        L = tree.edge_len[e]
        t = np.clip(mean, 0.0, L)
        res_e[idx], res_t[idx] = e, t
        at_a = t <= 0.0
        at_b = np.isfinite(L) & (t >= L)
        stop = ~(at_a | at_b)
        v = np.where(at_a, tree.edge_from[e], np.where(at_b, tree.edge_to[e], 0))
        # one-sided derivatives at v into each incident edge
        cand = inc[v]  # (b, maxval)
        dv = _dist_to_vertex(tree, E[idx], O[idx], v[:, None])  # (b, K)
        scale = (W[idx] * dv).sum(axis=1)
        best_d = np.zeros(idx.size)
        best_e = -np.ones(idx.size, dtype=int)
        for j in range(cand.shape[1]):
            ej = cand[:, j]
            ok = ej >= 0
            ejs = np.where(ok, ej, 0)
            far = np.where(tree.edge_from[ejs] == v, tree.edge_to[ejs], tree.edge_from[ejs])
            Lj = tree.edge_len[ejs][:, None]
            on_edge = (E[idx] == ejs[:, None]) & (dv > 0)
            with np.errstate(invalid="ignore"):
                dfar = np.where(far[:, None] >= 0,
                                _dist_to_vertex(tree, E[idx], O[idx], np.where(far >= 0, far, 0)[:, None]),
                                np.inf)
                through = (far[:, None] >= 0) & (np.abs(dfar + Lj - dv) <= 1e-12 * (1 + dv))
            inside = (on_edge | through) & (dv > 0)
            deriv = 2.0 * (W[idx] * dv * np.where(inside, -1.0, 1.0)).sum(axis=1)
            better = ok & (ej != e) & (ej != came_from[idx]) & (deriv < best_d) & (deriv < -1e-12 * (1 + scale))
            best_d = np.where(better, deriv, best_d)
            best_e = np.where(better, ej, best_e)
        move = ~stop & (best_e >= 0)
        cur[idx[move]] = best_e[move]
        came_from[idx[move]] = e[move]
        active[idx[~move]] = False
    return _canonical(tree, res_e, res_t)


def tree_weighted_mean(tree: SimplicialTree, points, weights) -> TreePoint:
    """Minimizer of sum w_i d(x, p_i)^2 over the tree."""
    points = list(points)
    if not points or len(points) != len(weights):
        raise ValueError("need equally many points and weights, at least one")
    E = np.array([[p.edge for p in points]])
    O = np.array([[p.offset for p in points]])
    e, t = batch_weighted_mean(tree, E, O, np.array([weights], dtype=float))
    return TreePoint(int(e[0]), float(t[0]))


# solver ---------------------------------------------------------------------

@dataclass
class PlateauProblem:
    mesh: DiskMesh
    target: object  # ProductTree, SimplicialTree, or a pair of trees
    boundary: object  # per factor: (edges, offsets) on mesh.boundary_loop
    tolerance: float | None = None
    max_sweeps: int = 5000

    @property
    def trees(self) -> tuple:
        if isinstance(self.target, SimplicialTree):
            return (self.target,)
        if isinstance(self.target, ProductTree):
            return self.target.factors
        return tuple(self.target)

    def boundary_factors(self) -> tuple:
        if isinstance(self.target, SimplicialTree):
            return (self.boundary,)
        return tuple(self.boundary)

    @classmethod
    def from_projection(cls, mesh: DiskMesh, target, **kw) -> "PlateauProblem":
        """Boundary values given by the leaf-space projection itself."""
        z = mesh.vertices[mesh.boundary_loop]
        if isinstance(target, SimplicialTree):
            bnd = target.project_many(z)
        else:
            bnd = tuple(t.project_many(z) for t in (target.factors if isinstance(target, ProductTree) else target))
        return cls(mesh, target, bnd, **kw)


@dataclass
class SolverState:
    values: list  # per factor (edges, offsets) at every vertex
    energy_history: list = field(default_factory=list)
    factor_energies: list = field(default_factory=list)
    sweeps: int = 0
    converged: bool = False

    @property
    def energy(self) -> float:
        return self.energy_history[-1]

    def as_map(self, problem: PlateauProblem) -> DiscreteMap:
        trees = problem.trees
        if len(trees) == 1:
            return DiscreteMap("tree", self.values[0], tree=trees[0])
        target = problem.target if isinstance(problem.target, ProductTree) else _Pair(trees)
        return DiscreteMap("product", tuple(self.values), tree=target)


class _Pair:
    def __init__(self, trees):
        self.factors = tuple(trees)


def clamped_weights(mesh: DiskMesh):
    edges, w = mesh.cotan_weights
    neg = w < 0
    # cocircular Delaunay quads give roundoff-sized negatives; only real ones are worth a warning
    bad = w < -1e-10 * np.max(np.abs(w))
    inner = mesh.interior[edges[:, 0]] | mesh.interior[edges[:, 1]]
    if np.any(bad & inner):
        warnings.warn(f"{int(np.sum(bad & inner))} interior cotangent weights clamped to 0", stacklevel=2)
    return edges, np.where(neg, 0.0, w)


def graph_energy(tree: SimplicialTree, values, edges, w) -> float:
    e, o = values
    d = tree.distances(e[edges[:, 0]], o[edges[:, 0]], e[edges[:, 1]], o[edges[:, 1]])
    return float(0.5 * np.sum(w * d * d))


def _coloring(n: int, edges, active):
    nbrs = [[] for _ in range(n)]
    for i, j in edges:
        nbrs[i].append(j)
        nbrs[j].append(i)
    color = -np.ones(n, dtype=int)
    for v in np.flatnonzero(active):
        used = {color[u] for u in nbrs[v]}
        c = 0
        while c in used:
            c += 1
        color[v] = c
    return color, nbrs


def _padded(nbr_lists, wmap, verts):
    K = max((len(nbr_lists[v]) for v in verts), default=1)
    idx = np.zeros((len(verts), K), dtype=int)
    W = np.zeros((len(verts), K))
    for r, v in enumerate(verts):
        for c, u in enumerate(nbr_lists[v]):
            idx[r, c] = u
            W[r, c] = wmap[(min(u, v), max(u, v))]
    return idx, W


def _initial_values(tree: SimplicialTree, mesh: DiskMesh, bnd, initial, rng):
    n = mesh.n_vertices
    be, bo = np.asarray(bnd[0], dtype=int), np.asarray(bnd[1], dtype=float)
    if isinstance(initial, tuple):
        e, o = np.array(initial[0], dtype=int), np.array(initial[1], dtype=float)
    elif initial == "projection":
        if not hasattr(tree, "project_many"):
            raise ValueError("projection initialization needs a leaf tree")
        e, o = tree.project_many(mesh.vertices)
        e, o = np.array(e), np.array(o)
    elif initial == "boundary":
        zb = mesh.vertices[mesh.boundary_loop]
        near = np.argmin(np.abs(mesh.vertices[:, None] - zb[None, :]), axis=1)
        e, o = be[near].copy(), bo[near].copy()
    elif initial == "random":
        e = rng.integers(0, tree.n_edges, size=n)
        L = tree.edge_len[e]
        reach = max(1.0, float(np.max(bo)))
        o = rng.uniform(0, 1, size=n) * np.where(np.isfinite(L), L, reach)
    else:
        raise ValueError(f"unknown initialization {initial!r}")
    e[mesh.boundary_loop], o[mesh.boundary_loop] = be, bo
    return _canonical(tree, e, o)


def solve(problem: PlateauProblem, initial="projection", seed: int = 0) -> SolverState:
    """Minimize the cotangent energy with pinned boundary, one tree factor at a time.

    ``initial`` is "projection", "boundary" (nearest boundary value), "random",
    or per-factor value tuples. Stops when a sweep lowers the energy by at most
    ``tolerance`` (default 1e-10 times the initial energy).
    """
    mesh = problem.mesh
    edges, w = clamped_weights(mesh)
    wmap = {(int(i), int(j)): float(x) for (i, j), x in zip(edges, w)}
    color, nbrs = _coloring(mesh.n_vertices, edges, mesh.interior)
    classes = [np.flatnonzero(color == c) for c in range(color.max() + 1)] if color.max() >= 0 else []
    padded = [_padded(nbrs, wmap, cls) for cls in classes]
    rng = np.random.default_rng(seed)
    trees = problem.trees
    bnds = problem.boundary_factors()
    inits = initial if isinstance(initial, list) else [initial] * len(trees)
    values = [_initial_values(t, mesh, b, i, rng) for t, b, i in zip(trees, bnds, inits)]

    def energies():
        return [graph_energy(t, v, edges, w) for t, v in zip(trees, values)]

    fe = energies()
    E0 = sum(fe)
    tol = problem.tolerance if problem.tolerance is not None else 1e-10 * E0
    state = SolverState(values, [E0], [fe])
    if E0 == 0.0 or not classes:
        state.converged = True
        return state
    for sweep in range(problem.max_sweeps):
        for cls, (nidx, W) in zip(classes, padded):
            for k, t in enumerate(trees):
                e, o = values[k]
                NE, NO = e[nidx], o[nidx]
                old = t.distances(np.repeat(e[cls][:, None], NE.shape[1], 1), np.repeat(o[cls][:, None], NE.shape[1], 1), NE, NO)
                ne, no = batch_weighted_mean(t, NE, NO, W, start_edge=e[cls])
                new = t.distances(np.repeat(ne[:, None], NE.shape[1], 1), np.repeat(no[:, None], NE.shape[1], 1), NE, NO)
                f_old = (W * old**2).sum(axis=1)
                f_new = (W * new**2).sum(axis=1)
                if np.any(f_new > f_old + 1e-12 * (1 + f_old)):
                    raise RuntimeError("coordinate update increased the energy")
                # move only on a real improvement, so fixed points stay bitwise fixed
                keep = f_new >= f_old * (1 - 1e-14)
                e[cls] = np.where(keep, e[cls], ne)
                o[cls] = np.where(keep, o[cls], no)
        fe = energies()
        state.energy_history.append(sum(fe))
        state.factor_energies.append(fe)
        state.sweeps = sweep + 1
        if state.energy_history[-2] - state.energy_history[-1] <= tol:
            state.converged = True
            break
    if not state.converged:
        log.warning("plateau solver stopped after %d sweeps without converging", state.sweeps)
    return state


# comparisons ----------------------------------------------------------------

@dataclass
class ProjectionComparison:
    sup_distance: float
    mean_distance: float
    energy: float
    factor_energies: list
    reference_energy: float
    energy_gap: float


def compare_with_projection(state: SolverState, phi: PolynomialQD, problem: PlateauProblem) -> ProjectionComparison:
    """Distances from the solution to the sampled projection and the energy gap per factor.

    The reference is the integral of 2|phi| over the meshed disk (one factor);
    the gap is the mean of the factor energies minus it.
    """
    mesh = problem.mesh
    trees = problem.trees
    sq = np.zeros(mesh.n_vertices)
    fe = []
    for t, (e, o) in zip(trees, state.values):
        pe, po = t.project_many(mesh.vertices)
        sq += t.distances(e, o, pe, po) ** 2
        fe.append(ks_energy(DiscreteMap("tree", (e, o), tree=t), mesh))
    d = np.sqrt(sq)
    radius = float(np.max(np.abs(mesh.vertices - mesh.vertices[mesh.boundary_loop].mean())))
    ref = 2.0 * l1_norm(phi, radius)
    return ProjectionComparison(float(d.max()), float(d.mean()), float(sum(fe)), fe, ref,
                                float(np.mean(fe) - ref))


@dataclass
class NmiEnergyReport:
    base_energy: float
    composed_energy: float
    margin: float


def energy_comparison_nmi(phi: PolynomialQD, f1: DiscreteMap, f2: DiscreteMap, mesh: DiskMesh,
                          product: ProductTree | None = None) -> NmiEnergyReport:
    """Energy of (pi_1 o f1^-1, pi_2 o f2^-1) against (pi_1, pi_2).

    pi_1, pi_2 are the vertical and horizontal projections of phi (the
    projections for phi and -phi). The composition is carried by moving the
    mesh, so f1 and f2 must map the meshed domain onto itself.
    """
    b1 = f1.values[mesh.boundary_loop]
    b2 = f2.values[mesh.boundary_loop]
    if np.max(np.abs(b1 - b2), initial=0.0) > 1e-12:
        raise ValueError("f1 and f2 must agree on the boundary")
    product = product or ProductTree(phi)
    base = composed = 0.0
    for t, f in zip(product.factors, (f1, f2)):
        h = DiscreteMap("tree", t.project_many(mesh.vertices), tree=t)
        base += ks_energy(h, mesh)
        composed += ks_energy(h, mesh.moved(f.values))
    return NmiEnergyReport(base, composed, composed - base)
