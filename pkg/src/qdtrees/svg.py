"""Deterministic SVG pictures of a foliation and of its leaf tree."""
from __future__ import annotations

import cmath

import numpy as np

from .foliation import CriticalGraph, sample_leaves
from .tree import LeafTree

SIZE = 600


def _num(x: float) -> str:
    return f"{x:.9g}"


class _Canvas:
    def __init__(self, radius: float):
        self.radius = radius
        self.items = []

    def xy(self, z: complex) -> tuple[str, str]:
        s = SIZE / (2 * self.radius)
        return _num(SIZE / 2 + s * z.real), _num(SIZE / 2 - s * z.imag)

    def polyline(self, pts, width: float, color: str):
        coords = " ".join(",".join(self.xy(complex(p))) for p in pts)
        self.items.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="{_num(width)}"/>')

    def dot(self, z: complex, r: float, color: str):
        x, y = self.xy(z)
        self.items.append(f'<circle cx="{x}" cy="{y}" r="{_num(r)}" fill="{color}"/>')

    def render(self) -> str:
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{SIZE}" height="{SIZE}" '
                f'viewBox="0 0 {SIZE} {SIZE}">')
        return "\n".join([head, f'<rect width="{SIZE}" height="{SIZE}" fill="white"/>', *self.items, "</svg>"]) + "\n"


def _draw_foliation(cv: _Canvas, graph: CriticalGraph | None, tree: LeafTree, leaves: int):
    R = cv.radius
    phi, kind = tree.phi, tree.kind
    for seg in sample_leaves(phi, kind, leaves, 0.9 * R, R):
        cv.polyline(seg.points, 0.6, "#7a8fa6")
    if graph is not None:
        for seg in graph.separatrices:
            cv.polyline(seg.points, 2.4, "black")
        for z in graph.zeros.locations:
            cv.dot(z, 3.5, "black")


def _draw_tree(cv: _Canvas, tree: LeafTree):
    R = cv.radius
    if not tree.arcs:
        # line tree of a constant differential: rays across the leaves
        d = np.conj(tree._sqrt_c0) / abs(tree._sqrt_c0)
        cv.polyline([-0.95 * R * d, 0.95 * R * d], 2.0, "#c0392b")
        cv.dot(0j, 4.0, "#c0392b")
        return
    pos = np.zeros(tree.n_vertices, dtype=complex)
    for v, zs in enumerate(tree.vertex_tags):
        pos[v] = np.mean(tree.zeros.locations[list(zs)])
    drawn = set()
    for arc in tree.arcs:
        e = arc.edge
        if e in drawn:
            continue
        drawn.add(e)
        if tree.edge_to[e] < 0:
            end = 0.95 * R * cmath.exp(1j * (arc.start + arc.span / 2))
            cv.polyline([pos[tree.edge_from[e]], end], 2.0, "#c0392b")
        else:
            cv.polyline([pos[tree.edge_from[e]], pos[tree.edge_to[e]]], 2.0, "#c0392b")
    for z in pos:
        cv.dot(z, 4.0, "#c0392b")


def render_svg(tree: LeafTree, what: str = "both", leaves: int = 15, radius: float | None = None) -> str:
    """SVG text showing the foliation (critical graph bold, leaves thin), the tree, or both."""
    if what not in ("foliation", "tree", "both"):
        raise ValueError(f"unknown picture {what!r}")
    R = radius or (tree.clip_radius if np.isfinite(tree.clip_radius) else 2.0)
    cv = _Canvas(R)
    if what in ("foliation", "both"):
        _draw_foliation(cv, tree.graph, tree, leaves)
    if what in ("tree", "both"):
        _draw_tree(cv, tree)
    return cv.render()


def write_svg(path, tree: LeafTree, what: str = "both", leaves: int = 15) -> None:
    with open(path, "w") as fh:
        fh.write(render_svg(tree, what, leaves))
