"""Polynomial quadratic differentials, their foliations and leaf-space trees, and
numerical checks of harmonic-map identities built on them."""
from .qd import PolynomialQD, find_zeros, l1_norm, transverse_measure
from .foliation import critical_graph, trace_trajectory
from .tree import ENERGY_CONVENTION, LeafTree, ProductTree, build_tree, project
from .mesh import DiskMesh, build_mesh, build_rect_mesh
from .maps import beltrami_of, energy_density, hopf, ks_area, ks_energy, pullback_metric, reich_strebel_sides

__version__ = "0.1.0"

__all__ = [
    "PolynomialQD", "find_zeros", "l1_norm", "transverse_measure",
    "critical_graph", "trace_trajectory",
    "ENERGY_CONVENTION", "LeafTree", "ProductTree", "build_tree", "project",
    "DiskMesh", "build_mesh", "build_rect_mesh",
    "beltrami_of", "energy_density", "hopf", "ks_area", "ks_energy", "pullback_metric", "reich_strebel_sides",
]
