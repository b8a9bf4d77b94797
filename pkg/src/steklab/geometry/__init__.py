"""Meshes, conformal metrics, mesh builders, cusp gluing and topology."""

from .builders import build_annulus_mesh, build_disk_mesh, build_square_mesh
from .mesh import ConformalMetric, Mesh, boundary_edge_weights, boundary_length
from .topology import TopologySummary, boundary_cycles, topology_invariants

__all__ = [
    "ConformalMetric",
    "Mesh",
    "TopologySummary",
    "boundary_cycles",
    "boundary_edge_weights",
    "boundary_length",
    "build_annulus_mesh",
    "build_disk_mesh",
    "build_square_mesh",
    "topology_invariants",
]
