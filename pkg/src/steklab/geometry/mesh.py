"""Triangle meshes with per-chart coordinates and piecewise conformal metrics.

A mesh may be an abstract surface that does not embed in a single plane (a
handle, a Moebius band).  Every triangle therefore carries a chart tag and
is measured in that chart.  Vertex coordinates default to ``vertices`` and
can be overridden per chart through ``chart_coords``: an ``(n, 2)`` array
per chart, NaN where the chart does not see the vertex.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping

import numpy as np

from ..errors import DegenerateTriangle, NonManifold

# Boundary tags whose edges lie on the parabolas x = +-y^2/2 of a cusp chart.
# Their length is computed from the exact arc-length of the parabola.
PARABOLIC_TAGS = ("side+", "side-")

_AREA_RTOL = 1e-13


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


def parabola_arclength(y0, y1):
    """Length of x = y^2/2 between heights y0 and y1 (vectorised)."""

    def prim(y):
        s = np.sqrt(1.0 + y * y)
        return 0.5 * (y * s + np.arcsinh(y))

    return np.abs(prim(np.asarray(y1, float)) - prim(np.asarray(y0, float)))


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable triangle mesh with boundary tags and chart tags."""

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: tuple
    chart_tags: tuple
    chart_coords: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        v = _frozen(self.vertices, float).reshape(-1, 2)
        t = _frozen(self.triangles, np.int64).reshape(-1, 3)
        b = _frozen(self.boundary_edges, np.int64).reshape(-1, 2)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        object.__setattr__(self, "boundary_edges", b)
        object.__setattr__(self, "boundary_tags", tuple(str(s) for s in self.boundary_tags))
        object.__setattr__(self, "chart_tags", tuple(str(s) for s in self.chart_tags))
        charts = {str(k): _frozen(a, float).reshape(-1, 2) for k, a in self.chart_coords.items()}
        object.__setattr__(self, "chart_coords", charts)
        self._validate()

    # ------------------------------------------------------------------ checks
    def _validate(self):
        n = len(self.vertices)
        if len(self.chart_tags) != len(self.triangles):
            raise ValueError("one chart tag per triangle is required")
        if len(self.boundary_tags) != len(self.boundary_edges):
            raise ValueError("one tag per boundary edge is required")
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= n):
            raise ValueError("triangle references a missing vertex")
        if np.any(self.triangles[:, 0] == self.triangles[:, 1]) or np.any(
            self.triangles[:, 1] == self.triangles[:, 2]
        ) or np.any(self.triangles[:, 0] == self.triangles[:, 2]):
            raise DegenerateTriangle("triangle with a repeated vertex")
        for name, arr in self.chart_coords.items():
            if arr.shape != (n, 2):
                raise ValueError(f"chart {name!r} must give coordinates for every vertex (NaN if unused)")
        corners = self.corner_coords
        if np.isnan(corners).any():
            raise ValueError("a triangle uses a vertex that its chart does not define")
        area2 = self.signed_double_areas
        scale = np.max(np.sum((corners - corners[:, [1, 2, 0]]) ** 2, axis=2), axis=1)
        bad = np.abs(area2) <= _AREA_RTOL * scale
        if bad.any():
            raise DegenerateTriangle(f"{int(bad.sum())} degenerate triangle(s), first index {int(np.argmax(bad))}")
        counts = self.edge_triangle_counts
        if counts.size and counts.max() > 2:
            raise NonManifold("an edge borders more than two triangles")
        free = {tuple(e) for e in self.edges[counts == 1]}
        given = {tuple(sorted(e)) for e in self.boundary_edges.tolist()}
        if free != given or len(given) != len(self.boundary_edges):
            raise ValueError("boundary edges must be exactly the edges with one incident triangle")

    # --------------------------------------------------------------- geometry
    @cached_property
    def corner_coords(self) -> np.ndarray:
        """Chart coordinates of each triangle corner, shape ``(m, 3, 2)``."""
        out = self.vertices[self.triangles].copy()
        tags = np.asarray(self.chart_tags, dtype=object)
        for name, arr in self.chart_coords.items():
            sel = tags == name
            if sel.any():
                out[sel] = arr[self.triangles[sel]]
        out.setflags(write=False)
        return out

    @cached_property
    def signed_double_areas(self) -> np.ndarray:
        p = self.corner_coords
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]

    @property
    def chart_names(self) -> tuple:
        return tuple(sorted(set(self.chart_tags)))

    def min_angle(self, chart=None) -> float:
        """Smallest interior angle in degrees, optionally for one chart only."""
        p = self.corner_coords
        if chart is not None:
            p = p[np.asarray(self.chart_tags, dtype=object) == chart]
        if len(p) == 0:
            return float("nan")
        angles = []
        for k in range(3):
            a = p[:, (k + 1) % 3] - p[:, k]
            b = p[:, (k + 2) % 3] - p[:, k]
            cos = np.sum(a * b, axis=1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            angles.append(np.degrees(np.arccos(np.clip(cos, -1.0, 1.0))))
        return float(np.min(angles))

    # --------------------------------------------------------------- topology
    @cached_property
    def _edge_data(self):
        t = self.triangles
        half = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        key = np.sort(half, axis=1)
        edges, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
        tri_of_half = np.tile(np.arange(len(t)), 3)
        return edges, inverse.reshape(-1), counts, tri_of_half, half

    @property
    def edges(self) -> np.ndarray:
        """Unique undirected edges, sorted vertex pairs."""
        return self._edge_data[0]

    @property
    def edge_triangle_counts(self) -> np.ndarray:
        return self._edge_data[2]

    @cached_property
    def boundary_triangle(self) -> np.ndarray:
        """Index of the triangle incident to each boundary edge."""
        edges, inverse, counts, tri_of_half, _ = self._edge_data
        owner = np.full(len(edges), -1, dtype=np.int64)
        owner[inverse] = tri_of_half
        lookup = {tuple(e): owner[i] for i, e in enumerate(edges) if counts[i] == 1}
        return np.array([lookup[tuple(sorted(e))] for e in self.boundary_edges.tolist()], dtype=np.int64)

    @cached_property
    def boundary_edge_coords(self) -> np.ndarray:
        """Endpoint coordinates of boundary edges in the chart of their triangle, ``(p, 2, 2)``."""
        tri = self.boundary_triangle
        out = np.empty((len(self.boundary_edges), 2, 2))
        for j, (a, b) in enumerate(self.boundary_edges.tolist()):
            t = self.triangles[tri[j]].tolist()
            out[j, 0] = self.corner_coords[tri[j], t.index(a)]
            out[j, 1] = self.corner_coords[tri[j], t.index(b)]
        out.setflags(write=False)
        return out

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.boundary_edges)

    def edges_with_tags(self, tags) -> np.ndarray:
        """Boolean mask of boundary edges whose tag is in ``tags``."""
        tags = set(tags)
        return np.array([t in tags for t in self.boundary_tags], dtype=bool)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)


@dataclass(frozen=True, eq=False)
class ConformalMetric:
    """Metric ``exp(2 w) |dz|^2`` given by per-vertex values of ``w``.

    ``log_factor`` is read in the home chart.  ``chart_log_factor`` holds an
    ``(n,)`` array per chart (NaN where unused) for charts whose conformal
    factor differs from the home one.
    """

    log_factor: np.ndarray
    chart_log_factor: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        w = _frozen(self.log_factor, float).reshape(-1)
        object.__setattr__(self, "log_factor", w)
        ch = {str(k): _frozen(a, float).reshape(-1) for k, a in self.chart_log_factor.items()}
        for k, a in ch.items():
            if a.shape != w.shape:
                raise ValueError(f"chart log-factor {k!r} has the wrong length")
        object.__setattr__(self, "chart_log_factor", ch)

    @classmethod
    def flat(cls, mesh: Mesh) -> "ConformalMetric":
        return cls(np.zeros(mesh.n_vertices))

    def shifted(self, c: float) -> "ConformalMetric":
        """Metric scaled by ``exp(2c)``."""
        return ConformalMetric(self.log_factor + c, {k: a + c for k, a in self.chart_log_factor.items()})

    def with_log_factor(self, w) -> "ConformalMetric":
        return ConformalMetric(np.asarray(w, float), self.chart_log_factor)

    def corner_log_factor(self, mesh: Mesh) -> np.ndarray:
        out = self.log_factor[mesh.triangles].copy()
        tags = np.asarray(mesh.chart_tags, dtype=object)
        for name, arr in self.chart_log_factor.items():
            sel = tags == name
            if sel.any():
                out[sel] = arr[mesh.triangles[sel]]
        if np.isnan(out).any():
            raise ValueError("conformal factor undefined on some triangle corner")
        return out

    def boundary_edge_log_factor(self, mesh: Mesh) -> np.ndarray:
        """Conformal factor at the two endpoints of each boundary edge, ``(p, 2)``."""
        corner = self.corner_log_factor(mesh)
        tri = mesh.boundary_triangle
        out = np.empty((len(mesh.boundary_edges), 2))
        for j, (a, b) in enumerate(mesh.boundary_edges.tolist()):
            t = mesh.triangles[tri[j]].tolist()
            out[j] = corner[tri[j], t.index(a)], corner[tri[j], t.index(b)]
        return out


def boundary_edge_weights(mesh: Mesh, metric: ConformalMetric, exact_arcs: bool = True) -> np.ndarray:
    """Metric length of each boundary edge.

    The length is ``exp(mean w) * |edge|`` in the edge's chart.  Edges tagged
    as cusp sides use the exact parabola arc-length instead of the chord
    when ``exact_arcs`` is set.
    """
    xy = mesh.boundary_edge_coords
    chord = np.linalg.norm(xy[:, 1] - xy[:, 0], axis=1)
    if exact_arcs:
        para = mesh.edges_with_tags(PARABOLIC_TAGS)
        if para.any():
            chord = chord.copy()
            chord[para] = parabola_arclength(xy[para, 0, 1], xy[para, 1, 1])
    w = metric.boundary_edge_log_factor(mesh)
    return np.exp(w.mean(axis=1)) * chord


def boundary_length(mesh: Mesh, metric: ConformalMetric, tags=None, exact_arcs: bool = True) -> float:
    w = boundary_edge_weights(mesh, metric, exact_arcs)
    if tags is not None:
        w = w[mesh.edges_with_tags(tags)]
    return float(w.sum())
