"""Structured mesh builders: disk, half-disk, annulus, square."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import ConformalMetric, Mesh


@dataclass(frozen=True)
class SectorRings:
    """Nodes of a sector-ring mesh in polar form plus its triangles."""

    radius_index: np.ndarray  # ring number of every node
    angle: np.ndarray  # polar angle of every node
    triangles: np.ndarray
    rings: list  # node indices of each ring, ordered by angle


def sector_rings(n_rings: int, sectors: int, span: float, periodic: bool) -> SectorRings:
    """Concentric rings zipped together sector by sector.

    Ring ``n`` carries ``sectors * n`` intervals, so every node of every ring
    lies exactly on its circle.  With ``periodic`` the rings close up (full
    disk); otherwise they span ``[0, span]`` and include both ends.
    """
    if n_rings < 1 or sectors < 1:
        raise ValueError("need at least one ring and one sector")
    rings = [np.array([0])]
    angle = [0.0]
    rad = [0]
    nxt = 1
    for n in range(1, n_rings + 1):
        count = sectors * n + (0 if periodic else 1)
        rings.append(np.arange(nxt, nxt + count))
        nxt += count
        angle.extend(span * np.arange(count) / (sectors * n))
        rad.extend([n] * count)
    tris = []
    for n in range(n_rings):
        inner, outer = rings[n], rings[n + 1]

        def a(k, inner=inner):
            return inner[k % len(inner)] if n else inner[0]

        def b(k, outer=outer):
            return outer[k % len(outer)]

        for s in range(sectors):
            for i in range(n + 1):
                tris.append((a(s * n + i), b(s * (n + 1) + i), b(s * (n + 1) + i + 1)))
            for i in range(n):
                tris.append((a(s * n + i), b(s * (n + 1) + i + 1), a(s * n + i + 1)))
    return SectorRings(np.array(rad), np.array(angle), np.array(tris, dtype=np.int64), rings)


def build_disk_mesh(refinement: int = 3, radius: float = 1.0) -> tuple:
    """Unit-disk ring mesh with ``2**refinement`` rings and six sectors.

    Returns ``(mesh, metric)`` with a flat metric.  All boundary nodes lie on
    the circle; boundary edges are counter-clockwise starting at angle 0 and
    tagged ``outer``.
    """
    if refinement < 0:
        raise ValueError("refinement must be non-negative")
    n = 2**refinement
    sr = sector_rings(n, 6, 2 * np.pi, periodic=True)
    rho = radius * sr.radius_index / n
    xy = np.column_stack([rho * np.cos(sr.angle), rho * np.sin(sr.angle)])
    ring = sr.rings[-1]
    bnd = np.column_stack([ring, np.roll(ring, -1)])
    mesh = Mesh(xy, sr.triangles, bnd, ("outer",) * len(bnd), ("disk",) * len(sr.triangles))
    return mesh, ConformalMetric.flat(mesh)


def half_disk_nodes(n_rings: int, sectors: int, radius: float = 0.5) -> tuple:
    """Upper half-disk sector-ring mesh.

    Returns ``(xy, triangles, diameter, arc)``; ``diameter`` lists node
    indices from ``x = -radius`` to ``x = +radius`` and ``arc`` lists the
    outer ring from angle 0 to pi.
    """
    sr = sector_rings(n_rings, sectors, np.pi, periodic=False)
    rho = radius * sr.radius_index / n_rings
    xy = np.column_stack([rho * np.cos(sr.angle), rho * np.sin(sr.angle)])
    xy[:, 1] = np.maximum(xy[:, 1], 0.0)
    right = [sr.rings[k][0] for k in range(n_rings + 1)]
    left = [sr.rings[k][-1] for k in range(n_rings, 0, -1)]
    diameter = np.array(left + right)
    return xy, sr.triangles, diameter, sr.rings[-1]


def grid_triangles(nx: int, ny: int, index) -> list:
    """Split each cell of an ``nx`` by ``ny`` grid along its rising diagonal."""
    tris = []
    for i in range(nx):
        for j in range(ny):
            a, b, c, d = index(i, j), index(i + 1, j), index(i + 1, j + 1), index(i, j + 1)
            tris.append((a, b, c))
            tris.append((a, c, d))
    return tris


def build_annulus_mesh(inner_radius: float = 0.5, n_theta: int = 64, n_radial: int = 8) -> tuple:
    """Polar grid annulus; outer boundary tagged ``outer``, inner ``inner``."""
    if not 0 < inner_radius < 1:
        raise ValueError("inner radius must lie in (0, 1)")
    rho = np.linspace(inner_radius, 1.0, n_radial + 1)
    th = 2 * np.pi * np.arange(n_theta) / n_theta
    R, T = np.meshgrid(rho, th, indexing="ij")
    xy = np.column_stack([(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()])

    def idx(i, j):
        return i * n_theta + j % n_theta

    tris = grid_triangles(n_radial, n_theta, idx)
    outer = [(idx(n_radial, j), idx(n_radial, j + 1)) for j in range(n_theta)]
    inner = [(idx(0, j + 1), idx(0, j)) for j in range(n_theta)]
    mesh = Mesh(xy, tris, outer + inner, ("outer",) * n_theta + ("inner",) * n_theta, ("annulus",) * len(tris))
    return mesh, ConformalMetric.flat(mesh)


def build_square_mesh(n: int = 16, side: float = 1.0) -> tuple:
    """Uniform ``n`` by ``n`` grid on ``[0, side]^2``, boundary tagged ``outer``."""
    s = np.linspace(0.0, side, n + 1)
    X, Y = np.meshgrid(s, s, indexing="ij")
    xy = np.column_stack([X.ravel(), Y.ravel()])

    def idx(i, j):
        return i * (n + 1) + j

    tris = grid_triangles(n, n, idx)
    loop = [idx(i, 0) for i in range(n)] + [idx(n, j) for j in range(n)]
    loop += [idx(i, n) for i in range(n, 0, -1)] + [idx(0, j) for j in range(n, 0, -1)]
    bnd = list(zip(loop, loop[1:] + loop[:1]))
    mesh = Mesh(xy, tris, bnd, ("outer",) * len(bnd), ("square",) * len(tris))
    return mesh, ConformalMetric.flat(mesh)
