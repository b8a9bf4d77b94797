"""Combinatorial invariants of triangle meshes."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .mesh import Mesh


@dataclass(frozen=True)
class TopologySummary:
    euler_characteristic: int
    boundary_components: int
    orientable: bool
    genus: int
    components: int = 1

    def as_dict(self) -> dict:
        return {
            "euler_characteristic": self.euler_characteristic,
            "boundary_components": self.boundary_components,
            "orientable": self.orientable,
            "genus": self.genus,
            "components": self.components,
        }


def ccw_triangles(mesh: Mesh) -> np.ndarray:
    """Triangles reordered to be counter-clockwise in their own chart."""
    t = mesh.triangles.copy()
    neg = mesh.signed_double_areas < 0
    t[neg] = t[neg][:, [0, 2, 1]]
    return t


def boundary_cycles(mesh: Mesh) -> list:
    """Boundary components as ordered vertex lists.

    The walk follows the stored edge directions when they are consistent and
    falls back to undirected adjacency otherwise (non-orientable gluings).
    """
    adj: dict[int, list] = {}
    for j, (a, b) in enumerate(mesh.boundary_edges.tolist()):
        adj.setdefault(a, []).append((b, j))
        adj.setdefault(b, []).append((a, j))
    used = np.zeros(len(mesh.boundary_edges), dtype=bool)
    cycles = []
    for j0 in range(len(mesh.boundary_edges)):
        if used[j0]:
            continue
        a, b = mesh.boundary_edges[j0].tolist()
        cyc = [a]
        used[j0] = True
        cur = b
        while cur != a:
            cyc.append(cur)
            nxt = [(w, j) for (w, j) in adj[cur] if not used[j]]
            if not nxt:
                break
            w, j = nxt[0]
            used[j] = True
            cur = w
        cycles.append(cyc)
    return cycles


def _triangle_components(mesh: Mesh) -> tuple:
    n = mesh.n_vertices
    t = mesh.triangles
    rows = np.concatenate([t[:, 0], t[:, 1], t[:, 2]])
    cols = np.concatenate([t[:, 1], t[:, 2], t[:, 0]])
    g = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    used = np.zeros(n, dtype=bool)
    used[t.ravel()] = True
    ncomp, labels = connected_components(g, directed=False)
    return len(np.unique(labels[used])), labels


def is_orientable(mesh: Mesh) -> bool:
    """Breadth-first search for a coherent choice of triangle orientations."""
    t = ccw_triangles(mesh)
    by_edge: dict = {}
    for i, tri in enumerate(t.tolist()):
        for k in range(3):
            a, b = tri[k], tri[(k + 1) % 3]
            by_edge.setdefault((min(a, b), max(a, b)), []).append((i, a < b))
    neighbours = [[] for _ in range(len(t))]
    for pair in by_edge.values():
        if len(pair) == 2:
            (i, di), (j, dj) = pair
            # Same traversal direction means one of the two must be flipped.
            neighbours[i].append((j, di == dj))
            neighbours[j].append((i, di == dj))
    flip = np.full(len(t), -1, dtype=np.int8)
    for seed in range(len(t)):
        if flip[seed] >= 0:
            continue
        flip[seed] = 0
        queue = deque([seed])
        while queue:
            i = queue.popleft()
            for j, must_differ in neighbours[i]:
                want = flip[i] ^ int(must_differ)
                if flip[j] < 0:
                    flip[j] = want
                    queue.append(j)
                elif flip[j] != want:
                    return False
    return True


def topology_invariants(mesh: Mesh) -> TopologySummary:
    v = len(np.unique(mesh.triangles))
    e = len(mesh.edges)
    f = mesh.n_triangles
    chi = int(v - e + f)
    b = len(boundary_cycles(mesh))
    orientable = is_orientable(mesh)
    ncomp, _ = _triangle_components(mesh)
    if orientable:
        genus = (2 * ncomp - chi - b) // 2
    else:
        genus = 2 * ncomp - chi - b
    return TopologySummary(chi, b, orientable, int(genus), int(ncomp))
