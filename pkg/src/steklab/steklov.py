"""P1 finite elements for the Steklov eigenvalue problem.

The Dirichlet energy is conformally invariant, so the stiffness matrix only
sees chart geometry.  The conformal factor enters through the boundary mass.
Eigenpairs are computed from the Dirichlet-to-Neumann (Schur complement)
pencil on boundary vertices; the interior values follow by harmonic
extension.  A shift-invert solve of the full pencil is kept as a cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverFailure
from .geometry.mesh import ConformalMetric, Mesh, boundary_edge_weights

CLUSTER_RTOL = 1e-6


def assemble_stiffness(mesh: Mesh, mask=None) -> sp.csr_matrix:
    """Cotangent Laplacian; the diagonal is minus the off-diagonal row sum.

    ``mask`` restricts assembly to a subset of triangles (energy of a part).
    """
    p = mesh.corner_coords
    t = mesh.triangles
    area2 = np.abs(mesh.signed_double_areas)
    if mask is not None:
        p, t, area2 = p[mask], t[mask], area2[mask]
    rows, cols, vals = [], [], []
    for k in range(3):
        i, j = t[:, (k + 1) % 3], t[:, (k + 2) % 3]
        a = p[:, (k + 1) % 3] - p[:, k]
        b = p[:, (k + 2) % 3] - p[:, k]
        cot = np.sum(a * b, axis=1) / area2
        w = -0.5 * cot
        rows += [i, j]
        cols += [j, i]
        vals += [w, w]
    n = mesh.n_vertices
    off = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)).tocsr()
    diag = -np.asarray(off.sum(axis=1)).ravel()
    return (off + sp.diags(diag)).tocsr()


def assemble_boundary_mass(
    mesh: Mesh,
    metric: ConformalMetric,
    tags=None,
    lumped: bool = False,
    exact_arcs: bool = True,
) -> sp.csr_matrix:
    """Boundary mass over edges whose tag is in ``tags`` (all edges if None)."""
    w = boundary_edge_weights(mesh, metric, exact_arcs)
    e = mesh.boundary_edges
    if tags is not None:
        keep = mesh.edges_with_tags(tags)
        w, e = w[keep], e[keep]
    return _edge_mass(e, w, mesh.n_vertices, lumped)


def _edge_mass(e, w, n, lumped):
    a, b = e[:, 0], e[:, 1]
    if lumped:
        rows = np.concatenate([a, b])
        vals = np.concatenate([w, w]) / 2.0
        return sp.coo_matrix((vals, (rows, rows)), shape=(n, n)).tocsr()
    rows = np.concatenate([a, b, a, b])
    cols = np.concatenate([a, b, b, a])
    vals = np.concatenate([2 * w, 2 * w, w, w]) / 6.0
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


def clusters_of(values, rtol: float = CLUSTER_RTOL) -> list:
    """Group sorted eigenvalues whose relative gap is at most ``rtol``."""
    groups = []
    for i, s in enumerate(values):
        if groups and abs(s - values[groups[-1][-1]]) <= rtol * max(1.0, abs(s)):
            groups[-1].append(i)
        else:
            groups.append([i])
    return [tuple(g) for g in groups]


@dataclass(frozen=True, eq=False)
class SteklovSpectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # (n_vertices, count), B-orthonormal
    clusters: list
    boundary_length: float
    residual: float

    @property
    def normalized(self) -> np.ndarray:
        """Eigenvalues times boundary length (scale invariant)."""
        return self.eigenvalues * self.boundary_length


class SteklovProblem:
    """Reusable discretisation of one mesh.

    ``steklov_tags`` selects the boundary edges that carry the eigenvalue
    condition; other boundary edges are Neumann unless listed in
    ``dirichlet_tags``.  The stiffness matrix and its Schur complement do not
    depend on the metric and are computed once.
    """

    def __init__(self, mesh: Mesh, steklov_tags=None, dirichlet_tags=(), lumped=False, exact_arcs=True):
        self.mesh = mesh
        all_tags = set(mesh.boundary_tags)
        self.steklov_tags = tuple(sorted(all_tags if steklov_tags is None else set(steklov_tags)))
        self.dirichlet_tags = tuple(sorted(set(dirichlet_tags)))
        self.lumped = lumped
        self.exact_arcs = exact_arcs
        if set(self.steklov_tags) & set(self.dirichlet_tags):
            raise ValueError("a tag cannot be both Steklov and Dirichlet")

    # ---------------------------------------------------------------- pieces
    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        return assemble_stiffness(self.mesh)

    @cached_property
    def steklov_edges(self) -> np.ndarray:
        return self.mesh.edges_with_tags(self.steklov_tags)

    @cached_property
    def partition(self) -> tuple:
        """Index arrays (steklov, interior, dirichlet) of vertices."""
        m = self.mesh
        dmask = np.zeros(m.n_vertices, bool)
        if self.dirichlet_tags:
            dmask[m.boundary_edges[m.edges_with_tags(self.dirichlet_tags)].ravel()] = True
        smask = np.zeros(m.n_vertices, bool)
        smask[m.boundary_edges[self.steklov_edges].ravel()] = True
        smask &= ~dmask
        if not smask.any():
            raise ValueError("no Steklov boundary vertices")
        imask = ~(smask | dmask)
        return np.flatnonzero(smask), np.flatnonzero(imask), np.flatnonzero(dmask)

    def edge_weights(self, metric: ConformalMetric) -> np.ndarray:
        """Metric lengths of the Steklov boundary edges."""
        return boundary_edge_weights(self.mesh, metric, self.exact_arcs)[self.steklov_edges]

    def mass(self, metric: ConformalMetric) -> sp.csr_matrix:
        w = self.edge_weights(metric)
        return _edge_mass(self.mesh.boundary_edges[self.steklov_edges], w, self.mesh.n_vertices, self.lumped)

    @cached_property
    def _interior_factor(self):
        s, i, _ = self.partition
        if len(i) == 0:
            return None
        a_ii = self.stiffness[i][:, i].tocsc()
        try:
            return spla.splu(a_ii)
        except RuntimeError as exc:  # singular interior block
            raise SolverFailure(f"interior stiffness block is singular: {exc}") from exc

    @cached_property
    def extension(self) -> np.ndarray:
        """Dense map from Steklov boundary values to interior values."""
        s, i, _ = self.partition
        if len(i) == 0:
            return np.zeros((0, len(s)))
        a_is = self.stiffness[i][:, s].toarray()
        return -self._interior_factor.solve(a_is)

    @cached_property
    def dtn(self) -> np.ndarray:
        """Schur complement of the stiffness onto the Steklov vertices."""
        s, i, _ = self.partition
        a = self.stiffness
        d = a[s][:, s].toarray()
        if len(i):
            d = d + a[s][:, i] @ self.extension
        d = 0.5 * (d + d.T)
        if not np.isfinite(d).all():
            raise SolverFailure("non-finite Dirichlet-to-Neumann matrix")
        return d

    def boundary_mass(self, metric: ConformalMetric) -> np.ndarray:
        s, _, _ = self.partition
        return self.mass(metric)[s][:, s].toarray()

    def lift(self, ub: np.ndarray) -> np.ndarray:
        """Harmonic extension of Steklov boundary values to all vertices."""
        s, i, _ = self.partition
        ub = np.atleast_2d(ub.T).T
        u = np.zeros((self.mesh.n_vertices, ub.shape[1]))
        u[s] = ub
        if len(i):
            u[i] = self.extension @ ub
        return u

    # ---------------------------------------------------------------- solve
    def solve(self, metric: ConformalMetric, count: int = 6, method: str = "schur", shift: float = 0.1) -> SteklovSpectrum:
        """First ``count`` eigenpairs, ``sigma_0 <= sigma_1 <= ...``."""
        s, _, _ = self.partition
        count = int(count)
        if count < 1:
            raise ValueError("count must be positive")
        if count > len(s):
            raise ValueError(f"count {count} exceeds the {len(s)} Steklov boundary vertices")
        b_full = self.mass(metric)
        if method == "schur":
            bb = b_full[s][:, s].toarray()
            try:
                vals, vecs = sla.eigh(self.dtn, bb, subset_by_index=[0, count - 1])
            except (np.linalg.LinAlgError, ValueError) as exc:
                raise SolverFailure(f"dense generalized eigensolver failed: {exc}") from exc
            u = self.lift(vecs)
        elif method == "pencil":
            vals, u = self._solve_pencil(b_full, count, shift)
        elif method == "dense":
            vals, u = self._solve_dense(b_full, count, shift)
        else:
            raise ValueError(f"unknown method {method!r}")
        u = _fix_signs(u, s)
        a = self.stiffness
        res = a @ u - (b_full @ u) * vals
        scale = np.linalg.norm(u, axis=0) * max(1.0, abs(a).sum(axis=1).max())
        residual = float(np.max(np.linalg.norm(res, axis=0) / scale))
        length = float(self.edge_weights(metric).sum())
        return SteklovSpectrum(np.asarray(vals), u, clusters_of(vals), length, residual)

    def _free(self):
        _, _, d = self.partition
        keep = np.ones(self.mesh.n_vertices, bool)
        keep[d] = False
        return np.flatnonzero(keep)

    def _solve_pencil(self, b_full, count, shift):
        free = self._free()
        if len(free) <= max(4 * count, 60):
            return self._solve_dense(b_full, count, shift)
        a = self.stiffness[free][:, free].tocsc()
        b = b_full[free][:, free].tocsc()
        try:
            vals, vecs = spla.eigsh(a, k=count, M=b, sigma=-shift, which="LM", tol=0.0)
        except Exception as exc:  # ARPACK reports several exception types
            raise SolverFailure(f"shift-invert eigensolver failed: {exc}") from exc
        order = np.argsort(vals)
        u = np.zeros((self.mesh.n_vertices, count))
        u[free] = vecs[:, order]
        # ARPACK normalises in the B inner product only approximately.
        norms = np.sqrt(np.einsum("ij,ij->j", u, b_full @ u))
        return vals[order], u / norms

    def _solve_dense(self, b_full, count, shift):
        """Dense eigensolve of ``B u = mu (A + shift B) u``; sigma = 1/mu - shift."""
        free = self._free()
        a = self.stiffness[free][:, free].toarray()
        b = b_full[free][:, free].toarray()
        mu, vecs = sla.eigh(b, a + shift * b)
        order = np.argsort(-mu)[:count]
        vals = 1.0 / mu[order] - shift
        u = np.zeros((self.mesh.n_vertices, count))
        u[free] = vecs[:, order]
        norms = np.sqrt(np.einsum("ij,ij->j", u, b_full @ u))
        return vals, u / norms

    def derivative(self, metric: ConformalMetric, u: np.ndarray, sigma: float) -> np.ndarray:
        """Gradient of a simple eigenvalue with respect to per-vertex log-factors.

        For a B-normalised eigenvector, ``d sigma = -sigma * u^T dB u`` and each
        edge weight varies as ``w_e * mean(d w)`` over the edge endpoints.
        Only the home-chart factor is differentiated.
        """
        e = self.mesh.boundary_edges[self.steklov_edges]
        w = self.edge_weights(metric)
        ua, ub = u[e[:, 0]], u[e[:, 1]]
        if self.lumped:
            q = 0.5 * (ua**2 + ub**2)
        else:
            q = (ua**2 + ub**2 + ua * ub) / 3.0
        per_edge = -sigma * w * q * 0.5
        g = np.zeros(self.mesh.n_vertices)
        np.add.at(g, e[:, 0], per_edge)
        np.add.at(g, e[:, 1], per_edge)
        return g


def _fix_signs(u, boundary):
    """Make the largest boundary entry of every eigenvector positive."""
    ub = u[boundary]
    idx = np.argmax(np.abs(ub), axis=0)
    sgn = np.sign(ub[idx, np.arange(u.shape[1])])
    sgn[sgn == 0] = 1.0
    return u * sgn


def steklov_spectrum(mesh: Mesh, metric: ConformalMetric, count: int = 6, **options) -> SteklovSpectrum:
    """Convenience wrapper: build a :class:`SteklovProblem` and solve once."""
    method = options.pop("method", "schur")
    shift = options.pop("shift", 0.1)
    return SteklovProblem(mesh, **options).solve(metric, count, method=method, shift=shift)


def dtn_matrix(mesh: Mesh, steklov_tags=None, dirichlet_tags=()) -> tuple:
    """Schur-complement matrix and the Steklov vertex indices it acts on."""
    prob = SteklovProblem(mesh, steklov_tags, dirichlet_tags)
    return prob.dtn, prob.partition[0]
