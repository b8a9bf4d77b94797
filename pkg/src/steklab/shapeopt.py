"""Ascent on sigma_1 * L over boundary densities, and the induced immersion.

The boundary density enters only through the boundary mass matrix, so the
Dirichlet-to-Neumann matrix of a :class:`SteklovProblem` is reused for every
trial density.  Multiple first eigenvalues are handled with the
eps-subdifferential: the set of gradients ``x^T dA x`` over unit vectors of
the near-multiple eigenspace, whose minimum-norm element gives the ascent
direction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry.mesh import ConformalMetric, boundary_edge_weights
from .geometry.topology import boundary_cycles
from .steklov import SteklovProblem, SteklovSpectrum

DEFAULT_MODES = 16
ASCENT_TOL = 1e-10
STATIONARY_TOL = 1e-8
NORMALIZED_TOL = 1e-13


# ------------------------------------------------------------- parametrization
class DensityBasis:
    """Linear map from parameters to per-vertex boundary log-densities.

    The default uses ``1, cos(k phi), sin(k phi)`` for ``k = 1..modes`` on each
    boundary cycle, where ``phi`` is the arc-length angle measured in
    ``base_metric``.  With ``per_vertex=True`` every Steklov vertex is a free
    parameter.  Harmonics listed in ``exclude`` are left out; on the disk,
    excluding ``k = 1`` removes the directions along which the conformal
    automorphisms move a density without changing ``sigma_1 * L``.
    """

    def __init__(self, problem: SteklovProblem, base_metric: ConformalMetric, modes: int = DEFAULT_MODES,
                 per_vertex: bool = False, exclude=()):
        if modes < 0:
            raise ValueError("modes must be non-negative")
        self.problem = problem
        self.base_metric = base_metric
        self.modes = int(modes)
        self.per_vertex = bool(per_vertex)
        self.exclude = tuple(sorted(int(k) for k in exclude))
        mesh = problem.mesh
        steklov = problem.partition[0]
        n = mesh.n_vertices
        if per_vertex:
            mat = np.zeros((n, len(steklov)))
            mat[steklov, np.arange(len(steklov))] = 1.0
            const = np.ones(len(steklov))
        else:
            on_steklov = np.zeros(n, bool)
            on_steklov[steklov] = True
            weights = boundary_edge_weights(mesh, base_metric, problem.exact_arcs)
            edge_of = {tuple(sorted(e)): k for k, e in enumerate(mesh.boundary_edges.tolist())}
            cols, const = [], []
            for cyc in boundary_cycles(mesh):
                cyc = np.asarray(cyc)
                if not on_steklov[cyc].any():
                    continue
                nxt = np.roll(cyc, -1)
                seg = np.array([weights[edge_of[tuple(sorted((a, b)))]] for a, b in zip(cyc.tolist(), nxt.tolist())])
                phi = 2.0 * math.pi * np.concatenate([[0.0], np.cumsum(seg)[:-1]]) / seg.sum()
                kmax = min(self.modes, (len(cyc) - 1) // 2)
                block = [np.ones_like(phi)]
                for k in range(1, kmax + 1):
                    if k not in self.exclude:
                        block += [np.cos(k * phi), np.sin(k * phi)]
                for j, col in enumerate(block):
                    full = np.zeros(n)
                    full[cyc] = np.where(on_steklov[cyc], col, 0.0)
                    cols.append(full)
                    const.append(1.0 if j == 0 else 0.0)
            mat = np.column_stack(cols)
            const = np.asarray(const)
        self.matrix = mat
        self.constant = const

    @property
    def size(self) -> int:
        return self.matrix.shape[1]

    def expand(self, coefficients) -> np.ndarray:
        return self.matrix @ np.asarray(coefficients, float)

    def zero(self) -> "DensityParam":
        return DensityParam(np.zeros(self.size), np.zeros(self.matrix.shape[0]))

    def param(self, coefficients) -> "DensityParam":
        c = np.array(coefficients, float)
        if c.shape != (self.size,) or not np.isfinite(c).all():
            raise ValueError(f"expected {self.size} finite coefficients")
        return DensityParam(c, self.expand(c))

    def metric(self, density: "DensityParam") -> ConformalMetric:
        return perturbed(self.base_metric, density.log_density)

    def length(self, density: "DensityParam") -> float:
        return float(self.problem.edge_weights(self.metric(density)).sum())

    def normalize(self, density: "DensityParam") -> "DensityParam":
        """Shift the constant mode so the Steklov boundary has unit length.

        Already-normalised input is returned unchanged, which makes the
        projection idempotent bit for bit.
        """
        shift = -math.log(self.length(density))
        if abs(shift) <= NORMALIZED_TOL:
            return density
        return self.param(density.coefficients + shift * self.constant)

    def random(self, rng: np.random.Generator, amplitude: float = 0.2) -> "DensityParam":
        """Random smooth density, amplitude decaying like ``1/k`` per mode."""
        if self.per_vertex:
            return self.param(amplitude * rng.standard_normal(self.size))
        decay = np.ones(self.size)
        k = 0
        for j in range(self.size):
            if self.constant[j] == 1.0:
                k, decay[j] = 0, 0.0
            else:
                decay[j] = 1.0 / (1 + k // 2)
                k += 1
        return self.param(amplitude * decay * rng.standard_normal(self.size))


@dataclass(frozen=True, eq=False)
class DensityParam:
    """Boundary log-density: parameters and their per-vertex expansion."""

    coefficients: np.ndarray
    log_density: np.ndarray

    def flatness(self, vertices) -> float:
        """Sup-norm of ``exp(w)/mean(exp(w)) - 1`` over the given vertices."""
        rho = np.exp(self.log_density[vertices])
        return float(np.max(np.abs(rho / rho.mean() - 1.0)))


def perturbed(metric: ConformalMetric, dw) -> ConformalMetric:
    """Add ``dw`` to the conformal factor in every chart."""
    dw = np.asarray(dw, float)
    return ConformalMetric(metric.log_factor + dw, {k: a + dw for k, a in metric.chart_log_factor.items()})


# --------------------------------------------------------------- derivatives
def _first_index(problem: SteklovProblem) -> int:
    # Without Dirichlet edges sigma_0 = 0 belongs to the constants.
    return 0 if problem.dirichlet_tags else 1


def cluster_indices(spectrum: SteklovSpectrum, first: int, rtol: float | None) -> list:
    """Indices of eigenvalues belonging to the first (nonzero) cluster."""
    vals = spectrum.eigenvalues
    if rtol is None:
        for group in spectrum.clusters:
            if first in group:
                return [i for i in group if i >= first]
    s1 = vals[first]
    return [i for i in range(first, len(vals)) if vals[i] <= s1 + rtol * abs(s1)]


def _gradient_tensor(problem, metric, u, sigma, length, normalized):
    """Per-vertex gradients ``G[i, j]`` of the symmetric form over the cluster.

    ``x^T G x`` (summing over ``i, j``) is the gradient of the eigenvalue along
    unit vector ``x`` of the eigenspace spanned by the columns of ``u``;
    with ``normalized`` it is the gradient of ``sigma * L``.
    """
    e = problem.mesh.boundary_edges[problem.steklov_edges]
    w = problem.edge_weights(metric)
    a, b = u[e[:, 0]], u[e[:, 1]]  # (p, K)
    form = (2 * np.einsum("pi,pj->pij", a, a) + np.einsum("pi,pj->pij", a, b)
            + np.einsum("pi,pj->pij", b, a) + 2 * np.einsum("pi,pj->pij", b, b)) / 6.0
    per_edge = -sigma * 0.5 * w[:, None, None] * form
    k = u.shape[1]
    g = np.zeros((k, k, problem.mesh.n_vertices))
    for end in (0, 1):
        np.add.at(g.transpose(2, 0, 1), e[:, end], per_edge)
    if normalized:
        dl = np.zeros(problem.mesh.n_vertices)
        np.add.at(dl, e[:, 0], 0.5 * w)
        np.add.at(dl, e[:, 1], 0.5 * w)
        g = length * g + sigma * np.eye(k)[:, :, None] * dl[None, None, :]
    return g


def eigenvalue_directional_derivative(problem: SteklovProblem, metric: ConformalMetric, spectrum: SteklovSpectrum,
                                      delta, normalized: bool = False, rtol: float | None = None) -> tuple:
    """One-sided derivatives of the first nonzero eigenvalue along ``delta``.

    Returns ``(lo, hi)``: the extreme eigenvalues of the derivative form on
    the first cluster.  ``lo`` is the right derivative of ``sigma_1`` and
    ``hi`` that of the top of the cluster; they coincide for a simple
    eigenvalue.  With ``normalized`` the derivative is that of
    ``sigma_1 * L``.
    """
    first = _first_index(problem)
    idx = cluster_indices(spectrum, first, rtol)
    u = spectrum.eigenvectors[:, idx]
    sigma = float(spectrum.eigenvalues[first])
    g = _gradient_tensor(problem, metric, u, sigma, spectrum.boundary_length, normalized)
    q = g @ np.asarray(delta, float)
    ev = np.linalg.eigvalsh(0.5 * (q + q.T))
    return float(ev[0]), float(ev[-1])


def min_norm_element(h: np.ndarray, iterations: int = 500, tol: float = 1e-15) -> tuple:
    """Minimum-norm point of ``{sum_ij X_ij h[i, j] : X psd, trace X = 1}``.

    Frank-Wolfe over the spectraplex with exact line search; the linear
    oracle is a bottom eigenvector.  Returns ``(vector, X)``.
    """
    k = h.shape[0]
    if k == 1:
        return h[0, 0].copy(), np.ones((1, 1))
    x = np.eye(k) / k
    v = np.einsum("ij,ijp->p", x, h)
    for _ in range(iterations):
        c = np.einsum("ijp,p->ij", h, v)
        c = 0.5 * (c + c.T)
        lam, vec = np.linalg.eigh(c)
        e = vec[:, 0]
        s = np.einsum("i,j,ijp->p", e, e, h)
        gap = float(v @ v - s @ v)
        if gap <= tol * max(1.0, float(v @ v)):
            break
        d = s - v
        step = min(1.0, max(0.0, -float(v @ d) / float(d @ d)))
        x = (1 - step) * x + step * np.outer(e, e)
        v = v + step * d
    return v, x


# ------------------------------------------------------------------ ascent
@dataclass(frozen=True)
class HistoryRow:
    iteration: int
    sigma1L: float
    cluster_size: int
    step: float


@dataclass(frozen=True, eq=False)
class OptimizeResult:
    density: DensityParam
    history: list
    status: str  # "stationary" | "stalled" | "max_iter"
    spectrum: SteklovSpectrum
    metric: ConformalMetric
    cluster: list = field(default_factory=list)
    subgradient_norm: float = float("nan")

    @property
    def value(self) -> float:
        return self.history[-1].sigma1L


def _evaluate(basis, density, count):
    metric = basis.metric(density)
    spec = basis.problem.solve(metric, count=count)
    first = _first_index(basis.problem)
    return float(spec.eigenvalues[first] * spec.boundary_length), metric, spec


def optimize_density(problem: SteklovProblem, base_metric: ConformalMetric, init: DensityParam | None = None,
                     basis: DensityBasis | None = None, max_iter: int = 200, cluster_rtol: float = 1e-3,
                     max_cluster_rtol: float = 1e-1, initial_step: float = 0.1, armijo: float = 1e-4,
                     backtracks: int = 30, count: int = 8) -> OptimizeResult:
    """Projected subgradient ascent of ``sigma_1 * L`` with ``L`` fixed to 1.

    Each iteration takes the minimum-norm element of the eps-subdifferential
    (eigenvalues within ``cluster_rtol`` of ``sigma_1``) as the direction and
    backtracks until an Armijo increase is found.  If the backtracking budget
    runs out, the cluster tolerance is widened tenfold up to
    ``max_cluster_rtol``; after that the run reports ``stalled``.
    """
    basis = basis or DensityBasis(problem, base_metric)
    density = basis.normalize(init if init is not None else basis.zero())
    first = _first_index(problem)
    count = min(count, len(problem.partition[0]))
    value, metric, spec = _evaluate(basis, density, count)
    history = [HistoryRow(0, value, len(cluster_indices(spec, first, cluster_rtol)), 0.0)]
    step = initial_step
    status = "max_iter"
    idx, gnorm = [first], float("nan")
    rtol = cluster_rtol
    it = 0
    while it < max_iter:
        idx = cluster_indices(spec, first, rtol)
        if idx[-1] == len(spec.eigenvalues) - 1 and count < len(problem.partition[0]):
            count = min(2 * count, len(problem.partition[0]))
            value, metric, spec = _evaluate(basis, density, count)
            continue
        sigma = float(spec.eigenvalues[first])
        g = _gradient_tensor(problem, metric, spec.eigenvectors[:, idx], sigma, spec.boundary_length, True)
        h = np.einsum("ijn,nq->ijq", g, basis.matrix)
        d, _ = min_norm_element(h)
        gnorm = float(np.linalg.norm(d))
        if gnorm <= STATIONARY_TOL and rtol == cluster_rtol:
            status = "stationary"
            break
        accepted = None
        trial_step = min(2.0 * step, 1.0 / max(gnorm, 1e-300))
        for _ in range(backtracks):
            trial = basis.normalize(basis.param(density.coefficients + trial_step * d))
            t_value, t_metric, t_spec = _evaluate(basis, trial, count)
            gain = t_value - value
            if gain > ASCENT_TOL and gain >= armijo * trial_step * gnorm**2:
                accepted = (trial, t_value, t_metric, t_spec)
                break
            trial_step *= 0.5
        if accepted is None:
            if gnorm <= STATIONARY_TOL:
                status = "stationary"
                break
            if rtol < max_cluster_rtol:
                rtol = min(10 * rtol, max_cluster_rtol)
                continue
            status = "stalled"
            break
        it += 1
        density, value, metric, spec = accepted
        step = trial_step
        rtol = cluster_rtol
        history.append(HistoryRow(it, value, len(cluster_indices(spec, first, cluster_rtol)), step))
    idx = cluster_indices(spec, first, cluster_rtol)
    return OptimizeResult(density, history, status, spec, metric, idx, gnorm)


# ---------------------------------------------------------------- immersion
@dataclass(frozen=True, eq=False)
class Immersion:
    """Boundary-normalised map built from the first eigenspace.

    ``raw`` holds B-orthonormal eigenvectors; ``coordinates = scale * raw``
    with the single least-squares scale making ``|Phi|^2`` close to 1 on the
    boundary.  ``mean_square_trace`` is the boundary average of ``|raw|^2``
    (``N / L`` for orthonormal columns).
    """

    coordinates: np.ndarray
    raw: np.ndarray
    scale: float
    sigma: float
    gram: np.ndarray
    mean_square_trace: float
    indices: tuple

    @property
    def dimension(self) -> int:
        return self.raw.shape[1]


def extract_immersion(problem: SteklovProblem, metric: ConformalMetric, spectrum: SteklovSpectrum,
                      indices=None, rtol: float | None = None) -> Immersion:
    first = _first_index(problem)
    idx = tuple(indices) if indices is not None else tuple(cluster_indices(spectrum, first, rtol))
    raw = spectrum.eigenvectors[:, list(idx)]
    s = problem.partition[0]
    b = problem.mass(metric)
    gram = raw.T @ (b @ raw)
    weights = np.asarray(b[s].sum(axis=1)).ravel()
    sq = np.sum(raw[s] ** 2, axis=1)
    scale = math.sqrt(float(weights @ sq) / float(weights @ sq**2))
    mean_sq = float(weights @ sq) / float(weights.sum())
    return Immersion(scale * raw, raw, scale, float(spectrum.eigenvalues[first]), gram, mean_sq, idx)


@dataclass(frozen=True)
class MinimalityReport:
    harmonicity: float
    sphere_deviation: float
    boundary_angle: float


def minimality_residuals(phi: Immersion, problem: SteklovProblem, metric: ConformalMetric) -> MinimalityReport:
    """Residuals of the free-boundary minimal immersion conditions.

    ``harmonicity`` and ``boundary_angle`` are relative, so they do not change
    when ``phi`` is rescaled or rotated.  The normal derivative is the
    Dirichlet-to-Neumann image divided by the lumped boundary mass.
    """
    s = problem.partition[0]
    b = problem.mass(metric)
    sigma = phi.sigma
    x = phi.raw
    target = sigma * (b @ x)
    harm = float(np.linalg.norm(problem.stiffness @ x - target) / np.linalg.norm(target))
    lumped = np.asarray(b[s].sum(axis=1)).ravel()
    normal = (problem.dtn @ x[s]) / lumped[:, None]
    miss = np.linalg.norm(normal - sigma * x[s], axis=1)
    angle = float(miss.max() / np.linalg.norm(sigma * x[s], axis=1).max())
    sq = np.sum(phi.coordinates[s] ** 2, axis=1)
    return MinimalityReport(harm, float(np.max(np.abs(sq - 1.0))), angle)
