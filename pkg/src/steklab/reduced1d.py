"""Thin-part reduced model, mass balancing and the thick/thin coupling.

The reduced operator is

    -w'' = ln(r)^2 [ (2 sigma/t) rho(v) - 1/4 ] w,   rho = sqrt(1 + eps^2 r^(2v)),

on ``v in [0, 1]``; ``rho = 1`` gives the truncated model whose Dirichlet
spectrum is ``t/8 + t k^2 pi^2 / (2 ln^2 r)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy import integrate, optimize

from .errors import BracketFailure, DegenerateC1, InterfaceMismatch, NoConvergence, SolverFailure
from .geometry.cusp import GlueParams
from .geometry.glue import GlueBase, GluedSurface, attachment_interval, boundary_arc, glue
from .geometry.mesh import PARABOLIC_TAGS, ConformalMetric, Mesh, boundary_edge_weights
from .steklov import SteklovProblem, SteklovSpectrum, assemble_boundary_mass, assemble_stiffness, clusters_of

C1_TOL = 1e-12
MASS_TOL = 1e-3


# ------------------------------------------------------------------- states
@dataclass(frozen=True, eq=False)
class ReducedState:
    """A thin-part profile in theta variables and the numbers read off it."""

    v: np.ndarray
    theta: np.ndarray
    theta_v: np.ndarray
    sigma: float
    c0: float
    c1: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def mass(self) -> float:
        return self.c0**2


@dataclass(frozen=True)
class CouplingData:
    """Chart-interval means of the thick part at both attachment points."""

    mean_p0: float
    mean_p1: float
    theta0: float
    theta1: float


def _density(v, params: GlueParams, correction: bool):
    if not correction:
        return np.ones_like(v)
    return np.sqrt(1.0 + params.eps**2 * params.r ** (2 * v))


def _thin_mass_of(v, theta, rho):
    return 2.0 * integrate.trapezoid(rho * theta**2, v)


def _b_eps(theta0, theta_v0, params: GlueParams):
    scale = math.sqrt(params.t) / (math.sqrt(params.eps) * math.sqrt(params.log_inv_r))
    phi_y = scale * (-0.5 * theta0 - theta_v0 / params.log_inv_r)
    return params.eps / math.pi * phi_y


# --------------------------------------------------------- reduced solver
@dataclass(frozen=True)
class BoundaryCondition:
    """End conditions: ``dirichlet`` or ``robin`` with ``w' = beta w``."""

    left: str = "dirichlet"
    right: str = "dirichlet"
    left_beta: float = 0.0
    right_beta: float = 0.0

    def __post_init__(self):
        for side in (self.left, self.right):
            if side not in ("dirichlet", "robin"):
                raise ValueError(f"unknown boundary condition {side!r}")

    @classmethod
    def parse(cls, spec, beta: float = 0.0) -> "BoundaryCondition":
        """``dirichlet-dirichlet`` or ``dirichlet-robin`` (Robin at the p0 end, ``v = 0``)."""
        if isinstance(spec, cls):
            return spec
        key = str(spec).strip().lower().replace("_", "-")
        if key in ("dirichlet", "dirichlet-dirichlet"):
            return cls()
        if key == "dirichlet-robin":
            return cls(left="robin", left_beta=beta)
        raise ValueError(f"unknown boundary condition {spec!r}")


def _fd_system(params: GlueParams, bc: BoundaryCondition, n: int, correction: bool):
    ell = params.log_inv_r
    h = 1.0 / n
    v = np.linspace(0.0, 1.0, n + 1)
    rho = _density(v, params, correction)
    lo = 0 if bc.left == "robin" else 1
    hi = n if bc.right == "robin" else n - 1
    idx = np.arange(lo, hi + 1)
    diag = np.full(len(idx), 2.0 / h**2 + ell**2 / 4)
    weight = rho[idx].copy()
    if bc.left == "robin":
        diag[0] = (1 + h * bc.left_beta) / h**2 + ell**2 / 8
        weight[0] *= 0.5
    if bc.right == "robin":
        diag[-1] = (1 - h * bc.right_beta) / h**2 + ell**2 / 8
        weight[-1] *= 0.5
    off = np.full(len(idx) - 1, -1.0 / h**2)
    return v, rho, idx, diag, off, weight


def _eigs_fd(params, bc, n, correction, count):
    ell = params.log_inv_r
    v, rho, idx, diag, off, weight = _fd_system(params, bc, n, correction)
    if count > len(idx):
        raise ValueError("too many modes requested for this grid")
    s = 1.0 / np.sqrt(weight)
    d = diag * s * s
    e = off * s[:-1] * s[1:]
    lam, y = sla.eigh_tridiagonal(d, e, select="i", select_range=(0, count - 1))
    w_int = y * s[:, None]
    w = np.zeros((len(v), count))
    w[idx] = w_int
    return v, rho, lam / ell**2, w, weight


def _shoot(params, bc, correction, lam):
    """Value of the end condition at ``v = 1`` for trial ``lam = 2 sigma / t``."""
    ell = params.log_inv_r

    def rhs(v, z):
        rho = math.sqrt(1 + params.eps**2 * params.r ** (2 * v)) if correction else 1.0
        return [z[1], ell**2 * (0.25 - lam * rho) * z[0]]

    z0 = [0.0, 1.0] if bc.left == "dirichlet" else [1.0, bc.left_beta]
    sol = integrate.solve_ivp(rhs, (0.0, 1.0), z0, method="DOP853", rtol=1e-12, atol=1e-14)
    if not sol.success:
        raise NoConvergence(f"shooting integration failed: {sol.message}")
    w1, dw1 = sol.y[0, -1], sol.y[1, -1]
    return w1 if bc.right == "dirichlet" else dw1 - bc.right_beta * w1


def solve_reduced(
    params: GlueParams,
    bc="dirichlet-dirichlet",
    count: int = 2,
    n: int = 400,
    correction: bool = True,
    method: str = "fd",
    mass: float = 1.0,
    beta: float = 0.0,
) -> list:
    """Lowest ``count`` eigenpairs of the reduced thin-part problem.

    ``method='fd'`` uses second-order central differences on ``n`` cells.
    ``method='shooting'`` refines each finite-difference eigenvalue by
    bisection on the shooting residual (profiles still come from the grid).
    Profiles are scaled so that ``2 int rho theta^2 dv = mass``.
    """
    bc = BoundaryCondition.parse(bc, beta)
    v, rho, lam, w, _ = _eigs_fd(params, bc, n, correction, count)
    if method == "shooting":
        refined = []
        for k, l0 in enumerate(lam):
            gap = 0.25 * (lam[1] - lam[0] if count > 1 else max(l0, 1e-3))
            gap = max(gap, 1e-6 * abs(l0), 1e-3 / params.log_inv_r**2)
            a, b = l0 - gap, l0 + gap
            fa, fb = _shoot(params, bc, correction, a), _shoot(params, bc, correction, b)
            tries = 0
            while fa * fb > 0 and tries < 8:
                a, b = l0 - 0.5 * (l0 - a), l0 + 0.5 * (b - l0)
                fa, fb = _shoot(params, bc, correction, a), _shoot(params, bc, correction, b)
                tries += 1
            if fa * fb > 0:
                raise NoConvergence(f"no sign change of the shooting residual near mode {k}")
            refined.append(optimize.brentq(lambda x: _shoot(params, bc, correction, x), a, b, xtol=1e-15, rtol=1e-15))
        lam = np.array(refined)
    elif method != "fd":
        raise ValueError(f"unknown method {method!r}")
    states = []
    for k in range(count):
        th = w[:, k]
        sgn = np.sign(integrate.trapezoid(th * np.sin((k + 1) * np.pi * v), v)) or 1.0
        th = th * sgn
        th = th * math.sqrt(mass / _thin_mass_of(v, th, rho))
        thv = np.gradient(th, v, edge_order=2)
        sigma = 0.5 * params.t * lam[k]
        states.append(
            ReducedState(
                v, th, thv, float(sigma), math.sqrt(mass), float(th[0]),
                {"b_eps": _b_eps(th[0], thv[0], params), "delta_eps": float("nan"), "method": method},
            )
        )
    return states


def truncated_dirichlet_sigma(params: GlueParams, k: int = 1) -> float:
    """Exact Dirichlet eigenvalue ``k`` of the truncated model."""
    return params.t / 8 + params.t * (k * math.pi) ** 2 / (2 * params.log_inv_r**2)


# ------------------------------------------------------------ thin P1 model
def thin_matrices(params: GlueParams, n: int, correction: bool = True) -> tuple:
    """P1 energy and mass matrices of the x-independent thin model.

    Energy ``t int (theta/2 + theta_v/ln(1/r))^2 dv`` and mass
    ``2 int rho theta^2 dv`` on a uniform grid with ``n`` cells.
    """
    ell, t = params.log_inv_r, params.t
    h = 1.0 / n
    v = np.linspace(0.0, 1.0, n + 1)
    k = np.zeros((n + 1, n + 1))
    m = np.zeros((n + 1, n + 1))
    loc_mass = h / 6 * np.array([[2.0, 1.0], [1.0, 2.0]])
    loc_stiff = np.array([[1.0, -1.0], [-1.0, 1.0]]) / h
    mid = 0.5 * (v[:-1] + v[1:])
    rho = _density(mid, params, correction)
    for e in range(n):
        sl = slice(e, e + 2)
        k[sl, sl] += t * (loc_mass / 4 + loc_stiff / ell**2)
        m[sl, sl] += 2 * rho[e] * loc_mass
    k[0, 0] -= t / (2 * ell)
    k[n, n] += t / (2 * ell)
    return v, k, m


# ----------------------------------------------------------- FEM read-outs
def thin_mass_form(glued: GluedSurface, metric: ConformalMetric | None = None):
    """Boundary mass matrix of the cusp sides."""
    metric = glued.metric if metric is None else metric
    return assemble_boundary_mass(glued.mesh, metric, tags=PARABOLIC_TAGS)


def thin_profile(glued: GluedSurface, u: np.ndarray) -> tuple:
    """Horizontal means of theta on every cusp layer: ``(v, theta_bar)``."""
    p = glued.params
    grid = glued.cusp_grid
    layers = grid.shape[0] - 1
    v = np.linspace(0.0, 1.0, layers + 1)
    ns = grid.shape[1] - 1
    wts = np.full(ns + 1, 1.0 / ns)
    wts[[0, -1]] *= 0.5
    phibar = u[grid] @ wts
    y = np.exp(-v * p.log_inv_r)  # chart height in [r, 1]
    scale = math.sqrt(p.t) / (math.sqrt(p.eps) * math.sqrt(p.log_inv_r))
    return v, phibar * np.sqrt(y) / scale


def state_from_fem(glued: GluedSurface, spectrum: SteklovSpectrum, index: int, problem: SteklovProblem | None = None) -> ReducedState:
    """Reduced state of FEM eigenfunction ``index`` (sign: positive thin bump)."""
    u = spectrum.eigenvectors[:, index]
    sigma = float(spectrum.eigenvalues[index])
    v, th = thin_profile(glued, u)
    if integrate.trapezoid(th * np.sin(np.pi * v), v) < 0:
        u, th = -u, -th
    bthin = thin_mass_form(glued)
    mass = float(u @ (bthin @ u))
    thick = ~glued.cusp_triangles
    a_thick = assemble_stiffness(glued.mesh, thick)
    energy_thick = float(u @ (a_thick @ u))
    thv = np.gradient(th, v, edge_order=2)
    diag = {
        "b_eps": _b_eps(th[0], thv[0], glued.params),
        "delta_eps": energy_thick - sigma * (1.0 - mass),
        "thin_mass": mass,
    }
    return ReducedState(v, th, thv, sigma, math.sqrt(max(mass, 0.0)), float(th[0]), diag)


# ------------------------------------------------------------- choose t
@dataclass(frozen=True, eq=False)
class TChoice:
    t: float
    mass: float
    bracket: tuple
    bracket_masses: tuple
    iterations: int
    glued: GluedSurface
    spectrum: SteklovSpectrum


def base_sigma_star(mesh: Mesh, metric: ConformalMetric, count: int = 8) -> tuple:
    """First nonzero eigenvalue of the base and its multiplicity ``K``.

    Multiplicity is read with a loose 1e-2 relative gap: discrete meshes
    split degenerate eigenvalues slightly.
    """
    spec = SteklovProblem(mesh).solve(metric, count)
    vals = spec.eigenvalues
    s1 = float(vals[1])
    groups = clusters_of(vals[1:], rtol=1e-2)
    return s1, len(groups[0])


def _first_cluster_thin_mass(spec: SteklovSpectrum, bthin) -> float:
    cluster = next(c for c in spec.clusters if 1 in c)
    u = spec.eigenvectors[:, list(cluster)]
    g = u.T @ (bthin @ u)
    return float(np.linalg.eigvalsh(0.5 * (g + g.T))[0])


def default_t_bracket(params: GlueParams, sigma_star: float) -> tuple:
    """Bracket around the resonance ``t`` where the cusp branch meets sigma_star.

    The upper end is ``1.5 * 8 sigma_star`` so that the bracket always
    contains ``t_star = 8 sigma_star``.
    """
    t_star = 8 * sigma_star
    t_res = t_star / (1 + 4 * math.pi**2 / params.log_inv_r**2)
    return 0.25 * t_res, 1.5 * t_star


def choose_t_for_mass(
    base,
    params: GlueParams,
    xi: float = 0.5,
    sigma_star: float | None = None,
    bracket: tuple | None = None,
    tol: float = MASS_TOL,
    layers: int = 200,
    max_iter: int = 100,
) -> TChoice:
    """Bisection on ``t`` until the first eigenfunction has thin mass ``xi``.

    ``base`` is a :class:`GlueBase` (attachment points taken from it) or a
    ``(mesh, metric)`` pair (attachment points from ``params``).  The thin
    mass of a degenerate first eigenvalue is the minimum over its
    eigenspace.  The glued mesh and its Schur complement are built once; only
    the cusp metric changes with ``t``.
    """
    if not 0 < xi < 1:
        raise ValueError("xi must lie in (0, 1)")
    mesh, metric, placed = _unpack_base(base, params)
    if sigma_star is None:
        sigma_star, _ = base_sigma_star(mesh, metric)
    glued = glue(mesh, metric, placed, layers=layers)
    prob = SteklovProblem(glued.mesh)
    t0, t1 = bracket if bracket is not None else default_t_bracket(params, sigma_star)

    def evaluate(t):
        g = glued.with_t(t)
        spec = prob.solve(g.metric, 6)
        return _first_cluster_thin_mass(spec, thin_mass_form(g)), g, spec

    m0, _, _ = evaluate(t0)
    m1, _, _ = evaluate(t1)
    if m0 < xi or m1 > xi:
        raise BracketFailure(f"thin mass at t0={t0:.6g} is {m0:.4f} and at t1={t1:.6g} is {m1:.4f}; target {xi}")
    lo, hi = math.log(t0), math.log(t1)
    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        m, g, spec = evaluate(math.exp(mid))
        if abs(m - xi) <= tol:
            return TChoice(math.exp(mid), m, (t0, t1), (m0, m1), it, g, spec)
        if m > xi:
            lo = mid
        else:
            hi = mid
    raise NoConvergence(f"thin mass did not reach {xi} +- {tol} within {max_iter} bisections")


def _unpack_base(base, params):
    if isinstance(base, GlueBase):
        return base.mesh, base.metric, params.replace(p0=base.p0_arc, p1=base.p1_arc, r=params.r)
    mesh, metric = base
    return mesh, metric, params


# ---------------------------------------------------------- coupled solve
@dataclass(frozen=True, eq=False)
class CoupledResult:
    """``sigma`` lists the coupled eigenvalues; the fixed-point route fills only ``sigma[1]``."""

    sigma: np.ndarray
    state: ReducedState
    coupling: CouplingData
    iterations: int
    method: str


def _thick_pieces(mesh: Mesh, metric: ConformalMetric, params: GlueParams):
    arc = boundary_arc(mesh, metric)
    i0 = attachment_interval(arc, params.p0, params.eps**2)
    i1 = attachment_interval(arc, params.p1, (params.r * params.eps) ** 2)
    inside = {}
    for tag, iv in (("attach0", i0), ("attach1", i1)):
        for a, b in zip(iv[:-1], iv[1:]):
            inside[(min(a, b), max(a, b))] = tag
    tags = tuple(inside.get((min(a, b), max(a, b)), t) for (a, b), t in zip(mesh.boundary_edges.tolist(), mesh.boundary_tags))
    retagged = Mesh(mesh.vertices, mesh.triangles, mesh.boundary_edges, tags, mesh.chart_tags, mesh.chart_coords)
    prob = SteklovProblem(retagged)  # keeps interval vertices in the Schur set
    s = prob.partition[0]
    outer = tuple(t for t in set(tags) if t not in ("attach0", "attach1"))
    b = assemble_boundary_mass(retagged, metric, tags=outer)[s][:, s].toarray()
    w_all = boundary_edge_weights(retagged, metric)
    pos = {v: k for k, v in enumerate(s)}

    def mean_weights(tag):
        w = np.zeros(len(s))
        sel = retagged.edges_with_tags((tag,))
        for (a, bb), le in zip(retagged.boundary_edges[sel].tolist(), w_all[sel]):
            w[pos[a]] += 0.5 * le
            w[pos[bb]] += 0.5 * le
        return w / w.sum()

    return prob, s, b, mean_weights("attach0"), mean_weights("attach1")


def coupled_solve(
    base,
    params: GlueParams,
    n: int = 200,
    count: int = 4,
    method: str = "monolithic",
    correction: bool = True,
    detached: bool = False,
    damping: float = 0.5,
    max_iter: int = 200,
    tol: float = 1e-10,
    shift: float = 1.0,
) -> CoupledResult:
    """Thick FEM part plus reduced thin part matched through interval means.

    Compatibility: ``theta(0) = k * mean_p0`` and ``theta(1) = k sqrt(r) * mean_p1``
    with ``k = sqrt(eps ln(1/r) / t)``.  ``monolithic`` solves the linear
    eigenproblem on the combined space directly; ``fixed_point`` eliminates
    the thin part for a trial ``sigma`` (a 2x2 Robin-type interface matrix)
    and iterates ``sigma <- sigma + damping (lambda_1(sigma) - sigma)``.
    ``detached`` zeroes the coupling (thin part Dirichlet at both ends).
    Returns eigenvalue estimates sorted ascending; the state and coupling
    data refer to index 1 (the first nonzero eigenvalue).
    """
    mesh, metric, placed = _unpack_base(base, params)
    prob, s, b, w0, w1 = _thick_pieces(mesh, metric, placed)
    dtn = prob.dtn
    v, kt, mt = thin_matrices(placed, n, correction)
    kappa = math.sqrt(placed.eps * placed.log_inv_r / placed.t)
    c = np.vstack([kappa * w0, kappa * math.sqrt(placed.r) * w1])
    if detached:
        c = np.zeros_like(c)
    ns = len(s)
    interior = np.arange(1, n)

    if method == "monolithic":
        tmat = np.zeros((ns + n + 1, ns + n - 1))
        tmat[:ns, :ns] = np.eye(ns)
        tmat[ns, :ns] = c[0]
        tmat[ns + n, :ns] = c[1]
        tmat[ns + 1 + np.arange(n - 1), ns + np.arange(n - 1)] = 1.0
        a_full = sla.block_diag(dtn, kt)
        b_full = sla.block_diag(b, mt)
        az = tmat.T @ a_full @ tmat
        bz = tmat.T @ b_full @ tmat
        az, bz = 0.5 * (az + az.T), 0.5 * (bz + bz.T)
        try:
            mu, vec = sla.eigh(bz, az + shift * bz)
        except np.linalg.LinAlgError as exc:
            raise SolverFailure(f"coupled eigensolve failed: {exc}") from exc
        order = np.argsort(-mu)[:count]
        sig = 1.0 / mu[order] - shift
        z = vec[:, order[1]]
        z = z / math.sqrt(z @ bz @ z)
        full = tmat @ z
        x, theta = full[:ns], full[ns:]
        iterations = 0
    elif method == "fixed_point":
        sig, x, theta, iterations = _fixed_point(dtn, b, c, kt, mt, interior, n, count, damping, max_iter, tol, placed)
    else:
        raise ValueError(f"unknown method {method!r}")

    rho = _density(v, placed, correction)
    if integrate.trapezoid(theta * np.sin(np.pi * v), v) < 0:
        x, theta = -x, -theta
    mass = float(theta @ mt @ theta)
    thv = np.gradient(theta, v, edge_order=2)
    energy_thick = float(x @ dtn @ x)
    sigma1 = float(sig[1])
    diag = {
        "b_eps": _b_eps(theta[0], thv[0], placed),
        "delta_eps": energy_thick - sigma1 * (1 - mass),
        "thin_mass": mass,
        "mass_check": _thin_mass_of(v, theta, rho),
    }
    state = ReducedState(v, theta, thv, sigma1, math.sqrt(max(mass, 0.0)), float(theta[0]), diag)
    coupling = CouplingData(float(w0 @ x), float(w1 @ x), float(theta[0]), float(theta[-1]))
    return CoupledResult(np.asarray(sig), state, coupling, iterations, method)


def _fixed_point(dtn, b, c, kt, mt, interior, n, count, damping, max_iter, tol, params):
    """Damped fixed point on sigma with a bisection safeguard."""
    gamma = np.array([0, n])
    ns = dtn.shape[0]
    massless = np.flatnonzero(np.abs(np.diag(b)) == 0.0)
    massive = np.setdiff1d(np.arange(ns), massless)
    bb = b[np.ix_(massive, massive)]

    def thin_schur(sig):
        a = kt - sig * mt
        aii = a[np.ix_(interior, interior)]
        aig = a[np.ix_(interior, gamma)]
        q = a[np.ix_(gamma, gamma)] - aig.T @ np.linalg.solve(aii, aig)
        return 0.5 * (q + q.T)

    def pencil(sig):
        h = dtn + c.T @ thin_schur(sig) @ c
        if len(massless):
            hjj = h[np.ix_(massless, massless)]
            hjo = h[np.ix_(massless, massive)]
            heff = h[np.ix_(massive, massive)] - hjo.T @ np.linalg.solve(hjj, hjo)
        else:
            heff = h
        heff = 0.5 * (heff + heff.T)
        vals, vecs = sla.eigh(heff, bb, subset_by_index=[0, min(count, len(massive)) - 1])
        return vals, vecs, h

    # Thin Dirichlet eigenvalues are poles of the interface matrix.
    pole = float(sla.eigh(kt[np.ix_(interior, interior)], mt[np.ix_(interior, interior)], eigvals_only=True, subset_by_index=[0, 0])[0])
    lo, hi = 0.0, pole * (1 - 1e-9)
    sig = 0.5 * hi
    vals = None
    for it in range(1, max_iter + 1):
        vals, vecs, h = pencil(sig)
        g = vals[1] - sig
        if abs(g) <= tol * max(1.0, abs(sig)):
            break
        if g > 0:
            lo = max(lo, sig)
        else:
            hi = min(hi, sig)
        new = sig + damping * g
        if not lo < new < hi:
            new = 0.5 * (lo + hi)
        sig = new
    else:
        raise InterfaceMismatch(f"interface iteration did not converge in {max_iter} steps (last sigma {sig:.8g})")
    # Reconstruct the eigenvector of the matched sigma.
    xo = vecs[:, 1]
    x = np.zeros(ns)
    x[massive] = xo
    if len(massless):
        x[massless] = -np.linalg.solve(h[np.ix_(massless, massless)], h[np.ix_(massless, massive)] @ xo)
    a = kt - sig * mt
    theta = np.zeros(n + 1)
    theta[gamma] = c @ x
    theta[interior] = -np.linalg.solve(a[np.ix_(interior, interior)], a[np.ix_(interior, gamma)] @ theta[gamma])
    norm = math.sqrt(x @ b @ x + theta @ mt @ theta)
    # Only sigma_1 is resolved by the iteration.
    sig_all = np.full(len(vals), np.nan)
    sig_all[1] = sig
    return sig_all, x / norm, theta / norm, it


# ------------------------------------------------------- combined profile
@dataclass(frozen=True)
class CombinedBound:
    gamma: float
    bound: float
    single_bound: float
    index_l: int
    c0: float
    c1: float
    d0: float
    d1: float
    A: float
    B: float
    theta_bar_at_zero: float
    rayleigh_direct: float


def select_second_mode(thin_masses: dict, k: int) -> tuple:
    """Among modes ``2..K+1`` pick one with thin mass >= 1/(4K); ties go to the largest."""
    cands = {i: m for i, m in thin_masses.items() if 2 <= i <= k + 1}
    if not cands:
        raise ValueError("no candidate modes in 2..K+1")
    ok = {i: m for i, m in cands.items() if m >= 1.0 / (4 * k)}
    pool = ok or cands
    best = max(pool, key=lambda i: (pool[i], -i))
    return best, bool(ok)


def combined_test_function(glued: GluedSurface, spectrum: SteklovSpectrum, multiplicity: int, index_l: int | None = None) -> CombinedBound:
    """Thick-part Rayleigh bound for ``Psi = u^l + gamma u^1`` with ``gamma = -d1/c1``.

    ``single_bound`` is the same quantity for ``u^1`` alone.
    """
    bthin = thin_mass_form(glued)
    a_thin = assemble_stiffness(glued.mesh, glued.cusp_triangles)
    a_thick = assemble_stiffness(glued.mesh, ~glued.cusp_triangles)
    states = {}
    masses = {}
    for i in range(1, min(multiplicity + 2, spectrum.eigenvectors.shape[1])):
        st = state_from_fem(glued, spectrum, i)
        states[i] = st
        masses[i] = st.diagnostics["thin_mass"]
    if index_l is None:
        index_l, _ = select_second_mode(masses, multiplicity)
    s1, sl = states[1], states[index_l]
    if abs(s1.c1) <= C1_TOL:
        raise DegenerateC1(f"|c1| = {abs(s1.c1):.3e} is below {C1_TOL}")
    u1 = _oriented(glued, spectrum, 1)
    ul = _oriented(glued, spectrum, index_l)
    gamma = -sl.c1 / s1.c1
    psi = ul + gamma * u1
    sig1, sigl = s1.sigma, sl.sigma
    m_psi = float(psi @ (bthin @ psi))
    e_psi = float(psi @ (a_thin @ psi))
    lead = gamma**2 * sig1 + sigl
    big_a = lead * m_psi - (gamma**2 + 1) * e_psi
    big_b = gamma**2 + 1 - m_psi
    bound = lead / (1 + gamma**2) + big_a / ((gamma**2 + 1) * big_b)
    m1 = float(u1 @ (bthin @ u1))
    e1 = float(u1 @ (a_thin @ u1))
    single = (sig1 - e1) / (1 - m1)
    bfull = SteklovProblem(glued.mesh).mass(glued.metric)
    direct = float(psi @ (a_thick @ psi)) / float(psi @ (bfull @ psi) - m_psi)
    return CombinedBound(
        gamma, bound, single, index_l, s1.c0, s1.c1, sl.c0, sl.c1, big_a, big_b, sl.c1 + gamma * s1.c1, direct
    )


def _oriented(glued, spectrum, i):
    u = spectrum.eigenvectors[:, i]
    v, th = thin_profile(glued, u)
    return -u if integrate.trapezoid(th * np.sin(np.pi * v), v) < 0 else u
