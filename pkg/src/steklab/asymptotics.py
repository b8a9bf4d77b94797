"""Closed-form layer for the thin cusp.

Covers:

* the theta change of variables on the cusp and its energy identities;
* the model profiles ``f``, ``f1``, ``f2`` that make up the expansion of the
  thin-part eigenfunction;
* the integral ``I(r) = int_0^1 r^(v/2) sin(pi v) dv``;
* the two upper bounds and the expansion of the first eigenvalue.

Every asymptotic error term is returned as metadata (``error_scale``) and
never added to a value: the constants hidden in the O-terms are unknown.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import QuadratureUnderflow
from .geometry.cusp import GlueParams, build_cusp_mesh

PI = math.pi
F2_CONSTANT = 0.5 + 3.0 / (8.0 * PI**2)


# ------------------------------------------------------------ model profiles
def f(v):
    return np.sin(PI * np.asarray(v))


def df(v):
    return PI * np.cos(PI * np.asarray(v))


def f1(v):
    """First corrector: ``-f1'' - pi^2 f1 = -2 pi f``, ``f1(0)=1``, ``f1(1)=0``, orthogonal to ``f``."""
    v = np.asarray(v)
    return (1 - v) * np.cos(PI * v) - np.sin(PI * v) / (2 * PI)


def df1(v):
    v = np.asarray(v)
    return -np.cos(PI * v) - PI * (1 - v) * np.sin(PI * v) - 0.5 * np.cos(PI * v)


def f2(v):
    """Second corrector: ``-f2'' - pi^2 f2 = -2 pi f1`` with zero end values."""
    v = np.asarray(v)
    return (-0.5 * v * v + v - F2_CONSTANT) * np.sin(PI * v)


def df2(v):
    v = np.asarray(v)
    p = -0.5 * v * v + v - F2_CONSTANT
    return (1 - v) * np.sin(PI * v) + PI * p * np.cos(PI * v)


def _fourth_order_second_derivative(values, h):
    return (-values[4:] + 16 * values[3:-1] - 30 * values[2:-2] + 16 * values[1:-3] - values[:-4]) / (12 * h * h)


def ode_residuals(points: int = 1000) -> tuple:
    """Sup-norm residuals of the two corrector equations.

    Second derivatives come from the five-point fourth-order stencil on a
    uniform grid.  Samples are taken in extended precision: in double
    precision the stencil's rounding error (about ``5 eps / h^2``) would
    dominate at this grid size.
    """
    h = np.longdouble(1) / (points - 1)
    v = np.arange(points, dtype=np.longdouble) * h
    pi = 4 * np.arctan(np.longdouble(1))
    s, c = np.sin(pi * v), np.cos(pi * v)
    fv = s
    f1v = (1 - v) * c - s / (2 * pi)
    f2v = (-v * v / 2 + v - (np.longdouble(1) / 2 + 3 / (8 * pi * pi))) * s
    r1 = -_fourth_order_second_derivative(f1v, h) - pi**2 * f1v[2:-2] + 2 * pi * fv[2:-2]
    r2 = -_fourth_order_second_derivative(f2v, h) - pi**2 * f2v[2:-2] + 2 * pi * f1v[2:-2]
    return float(np.max(np.abs(r1))), float(np.max(np.abs(r2)))


def model_integrals() -> dict:
    """Adaptive quadrature of the orthogonality relations of the profiles."""
    opts = dict(epsabs=1e-14, epsrel=1e-14, limit=200)
    ff1 = integrate.quad(lambda v: f(v) * f1(v), 0, 1, **opts)[0]
    ff2 = integrate.quad(lambda v: f(v) * f2(v), 0, 1, **opts)[0]
    f1f1 = integrate.quad(lambda v: f1(v) ** 2, 0, 1, **opts)[0]
    return {"f_f1": ff1, "f_f2": ff2, "f1_f1": f1f1, "f_f2_plus_half_f1_f1": ff2 + 0.5 * f1f1}


# --------------------------------------------------------------- integral I
def integral_I(r: float) -> float:
    """``int_0^1 r^(v/2) sin(pi v) dv`` in closed form."""
    if not 0 < r < 1:
        raise ValueError("r must lie in (0, 1)")
    lr2 = math.log(r) ** 2
    return 4 * PI * (1 + math.sqrt(r)) / (lr2 + 4 * PI**2)


def integral_I_quadrature(r: float) -> float:
    a = -0.5 * math.log(r)
    return integrate.quad(lambda v: math.exp(-a * v) * math.sin(PI * v), 0, 1, epsabs=1e-15, epsrel=1e-13)[0]


# ------------------------------------------------------ theta substitution
def _scale(params: GlueParams) -> float:
    return math.sqrt(params.t) / (math.sqrt(params.eps) * math.sqrt(params.log_inv_r))


def v_of_y(y, params: GlueParams):
    """Cusp chart height ``y in [r, 1]`` to ``v = ln y / ln r``."""
    return np.log(y) / math.log(params.r)


def y_of_v(v, params: GlueParams):
    return np.exp(np.asarray(v) * math.log(params.r))


def theta_of_phi(phi, y, params: GlueParams):
    """Values of theta at the points where phi was sampled (chart heights ``y``)."""
    return np.asarray(phi) * np.sqrt(y) / _scale(params)


def phi_of_theta(theta, v, params: GlueParams):
    y = y_of_v(v, params)
    return np.asarray(theta) * _scale(params) / np.sqrt(y)


# --------------------------------------------------------- energy identities
def _nodes(rule: str, n: int, panels: int):
    """Quadrature nodes/weights on [0, 1] as ``panels`` equal sub-panels."""
    if rule == "gauss":
        x, w = np.polynomial.legendre.leggauss(n)
        x, w = 0.5 * (x + 1), 0.5 * w
    elif rule == "trapezoid":
        x = np.linspace(0, 1, n)
        w = np.full(n, 1.0 / (n - 1))
        w[[0, -1]] *= 0.5
    else:
        raise ValueError(f"unknown rule {rule!r}")
    xs = np.concatenate([(k + x) / panels for k in range(panels)])
    ws = np.concatenate([w / panels for _ in range(panels)])
    return xs, ws


def _deriv(fn, x, v, axis, h=1e-6):
    if axis == 0:
        hx = h * np.maximum(np.abs(x), 1e-300) + 1e-300
        return (fn(x + hx, v) - fn(x - hx, v)) / (2 * hx)
    return (fn(x, v + h) - fn(x, v - h)) / (2 * h)


def energy_identity_residuals(theta, params: GlueParams, n: int = 24, panels: int = 16, rule: str = "gauss") -> dict:
    """Check the three theta identities by quadrature on both sides.

    ``theta(x, v)`` is a vectorised callable on the cusp in theta variables
    (``|x| <= r^(2v)/2``).  Left sides integrate ``phi`` over the chart
    ``(x, y)`` on panels geometric in ``y``; right sides integrate ``theta``
    over ``(x, v)``.  Derivatives are central differences of the callables.
    Returns the absolute residuals and both sides of every identity.
    """
    eps, t, r, ell = params.eps, params.t, params.r, params.log_inv_r
    if r * r == 0.0 or (eps * r) ** 2 == 0.0:
        raise QuadratureUnderflow("cusp width underflows double precision")
    scale = _scale(params)

    def phi(x, y):
        return scale * y**-0.5 * theta(x, np.log(y) / math.log(r))

    u, wu = _nodes(rule, n, panels)  # v-like parameter on [0, 1]
    s, ws = _nodes(rule, n, 2)
    s = 2 * s - 1
    ws = 2 * ws

    # Left sides: y on [r, 1] split geometrically, nodes placed uniformly in y per panel.
    edges = r ** (np.arange(panels + 1)[::-1] / panels)
    yq, wy = [], []
    base, bw = _nodes(rule, n, 1)
    for a, b in zip(edges[:-1], edges[1:]):
        yq.append(a + (b - a) * base)
        wy.append((b - a) * bw)
    yq, wy = np.concatenate(yq), np.concatenate(wy)
    dl = (eps / t) * np.sqrt(1 + eps**2 * yq**2)

    lhs_sq = sum(np.sum(phi(sg * yq**2 / 2, yq) ** 2 * dl * wy) for sg in (1, -1))
    lhs_mean = sum(np.sum(phi(sg * yq**2 / 2, yq) * dl * wy) for sg in (1, -1))
    Y, S = np.meshgrid(yq, s, indexing="ij")
    X = S * Y**2 / 2
    W = np.outer(wy, ws) * Y**2 / 2
    px = _deriv(phi, X, Y, 0)
    py = _deriv(phi, X, Y, 1)
    lhs_grad = np.sum((px**2 / eps + eps * py**2) * W)

    rv = r ** (2 * u)
    jac = np.sqrt(1 + eps**2 * rv)
    rhs_sq = sum(np.sum(theta(sg * rv / 2, u) ** 2 * jac * wu) for sg in (1, -1))
    rhs_mean = math.sqrt(ell) * math.sqrt(eps) / math.sqrt(t) * sum(
        np.sum(r ** (u / 2) * theta(sg * rv / 2, u) * jac * wu) for sg in (1, -1)
    )
    V, S2 = np.meshgrid(u, s, indexing="ij")
    X2 = S2 * r ** (2 * V) / 2
    W2 = np.outer(wu, ws)
    tx = _deriv(theta, X2, V, 0)
    tv = _deriv(theta, X2, V, 1)
    th = theta(X2, V)
    rhs_grad = t * (
        np.sum(tx**2 * W2 * r ** (2 * V) / 2) / eps**2 + np.sum((th / 2 + tv / ell) ** 2 * W2 / 2)
    )
    return {
        "square": abs(lhs_sq - rhs_sq),
        "mean": abs(lhs_mean - rhs_mean),
        "gradient": abs(lhs_grad - rhs_grad),
        "sides": {"square": (lhs_sq, rhs_sq), "mean": (lhs_mean, rhs_mean), "gradient": (lhs_grad, rhs_grad)},
    }


# ------------------------------------------------------------------- bounds
def branch_cusp(params: GlueParams) -> float:
    """Cusp Dirichlet value ``t/8 + t pi^2 / (2 ln(r)^2)``."""
    return params.t / 8 + params.t * PI**2 / (2 * params.log_inv_r**2)


def cusp_branch_law(params: GlueParams, n_s: int = 8, layers: int = 200) -> tuple:
    """FEM ``sigma_1`` of the cusp alone and ``2 (sigma_1/t - 1/8) ln(r)^2``.

    The parabolic sides carry the Steklov condition, top and bottom are
    Neumann.  The second value tends to ``pi^2`` as ``eps -> 0``.
    """
    from .steklov import SteklovProblem

    mesh, metric = build_cusp_mesh(params, n_s=n_s, layers=layers)
    spec = SteklovProblem(mesh, steklov_tags=("side+", "side-")).solve(metric, 3)
    sigma = float(spec.eigenvalues[1])
    return sigma, 2.0 * (sigma / params.t - 0.125) * params.log_inv_r**2


@dataclass(frozen=True)
class FirstBound:
    branch_star: float
    branch_cusp: float
    bound: float
    error_scale: float  # eps / ln(1/r)^2 + eps^2
    cusp_error_scale: float  # eps / ln(1/r)^3 + eps^2


def upper_bound_first(params: GlueParams, sigma_star: float) -> FirstBound:
    """Upper bound on the first eigenvalue of the glued surface (main terms)."""
    ell, eps = params.log_inv_r, params.eps
    bc = branch_cusp(params)
    return FirstBound(
        branch_star=float(sigma_star),
        branch_cusp=bc,
        bound=min(float(sigma_star), bc),
        error_scale=eps / ell**2 + eps**2,
        cusp_error_scale=eps / ell**3 + eps**2,
    )


@dataclass(frozen=True)
class ScalarWithScale:
    value: float
    error_scale: float


def upper_bound_Kplus1(params: GlueParams, sigma_star: float) -> ScalarWithScale:
    """Upper bound on eigenvalue ``K+1`` (``K`` = multiplicity of sigma_star)."""
    ell, eps = params.log_inv_r, params.eps
    return ScalarWithScale(
        max(float(sigma_star), branch_cusp(params)),
        eps / ell + math.sqrt(eps) / ell**1.5 + eps**2,
    )


# ---------------------------------------------------------------- expansion
@dataclass(frozen=True)
class ExpansionInput:
    params: GlueParams
    c0: float
    c1: float
    d0: float | None = None
    d1: float | None = None

    def __post_init__(self):
        if not 0 < self.c0 <= 1 + 1e-12:
            raise ValueError(f"c0 must lie in (0, 1], got {self.c0}")


def expansion_sigma(inp: ExpansionInput) -> ScalarWithScale:
    """``sigma = t (1/8 + pi^2/(2 ln^2 r) - (c1/c0) pi / ln^2 r)``."""
    p = inp.params
    ell = p.log_inv_r
    val = p.t * (0.125 + PI**2 / (2 * ell**2) - (inp.c1 / inp.c0) * PI / ell**2)
    a, eps = p.alpha, p.eps
    err = eps ** ((3 + a) / 2) * math.log(1 / eps) ** 3 / inp.c0**3 + eps ** (1 + a)
    return ScalarWithScale(val, err)


@dataclass(frozen=True)
class ThetaExpansion:
    theta: np.ndarray
    theta_v: np.ndarray
    error_scale: float


def expansion_theta(v, inp: ExpansionInput) -> ThetaExpansion:
    """``c0 (f + q f1 + q^2 f2)`` with ``q = c1/c0``, and its v-derivative."""
    v = np.asarray(v, float)
    q = inp.c1 / inp.c0
    th = inp.c0 * (f(v) + q * f1(v) + q * q * f2(v))
    thv = inp.c0 * (df(v) + q * df1(v) + q * q * df2(v))
    a, eps = inp.params.alpha, inp.params.eps
    err = eps ** (1.5 * (1 - a)) * math.log(1 / eps) ** 3 / inp.c0**3 + eps ** (1 - a)
    return ThetaExpansion(th, thv, err)
