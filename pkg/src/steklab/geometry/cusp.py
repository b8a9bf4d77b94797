"""The thin cusp strip between two parabolas and its parameters."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ..errors import DegenerateGeometry
from .builders import grid_triangles
from .mesh import ConformalMetric, Mesh

DEFAULT_ALPHA = 0.45
EPS_MAX = 0.5


@dataclass(frozen=True)
class GlueParams:
    """Parameters of the handle.

    ``r`` defaults to ``exp(-eps**-alpha)``; pass it explicitly to decouple
    the two.  ``p0``/``p1`` are boundary arc-length coordinates of the
    attachment points on the base surface.  ``orientation_flags`` reverse
    the identification at each end; equal flags give an orientable handle.
    """

    eps: float
    alpha: float = DEFAULT_ALPHA
    t: float = 1.0
    p0: float = 0.0
    p1: float = 0.5
    orientation_flags: tuple = (False, False)
    r: float | None = None

    def __post_init__(self):
        if not (0.0 < self.eps < EPS_MAX):
            raise DegenerateGeometry(f"eps must lie in (0, {EPS_MAX}), got {self.eps}")
        if not (0.0 < self.alpha < 1.0):
            raise DegenerateGeometry(f"alpha must lie in (0, 1), got {self.alpha}")
        if not (self.t > 0.0 and math.isfinite(self.t)):
            raise DegenerateGeometry(f"t must be positive, got {self.t}")
        if self.r is None:
            object.__setattr__(self, "r", math.exp(-self.eps ** (-self.alpha)))
        if not (0.0 < self.r < 1.0):
            raise DegenerateGeometry(f"r must lie in (0, 1), got {self.r}")
        object.__setattr__(self, "orientation_flags", tuple(bool(f) for f in self.orientation_flags))

    @property
    def log_inv_r(self) -> float:
        """``ln(1/r)``; equals ``eps**-alpha`` unless ``r`` was overridden."""
        return -math.log(self.r)

    def replace(self, **changes) -> "GlueParams":
        if "eps" in changes or "alpha" in changes:
            changes.setdefault("r", None)
        return replace(self, **changes)


def cusp_layer_heights(params: GlueParams, layers: int) -> np.ndarray:
    """Physical heights ``eps * r**v`` on the uniform ``v`` grid from 0 to 1."""
    v = np.linspace(0.0, 1.0, layers + 1)
    return params.eps * np.exp(-v * params.log_inv_r)


def build_cusp_mesh(params: GlueParams, n_s: int = 8, layers: int = 200) -> tuple:
    """Mesh of ``{|x| <= y^2/2, eps*r <= y <= eps}`` in physical coordinates.

    Nodes sit on the lattice ``x = s y^2 / 2``, ``y = eps r^v`` with ``s``
    uniform in ``[-1, 1]`` (``n_s`` cells) and ``v`` uniform in ``[0, 1]``
    (``layers`` cells).  Node ``(j, k)`` has index ``k * (n_s + 1) + j``; row
    ``k = 0`` is the top (``y = eps``).  The metric is ``|dz|^2 / t^2``.
    Boundary tags: ``top``, ``bottom``, ``side+``, ``side-``.
    """
    if n_s < 1 or layers < 1:
        raise ValueError("n_s and layers must be positive")
    eps, r = params.eps, params.r
    y_bot = eps * r
    if not (y_bot * y_bot > 1e-280) or y_bot * y_bot * 0.5 / n_s == 0.0:
        raise DegenerateGeometry("cusp bottom width underflows double precision")
    y = cusp_layer_heights(params, layers)
    s = np.linspace(-1.0, 1.0, n_s + 1)
    S, Y = np.meshgrid(s, y)
    xy = np.column_stack([(0.5 * S * Y * Y).ravel(), Y.ravel()])
    m = n_s + 1

    def idx(j, k):
        return k * m + j

    # Cells run downwards in y, so list corners to stay counter-clockwise.
    tris = [(a, c, b) for a, b, c in grid_triangles(n_s, layers, idx)]
    top = [(idx(j + 1, 0), idx(j, 0)) for j in range(n_s)]
    bottom = [(idx(j, layers), idx(j + 1, layers)) for j in range(n_s)]
    right = [(idx(n_s, k + 1), idx(n_s, k)) for k in range(layers)]
    left = [(idx(0, k), idx(0, k + 1)) for k in range(layers)]
    edges = top + right + bottom + left
    tags = ("top",) * n_s + ("side+",) * layers + ("bottom",) * n_s + ("side-",) * layers
    mesh = Mesh(xy, tris, edges, tags, ("cusp",) * len(tris))
    metric = ConformalMetric(np.full(mesh.n_vertices, -math.log(params.t)))
    return mesh, metric


def lattice_min_angle(n_s: int, layers: int) -> float:
    """Smallest angle of the cusp triangulation measured in lattice indices.

    In ``(j, k)`` index space every cell is a unit square split along one
    diagonal, so the answer is 45 degrees; it is reported rather than
    assumed so tests can guard against changes to the split.
    """
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    worst = 180.0
    for tri in ([0, 1, 2], [0, 2, 3]):
        p = pts[tri]
        for k in range(3):
            a = p[(k + 1) % 3] - p[k]
            b = p[(k + 2) % 3] - p[k]
            ang = math.degrees(math.acos(float(a @ b) / (np.linalg.norm(a) * np.linalg.norm(b))))
            worst = min(worst, ang)
    return worst
