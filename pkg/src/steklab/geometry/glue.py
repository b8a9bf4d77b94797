"""Attaching a thin cusp handle to a base surface.

The attachment intervals have metric lengths ``eps**2`` (at ``p0``) and
``(r*eps)**2`` (at ``p1``), which is far below what a uniform mesh can
resolve.  :func:`build_glue_base` therefore meshes the base disk in conformal
charts: two half-disk caps centred on the attachment points and a log-polar
strip between them.  :func:`glue` works on any base whose boundary resolves
both intervals with the same number of vertices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateGeometry, OrientationError, ResolutionMismatch
from .builders import grid_triangles, half_disk_nodes
from .cusp import GlueParams, build_cusp_mesh
from .mesh import ConformalMetric, Mesh, boundary_edge_weights
from .topology import TopologySummary, boundary_cycles, topology_invariants


# ---------------------------------------------------------------- arc length
@dataclass(frozen=True)
class BoundaryArc:
    """Boundary cycles with cumulative metric arc-length coordinates."""

    cycles: list  # vertex lists
    coords: list  # arc coordinate of each vertex, cycles laid end to end
    lengths: list  # length of each cycle

    @property
    def total(self) -> float:
        return float(sum(self.lengths))

    def locate(self, s: float) -> tuple:
        """Cycle index and vertex position nearest to arc coordinate ``s``."""
        s = s % self.total if self.total > 0 else s
        start = 0.0
        for c, (cyc, xs, length) in enumerate(zip(self.cycles, self.coords, self.lengths)):
            if s <= start + length or c == len(self.cycles) - 1:
                d = np.abs(xs - s)
                d = np.minimum(d, length - d)
                return c, int(np.argmin(d))
            start += length
        raise AssertionError("unreachable")


def boundary_arc(mesh: Mesh, metric: ConformalMetric) -> BoundaryArc:
    """Arc coordinates of boundary vertices.

    The origin is the first vertex of ``mesh.boundary_edges[0]`` and each
    cycle is walked in the direction of its first stored edge.
    """
    w = boundary_edge_weights(mesh, metric)
    weight = {tuple(sorted(e)): w[j] for j, e in enumerate(mesh.boundary_edges.tolist())}
    cycles, coords, lengths = [], [], []
    offset = 0.0
    for cyc in boundary_cycles(mesh):
        steps = [weight[tuple(sorted((cyc[i], cyc[(i + 1) % len(cyc)])))] for i in range(len(cyc))]
        xs = offset + np.concatenate([[0.0], np.cumsum(steps[:-1])])
        length = float(np.sum(steps))
        cycles.append(list(cyc))
        coords.append(xs)
        lengths.append(length)
        offset += length
    return BoundaryArc(cycles, coords, lengths)


def attachment_interval(arc: BoundaryArc, s: float, length: float) -> list:
    """Boundary vertices spanning metric length ``length`` centred near ``s``.

    The centre snaps to the nearest boundary vertex and each end snaps to the
    vertex whose arc distance from the centre is closest to ``length/2``.
    """
    c, i0 = arc.locate(s)
    cyc, xs, total = arc.cycles[c], arc.coords[c], arc.lengths[c]
    n = len(cyc)
    rel = (xs - xs[i0]) % total
    fwd = rel  # distance going forwards
    back = (total - rel) % total
    half = 0.5 * length
    k_fwd = [k for k in range(n) if fwd[(i0 + k) % n] <= 0.5 * total]
    k_back = [k for k in range(n) if back[(i0 - k) % n] < 0.5 * total]
    right = min(k_fwd, key=lambda k: abs(fwd[(i0 + k) % n] - half))
    left = min(k_back, key=lambda k: abs(back[(i0 - k) % n] - half))
    verts = [cyc[(i0 + k) % n] for k in range(-left, right + 1)]
    if len(verts) < 2:
        raise ResolutionMismatch(f"attachment interval of length {length:.3e} contains fewer than 2 boundary vertices")
    got = back[(i0 - left) % n] + fwd[(i0 + right) % n]
    if abs(got - length) > 0.5 * length:
        raise ResolutionMismatch(
            f"boundary mesh does not resolve an interval of length {length:.3e} (snapped length {got:.3e})"
        )
    return verts


# --------------------------------------------------------------------- glue
@dataclass(frozen=True, eq=False)
class GluedSurface:
    """Result of gluing; unpacks as ``(mesh, metric, topology)``."""

    mesh: Mesh
    metric: ConformalMetric
    topology: TopologySummary
    params: GlueParams
    cusp_grid: np.ndarray  # (layers + 1, n_s + 1) glued vertex ids, row 0 at y = eps
    cusp_chart: str
    interval0: list
    interval1: list
    base_vertices: int

    def __iter__(self):
        return iter((self.mesh, self.metric, self.topology))

    @property
    def cusp_triangles(self) -> np.ndarray:
        return np.asarray(self.mesh.chart_tags, dtype=object) == self.cusp_chart

    def with_t(self, t: float) -> "GluedSurface":
        """Same mesh with the cusp metric rescaled to a new ``t``."""
        new = self.params.replace(t=t)
        shift = math.log(self.params.t) - math.log(t)
        lf = np.array(self.metric.log_factor)
        ids = self.cusp_grid.ravel()
        fresh = ids[ids >= self.base_vertices]
        lf[fresh] += shift
        ch = dict(self.metric.chart_log_factor)
        ch[self.cusp_chart] = ch[self.cusp_chart] + shift
        return GluedSurface(
            self.mesh, ConformalMetric(lf, ch), self.topology, new, self.cusp_grid,
            self.cusp_chart, self.interval0, self.interval1, self.base_vertices,
        )


def _pad(arr, n_new, fill=np.nan):
    extra = np.full((n_new,) + arr.shape[1:], fill)
    return np.concatenate([arr, extra])


def glue(base: Mesh, metric: ConformalMetric, params: GlueParams, layers: int = 200) -> GluedSurface:
    """Attach the cusp of ``params`` to ``base`` at ``params.p0``/``params.p1``.

    The top of the cusp is identified with the interval at ``p0`` and its
    bottom with the interval at ``p1``.  Both intervals must contain the same
    number of base boundary vertices; that number fixes the cusp's
    transverse resolution.
    """
    arc = boundary_arc(base, metric)
    i0 = attachment_interval(arc, params.p0, params.eps**2)
    i1 = attachment_interval(arc, params.p1, (params.r * params.eps) ** 2)
    if set(i0) & set(i1):
        raise DegenerateGeometry("attachment intervals overlap")
    if len(i0) != len(i1):
        raise ResolutionMismatch(
            f"intervals hold {len(i0)} and {len(i1)} boundary vertices; the cusp needs equal counts"
        )
    n_s = len(i0) - 1
    cusp, cmetric = build_cusp_mesh(params, n_s=n_s, layers=layers)
    m = n_s + 1
    nb = base.n_vertices

    top = list(i0) if not params.orientation_flags[0] else list(reversed(i0))
    # Reversed by default: keeps the orientations of base and handle coherent.
    bottom = list(reversed(i1)) if not params.orientation_flags[1] else list(i1)
    ids = np.empty(cusp.n_vertices, dtype=np.int64)
    ids[:m] = top
    ids[layers * m :] = bottom
    inner = np.arange(m, layers * m)
    ids[inner] = nb + np.arange(len(inner))
    n_total = nb + len(inner)

    chart = "cusp"
    k = 1
    while chart in set(base.chart_tags):
        chart = f"cusp{k}"
        k += 1

    tris = np.concatenate([base.triangles, ids[cusp.triangles]])
    ctags = tuple(base.chart_tags) + (chart,) * cusp.n_triangles

    drop = set()
    for iv in (i0, i1):
        for a, b in zip(iv[:-1], iv[1:]):
            drop.add((min(a, b), max(a, b)))
    keep = [j for j, e in enumerate(base.boundary_edges.tolist()) if (min(e), max(e)) not in drop]
    if len(keep) != len(base.boundary_edges) - 2 * n_s:
        raise ResolutionMismatch("attachment interval is not a run of consecutive boundary edges")
    sides = cusp.edges_with_tags(("side+", "side-"))
    bedges = np.concatenate([base.boundary_edges[keep], ids[cusp.boundary_edges[sides]]])
    btags = tuple(base.boundary_tags[j] for j in keep) + tuple(t for t, s in zip(cusp.boundary_tags, sides) if s)

    home = _pad(base.vertices, len(inner))
    home[nb:] = cusp.vertices[inner]
    charts = {name: _pad(arr, len(inner)) for name, arr in base.chart_coords.items()}
    cc = np.full((n_total, 2), np.nan)
    cc[ids] = cusp.vertices
    charts[chart] = cc

    lf = _pad(metric.log_factor, len(inner))
    lf[nb:] = cmetric.log_factor[inner]
    lcharts = {name: _pad(arr, len(inner)) for name, arr in metric.chart_log_factor.items()}
    cl = np.full(n_total, np.nan)
    cl[ids] = cmetric.log_factor
    lcharts[chart] = cl

    mesh = Mesh(home, tris, bedges, btags, ctags, charts)
    gmetric = ConformalMetric(lf, lcharts)
    topo = topology_invariants(mesh)
    base_orientable = topology_invariants(base).orientable
    want = base_orientable and params.orientation_flags[0] == params.orientation_flags[1]
    if topo.orientable != want:
        raise OrientationError(
            f"glued surface orientable={topo.orientable}, expected {want} for flags {params.orientation_flags}"
        )
    grid = ids.reshape(layers + 1, m)
    return GluedSurface(mesh, gmetric, topo, params, grid, chart, list(i0), list(i1), nb)


# ---------------------------------------------------------------- base disk
@dataclass(frozen=True, eq=False)
class GlueBase:
    """Unit-length disk meshed to resolve both attachment intervals."""

    mesh: Mesh
    metric: ConformalMetric
    p0_arc: float
    p1_arc: float
    center0: int
    center1: int


def _disk_pieces(params: GlueParams, n_phi: int, cap_rings: int, c: float):
    if n_phi % cap_rings:
        raise ValueError("n_phi must be a multiple of cap_rings")
    sectors = n_phi // cap_rings
    zp0 = np.exp(2j * np.pi * params.p0)
    zp1 = np.exp(2j * np.pi * params.p1)
    q = zp0 / zp1
    if abs(1 - q) < 1e-12:
        raise DegenerateGeometry("p0 and p1 coincide")
    a = float((1j * (1 + q) / (1 - q)).real)
    ai = a + 1j
    eps2 = params.eps**2
    a0 = eps2 * abs(ai) ** 2 / (4 * math.exp(c))
    a1 = (params.r**2) * eps2 / (4 * math.exp(c))
    lo, hi = math.log(a0), -math.log(a1)
    if not hi - lo > 1.0:
        raise DegenerateGeometry("attachment caps overlap; eps is too large")

    def z_from_w(w):
        cc = w + a
        return zp1 * (cc - 1j) / (cc + 1j)

    def z_from_w1(w1):
        return zp1 * (-1 + (a - 1j) * w1) / (-1 + ai * w1)

    xy, ctri, diam, arcn = half_disk_nodes(cap_rings, sectors, 0.5)
    n_cap = len(xy)
    ncol = max(2, int(math.ceil((hi - lo) / (np.pi / n_phi))))
    rows = n_phi + 1
    n_strip = (ncol - 1) * rows
    off_strip = n_cap
    off_cap1 = n_cap + n_strip
    n = off_cap1 + n_cap

    def sidx(kc, j):
        if kc == 0:
            return int(arcn[j])
        if kc == ncol:
            return off_cap1 + int(arcn[n_phi - j])
        return off_strip + (kc - 1) * rows + j

    xi = xy[:, 0] + 1j * xy[:, 1]
    home = np.empty(n, dtype=complex)
    w_cap0 = 2 * a0 * xi
    home[:n_cap] = z_from_w(w_cap0)
    w1_cap1 = 2 * a1 * xi
    home[off_cap1:] = z_from_w1(w1_cap1)

    re = np.linspace(lo, hi, ncol + 1)
    im = np.pi * np.arange(rows) / n_phi
    strip = np.full((n, 2), np.nan)
    for kc in range(ncol + 1):
        for j in range(rows):
            strip[sidx(kc, j)] = re[kc], im[j]
    zeta = strip[:, 0] + 1j * strip[:, 1]
    mid = slice(off_strip, off_cap1)
    home[mid] = z_from_w(np.exp(zeta[mid]))

    cap0 = np.full((n, 2), np.nan)
    cap0[:n_cap] = xy
    cap1 = np.full((n, 2), np.nan)
    cap1[off_cap1:] = xy

    lf_cap0 = np.full(n, np.nan)
    lf_cap0[:n_cap] = c + np.log(2 / np.abs(w_cap0 + ai) ** 2) + math.log(2 * a0)
    lf_cap1 = np.full(n, np.nan)
    lf_cap1[off_cap1:] = c + np.log(2 / np.abs(1 - ai * w1_cap1) ** 2) + math.log(2 * a1)
    lf_strip = np.full(n, np.nan)
    ok = ~np.isnan(strip[:, 0])
    wz = np.exp(zeta[ok])
    lf_strip[ok] = c + np.log(2 / np.abs(wz + ai) ** 2) + strip[ok, 0]

    tris = [tuple(t) for t in ctri]
    tags = ["cap0"] * len(ctri)
    st = grid_triangles(ncol, n_phi, sidx)
    tris += st
    tags += ["strip"] * len(st)
    tris += [tuple(off_cap1 + t) for t in ctri]
    tags += ["cap1"] * len(ctri)

    loop = [int(v) for v in diam[cap_rings:]]
    loop += [sidx(kc, 0) for kc in range(1, ncol)]
    loop += [off_cap1 + int(v) for v in diam]
    loop += [sidx(kc, n_phi) for kc in range(ncol - 1, 0, -1)]
    loop += [int(v) for v in diam[:cap_rings]]
    ang = np.angle(home[loop]) % (2 * np.pi)
    start = int(np.argmin(ang))
    loop = loop[start:] + loop[:start]
    edges = list(zip(loop, loop[1:] + loop[:1]))

    home_xy = np.column_stack([home.real, home.imag])
    mesh = Mesh(home_xy, tris, edges, ("outer",) * len(edges), tuple(tags), {"cap0": cap0, "strip": strip, "cap1": cap1})
    # Home-chart factor: the unit disk metric exp(c)|dz| (display only).
    metric = ConformalMetric(np.full(n, c), {"cap0": lf_cap0, "strip": lf_strip, "cap1": lf_cap1})
    center0 = int(diam[cap_rings])
    center1 = off_cap1 + int(diam[cap_rings])
    return mesh, metric, center0, center1


def build_glue_base(params: GlueParams, n_phi: int = 16, cap_rings: int = 4) -> GlueBase:
    """Unit-boundary-length disk whose mesh resolves both attachment intervals.

    The disk is mapped to a strip by a Moebius map sending ``p0`` to 0 and
    ``p1`` to infinity followed by a logarithm.  Half-disk caps of chart
    radius 1/2 sit at both points; each cap diameter is exactly one
    attachment interval and carries ``2 * cap_rings + 1`` uniform nodes.
    """
    c = -math.log(2 * math.pi)
    mesh, metric, c0, c1 = _disk_pieces(params, n_phi, cap_rings, c)
    length = float(boundary_edge_weights(mesh, metric).sum())
    c -= math.log(length)
    mesh, metric, c0, c1 = _disk_pieces(params, n_phi, cap_rings, c)
    # The caps move slightly with c; a final shift makes the length exact.
    metric = metric.shifted(-math.log(float(boundary_edge_weights(mesh, metric).sum())))
    arc = boundary_arc(mesh, metric)
    pos = {v: x for v, x in zip(arc.cycles[0], arc.coords[0])}
    return GlueBase(mesh, metric, float(pos[c0]), float(pos[c1]), c0, c1)


def build_glued_disk(params: GlueParams, n_phi: int = 16, n_s: int = 8, layers: int = 200) -> GluedSurface:
    """Disk of boundary length one with a cusp handle attached."""
    if n_s % 2:
        raise ValueError("n_s must be even")
    base = build_glue_base(params, n_phi=n_phi, cap_rings=n_s // 2)
    placed = params.replace(p0=base.p0_arc, p1=base.p1_arc, r=params.r)
    g = glue(base.mesh, base.metric, placed, layers=layers)
    return GluedSurface(g.mesh, g.metric, g.topology, params, g.cusp_grid, g.cusp_chart, g.interval0, g.interval1, g.base_vertices)
