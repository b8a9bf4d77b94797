"""Plain-text mesh format.

Sections are introduced by a keyword and a count; ``#`` starts a comment::

    vertices N            then N lines ``x y``
    triangles M           then M lines ``a b c chart``
    boundary P            then P lines ``a b tag``
    log_factor N          then N values (optional)
    chart NAME N          then N lines ``x y`` or ``nan nan`` (optional, repeatable)
    chart_log_factor NAME N   then N values (optional, repeatable)

Floats are written with 17 significant digits so a write/read cycle is exact.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np

from .mesh import ConformalMetric, Mesh

FORMAT_HEADER = "# steklab mesh v1"


def _num(x: float) -> str:
    return format(float(x), ".17g")


def _check_name(name: str, what: str) -> str:
    if not name or any(c.isspace() for c in name):
        raise ValueError(f"{what} {name!r} must be a non-empty word without whitespace")
    return name


def write_mesh(target, mesh: Mesh, metric: ConformalMetric | None = None, comments=()) -> None:
    """Write ``mesh`` (and optionally ``metric``) to a path or text stream."""
    out = io.StringIO()
    out.write(FORMAT_HEADER + "\n")
    for c in comments:
        out.write(f"# {c}\n")
    out.write(f"vertices {mesh.n_vertices}\n")
    for x, y in mesh.vertices:
        out.write(f"{_num(x)} {_num(y)}\n")
    out.write(f"triangles {len(mesh.triangles)}\n")
    for (a, b, c), chart in zip(mesh.triangles.tolist(), mesh.chart_tags):
        out.write(f"{a} {b} {c} {_check_name(chart, 'chart tag')}\n")
    out.write(f"boundary {len(mesh.boundary_edges)}\n")
    for (a, b), tag in zip(mesh.boundary_edges.tolist(), mesh.boundary_tags):
        out.write(f"{a} {b} {_check_name(tag, 'boundary tag')}\n")
    for name in sorted(mesh.chart_coords):
        arr = mesh.chart_coords[name]
        out.write(f"chart {_check_name(name, 'chart')} {len(arr)}\n")
        for x, y in arr:
            out.write(f"{_num(x)} {_num(y)}\n")
    if metric is not None:
        out.write(f"log_factor {len(metric.log_factor)}\n")
        out.writelines(_num(w) + "\n" for w in metric.log_factor)
        for name in sorted(metric.chart_log_factor):
            arr = metric.chart_log_factor[name]
            out.write(f"chart_log_factor {_check_name(name, 'chart')} {len(arr)}\n")
            out.writelines(_num(w) + "\n" for w in arr)
    text = out.getvalue()
    if isinstance(target, (str, Path)):
        Path(target).write_text(text)
    else:
        target.write(text)


def read_mesh(source) -> tuple:
    """Read a mesh file; returns ``(mesh, metric)``.

    The metric is flat when the file has no ``log_factor`` section.
    """
    text = Path(source).read_text() if isinstance(source, (str, Path)) else source.read()
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    pos = 0
    verts = tris = edges = None
    charts_t, tags = [], []
    chart_coords, log_factor, chart_lf = {}, None, {}

    def block(count):
        nonlocal pos
        if pos + count > len(lines):
            raise ValueError("mesh file ends inside a section")
        rows = [ln.split() for ln in lines[pos:pos + count]]
        pos += count
        return rows

    while pos < len(lines):
        head = lines[pos].split()
        pos += 1
        key = head[0]
        try:
            if key == "vertices":
                verts = np.array(block(int(head[1])), dtype=float).reshape(-1, 2)
            elif key == "triangles":
                rows = block(int(head[1]))
                tris = np.array([r[:3] for r in rows], dtype=np.int64).reshape(-1, 3)
                charts_t = [r[3] for r in rows]
            elif key == "boundary":
                rows = block(int(head[1]))
                edges = np.array([r[:2] for r in rows], dtype=np.int64).reshape(-1, 2)
                tags = [r[2] for r in rows]
            elif key == "chart":
                chart_coords[head[1]] = np.array(block(int(head[2])), dtype=float).reshape(-1, 2)
            elif key == "log_factor":
                log_factor = np.array([r[0] for r in block(int(head[1]))], dtype=float)
            elif key == "chart_log_factor":
                chart_lf[head[1]] = np.array([r[0] for r in block(int(head[2]))], dtype=float)
            else:
                raise ValueError(f"unknown section {key!r}")
        except (IndexError, TypeError) as exc:
            raise ValueError(f"malformed section {key!r}: {exc}") from exc
    if verts is None or tris is None or edges is None:
        raise ValueError("mesh file needs vertices, triangles and boundary sections")
    mesh = Mesh(verts, tris, edges, tags, charts_t, chart_coords)
    metric = ConformalMetric(log_factor if log_factor is not None else np.zeros(len(verts)), chart_lf)
    return mesh, metric
