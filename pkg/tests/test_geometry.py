import io
import math

import numpy as np
import pytest
from scipy import integrate

from steklab.errors import DegenerateGeometry, DegenerateTriangle, NonManifold, OrientationError, ResolutionMismatch
from steklab.geometry import (
    ConformalMetric,
    Mesh,
    boundary_cycles,
    boundary_length,
    build_annulus_mesh,
    build_disk_mesh,
    build_square_mesh,
    topology_invariants,
)
from steklab.geometry.cusp import GlueParams, build_cusp_mesh, cusp_layer_heights, lattice_min_angle
from steklab.geometry.glue import build_glue_base, build_glued_disk, glue
from steklab.geometry.mesh import parabola_arclength
from steklab.geometry.meshio import read_mesh, write_mesh


def _two_triangles():
    v = [[0, 0], [1, 0], [1, 1], [0, 1]]
    t = [[0, 1, 2], [0, 2, 3]]
    b = [[0, 1], [1, 2], [2, 3], [3, 0]]
    return v, t, b


class TestMeshValidation:
    def test_square_of_two_triangles(self):
        v, t, b = _two_triangles()
        m = Mesh(v, t, b, ("outer",) * 4, ("flat",) * 2)
        assert m.n_vertices == 4
        assert not m.vertices.flags.writeable

    def test_degenerate_triangle(self):
        with pytest.raises(DegenerateTriangle):
            Mesh([[0, 0], [1, 0], [2, 0]], [[0, 1, 2]], [[0, 1], [1, 2], [2, 0]], ("o",) * 3, ("c",))

    def test_repeated_vertex(self):
        with pytest.raises(DegenerateTriangle):
            Mesh([[0, 0], [1, 0], [0, 1]], [[0, 0, 2]], [[0, 2]], ("o",), ("c",))

    def test_nonmanifold_edge(self):
        v = [[0, 0], [1, 0], [0, 1], [0, -1], [1, 1]]
        t = [[0, 1, 2], [1, 0, 3], [0, 1, 4]]
        with pytest.raises(NonManifold):
            Mesh(v, t, [], (), ("c",) * 3)

    def test_boundary_must_match_free_edges(self):
        v, t, b = _two_triangles()
        with pytest.raises(ValueError, match="boundary edges"):
            Mesh(v, t, b[:3], ("outer",) * 3, ("flat",) * 2)

    def test_chart_nan_on_used_vertex(self):
        v, t, b = _two_triangles()
        cc = np.array(v, float)
        cc[3] = np.nan
        with pytest.raises(ValueError, match="chart does not define"):
            Mesh(v, t, b, ("outer",) * 4, ("flat", "other"), {"other": cc})


class TestBuilders:
    @pytest.mark.parametrize("k", [0, 2, 4])
    def test_disk_boundary_is_regular_polygon(self, k):
        mesh, metric = build_disk_mesh(k)
        n = 6 * 2**k
        assert len(mesh.boundary_edges) == n
        assert boundary_length(mesh, metric) == pytest.approx(2 * n * math.sin(math.pi / n), rel=1e-13)

    def test_disk_topology(self):
        mesh, _ = build_disk_mesh(3)
        topo = topology_invariants(mesh)
        assert (topo.euler_characteristic, topo.boundary_components, topo.genus, topo.orientable) == (1, 1, 0, True)

    def test_annulus_topology_and_tags(self):
        mesh, metric = build_annulus_mesh(0.5, 32, 4)
        topo = topology_invariants(mesh)
        assert (topo.euler_characteristic, topo.boundary_components, topo.genus) == (0, 2, 0)
        assert set(mesh.boundary_tags) == {"outer", "inner"}
        inner = boundary_length(mesh, metric, tags=("inner",))
        assert inner == pytest.approx(0.5 * 64 * math.sin(math.pi / 32), rel=1e-13)

    def test_square(self):
        mesh, metric = build_square_mesh(8, 2.0)
        assert boundary_length(mesh, metric) == pytest.approx(8.0, rel=1e-14)
        assert topology_invariants(mesh).euler_characteristic == 1
        assert mesh.min_angle() == pytest.approx(45.0)

    def test_boundary_cycles_cover_boundary(self):
        mesh, _ = build_annulus_mesh(0.5, 32, 4)
        cycles = boundary_cycles(mesh)
        assert sorted(len(c) for c in cycles) == [32, 32]


class TestConformalMetric:
    def test_shift_scales_length(self, disk4):
        mesh, metric, _ = disk4
        assert boundary_length(mesh, metric.shifted(0.3)) == pytest.approx(math.exp(0.3) * boundary_length(mesh, metric), rel=1e-14)

    def test_chart_length_mismatch(self):
        with pytest.raises(ValueError):
            ConformalMetric(np.zeros(3), {"a": np.zeros(4)})


class TestCusp:
    def test_parabola_arclength_matches_quadrature(self):
        y0, y1 = 0.01, 0.3
        ref = integrate.quad(lambda y: math.sqrt(1 + y * y), y0, y1, epsabs=1e-15)[0]
        assert parabola_arclength(y0, y1) == pytest.approx(ref, rel=1e-13)

    def test_default_r(self):
        p = GlueParams(0.1, 0.45)
        assert p.r == pytest.approx(math.exp(-(0.1**-0.45)), rel=1e-15)
        assert p.log_inv_r == pytest.approx(0.1**-0.45, rel=1e-14)
        assert p.replace(eps=0.05).r == pytest.approx(math.exp(-(0.05**-0.45)), rel=1e-15)

    @pytest.mark.parametrize("kw", [dict(eps=0.0), dict(eps=0.6), dict(eps=0.1, alpha=1.0), dict(eps=0.1, t=-1.0), dict(eps=0.1, r=1.5)])
    def test_invalid_params(self, kw):
        with pytest.raises(DegenerateGeometry):
            GlueParams(**kw)

    def test_cusp_mesh_shape(self):
        p = GlueParams(0.2, 0.45)
        mesh, metric = build_cusp_mesh(p, n_s=4, layers=10)
        assert mesh.n_vertices == 5 * 11
        assert set(mesh.boundary_tags) == {"top", "bottom", "side+", "side-"}
        assert np.allclose(metric.log_factor, 0.0)
        top = boundary_length(mesh, metric, tags=("top",))
        assert top == pytest.approx(0.2**2, rel=1e-13)
        side = boundary_length(mesh, metric, tags=("side+",))
        assert side == pytest.approx(parabola_arclength(0.2 * p.r, 0.2), rel=1e-12)
        heights = cusp_layer_heights(p, 10)
        assert heights[0] == pytest.approx(0.2) and heights[-1] == pytest.approx(0.2 * p.r)

    def test_dilation_enters_metric(self):
        mesh, metric = build_cusp_mesh(GlueParams(0.2, t=4.0), n_s=2, layers=4)
        assert np.allclose(metric.log_factor, -math.log(4.0))

    def test_underflow(self):
        with pytest.raises(DegenerateGeometry, match="underflow"):
            build_cusp_mesh(GlueParams(0.1, r=1e-160), n_s=2, layers=4)

    def test_lattice_quality(self):
        assert lattice_min_angle(8, 200) == pytest.approx(45.0)


class TestGlue:
    def test_glue_base_has_unit_length(self, base01):
        params, base = base01
        assert boundary_length(base.mesh, base.metric) == pytest.approx(1.0, abs=1e-12)
        assert base.p0_arc != base.p1_arc

    @pytest.mark.parametrize(
        "flags, expected",
        [((False, False), (0, 2, True, 0)), ((True, False), (0, 1, False, 1)), ((True, True), (0, 2, True, 0))],
    )
    def test_handle_topology(self, flags, expected):
        g = build_glued_disk(GlueParams(0.1, orientation_flags=flags), layers=20)
        t = g.topology
        assert (t.euler_characteristic, t.boundary_components, t.orientable, t.genus) == expected

    def test_glued_mesh_counts(self, glued01):
        assert glued01.mesh.n_vertices == 3088
        assert len(glued01.mesh.boundary_edges) == 544
        assert set(glued01.mesh.boundary_tags) >= {"side+", "side-"}

    def test_unresolved_interval(self, disk4):
        mesh, metric, _ = disk4
        with pytest.raises(ResolutionMismatch):
            glue(mesh, metric.shifted(-math.log(2 * math.pi)), GlueParams(0.1))

    def test_snapped_length_mismatch(self, disk4):
        mesh, metric, _ = disk4
        with pytest.raises(ResolutionMismatch):
            glue(mesh, metric, GlueParams(0.3, alpha=0.2, r=0.9))

    def test_single_flip_gives_moebius_band(self, base01):
        params, base = base01
        placed = params.replace(p0=base.p0_arc, p1=base.p1_arc, r=params.r, orientation_flags=(False, True))
        g = glue(base.mesh, base.metric, placed, layers=10)
        assert not g.topology.orientable
        assert g.topology.boundary_components == 1

    def test_orientation_guard(self, base01, monkeypatch):
        import steklab.geometry.glue as glue_mod

        real = glue_mod.topology_invariants

        def lying(mesh):
            t = real(mesh)
            if "cusp" in mesh.chart_tags:
                return type(t)(t.euler_characteristic, t.boundary_components, not t.orientable, t.genus, t.components)
            return t

        monkeypatch.setattr(glue_mod, "topology_invariants", lying)
        params, base = base01
        placed = params.replace(p0=base.p0_arc, p1=base.p1_arc, r=params.r)
        with pytest.raises(OrientationError):
            glue(base.mesh, base.metric, placed, layers=10)

    def test_with_t_rescales_cusp_only(self, glued01):
        g2 = glued01.with_t(16.0)
        base = glued01.base_vertices
        assert np.allclose(g2.metric.log_factor[:base], glued01.metric.log_factor[:base])
        thin = glued01.mesh.edges_with_tags(("side+",))
        from steklab.geometry import boundary_edge_weights

        w1 = boundary_edge_weights(glued01.mesh, glued01.metric)[thin]
        w2 = boundary_edge_weights(g2.mesh, g2.metric)[thin]
        assert np.allclose(w2, 0.5 * w1, rtol=1e-12)


class TestMeshIO:
    def test_round_trip_glued(self, glued01):
        buf = io.StringIO()
        write_mesh(buf, glued01.mesh, glued01.metric, comments=["test"])
        mesh, metric = read_mesh(io.StringIO(buf.getvalue()))
        assert np.array_equal(mesh.triangles, glued01.mesh.triangles)
        assert mesh.chart_tags == glued01.mesh.chart_tags
        for name, arr in glued01.mesh.chart_coords.items():
            assert np.array_equal(mesh.chart_coords[name], arr, equal_nan=True)
        assert np.array_equal(metric.log_factor, glued01.metric.log_factor)
        buf2 = io.StringIO()
        write_mesh(buf2, mesh, metric, comments=["test"])
        assert buf2.getvalue() == buf.getvalue()

    def test_flat_default_and_errors(self):
        mesh, _ = build_square_mesh(2)
        buf = io.StringIO()
        write_mesh(buf, mesh)
        _, metric = read_mesh(io.StringIO(buf.getvalue()))
        assert np.all(metric.log_factor == 0)
        with pytest.raises(ValueError, match="unknown section"):
            read_mesh(io.StringIO("bogus 1\n"))
        with pytest.raises(ValueError, match="ends inside"):
            read_mesh(io.StringIO("vertices 3\n0 0\n"))
