"""Property-based checks of invariances that hold for every input."""

import io
import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from steklab import shapeopt as so
from steklab.asymptotics import integral_I, integral_I_quadrature
from steklab.config import parse_config
from steklab.geometry import build_disk_mesh
from steklab.geometry.cusp import GlueParams
from steklab.geometry.mesh import ConformalMetric, Mesh, boundary_length
from steklab.geometry.meshio import read_mesh, write_mesh
from steklab.reduced1d import solve_reduced
from steklab.steklov import SteklovProblem, clusters_of

SETTINGS = settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])

MESH, FLAT = build_disk_mesh(2)
PROBLEM = SteklovProblem(MESH)


def random_metric(seed, amp=0.3):
    rng = np.random.default_rng(seed)
    return ConformalMetric(amp * rng.standard_normal(MESH.n_vertices))


seeds = st.integers(0, 2**32 - 1)


@SETTINGS
@given(seed=seeds, c=st.floats(-3, 3))
def test_normalized_spectrum_is_scale_invariant(seed, c):
    m = random_metric(seed)
    a = PROBLEM.solve(m, 4)
    b = PROBLEM.solve(m.shifted(c), 4)
    assert np.allclose(b.normalized[1:], a.normalized[1:], rtol=1e-10, atol=0)
    assert b.eigenvalues[1] == pytest.approx(a.eigenvalues[1] * math.exp(-c), rel=1e-10)


@SETTINGS
@given(seed=seeds, angle=st.floats(0, 2 * math.pi), flip=st.booleans())
def test_spectrum_is_orthogonally_invariant(seed, angle, flip):
    q = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
    tris = MESH.triangles
    if flip:
        q = q @ np.diag([1.0, -1.0])
        tris = tris[:, ::-1]
    moved = Mesh(MESH.vertices @ q.T, tris, MESH.boundary_edges, MESH.boundary_tags, MESH.chart_tags)
    m = random_metric(seed)
    a = PROBLEM.solve(m, 5).eigenvalues
    b = SteklovProblem(moved).solve(m, 5).eigenvalues
    assert np.allclose(a, b, rtol=1e-10, atol=1e-12)


@SETTINGS
@given(seed=seeds)
def test_spectrum_is_labelling_invariant(seed):
    rng = np.random.default_rng(seed)
    perm = rng.permutation(MESH.n_vertices)
    inv = np.argsort(perm)
    moved = Mesh(MESH.vertices[perm], inv[MESH.triangles], inv[MESH.boundary_edges], MESH.boundary_tags, MESH.chart_tags)
    m = random_metric(seed)
    a = PROBLEM.solve(m, 5).eigenvalues
    b = SteklovProblem(moved).solve(m.with_log_factor(m.log_factor[perm]), 5).eigenvalues
    assert np.allclose(a, b, rtol=1e-10, atol=1e-12)


@SETTINGS
@given(seed=seeds, amplitude=st.floats(0.0, 1.0))
def test_normalize_is_idempotent(seed, amplitude):
    basis = so.DensityBasis(PROBLEM, FLAT, modes=6)
    d = basis.normalize(basis.random(np.random.default_rng(seed), amplitude))
    assert boundary_length(MESH, basis.metric(d)) == pytest.approx(1.0, abs=1e-13)
    again = basis.normalize(d)
    assert np.array_equal(again.coefficients, d.coefficients)


@SETTINGS
@given(seed=seeds)
def test_mesh_file_round_trip_is_exact(seed):
    m = random_metric(seed, amp=1.7)
    buf = io.StringIO()
    write_mesh(buf, MESH, m)
    mesh, metric = read_mesh(io.StringIO(buf.getvalue()))
    assert np.array_equal(mesh.vertices, MESH.vertices)
    assert np.array_equal(mesh.triangles, MESH.triangles)
    assert np.array_equal(mesh.boundary_edges, MESH.boundary_edges)
    assert mesh.boundary_tags == MESH.boundary_tags and mesh.chart_tags == MESH.chart_tags
    assert np.array_equal(metric.log_factor, m.log_factor)


@SETTINGS
@given(vals=st.lists(st.floats(0, 100), min_size=1, max_size=30), rtol=st.floats(1e-9, 0.5))
def test_clusters_partition_sorted_values(vals, rtol):
    vals = sorted(vals)
    groups = clusters_of(vals, rtol=rtol)
    assert [i for g in groups for i in g] == list(range(len(vals)))


@settings(max_examples=40, deadline=None)
@given(r=st.floats(1e-8, 0.95))
def test_integral_closed_form_matches_quadrature(r):
    assert abs(integral_I(r) - integral_I_quadrature(r)) <= 1e-12


@settings(max_examples=15, deadline=None)
@given(eps=st.floats(0.02, 0.3), alpha=st.floats(0.3, 0.49), mass=st.floats(0.1, 2.0))
def test_reduced_profiles_carry_requested_mass(eps, alpha, mass):
    states = solve_reduced(GlueParams(eps, alpha), count=2, n=80, mass=mass)
    for s in states:
        assert s.mass == pytest.approx(mass, rel=1e-12)
    assert states[0].sigma < states[1].sigma


@settings(max_examples=30, deadline=None)
@given(eps=st.floats(1e-3, 0.5, exclude_max=True), alpha=st.floats(0.01, 0.49), refinement=st.integers(1, 7), seed=st.integers(0, 2**64 - 1))
def test_config_serialization_round_trip(eps, alpha, refinement, seed):
    text = f"[run]\nseed = {seed}\n[geometry]\nrefinement = {refinement}\n[glue]\neps = {eps!r}\nalpha = {alpha!r}\n"
    cfg = parse_config(text)
    again = parse_config(cfg.serialize())
    assert again == cfg and again.digest() == cfg.digest()
