"""Shared fixtures and the acceptance summary printed at the end of a run."""

import math

import pytest

from steklab.geometry import build_annulus_mesh, build_disk_mesh
from steklab.geometry.cusp import GlueParams
from steklab.geometry.glue import build_glue_base, build_glued_disk
from steklab.steklov import SteklovProblem

ACCEPTANCE = {}


def record(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"acceptance {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def disk4():
    mesh, metric = build_disk_mesh(4)
    return mesh, metric, SteklovProblem(mesh)


@pytest.fixture(scope="session")
def annulus():
    mesh, metric = build_annulus_mesh()
    return mesh, metric, SteklovProblem(mesh)


@pytest.fixture(scope="session")
def glued01():
    """Glued disk at eps = 0.1, alpha = 0.45, t = 8."""
    return build_glued_disk(GlueParams(0.1, 0.45, t=8.0))


@pytest.fixture(scope="session")
def base01():
    params = GlueParams(0.1, 0.45)
    return params, build_glue_base(params)


TWO_PI = 2 * math.pi
