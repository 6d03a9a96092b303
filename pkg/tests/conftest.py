import numpy as np
import pytest

from logbn.constants import first_eigenpair
from logbn.domain import DomainSpec, build_grid


@pytest.fixture(scope="session")
def cube3():
    return build_grid(DomainSpec("box", 3, 1.0, 16))


@pytest.fixture(scope="session")
def cube4():
    return build_grid(DomainSpec("box", 4, 1.0, 12))


@pytest.fixture(scope="session")
def eig3(cube3):
    return first_eigenpair(cube3, tol=1e-8)


@pytest.fixture(scope="session")
def eig4(cube4):
    return first_eigenpair(cube4, tol=1e-8)


def smooth_field(grid, rng, amplitude=(0.5, 2.0)):
    """Random positive bump that vanishes on the boundary."""
    x = grid.coordinates()
    lo, hi = x.min(axis=0), x.max(axis=0)
    c = lo + (hi - lo) * rng.uniform(0.3, 0.7, grid.N)
    w = rng.uniform(0.15, 0.4)
    torsion = grid.solve(np.ones(grid.n))
    bump = np.exp(-np.sum((x - c) ** 2, axis=1) / (2 * w * w))
    return rng.uniform(*amplitude) * bump * torsion / torsion.max()


# per-criterion outcomes registered by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
