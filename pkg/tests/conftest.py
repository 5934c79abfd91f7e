import numpy as np
import pytest

from stochhom.field import EdgeCoefficientField
from stochhom.grid import PeriodicGrid, operator_matrix


@pytest.fixture
def two_cell():
    grid = PeriodicGrid(1, 2, 2.0)
    return EdgeCoefficientField(grid, np.array([[1.0, 4.0]]))


def random_field(rng, d, N, lo=0.5, hi=5.0):
    grid = PeriodicGrid(d, N, float(N))
    return EdgeCoefficientField(grid, rng.uniform(lo, hi, grid.face_shape))


def dense_meanzero_solve(grid, a, b):
    """Reference solve of A x = b on the mean-zero subspace via the pseudo-inverse."""
    A = operator_matrix(grid, a).toarray()
    return (np.linalg.pinv(A) @ b.ravel()).reshape(grid.shape)


def dense_shifted_solve(grid, a, tau, b):
    A = operator_matrix(grid, a, shift=tau).toarray()
    return np.linalg.solve(A, b.ravel()).reshape(grid.shape)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
