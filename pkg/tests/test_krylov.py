import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochhom.grid import PeriodicGrid, apply_A
from stochhom.krylov import (
    IncompatibleRHSError,
    OperatorSolver,
    SolverConfig,
    SolverError,
    cg_meanzero,
    cg_shifted,
)

from conftest import dense_meanzero_solve, dense_shifted_solve, random_field

A2 = np.array([[1.0, 4.0]])
G2 = PeriodicGrid(1, 2, 2.0)


def test_zero_rhs():
    x, rep = cg_meanzero(G2, A2, np.zeros(2))
    assert np.all(x == 0) and rep.iterations == 0 and rep.converged


def test_two_cell_systems():
    x, rep = cg_meanzero(G2, A2, np.array([-3.0, 3.0]))
    np.testing.assert_allclose(x, [-0.3, 0.3], atol=1e-12)
    assert rep.converged
    x, _ = cg_shifted(G2, A2, 1.0, np.array([-3.0, 3.0]))
    np.testing.assert_allclose(x, [-3 / 11, 3 / 11], atol=1e-12)


def test_shifted_fixes_constants():
    g = PeriodicGrid(2, 4, 4.0)
    b = np.full(g.shape, 1.7)
    x, _ = cg_shifted(g, np.full(g.face_shape, 2.0), 1.0, b)
    np.testing.assert_allclose(x, b, atol=1e-12)


def test_incompatible_rhs_rejected():
    with pytest.raises(IncompatibleRHSError):
        cg_meanzero(G2, A2, np.array([1.0, 1.0]))
    with pytest.raises(IncompatibleRHSError):
        OperatorSolver(G2, A2, SolverConfig(backend="direct")).solve_meanzero(np.array([1.0, 0.5]))


def test_nonconvergence_raises():
    rng = np.random.default_rng(0)
    f = random_field(rng, 1, 64, 0.01, 100)
    b = rng.standard_normal(64)
    b -= b.mean()
    with pytest.raises(SolverError) as exc:
        cg_meanzero(f.grid, f.values, b, tol=1e-14, maxit=3)
    assert exc.value.report.iterations == 3 and not exc.value.report.converged


def test_invalid_config():
    with pytest.raises(ValueError):
        SolverConfig(backend="multigrid")
    with pytest.raises(ValueError):
        SolverConfig(tol=0)
    with pytest.raises(ValueError):
        cg_shifted(G2, A2, 0.0, np.ones(2))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([(1, 16), (2, 4), (1, 7), (2, 3)]),
       st.sampled_from(["cg", "direct", "auto"]), st.sampled_from(["none", "jacobi"]))
def test_backends_match_dense_oracle(seed, dn, backend, prec):
    d, N = dn
    rng = np.random.default_rng(seed)
    f = random_field(rng, d, N, 0.1, 10)
    b = rng.standard_normal(f.grid.shape)
    b -= b.mean()
    tau = rng.uniform(0.01, 5)
    solver = OperatorSolver(f.grid, f.values, SolverConfig(backend=backend, tol=1e-12, preconditioner=prec))
    x, rep = solver.solve_meanzero(b)
    assert rep.converged
    np.testing.assert_allclose(x, dense_meanzero_solve(f.grid, f.values, b), atol=1e-8)
    assert abs(x.mean()) < 1e-12
    c = rng.standard_normal(f.grid.shape)
    y, _ = solver.solve_shifted(tau, c)
    np.testing.assert_allclose(y, dense_shifted_solve(f.grid, f.values, tau, c), atol=1e-8)


def test_cg_error_energy_nonincreasing():
    rng = np.random.default_rng(5)
    f = random_field(rng, 2, 8)
    b = rng.standard_normal(f.grid.shape)
    b -= b.mean()
    exact = dense_meanzero_solve(f.grid, f.values, b)
    errs = []

    def track(x):
        e = x - exact
        errs.append(float(np.sum(e * apply_A(f.grid, f.values, e))))

    cg_meanzero(f.grid, f.values, b, tol=1e-12, callback=track)
    assert len(errs) > 3
    assert all(e2 <= e1 * (1 + 1e-9) + 1e-24 for e1, e2 in zip(errs, errs[1:]))


def test_initial_guess_independence():
    rng = np.random.default_rng(7)
    f = random_field(rng, 1, 128)
    b = rng.standard_normal(128)
    b -= b.mean()
    tol = 1e-10
    x0, _ = cg_meanzero(f.grid, f.values, b, tol=tol)
    guess = rng.standard_normal(128)
    x1, _ = cg_meanzero(f.grid, f.values, b, tol=tol, x0=guess - guess.mean())
    # measured in the residual norm the solver controls
    diff = apply_A(f.grid, f.values, x1 - x0)
    assert np.linalg.norm(diff) <= 10 * tol * np.linalg.norm(b)


def test_direct_1d_large_matches_cg():
    rng = np.random.default_rng(11)
    f = random_field(rng, 1, 2048, 0.2, 5)
    b = rng.standard_normal(2048)
    b -= b.mean()
    xd, _ = OperatorSolver(f.grid, f.values, SolverConfig(backend="direct")).solve_meanzero(b)
    xc, _ = OperatorSolver(f.grid, f.values, SolverConfig(backend="cg", tol=1e-12)).solve_meanzero(b)
    assert np.max(np.abs(xd - xc)) <= 1e-8 * np.max(np.abs(xd))
