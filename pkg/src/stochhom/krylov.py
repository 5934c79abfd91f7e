"""Linear solvers for the discrete elliptic operator.

``cg_meanzero`` and ``cg_shifted`` are matrix-free conjugate gradient
solvers for ``A x = b`` on the mean-zero subspace and for ``(tau I + A) x = b``.
:class:`OperatorSolver` binds one coefficient field to a :class:`SolverConfig`
and dispatches to CG or to direct factorizations.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as sl
import scipy.sparse.linalg as spla

from .grid import PeriodicGrid, apply_A, diagonal_A, operator_matrix


class SolverError(RuntimeError):
    """Raised when an iterative solve does not reach its tolerance."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class IncompatibleRHSError(ValueError):
    """Right-hand side of the singular system is not mean-zero."""


@dataclass
class SolveReport:
    iterations: int
    residual_norm: float
    converged: bool
    rhs_norm: float = 0.0


@dataclass(frozen=True)
class SolverConfig:
    backend: str = "auto"
    tol: float = 1e-10
    maxit: int | None = None
    preconditioner: str = "none"

    def __post_init__(self):
        if self.backend not in ("auto", "cg", "direct"):
            raise ValueError(f"unknown solver backend {self.backend!r}")
        if self.preconditioner not in ("none", "jacobi"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")
        if not self.tol > 0:
            raise ValueError("solver tol must be positive")
        if self.maxit is not None and self.maxit < 1:
            raise ValueError("solver maxit must be >= 1")

    def max_iterations(self, grid: PeriodicGrid) -> int:
        return self.maxit if self.maxit is not None else 50 * grid.N


def _dot(u, v) -> float:
    return float(np.dot(u.ravel(), v.ravel()))


def _cg(apply, b, x0, tol, maxit, precond, project, callback):
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros_like(b), SolveReport(0, 0.0, True, 0.0)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    if project:
        x -= x.mean()
    r = b - apply(x)
    z = precond(r)
    if project:
        z -= z.mean()
    p = z.copy()
    rz = _dot(r, z)
    target = tol * bnorm
    rnorm = float(np.linalg.norm(r))
    it = 0
    while rnorm > target and it < maxit:
        Ap = apply(p)
        pAp = _dot(p, Ap)
        if pAp <= 0.0:
            break
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        if project:
            x -= x.mean()
        it += 1
        if callback is not None:
            callback(x)
        rnorm = float(np.linalg.norm(r))
        if rnorm <= target:
            # recursive residual can drift from the true one; confirm before stopping
            r = b - apply(x)
            rnorm = float(np.linalg.norm(r))
            if rnorm <= target:
                break
            z = precond(r)
            if project:
                z -= z.mean()
            p = z.copy()
            rz = _dot(r, z)
            continue
        z = precond(r)
        if project:
            z -= z.mean()
        rz_new = _dot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    rnorm = float(np.linalg.norm(b - apply(x)))
    return x, SolveReport(it, rnorm, rnorm <= target, bnorm)


def _preconditioner(grid, a, shift, kind):
    if kind == "jacobi":
        inv = 1.0 / (diagonal_A(grid, a) + shift)
        return lambda r: inv * r
    return lambda r: r.copy()


def check_meanzero(b: np.ndarray, rtol: float = 1e-10) -> None:
    """Raise :class:`IncompatibleRHSError` unless ``|mean(b)| <= rtol * rms(b)``."""
    rms = float(np.sqrt(np.mean(b * b)))
    m = float(b.mean())
    if abs(m) > rtol * rms and abs(m) > 1e-300:
        raise IncompatibleRHSError(
            f"right-hand side has mean {m:.3e} (rms {rms:.3e}); "
            "the singular corrector system needs a mean-zero RHS"
        )


def cg_meanzero(
    grid: PeriodicGrid,
    a: np.ndarray,
    b: np.ndarray,
    tol: float = 1e-10,
    maxit: int | None = None,
    x0: np.ndarray | None = None,
    preconditioner: str = "none",
    callback: Callable[[np.ndarray], None] | None = None,
) -> tuple[np.ndarray, SolveReport]:
    """Solve ``A x = b`` for mean-zero ``x`` by conjugate gradients.

    ``b`` is projected onto the mean-zero subspace once (after the
    compatibility check) and the iterate is re-projected every iteration.
    """
    grid.check_cells(b)
    check_meanzero(b)
    b = b - b.mean()
    maxit = 50 * grid.N if maxit is None else maxit
    x, rep = _cg(
        lambda v: apply_A(grid, a, v),
        b,
        x0,
        tol,
        maxit,
        _preconditioner(grid, a, 0.0, preconditioner),
        True,
        callback,
    )
    if not rep.converged:
        raise SolverError(
            f"CG did not converge in {rep.iterations} iterations "
            f"(residual {rep.residual_norm:.3e}, target {tol * rep.rhs_norm:.3e})",
            rep,
        )
    return x, rep


def cg_shifted(
    grid: PeriodicGrid,
    a: np.ndarray,
    tau: float,
    b: np.ndarray,
    tol: float = 1e-10,
    maxit: int | None = None,
    x0: np.ndarray | None = None,
    preconditioner: str = "none",
    callback: Callable[[np.ndarray], None] | None = None,
) -> tuple[np.ndarray, SolveReport]:
    """Solve the nonsingular system ``(tau I + A) x = b`` by conjugate gradients."""
    if not tau > 0:
        raise ValueError(f"shift tau must be positive, got {tau}")
    grid.check_cells(b)
    maxit = 50 * grid.N if maxit is None else maxit
    x, rep = _cg(
        lambda v: tau * v + apply_A(grid, a, v),
        b,
        x0,
        tol,
        maxit,
        _preconditioner(grid, a, tau, preconditioner),
        False,
        callback,
    )
    if not rep.converged:
        raise SolverError(
            f"shifted CG did not converge in {rep.iterations} iterations "
            f"(residual {rep.residual_norm:.3e})",
            rep,
        )
    return x, rep


class OperatorSolver:
    """Solves systems with ``A`` (mean-zero) or ``tau I + A`` for one coefficient field.

    Backends:

    ``cg``
        matrix-free CG for both systems.
    ``direct``
        factorizations; banded Cholesky (with a Sherman-Morrison correction for
        the periodic corner) in 1D, sparse LU in 2D.  The pinned singular
        operator is factorized once; shifted factors are cached per ``tau``.
    ``auto``
        ``direct`` in 1D; in 2D a direct solve for the singular system and
        Jacobi-preconditioned CG for the well-conditioned shifted systems.
    """

    def __init__(self, grid: PeriodicGrid, a: np.ndarray, config: SolverConfig | None = None):
        grid.check_faces(a)
        self.grid = grid
        self.a = a
        self.config = config or SolverConfig()
        self._pinned = None
        self._shifted: dict[float, object] = {}

    def _uses_direct(self, shifted: bool) -> bool:
        backend = self.config.backend
        if backend == "auto":
            return self.grid.d == 1 or not shifted
        return backend == "direct"

    def solve_meanzero(self, b, x0=None) -> tuple[np.ndarray, SolveReport]:
        cfg = self.config
        if not self._uses_direct(False):
            return cg_meanzero(
                self.grid, self.a, b, cfg.tol, cfg.max_iterations(self.grid), x0, cfg.preconditioner
            )
        self.grid.check_cells(b)
        check_meanzero(b)
        b = b - b.mean()
        if self._pinned is None:
            self._pinned = self._factor_pinned()
        x = np.zeros(self.grid.size)
        x[1:] = self._pinned(b.ravel()[1:])
        x = x.reshape(self.grid.shape)
        x -= x.mean()
        return x, self._report(x, b, 0.0)

    def solve_shifted(self, tau, b, x0=None) -> tuple[np.ndarray, SolveReport]:
        cfg = self.config
        if not self._uses_direct(True):
            pre = "jacobi" if cfg.backend == "auto" else cfg.preconditioner
            return cg_shifted(
                self.grid, self.a, tau, b, cfg.tol, cfg.max_iterations(self.grid), x0, pre
            )
        if not tau > 0:
            raise ValueError(f"shift tau must be positive, got {tau}")
        self.grid.check_cells(b)
        solve = self._shifted.get(tau)
        if solve is None:
            solve = self._factor_shifted(tau)
            if len(self._shifted) >= 8:
                self._shifted.pop(next(iter(self._shifted)))
            self._shifted[tau] = solve
        x = solve(b.ravel()).reshape(self.grid.shape)
        return x, self._report(x, b, tau)

    def _factor_pinned(self):
        # drop cell 0: the remaining block is SPD for a connected periodic grid
        if self.grid.d == 1:
            w = self.a[0] / self.grid.h**2
            ab = np.zeros((2, self.grid.N - 1))
            ab[1] = w[:-1] + w[1:]
            ab[0, 1:] = -w[1:-1]
            c = sl.cholesky_banded(ab)
            return lambda rhs: sl.cho_solve_banded((c, False), rhs)
        M = operator_matrix(self.grid, self.a)[1:, 1:].tocsc()
        return spla.splu(M, permc_spec="MMD_AT_PLUS_A").solve

    def _factor_shifted(self, tau):
        if self.grid.d == 1:
            return _cyclic_tridiagonal_solver(self.a[0] / self.grid.h**2, tau)
        M = operator_matrix(self.grid, self.a, shift=tau).tocsc()
        return spla.splu(M, permc_spec="MMD_AT_PLUS_A").solve

    def _residual(self, x, b, tau):
        r = apply_A(self.grid, self.a, x) - b
        if tau:
            r += tau * x
        return float(np.linalg.norm(r))

    def _report(self, x, b, tau):
        bnorm = float(np.linalg.norm(b))
        res = self._residual(x, b, tau)
        ok = res <= self.config.tol * bnorm or bnorm == 0.0
        rep = SolveReport(1, res, ok, bnorm)
        if not ok:
            raise SolverError(f"direct solve residual {res:.3e} exceeds tol*|b| = {self.config.tol * bnorm:.3e}", rep)
        return rep


def _cyclic_tridiagonal_solver(w, tau):
    """Factor ``tau I + A`` for 1D periodic face weights ``w`` (already over h^2).

    The periodic corner is split off as a rank-one term ``g v v^T`` so the
    remaining tridiagonal block is SPD and can use banded Cholesky.
    """
    n = w.size
    diag = tau + w + np.roll(w, 1)
    corner = -w[-1]
    g = -diag[0]
    ab = np.zeros((2, n))
    ab[1] = diag
    ab[1, 0] -= g
    ab[1, -1] -= corner * corner / g
    ab[0, 1:] = -w[:-1]
    c = sl.cholesky_banded(ab)
    v = np.zeros(n)
    v[0] = 1.0
    v[-1] = corner / g
    q = sl.cho_solve_banded((c, False), v)
    denom = 1.0 + g * (v @ q)

    def solve(rhs):
        y = sl.cho_solve_banded((c, False), rhs)
        return y - q * (g * (v @ y) / denom)

    return solve
