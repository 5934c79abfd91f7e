"""Corrector problems on a periodic box.

Four formulations, all written in terms of ``f0 = div(a xi)``:

* ``naive``: ``A chi = f0``
* ``zeroth_order``: ``(I/T + A) chi = f0``
* ``modified``: ``A chi = f0 - u(T)`` with ``u`` the parabolic solution
* ``modified_quadrature``: ``chi = int_0^T u dt`` from the time integrator

The last two agree up to solver tolerance because the quadrature weights
telescope: ``A * sum w_n u_n = u_0 - u_N``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .field import EdgeCoefficientField
from .grid import AveragingWindow, apply_A, assemble_f0, face_energy_average, gradient, unit_direction
from .krylov import OperatorSolver, SolveReport, SolverConfig
from .parabolic import ParabolicTrace, TimeSchedule, default_schedule, evolve

METHODS = ("naive", "zeroth_order", "modified", "modified_quadrature")


@dataclass
class CorrectorSolution:
    method: str
    T: float
    xi: np.ndarray
    chi: np.ndarray
    grad_chi: np.ndarray
    report: SolveReport
    residual: float
    rhs_norm: float

    def energy_average(self, field: EdgeCoefficientField, window: AveragingWindow | None = None) -> float:
        return face_energy_average(field.grid, field.values, self.grad_chi, self.xi, window)

    @property
    def relative_residual(self) -> float:
        return self.residual / self.rhs_norm if self.rhs_norm > 0 else self.residual


def _solver(field, solver):
    if isinstance(solver, OperatorSolver):
        return solver
    return OperatorSolver(field.grid, field.values, solver)


def _solution(field, method, T, xi, chi, report, rhs, shift=0.0):
    grid = field.grid
    res = apply_A(grid, field.values, chi) - rhs
    if shift:
        res += shift * chi
    return CorrectorSolution(
        method=method,
        T=T,
        xi=xi,
        chi=chi,
        grad_chi=gradient(grid, chi),
        report=report,
        residual=float(np.linalg.norm(res)),
        rhs_norm=float(np.linalg.norm(rhs)),
    )


def solve_naive(field: EdgeCoefficientField, xi, solver=None) -> CorrectorSolution:
    """Periodic cell problem ``-D(a (G chi + xi)) = 0`` with mean-zero ``chi``."""
    xi = unit_direction(xi, field.grid.d)
    f0 = assemble_f0(field.grid, field.values, xi)
    chi, rep = _solver(field, solver).solve_meanzero(f0)
    return _solution(field, "naive", math.inf, xi, chi, rep, f0)


def solve_zeroth_order(field: EdgeCoefficientField, xi, T: float, solver=None) -> CorrectorSolution:
    """Regularized cell problem ``chi/T - D(a (G chi + xi)) = 0``."""
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")
    xi = unit_direction(xi, field.grid.d)
    f0 = assemble_f0(field.grid, field.values, xi)
    chi, rep = _solver(field, solver).solve_shifted(1.0 / T, f0)
    return _solution(field, "zeroth_order", float(T), xi, chi, rep, f0, shift=1.0 / T)


def _schedule_for(T, schedule, scheme="implicit_euler"):
    if schedule is None:
        return default_schedule(T, scheme)
    if not math.isclose(schedule.T, T, rel_tol=1e-12):
        raise ValueError(f"schedule ends at {schedule.T}, expected T={T}")
    return schedule


def modified_from_state(
    field: EdgeCoefficientField, xi, T: float, u_T: np.ndarray, solver=None
) -> CorrectorSolution:
    """Solve ``A chi_T = f0 - u_T`` given a parabolic state at time ``T``."""
    xi = unit_direction(xi, field.grid.d)
    f0 = assemble_f0(field.grid, field.values, xi)
    rhs = f0 - u_T
    chi, rep = _solver(field, solver).solve_meanzero(rhs)
    return _solution(field, "modified", float(T), xi, chi, rep, rhs)


def solve_modified(
    field: EdgeCoefficientField,
    xi,
    T: float,
    schedule: TimeSchedule | None = None,
    solver=None,
    trace: ParabolicTrace | None = None,
) -> CorrectorSolution:
    """Modified corrector: right-hand side ``-u(T)`` with ``u(0) = div(a xi)``.

    Pass an existing ``trace`` to reuse its final state (or its snapshot at
    ``T``) instead of integrating again.
    """
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")
    solver = _solver(field, solver)
    if trace is None:
        trace = evolve(field.grid, field.values, xi, _schedule_for(T, schedule), solver)
        u_T = trace.final_state
    elif math.isclose(trace.schedule.T, T, rel_tol=1e-12):
        u_T = trace.final_state
    else:
        u_T = trace.snapshot(T)
    return modified_from_state(field, xi, T, u_T, solver)


def solve_modified_quadrature(
    field: EdgeCoefficientField,
    xi,
    T: float,
    schedule: TimeSchedule | None = None,
    solver=None,
    trace: ParabolicTrace | None = None,
) -> CorrectorSolution:
    """Modified corrector as the time quadrature of the parabolic solution."""
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")
    xi = unit_direction(xi, field.grid.d)
    if trace is None:
        trace = evolve(field.grid, field.values, xi, _schedule_for(T, schedule), solver)
    elif not math.isclose(trace.schedule.T, T, rel_tol=1e-12):
        raise ValueError("quadrature needs a trace that ends at T")
    chi = trace.quadrature - trace.quadrature.mean()
    rhs = trace.initial_state - trace.final_state
    rep = SolveReport(trace.iterations, trace.max_residual, True, float(np.linalg.norm(rhs)))
    return _solution(field, "modified_quadrature", float(T), xi, chi, rep, rhs)


def solve(field: EdgeCoefficientField, method: str, xi, T: float | None = None, schedule=None, solver=None):
    """Dispatch on ``method``; ``T`` is ignored by ``naive``."""
    if method == "naive":
        return solve_naive(field, xi, solver)
    if T is None:
        raise ValueError(f"method {method!r} needs a finite T")
    if method == "zeroth_order":
        return solve_zeroth_order(field, xi, T, solver)
    if method == "modified":
        return solve_modified(field, xi, T, schedule, solver)
    if method == "modified_quadrature":
        return solve_modified_quadrature(field, xi, T, schedule, solver)
    raise ValueError(f"unknown corrector method {method!r}; expected one of {METHODS}")
