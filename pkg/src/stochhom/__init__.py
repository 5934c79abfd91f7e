"""Homogenized coefficients of random media from corrector problems on periodic boxes.

The modified corrector replaces the right-hand side of the cell problem by
minus a parabolic solution at time ``T``; the naive and zeroth-order
regularized correctors are included as baselines, together with a Monte
Carlo harness that measures and rate-fits the systematic error in ``T``.
"""
from .corrector import (
    CorrectorSolution,
    solve,
    solve_modified,
    solve_modified_quadrature,
    solve_naive,
    solve_zeroth_order,
)
from .field import (
    CovarianceSpec,
    EdgeCoefficientField,
    FieldLaw,
    child_seed,
    covariance_eval,
    sample_edge_coefficients,
    sample_gaussian,
    transform,
)
from .grid import AveragingWindow, PeriodicGrid, apply_A, assemble_f0, divergence, face_energy_average, gradient
from .krylov import OperatorSolver, SolveReport, SolverConfig, SolverError, cg_meanzero, cg_shifted
from .parabolic import TimeConfig, TimeSchedule, decay_diagnostics, evolve, geometric_schedule, uniform_schedule
from .upscale import (
    estimate_one,
    estimate_tensor,
    fit_rate,
    monte_carlo,
    paired_systematic_error,
    sweep_T_vs_R,
)

__version__ = "0.1.0"
