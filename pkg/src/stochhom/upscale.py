"""Monte Carlo estimation of homogenized coefficients and their systematic error.

Realization ``i`` of an ensemble is always drawn with
``child_seed(master_seed, i)``, so different studies sharing a master seed
see the same coefficient fields (common random numbers).  Reductions use
``math.fsum`` and are therefore independent of execution order.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import corrector
from .field import EdgeCoefficientField, FieldLaw, child_seed, sample_edge_coefficients
from .grid import AveragingWindow, PeriodicGrid, basis_direction, unit_direction
from .krylov import OperatorSolver, SolverConfig
from .parabolic import TimeConfig, evolve


def _fmean(x) -> float:
    return math.fsum(x) / len(x)


def _fvar(x) -> float:
    if len(x) < 2:
        return 0.0
    m = _fmean(x)
    return math.fsum((v - m) ** 2 for v in x) / (len(x) - 1)


def voigt_reuss_bounds(field: EdgeCoefficientField, xi) -> tuple[float, float]:
    """Harmonic (lower) and arithmetic (upper) bounds for ``xi . a_eff xi``.

    Valid for every corrector method here on the full box: each of them
    lowers the energy of ``chi = 0`` and none goes below the naive minimum.
    """
    xi = unit_direction(xi, field.grid.d)
    inv = math.fsum(xi[k] ** 2 / field.harmonic_mean(k) for k in range(field.grid.d))
    upper = math.fsum(xi[k] ** 2 * field.arithmetic_mean(k) for k in range(field.grid.d))
    return 1.0 / inv, upper


def estimate_one(
    field: EdgeCoefficientField,
    method: str,
    xi,
    T: float | None = None,
    window: AveragingWindow | None = None,
    schedule=None,
    solver=None,
) -> float:
    """Energy average ``(G chi + xi) . a (G chi + xi)`` of one corrector solve."""
    sol = corrector.solve(field, method, xi, T, schedule, solver)
    return sol.energy_average(field, window)


def estimate_tensor(
    field: EdgeCoefficientField,
    method: str,
    T: float | None = None,
    polarization: bool = False,
    solver=None,
) -> np.ndarray:
    """Diagonal of the effective tensor; off-diagonals by polarization if asked."""
    d = field.grid.d
    solver = solver if isinstance(solver, OperatorSolver) else OperatorSolver(field.grid, field.values, solver)
    out = np.zeros((d, d))
    for i in range(d):
        out[i, i] = estimate_one(field, method, basis_direction(i, d), T, solver=solver)
    if polarization:
        for i in range(d):
            for j in range(i + 1, d):
                xi = (basis_direction(i, d) + basis_direction(j, d)) / math.sqrt(2.0)
                q = estimate_one(field, method, xi, T, solver=solver)
                out[i, j] = out[j, i] = q - 0.5 * (out[i, i] + out[j, j])
    return out


@dataclass
class UpscaleEstimate:
    method: str
    T: float
    d: int
    N: int
    R: float
    L: float
    xi: np.ndarray
    M: int
    mean: float
    variance: float
    stderr: float
    master_seed: int
    values: np.ndarray = field(repr=False, default=None)
    lower: np.ndarray = field(repr=False, default=None)
    upper: np.ndarray = field(repr=False, default=None)

    CSV_COLUMNS = ("method", "d", "N", "R", "L", "T", "xi", "M", "mean", "variance", "stderr", "seed")

    def row(self) -> list:
        xi = " ".join(repr(float(x)) for x in self.xi)
        return [
            self.method, self.d, self.N, repr(self.R), repr(self.L), repr(float(self.T)), xi,
            self.M, repr(self.mean), repr(self.variance), repr(self.stderr), self.master_seed,
        ]

    def bracketed(self, rtol: float = 1e-10) -> np.ndarray:
        """Per-realization check ``lower <= value <= upper`` (up to ``rtol``)."""
        if self.lower is None:
            raise ValueError("bounds are only recorded for full-box estimates")
        v = self.values
        return (v >= self.lower * (1 - rtol)) & (v <= self.upper * (1 + rtol))


def write_estimates_csv(path, estimates) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(UpscaleEstimate.CSV_COLUMNS)
        for e in estimates:
            w.writerow(e.row())


@dataclass(frozen=True)
class _Job:
    law: FieldLaw
    grid: PeriodicGrid
    method: str
    xi: tuple
    T: float | None
    window: AveragingWindow | None
    solver: SolverConfig | None
    time: TimeConfig | None
    coupling: str
    seed: int


def _run_one(job: _Job):
    fld = sample_edge_coefficients(job.grid, job.law, job.seed, job.coupling)
    schedule = None
    if job.method in ("modified", "modified_quadrature"):
        schedule = (job.time or TimeConfig()).schedule(job.T)
    value = estimate_one(fld, job.method, np.array(job.xi), job.T, job.window, schedule, job.solver)
    lo, hi = voigt_reuss_bounds(fld, job.xi)
    return value, lo, hi


def _map(fn, jobs, workers):
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    return [fn(j) for j in jobs]


def monte_carlo(
    law: FieldLaw,
    grid: PeriodicGrid,
    method: str,
    xi,
    T: float | None,
    M: int,
    master_seed: int,
    window: AveragingWindow | None = None,
    solver: SolverConfig | None = None,
    time: TimeConfig | None = None,
    coupling: str = "independent",
    workers: int = 1,
) -> UpscaleEstimate:
    """Ensemble mean of ``estimate_one`` over ``M`` independent realizations."""
    if M < 1:
        raise ValueError("need at least one realization")
    if method not in corrector.METHODS:
        raise ValueError(f"unknown corrector method {method!r}")
    xi = unit_direction(xi, grid.d)
    jobs = [
        _Job(law, grid, method, tuple(xi), T, window, solver, time, coupling, child_seed(master_seed, i))
        for i in range(M)
    ]
    out = np.array(_map(_run_one, jobs, workers))
    vals = out[:, 0]
    var = _fvar(vals)
    full = window is None or window.L is None
    L = grid.R if full else window.L
    return UpscaleEstimate(
        method=method,
        T=math.inf if method == "naive" else float(T),
        d=grid.d,
        N=grid.N,
        R=grid.R,
        L=L,
        xi=xi,
        M=M,
        mean=_fmean(vals),
        variance=var,
        stderr=math.sqrt(var / M),
        master_seed=master_seed,
        values=vals,
        lower=out[:, 1] if full else None,
        upper=out[:, 2] if full else None,
    )


@dataclass
class RateFit:
    x: np.ndarray
    y: np.ndarray
    slope: float
    intercept: float
    r2: float

    @property
    def points_used(self) -> int:
        return len(self.x)


def fit_rate(points) -> RateFit:
    """Least-squares line through ``(log x, log y)``."""
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
        raise ValueError("need at least two (x, y) points")
    x, y = pts[:, 0], pts[:, 1]
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("rate fit needs strictly positive x and y")
    lx, ly = np.log(x), np.log(y)
    if np.ptp(lx) == 0:
        raise ValueError("rate fit needs at least two distinct x values")
    res = stats.linregress(lx, ly)
    r2 = res.rvalue**2 if np.ptp(ly) > 0 else 1.0
    return RateFit(x, y, float(res.slope), float(res.intercept), float(r2))


@dataclass
class SystematicErrorTable:
    """Paired (common random numbers) estimate of ``|a^{0,T} - a^0|`` per ``T``.

    ``diffs[i, j]`` is ``est_method(a_i, T_j) - est_naive(a_i)`` for
    realization ``i``; ``naive`` holds the reference estimates and
    ``estimates`` the method's own estimates.
    """

    method: str
    T: np.ndarray
    diffs: np.ndarray
    naive: np.ndarray
    estimates: np.ndarray
    grid: PeriodicGrid
    master_seed: int
    lower: np.ndarray = None
    upper: np.ndarray = None

    @property
    def M(self) -> int:
        return self.diffs.shape[0]

    @property
    def err_sys(self) -> np.ndarray:
        return np.array([abs(_fmean(c)) for c in self.diffs.T])

    @property
    def stderr(self) -> np.ndarray:
        return np.array([math.sqrt(_fvar(c) / self.M) for c in self.diffs.T])

    @property
    def err_stat(self) -> np.ndarray:
        """Standard error of the method's own estimate (no pairing)."""
        return np.array([math.sqrt(_fvar(c) / self.M) for c in self.estimates.T])

    def noise_floor_mask(self, factor: float = 2.0) -> np.ndarray:
        """True where ``err_sys`` is resolved above ``factor * stderr``."""
        return self.err_sys > factor * self.stderr

    def fit(self, factor: float = 2.0) -> RateFit | None:
        """Rate fit over the resolved points; ``None`` if fewer than two remain."""
        mask = self.noise_floor_mask(factor)
        if mask.sum() < 2:
            return None
        return fit_rate(zip(self.T[mask], self.err_sys[mask]))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["T", "err_sys", "stderr", "err_stat", "M", "used_in_fit"])
            for T, e, s, st, m in zip(self.T, self.err_sys, self.stderr, self.err_stat, self.noise_floor_mask()):
                w.writerow([repr(float(T)), repr(float(e)), repr(float(s)), repr(float(st)), self.M, int(m)])


@dataclass(frozen=True)
class _PairJob:
    law: FieldLaw
    grid: PeriodicGrid
    method: str
    xi: tuple
    T: tuple
    solver: SolverConfig | None
    time: TimeConfig | None
    coupling: str
    seed: int


def _run_pair(job: _PairJob):
    fld = sample_edge_coefficients(job.grid, job.law, job.seed, job.coupling)
    solver = OperatorSolver(fld.grid, fld.values, job.solver)
    xi = np.array(job.xi)
    ref = corrector.solve_naive(fld, xi, solver).energy_average(fld)
    ests = []
    if job.method == "zeroth_order":
        for T in job.T:
            ests.append(corrector.solve_zeroth_order(fld, xi, T, solver).energy_average(fld))
    else:
        # one integration through every requested T; each T is a schedule node
        Tmax = max(job.T)
        sched = (job.time or TimeConfig()).schedule(Tmax, job.T, record=False)
        trace = evolve(fld.grid, fld.values, xi, sched, solver, record_times=[Tmax], snapshot_times=job.T)
        for T in job.T:
            sol = corrector.modified_from_state(fld, xi, T, trace.snapshot(T), solver)
            ests.append(sol.energy_average(fld))
    lo, hi = voigt_reuss_bounds(fld, xi)
    return ref, ests, lo, hi


def paired_systematic_error(
    law: FieldLaw,
    grid: PeriodicGrid,
    xi,
    T_list,
    M: int,
    master_seed: int,
    method: str = "modified",
    solver: SolverConfig | None = None,
    time: TimeConfig | None = None,
    coupling: str = "independent",
    workers: int = 1,
) -> SystematicErrorTable:
    """Systematic error of a regularized corrector against the same-seed naive solve.

    For ``modified`` a single parabolic run per realization passes through
    every ``T`` (geometric steps, by default from ``min(0.05, min(T)/200)``);
    the state at each ``T`` feeds one elliptic solve with the reused
    factorization.
    """
    if M < 1:
        raise ValueError("need at least one realization")
    if method not in ("modified", "zeroth_order"):
        raise ValueError(f"paired study supports 'modified' and 'zeroth_order', got {method!r}")
    T_list = tuple(sorted(float(t) for t in T_list))
    if not T_list or T_list[0] <= 0:
        raise ValueError("T values must be positive")
    xi = unit_direction(xi, grid.d)
    jobs = [
        _PairJob(law, grid, method, tuple(xi), T_list, solver, time, coupling, child_seed(master_seed, i))
        for i in range(M)
    ]
    res = _map(_run_pair, jobs, workers)
    naive = np.array([r[0] for r in res])
    ests = np.array([r[1] for r in res])
    return SystematicErrorTable(
        method=method,
        T=np.array(T_list),
        diffs=ests - naive[:, None],
        naive=naive,
        estimates=ests,
        grid=grid,
        master_seed=master_seed,
        lower=np.array([r[2] for r in res]),
        upper=np.array([r[3] for r in res]),
    )


@dataclass
class SweepTable:
    """Systematic and statistical error over a grid of box sizes and ``T``."""

    R: np.ndarray
    T: np.ndarray
    err_sys: np.ndarray
    err_stat: np.ndarray
    stderr_sys: np.ndarray
    M: int
    tables: list = field(repr=False, default_factory=list)

    def optimal_T(self, factor: float = 2.0) -> dict:
        """Per ``R``: smallest ``T`` whose error is within ``factor * stderr`` of the best."""
        out = {}
        for R in np.unique(self.R):
            sel = self.R == R
            T, e, s = self.T[sel], self.err_sys[sel], self.stderr_sys[sel]
            best = e.min()
            ok = e - best <= factor * s
            out[float(R)] = float(T[ok].min())
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["R", "T", "err_sys", "err_stat", "M"])
            for r in zip(self.R, self.T, self.err_sys, self.err_stat):
                w.writerow([repr(float(x)) for x in r] + [self.M])


def sweep_T_vs_R(
    law: FieldLaw,
    N_list,
    T_list,
    M: int,
    master_seed: int,
    h: float = 1.0,
    d: int = 1,
    xi=None,
    solver: SolverConfig | None = None,
    time: TimeConfig | None = None,
    coupling: str = "independent",
    workers: int = 1,
) -> SweepTable:
    """Error surface over box sizes ``R = N h`` (fixed ``h``) and ``T``.

    ``err_sys`` is paired against the same-realization naive corrector (the
    ``T = inf`` reference); ``err_stat`` is the standard error of the
    modified estimate itself.
    """
    xi = basis_direction(0, d) if xi is None else xi
    R_col, T_col, es, st, ss, tables = [], [], [], [], [], []
    for N in N_list:
        grid = PeriodicGrid.from_spacing(d, N, h)
        tab = paired_systematic_error(
            law, grid, xi, T_list, M, master_seed, "modified", solver, time, coupling, workers
        )
        tables.append(tab)
        R_col += [grid.R] * len(tab.T)
        T_col += list(tab.T)
        es += list(tab.err_sys)
        st += list(tab.err_stat)
        ss += list(tab.stderr)
    return SweepTable(
        np.array(R_col), np.array(T_col), np.array(es), np.array(st), np.array(ss), M, tables
    )


def write_rate_fits_csv(path, fits: dict) -> None:
    """``fits`` maps a name to a :class:`RateFit` or ``None`` (all points at noise floor)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "slope", "intercept", "r2", "points_used", "status"])
        for name, f in fits.items():
            if f is None:
                w.writerow([name, "nan", "nan", "nan", 0, "all points at noise floor"])
            else:
                w.writerow([name, repr(f.slope), repr(f.intercept), repr(f.r2), f.points_used, "ok"])


def ensemble_traces(
    law: FieldLaw,
    grid: PeriodicGrid,
    xi,
    T: float,
    M: int,
    master_seed: int,
    solver: SolverConfig | None = None,
    time: TimeConfig | None = None,
    coupling: str = "independent",
    workers: int = 1,
):
    """Parabolic traces of ``M`` realizations on the default schedule (for decay studies)."""
    xi = tuple(unit_direction(xi, grid.d))
    jobs = [(law, grid, xi, T, solver, time, coupling, child_seed(master_seed, i)) for i in range(M)]
    return _map(_run_trace, jobs, workers)


def _run_trace(job):
    law, grid, xi, T, solver, time, coupling, seed = job
    fld = sample_edge_coefficients(grid, law, seed, coupling)
    tr = evolve(grid, fld.values, np.array(xi), (time or TimeConfig()).schedule(T), solver)
    # drop the bulky arrays before returning across processes
    tr.snapshots = {}
    return tr
