"""Time integration of ``du/dt + A u = 0`` started from ``u(0) = div(a xi)``.

The integrator keeps a running quadrature of ``int_0^T u dt`` whose weights
make the discrete identity ``A * quadrature = u(0) - u(T)`` exact for the
chosen scheme, and records spatial norms for the decay diagnostics.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .grid import PeriodicGrid, apply_A, assemble_f0, gradient
from .krylov import OperatorSolver, SolverConfig

SCHEMES = ("implicit_euler", "crank_nicolson")


@dataclass(frozen=True)
class TimeSchedule:
    """Step sizes of a time integration; ``times[n]`` is the time after step ``n``."""

    scheme: str
    times: tuple[float, ...]

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        t = np.asarray(self.times, dtype=float)
        if t.size < 1 or not np.all(np.diff(np.concatenate([[0.0], t])) > 0):
            raise ValueError("schedule times must be positive and strictly increasing")
        object.__setattr__(self, "times", tuple(float(x) for x in t))

    @classmethod
    def from_steps(cls, steps, scheme: str = "implicit_euler") -> "TimeSchedule":
        steps = np.asarray(steps, dtype=float)
        if steps.size < 1 or not np.all(steps > 0):
            raise ValueError("all time steps must be positive")
        return cls(scheme, tuple(np.cumsum(steps)))

    @property
    def T(self) -> float:
        return self.times[-1]

    @property
    def steps(self) -> np.ndarray:
        return np.diff(np.concatenate([[0.0], self.times]))

    def __len__(self):
        return len(self.times)


def uniform_schedule(T: float, dt: float, scheme: str = "implicit_euler") -> TimeSchedule:
    n = max(1, int(round(T / dt)))
    return TimeSchedule(scheme, tuple(T * np.arange(1, n + 1) / n))


def geometric_schedule(
    T: float,
    dt0: float | None = None,
    growth: float = 1.1,
    breakpoints=(),
    scheme: str = "implicit_euler",
) -> TimeSchedule:
    """Steps growing by ``growth`` from ``dt0 = min(0.05, T/200)``.

    Every time in ``breakpoints`` (and ``T``) is hit exactly; a step that
    would leave a sliver shorter than a tenth of a step before a breakpoint
    is stretched onto it instead.
    """
    if not T > 0:
        raise ValueError(f"final time T must be positive, got {T}")
    if growth < 1:
        raise ValueError("growth factor must be >= 1")
    dt = min(0.05, T / 200) if dt0 is None else float(dt0)
    if not dt > 0:
        raise ValueError("initial step must be positive")
    targets = sorted({float(b) for b in breakpoints if 0 < b < T} | {float(T)})
    times = []
    t = 0.0
    for target in targets:
        while t < target:
            if t + dt * 1.1 >= target:
                t = target
            else:
                t += dt
            times.append(t)
            dt *= growth
    return TimeSchedule(scheme, tuple(times))


def sqrt2_times(T: float, t_min: float = 2.0**-4) -> list[float]:
    """Recording times ``2**(k/2)`` in ``[t_min, T]``."""
    k = math.ceil(2 * math.log2(t_min))
    out = []
    while 2.0 ** (k / 2) <= T * (1 + 1e-12):
        out.append(2.0 ** (k / 2))
        k += 1
    return out


def default_schedule(T: float, scheme: str = "implicit_euler", extra_times=()) -> TimeSchedule:
    """Geometric schedule that also hits the default recording times."""
    return TimeConfig(scheme).schedule(T, extra_times)


@dataclass(frozen=True)
class TimeConfig:
    """Parameters of the default geometric schedule."""

    scheme: str = "implicit_euler"
    dt0: float | None = None
    growth: float = 1.1

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"time.scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.dt0 is not None and not self.dt0 > 0:
            raise ValueError("time.dt0 must be positive")
        if not self.growth >= 1:
            raise ValueError("time.growth must be >= 1")

    def schedule(self, T: float, extra_times=(), record=True) -> TimeSchedule:
        """Schedule to ``T`` hitting ``extra_times`` and, if ``record``, the sqrt(2) recording times."""
        bp = list(extra_times) + (sqrt2_times(T) if record else [])
        dt0 = self.dt0
        if dt0 is None and extra_times:
            dt0 = min(0.05, min(extra_times) / 200)
        return geometric_schedule(T, dt0, self.growth, bp, self.scheme)


@dataclass
class ParabolicTrace:
    """Recorded quantities of one parabolic run.

    Per recorded time: spatial mean of ``u``, root-mean-square of ``u`` over
    cells, root-mean-square of ``|G u|`` (cell-owned faces summed over
    directions), the value at cell 0, and the energy ``<G u, a G u>`` per cell.
    """

    times: np.ndarray
    mean_u: np.ndarray
    rms_u: np.ndarray
    rms_grad_u: np.ndarray
    site_u: np.ndarray
    energy: np.ndarray
    initial_state: np.ndarray
    final_state: np.ndarray
    quadrature: np.ndarray
    schedule: TimeSchedule
    snapshots: dict = field(default_factory=dict)
    iterations: int = 0
    max_residual: float = 0.0

    def snapshot(self, t: float) -> np.ndarray:
        for key, val in self.snapshots.items():
            if math.isclose(key, t, rel_tol=1e-12):
                return val
        raise KeyError(f"no snapshot stored at t={t}")


def _match_indices(schedule: TimeSchedule, wanted, name: str, strict: bool) -> set[int]:
    times = np.asarray(schedule.times)
    out = set()
    for t in wanted:
        j = int(np.argmin(np.abs(times - t)))
        if math.isclose(times[j], t, rel_tol=1e-12, abs_tol=1e-14):
            out.add(j)
        elif strict:
            raise ValueError(f"{name} time {t} is not a node of the schedule")
    return out


def evolve(
    grid: PeriodicGrid,
    a: np.ndarray,
    xi,
    schedule: TimeSchedule,
    solver: OperatorSolver | SolverConfig | None = None,
    record_times=None,
    snapshot_times=(),
) -> ParabolicTrace:
    """Integrate the parabolic problem over ``schedule``.

    ``record_times`` defaults to the powers of sqrt(2) that are schedule
    nodes; pass ``"all"`` to record after every step.  Full states are kept
    for each of ``snapshot_times``, which must be schedule nodes.

    Implicit Euler solves ``(I/dt + A) u_n = u_{n-1}/dt`` and accumulates
    ``sum dt_n u_n``; Crank-Nicolson solves ``(2I/dt + A) u_n = (2I/dt - A) u_{n-1}``
    and accumulates the trapezoid rule.
    """
    if not isinstance(solver, OperatorSolver):
        solver = OperatorSolver(grid, a, solver)
    n_steps = len(schedule)
    if record_times == "all":
        rec = set(range(n_steps))
    elif record_times is None:
        rec = _match_indices(schedule, sqrt2_times(schedule.T), "record", strict=False)
        rec.add(n_steps - 1)
    else:
        rec = _match_indices(schedule, record_times, "record", strict=True)
    snaps = _match_indices(schedule, snapshot_times, "snapshot", strict=True)

    u = assemble_f0(grid, a, xi)
    u -= u.mean()
    u0 = u.copy()
    quad = np.zeros_like(u)
    rows = [_measure(grid, a, 0.0, u)]
    snapshots = {}
    iters = 0
    max_res = 0.0
    crank = schedule.scheme == "crank_nicolson"
    for n, dt in enumerate(schedule.steps):
        if crank:
            tau = 2.0 / dt
            rhs = tau * u - apply_A(grid, a, u)
        else:
            tau = 1.0 / dt
            rhs = tau * u
        u_new, rep = solver.solve_shifted(tau, rhs, x0=u)
        u_new -= u_new.mean()
        iters += rep.iterations
        if rep.rhs_norm > 0:
            max_res = max(max_res, rep.residual_norm / rep.rhs_norm)
        if crank:
            quad += 0.5 * dt * (u + u_new)
        else:
            quad += dt * u_new
        u = u_new
        t = schedule.times[n]
        if n in rec:
            rows.append(_measure(grid, a, t, u))
        if n in snaps:
            snapshots[t] = u.copy()
    cols = np.array(rows).T
    return ParabolicTrace(
        times=cols[0],
        mean_u=cols[1],
        rms_u=cols[2],
        rms_grad_u=cols[3],
        site_u=cols[4],
        energy=cols[5],
        initial_state=u0,
        final_state=u,
        quadrature=quad,
        schedule=schedule,
        snapshots=snapshots,
        iterations=iters,
        max_residual=max_res,
    )


def _measure(grid, a, t, u):
    Gu = gradient(grid, u)
    g2 = (Gu * Gu).sum(axis=0)
    return (
        t,
        float(u.mean()),
        math.sqrt(float(np.mean(u * u))),
        math.sqrt(float(np.mean(g2))),
        float(u.flat[0]),
        float(np.mean((a * Gu * Gu).sum(axis=0))),
    )


@dataclass
class DecayTable:
    """Space-and-ensemble statistics of ``u`` and ``G u`` at each recorded time.

    ``stderr_mean_u`` is the standard error of the ensemble mean of ``u`` at a
    single site.  For a stationary field this bounds the standard error of
    the space-and-ensemble mean, whose own sample spread is only roundoff
    because every realization has zero spatial mean.
    """

    t: np.ndarray
    mean_u: np.ndarray
    rms_u: np.ndarray
    rms_grad_u: np.ndarray
    stderr_u2: np.ndarray
    stderr_gradu2: np.ndarray
    stderr_mean_u: np.ndarray
    site_mean_u: np.ndarray
    samples: int

    COLUMNS = (
        "t", "mean_u", "rms_u", "rms_grad_u", "stderr_u2", "stderr_gradu2",
        "stderr_mean_u", "site_mean_u",
    )

    def window(self, t_min: float, t_max: float) -> np.ndarray:
        return (self.t >= t_min * (1 - 1e-12)) & (self.t <= t_max * (1 + 1e-12))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.COLUMNS)
            for row in zip(*(getattr(self, c) for c in self.COLUMNS)):
                w.writerow([repr(float(x)) for x in row])


def _stderr(x: np.ndarray) -> np.ndarray:
    m = x.shape[0]
    if m < 2:
        return np.zeros(x.shape[1:])
    return x.std(axis=0, ddof=1) / math.sqrt(m)


def decay_diagnostics(traces) -> DecayTable:
    """Aggregate an ensemble of traces into a :class:`DecayTable`.

    Spatial averages stand in for expectations (ergodicity); the ensemble
    adds independent samples for the standard errors.
    """
    traces = list(traces)
    if not traces:
        raise ValueError("need at least one trace")
    t0 = traces[0].times
    for tr in traces[1:]:
        if tr.times.shape != t0.shape or not np.allclose(tr.times, t0, rtol=1e-12, atol=0):
            raise ValueError("all traces must share the same recorded times")
    u2 = np.array([tr.rms_u**2 for tr in traces])
    g2 = np.array([tr.rms_grad_u**2 for tr in traces])
    mu = np.array([tr.mean_u for tr in traces])
    site = np.array([tr.site_u for tr in traces])
    return DecayTable(
        t=t0.copy(),
        mean_u=mu.mean(axis=0),
        rms_u=np.sqrt(u2.mean(axis=0)),
        rms_grad_u=np.sqrt(g2.mean(axis=0)),
        stderr_u2=_stderr(u2),
        stderr_gradu2=_stderr(g2),
        stderr_mean_u=_stderr(site),
        site_mean_u=site.mean(axis=0),
        samples=len(traces),
    )
