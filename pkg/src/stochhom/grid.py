"""Periodic structured grid and matrix-free discrete calculus.

Cell fields are numpy arrays of shape ``(N,) * d``; face fields have shape
``(d,) + (N,) * d`` where ``F[k][i]`` lives on the face between cell ``i``
and its ``+e_k`` neighbour.  All index arithmetic wraps modulo ``N``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform periodic grid of ``N**d`` cells on the box ``[-R/2, R/2]^d``."""

    d: int
    N: int
    R: float

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError(f"dimension d must be 1 or 2, got {self.d}")
        if int(self.N) != self.N or self.N < 2:
            raise ValueError(f"N must be an integer >= 2, got {self.N}")
        if not (self.R > 0 and math.isfinite(self.R)):
            raise ValueError(f"side length R must be positive, got {self.R}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "R", float(self.R))

    @classmethod
    def from_spacing(cls, d: int, N: int, h: float = 1.0) -> "PeriodicGrid":
        return cls(d, N, N * h)

    @property
    def h(self) -> float:
        return self.R / self.N

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.d

    @property
    def face_shape(self) -> tuple[int, ...]:
        return (self.d,) + self.shape

    @property
    def size(self) -> int:
        return self.N**self.d

    def cell_centers(self) -> np.ndarray:
        """Coordinates of cell centres, shape ``(d,) + shape``."""
        x = -self.R / 2 + (np.arange(self.N) + 0.5) * self.h
        return np.array(np.meshgrid(*([x] * self.d), indexing="ij"))

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def check_cells(self, v: np.ndarray) -> None:
        if v.shape != self.shape:
            raise ValueError(f"cell field has shape {v.shape}, grid expects {self.shape}")

    def check_faces(self, F: np.ndarray) -> None:
        if F.shape != self.face_shape:
            raise ValueError(f"face field has shape {F.shape}, grid expects {self.face_shape}")


def unit_direction(xi, d: int) -> np.ndarray:
    """Validate a direction vector and return it as a float array.

    Scalars are accepted for ``d == 1``.  Raises if ``|xi|`` differs from 1 by
    more than 1e-12.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if xi.shape != (d,):
        raise ValueError(f"direction must have {d} components, got {xi.shape}")
    if abs(np.linalg.norm(xi) - 1.0) > 1e-12:
        raise ValueError(f"direction must be a unit vector, |xi| = {np.linalg.norm(xi)!r}")
    return xi


def basis_direction(k: int, d: int) -> np.ndarray:
    e = np.zeros(d)
    e[k] = 1.0
    return e


def gradient(grid: PeriodicGrid, v: np.ndarray) -> np.ndarray:
    """Forward difference ``(v[i + e_k] - v[i]) / h`` on every face."""
    grid.check_cells(v)
    G = np.empty(grid.face_shape)
    for k in range(grid.d):
        G[k] = np.roll(v, -1, axis=k) - v
    G /= grid.h
    return G


def divergence(grid: PeriodicGrid, F: np.ndarray) -> np.ndarray:
    """Backward difference ``sum_k (F[k][i] - F[k][i - e_k]) / h``.

    This is minus the adjoint of :func:`gradient` under the plain Euclidean
    inner products on cells and faces.
    """
    grid.check_faces(F)
    out = np.zeros(grid.shape)
    for k in range(grid.d):
        out += F[k] - np.roll(F[k], 1, axis=k)
    out /= grid.h
    return out


def apply_A(grid: PeriodicGrid, a: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Elliptic operator ``A v = -D(a * G v)``; symmetric PSD with kernel = constants."""
    return -divergence(grid, a * gradient(grid, v))


def assemble_f0(grid: PeriodicGrid, a: np.ndarray, xi) -> np.ndarray:
    """Discrete ``div(a xi)``: the parabolic initial datum and the naive corrector RHS."""
    xi = unit_direction(xi, grid.d)
    flux = a * xi.reshape((grid.d,) + (1,) * grid.d)
    return divergence(grid, flux)


def diagonal_A(grid: PeriodicGrid, a: np.ndarray) -> np.ndarray:
    """Diagonal of ``A``: sum of the 2d face coefficients around each cell over h^2."""
    diag = np.zeros(grid.shape)
    for k in range(grid.d):
        diag += a[k] + np.roll(a[k], 1, axis=k)
    return diag / grid.h**2


def operator_matrix(grid: PeriodicGrid, a: np.ndarray, shift: float = 0.0) -> sp.csr_matrix:
    """Sparse matrix of ``shift * I + A`` in row-major cell ordering."""
    grid.check_faces(a)
    n = grid.size
    idx = np.arange(n).reshape(grid.shape)
    rows, cols, vals = [], [], []
    diag = np.full(n, float(shift))
    for k in range(grid.d):
        nbr = np.roll(idx, -1, axis=k).ravel()
        w = a[k].ravel() / grid.h**2
        rows += [idx.ravel(), nbr]
        cols += [nbr, idx.ravel()]
        vals += [-w, -w]
        diag += w
        np.add.at(diag, nbr, w)
    rows.append(idx.ravel())
    cols.append(idx.ravel())
    vals.append(diag)
    M = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    return M.tocsr()


@dataclass(frozen=True)
class AveragingWindow:
    """Centered, cell-aligned sub-box ``K_L``; ``L=None`` means the full box."""

    L: float | None = None

    def cells(self, grid: PeriodicGrid) -> slice:
        if self.L is None:
            return slice(0, grid.N)
        n = self.L / grid.h
        n_int = int(round(n))
        if self.L <= 0:
            raise ValueError(f"window side L must be positive, got {self.L}")
        if n_int > grid.N or self.L > grid.R * (1 + 1e-12):
            raise ValueError(f"window L={self.L} is larger than the box R={grid.R}")
        if abs(n - n_int) > 1e-9 * max(1.0, n):
            raise ValueError(f"window L={self.L} is not a multiple of h={grid.h}")
        start = (grid.N - n_int) // 2
        return slice(start, start + n_int)


def face_energy_average(
    grid: PeriodicGrid,
    a: np.ndarray,
    grad_chi: np.ndarray,
    xi,
    window: AveragingWindow | None = None,
) -> float:
    """Average of ``(G chi + xi) . a (G chi + xi)`` over the cells of a window.

    Each cell owns its ``d`` forward faces, so the sum runs over those faces
    and is divided by the number of cells in the window.
    """
    xi = unit_direction(xi, grid.d)
    grid.check_faces(grad_chi)
    sl = (window or AveragingWindow()).cells(grid)
    box = (slice(None),) + (sl,) * grid.d
    e = grad_chi + xi.reshape((grid.d,) + (1,) * grid.d)
    dens = (a * e * e)[box]
    n_cells = dens[0].size
    return math.fsum(dens.ravel()) / n_cells
