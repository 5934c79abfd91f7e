"""Stationary random coefficient fields on periodic grids.

Gaussian fields are drawn exactly by circulant embedding: on a periodic
lattice the covariance matrix of the image-summed (periodized) covariance is
circulant, so its square root is applied with two FFTs.  Pointwise transforms
then produce lognormal, logit-normal or two-phase coefficients, which are
placed on the grid faces.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from itertools import product

import numpy as np
from scipy.special import expit, ndtri

from .grid import PeriodicGrid

COVARIANCE_KINDS = ("exponential", "gaussian")
LAW_KINDS = ("constant", "two_phase", "lognormal", "logitnormal")

# exp() arguments beyond this overflow or underflow a double
_EXP_LIMIT = 700.0


class SpectrumError(ValueError):
    """The circulant covariance has too much negative spectral energy."""


@dataclass(frozen=True)
class CovarianceSpec:
    kind: str = "exponential"
    variance: float = 1.0
    correlation_length: float = 1.0

    def __post_init__(self):
        if self.kind not in COVARIANCE_KINDS:
            raise ValueError(f"covariance.kind must be one of {COVARIANCE_KINDS}, got {self.kind!r}")
        if not (self.variance > 0 and math.isfinite(self.variance)):
            raise ValueError(f"covariance.variance must be positive, got {self.variance}")
        if not (self.correlation_length > 0 and math.isfinite(self.correlation_length)):
            raise ValueError(
                f"covariance.correlation_length must be positive, got {self.correlation_length}"
            )

    def of_distance(self, r):
        """Covariance as a function of Euclidean distance (vectorized)."""
        r = np.asarray(r, dtype=float)
        if self.kind == "exponential":
            return self.variance * np.exp(-r / self.correlation_length)
        return self.variance * np.exp(-((r / self.correlation_length) ** 2))


def covariance_eval(spec: CovarianceSpec, lag) -> float:
    """Covariance at a lag vector; ``|lag|`` is the Euclidean norm."""
    return float(spec.of_distance(np.linalg.norm(np.atleast_1d(np.asarray(lag, dtype=float)))))


@dataclass(frozen=True)
class FieldLaw:
    """Marginal law of the coefficient, built from a stationary Gaussian field.

    ``bounds`` holds the ellipticity constants ``(alpha, beta)``; it is
    required for ``logitnormal`` and ``two_phase`` and equals ``(v, v)`` for a
    constant law.  ``clamp`` optionally truncates lognormal values.  For
    ``two_phase`` the covariance may be omitted (independent faces), and
    ``phase_fraction`` is the probability of the ``beta`` phase.
    """

    kind: str
    gaussian_mean: float = 0.0
    covariance: CovarianceSpec | None = None
    bounds: tuple[float, float] | None = None
    clamp: tuple[float, float] | None = None
    phase_fraction: float = 0.5

    def __post_init__(self):
        if self.kind not in LAW_KINDS:
            raise ValueError(f"law.kind must be one of {LAW_KINDS}, got {self.kind!r}")
        if self.bounds is not None:
            object.__setattr__(self, "bounds", tuple(float(b) for b in self.bounds))
            lo, hi = self.bounds
            if not (0 < lo <= hi and math.isfinite(hi)):
                raise ValueError(f"law.bounds must satisfy 0 < alpha <= beta, got {self.bounds}")
        if self.clamp is not None:
            object.__setattr__(self, "clamp", tuple(float(b) for b in self.clamp))
            lo, hi = self.clamp
            if not (0 < lo <= hi and math.isfinite(hi)):
                raise ValueError(f"law.clamp must satisfy 0 < low <= high, got {self.clamp}")
            if self.kind != "lognormal":
                raise ValueError("law.clamp is only meaningful for a lognormal law")
        if self.kind in ("constant", "logitnormal", "two_phase") and self.bounds is None:
            raise ValueError(f"law.bounds is required for a {self.kind} law")
        if self.kind == "constant" and self.bounds[0] != self.bounds[1]:
            raise ValueError("law.bounds of a constant law must be (value, value)")
        if self.kind in ("lognormal", "logitnormal") and self.covariance is None:
            raise ValueError(f"law.covariance is required for a {self.kind} law")
        if not 0 < self.phase_fraction < 1:
            raise ValueError(f"law.phase_fraction must lie in (0, 1), got {self.phase_fraction}")
        if not math.isfinite(self.gaussian_mean):
            raise ValueError("law.gaussian_mean must be finite")

    @classmethod
    def constant(cls, value: float) -> "FieldLaw":
        return cls("constant", bounds=(value, value))

    @classmethod
    def lognormal(cls, mu=0.0, variance=1.0, correlation_length=1.0, kind="exponential", clamp=None):
        return cls("lognormal", mu, CovarianceSpec(kind, variance, correlation_length), clamp=clamp)

    @classmethod
    def logitnormal(cls, alpha, beta, mu=0.0, variance=1.0, correlation_length=1.0, kind="exponential"):
        return cls("logitnormal", mu, CovarianceSpec(kind, variance, correlation_length), (alpha, beta))

    @classmethod
    def two_phase(cls, alpha, beta, covariance=None, phase_fraction=0.5):
        return cls("two_phase", covariance=covariance, bounds=(alpha, beta), phase_fraction=phase_fraction)

    @property
    def value_range(self) -> tuple[float, float] | None:
        """Guaranteed range of sampled values, if the law is bounded."""
        if self.kind == "lognormal":
            return self.clamp
        return self.bounds

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "FieldLaw":
        data = dict(data)
        allowed = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - allowed
        if unknown:
            raise ValueError(f"unknown law keys: {sorted(unknown)}")
        if "kind" not in data:
            raise ValueError("law.kind is required")
        cov = data.get("covariance")
        if isinstance(cov, dict):
            unknown = set(cov) - {"kind", "variance", "correlation_length"}
            if unknown:
                raise ValueError(f"unknown law.covariance keys: {sorted(unknown)}")
            data["covariance"] = CovarianceSpec(**cov)
        for key in ("bounds", "clamp"):
            if data.get(key) is not None:
                if len(data[key]) != 2:
                    raise ValueError(f"law.{key} must be a pair")
                data[key] = tuple(data[key])
        return cls(**data)


@dataclass
class EdgeCoefficientField:
    """One coefficient per face and direction; ``values.shape == grid.face_shape``."""

    grid: PeriodicGrid
    values: np.ndarray
    law: FieldLaw | None = None
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.grid.check_faces(self.values)
        if not np.all(np.isfinite(self.values)) or not np.all(self.values > 0):
            raise ValueError("coefficients must be finite and strictly positive")
        rng = self.law.value_range if self.law is not None else None
        if rng is not None and (self.values.min() < rng[0] or self.values.max() > rng[1]):
            raise ValueError(f"coefficients leave the law's range {rng}")

    def harmonic_mean(self, k: int = 0) -> float:
        return self.values[k].size / math.fsum((1.0 / self.values[k]).ravel())

    def arithmetic_mean(self, k: int = 0) -> float:
        return math.fsum(self.values[k].ravel()) / self.values[k].size


def child_seed(seed: int, tag: int) -> int:
    """Stable 64-bit seed for sub-stream ``tag`` of ``seed``."""
    if seed < 0 or tag < 0:
        raise ValueError("seed and tag must be non-negative integers")
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(tag),))
    return int(ss.generate_state(1, np.uint64)[0])


def periodized_covariance(shape: tuple[int, ...], h: float, spec: CovarianceSpec) -> np.ndarray:
    """Covariance between lattice site 0 and every site, summed over periodic images.

    Images are added until the next shell contributes below 1e-17 of the
    variance (capped at 64 shells).
    """
    d = len(shape)
    N = shape[0]
    R = N * h
    lags = np.array(np.meshgrid(*[np.arange(n) * h for n in shape], indexing="ij"))
    n_img = 1
    while n_img < 64 and spec.of_distance((n_img - 0.5) * R) > 1e-17 * spec.variance:
        n_img += 1
    out = np.zeros(shape)
    for offs in product(range(-n_img, n_img + 1), repeat=d):
        r2 = sum((lags[k] + offs[k] * R) ** 2 for k in range(d))
        out += spec.of_distance(np.sqrt(r2))
    return out


@lru_cache(maxsize=16)
def _sqrt_spectrum(shape: tuple[int, ...], h: float, spec: CovarianceSpec, threshold: float):
    lam = np.fft.rfftn(periodized_covariance(shape, h, spec)).real
    neg = lam < 0
    if neg.any():
        # rfftn stores half the spectrum; the ratio is unaffected to leading order
        ratio = -lam[neg].sum() / np.abs(lam).sum()
        if ratio > threshold:
            raise SpectrumError(
                f"circulant covariance has relative negative spectral energy {ratio:.2e} "
                f"> threshold {threshold:.1e}"
            )
        lam = np.where(neg, 0.0, lam)
    out = np.sqrt(lam)
    out.setflags(write=False)
    return out


def sample_gaussian(
    grid: PeriodicGrid,
    spec: CovarianceSpec,
    seed: int,
    lattice: str | tuple[str, int] = "cells",
    threshold: float = 1e-6,
) -> np.ndarray:
    """One mean-zero Gaussian draw with the periodized covariance on a grid lattice.

    ``lattice`` is ``"cells"`` or ``("faces", k)``.  Both are translates of
    the same periodic lattice, so the law of the draw is identical; the
    argument only fixes where the returned values live.
    """
    if lattice != "cells":
        if not (isinstance(lattice, tuple) and lattice[0] == "faces" and 0 <= lattice[1] < grid.d):
            raise ValueError(f"unknown lattice {lattice!r}")
    root = _sqrt_spectrum(grid.shape, grid.h, spec, float(threshold))
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(grid.shape)
    axes = tuple(range(grid.d))
    return np.fft.irfftn(root * np.fft.rfftn(noise), s=grid.shape, axes=axes)


def transform(g: np.ndarray, law: FieldLaw) -> np.ndarray:
    """Map a Gaussian draw pointwise to coefficient values of ``law``."""
    g = np.asarray(g, dtype=float)
    if law.kind == "constant":
        return np.full(g.shape, law.bounds[0])
    if law.kind == "two_phase":
        sd = math.sqrt(law.covariance.variance) if law.covariance is not None else 1.0
        cut = sd * ndtri(1.0 - law.phase_fraction)
        return np.where(g < cut, law.bounds[0], law.bounds[1])
    x = law.gaussian_mean + g
    if law.kind == "lognormal":
        out = np.exp(np.clip(x, -_EXP_LIMIT, _EXP_LIMIT))
        if law.clamp is not None:
            out = np.clip(out, *law.clamp)
        return out
    lo, hi = law.bounds
    return np.clip(lo + (hi - lo) * expit(x), lo, hi)


def sample_edge_coefficients(
    grid: PeriodicGrid,
    law: FieldLaw,
    seed: int,
    coupling: str = "independent",
    threshold: float = 1e-6,
) -> EdgeCoefficientField:
    """Draw one coefficient realization on the grid faces.

    By default (``coupling="independent"``) each direction ``k`` gets its own
    field on that direction's face lattice, seeded with ``child_seed(seed, k)``.
    ``coupling="scalar"`` samples a single Gaussian field on the half-spacing
    lattice and reads it at every face centre, so all directions see the same
    scalar field ``a(x)``.  In 1D both give the same law.
    """
    if coupling not in ("scalar", "independent"):
        raise ValueError(f"unknown coupling {coupling!r}")
    if law.kind == "constant":
        return EdgeCoefficientField(grid, np.full(grid.face_shape, law.bounds[0]), law, seed)
    values = np.empty(grid.face_shape)
    if law.covariance is None:
        # independent faces (two-phase without correlation)
        rng = np.random.default_rng(child_seed(seed, 0))
        values[:] = transform(rng.standard_normal(grid.face_shape), law)
    elif coupling == "independent":
        for k in range(grid.d):
            g = sample_gaussian(grid, law.covariance, child_seed(seed, k), ("faces", k), threshold)
            values[k] = transform(g, law)
    else:
        fine = PeriodicGrid(grid.d, 2 * grid.N, grid.R)
        g = sample_gaussian(fine, law.covariance, child_seed(seed, 0), "cells", threshold)
        # fine-lattice node j sits at -R/2 + j h/2: cell centres are odd j,
        # the +e_k face of cell i is at j = 2i + 2 along axis k
        centre = np.arange(1, 2 * grid.N, 2)
        face = (np.arange(grid.N) * 2 + 2) % (2 * grid.N)
        for k in range(grid.d):
            idx = [centre] * grid.d
            idx[k] = face
            values[k] = transform(g[np.ix_(*idx)], law)
    return EdgeCoefficientField(grid, values, law, seed)
