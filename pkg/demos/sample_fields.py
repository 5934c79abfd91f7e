"""Sampling stationary coefficient fields and checking their second moments.

Draws many 1D Gaussian fields by circulant embedding and compares the
empirical covariance with the periodized exponential covariance, then
shows the range of each coefficient law on a 2D grid.
"""
import numpy as np

from stochhom import CovarianceSpec, FieldLaw, PeriodicGrid, child_seed, sample_edge_coefficients, sample_gaussian
from stochhom.field import periodized_covariance

grid = PeriodicGrid(1, 128, 128.0)
spec = CovarianceSpec("exponential", 1.0, 8.0)
g = np.array([sample_gaussian(grid, spec, child_seed(1, i)) for i in range(4000)])
target = periodized_covariance(grid.shape, grid.h, spec)
print("lag  empirical  target")
for lag in (0, 4, 8, 16, 32):
    emp = np.mean(g * np.roll(g, -lag, axis=1))
    print(f"{lag:3d}  {emp:9.4f}  {target[lag]:.4f}")

grid2 = PeriodicGrid(2, 64, 64.0)
laws = {
    "lognormal": FieldLaw.lognormal(0.0, 1.0, 4.0),
    "logitnormal": FieldLaw.logitnormal(1.0, 9.0, 0.0, 1.0, 4.0),
    "two_phase": FieldLaw.two_phase(1.0, 4.0, CovarianceSpec("exponential", 1.0, 4.0)),
}
for name, law in laws.items():
    f = sample_edge_coefficients(grid2, law, seed=7)
    print(f"{name:12s} min {f.values.min():.3f}  max {f.values.max():.3f}  "
          f"harmonic {f.harmonic_mean(0):.3f}  arithmetic {f.arithmetic_mean(0):.3f}")
