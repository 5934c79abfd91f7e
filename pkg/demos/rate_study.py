"""Systematic error of the modified corrector in T, at laptop scale.

Each realization is solved once with the naive corrector and once per T
with the modified one (same seed), so the difference isolates the bias
from finite T.  The full-size runs live in the acceptance tests; this one
takes under a minute.
"""
from stochhom import FieldLaw, PeriodicGrid, paired_systematic_error

law = FieldLaw.lognormal(0.0, 1.0, 4.0)
grid = PeriodicGrid(1, 4096, 4096.0)
T = [8, 16, 32, 64, 128]

for method in ("modified", "zeroth_order"):
    tab = paired_systematic_error(law, grid, [1.0], T, 100, master_seed=1, method=method)
    print(method)
    for t, e, s, used in zip(tab.T, tab.err_sys, tab.stderr, tab.noise_floor_mask()):
        print(f"  T={t:5g}  err {e:.4e} +- {s:.1e}{'' if used else '  (noise floor)'}")
    fit = tab.fit()
    print("  slope:", "n/a" if fit is None else f"{fit.slope:.3f} (r2 {fit.r2:.3f})")
