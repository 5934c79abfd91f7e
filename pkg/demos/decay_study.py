"""Decay of the parabolic solution started from div(a xi).

Fits log-log slopes of rms(u) and rms(grad u) over t in [4, 64] and shows
that the space-ensemble mean of u stays at zero.
"""
from stochhom import FieldLaw, PeriodicGrid, decay_diagnostics, fit_rate
from stochhom.upscale import ensemble_traces

traces = ensemble_traces(FieldLaw.lognormal(0.0, 1.0, 1.0), PeriodicGrid(1, 2048, 2048.0), [1.0], 64.0, 40, 3)
table = decay_diagnostics(traces)
print("     t     rms_u   rms_grad_u   mean_u")
for row in zip(table.t, table.rms_u, table.rms_grad_u, table.mean_u):
    print("{:7.3f}  {:.5f}  {:.5f}  {:+.1e}".format(*row))
sel = table.window(4, 64)
for name in ("rms_u", "rms_grad_u"):
    fit = fit_rate(zip(table.t[sel], getattr(table, name)[sel]))
    print(f"{name} slope {fit.slope:.3f}")
