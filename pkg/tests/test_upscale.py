import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochhom.field import EdgeCoefficientField, FieldLaw
from stochhom.grid import AveragingWindow, PeriodicGrid
from stochhom.upscale import (
    SystematicErrorTable,
    UpscaleEstimate,
    estimate_one,
    estimate_tensor,
    fit_rate,
    monte_carlo,
    paired_systematic_error,
    sweep_T_vs_R,
    write_estimates_csv,
    write_rate_fits_csv,
)

LOGN = FieldLaw.lognormal(0.0, 1.0, 4.0)


def test_estimate_one_examples(two_cell):
    assert estimate_one(two_cell, "naive", [1.0]) == pytest.approx(1.6, rel=1e-12)
    assert estimate_one(two_cell, "zeroth_order", [1.0], 1.0) == pytest.approx(1.6074380165289257, rel=1e-12)
    grid = PeriodicGrid(2, 6, 6.0)
    c = EdgeCoefficientField(grid, np.full(grid.face_shape, 3.0))
    assert estimate_one(c, "modified", [0.6, 0.8], 2.0) == pytest.approx(3.0, rel=1e-14)


def test_estimate_tensor_anisotropic_layers():
    grid = PeriodicGrid(2, 4, 4.0)
    vals = np.empty(grid.face_shape)
    vals[0], vals[1] = 1.0, 2.0
    t = estimate_tensor(EdgeCoefficientField(grid, vals), "naive", polarization=True)
    np.testing.assert_allclose(t, [[1.0, 0.0], [0.0, 2.0]], atol=1e-12)


def test_monte_carlo_constant_law():
    for M in (1, 5):
        est = monte_carlo(FieldLaw.constant(2.5), PeriodicGrid(2, 8, 8.0), "modified", [1.0, 0.0], 4.0, M, 3)
        assert est.mean == 2.5 and est.variance == 0.0 and est.stderr == 0.0


def test_monte_carlo_two_phase_harmonic_mean():
    law = FieldLaw.two_phase(1.0, 4.0)
    est = monte_carlo(law, PeriodicGrid(1, 8192, 8192.0), "naive", [1.0], None, 200, 77)
    assert abs(est.mean - 1.6) <= 3 * est.stderr
    assert np.all(est.bracketed())


def test_monte_carlo_deterministic_and_worker_independent():
    grid = PeriodicGrid(1, 256, 256.0)
    a = monte_carlo(LOGN, grid, "modified", [1.0], 8.0, 6, 11)
    b = monte_carlo(LOGN, grid, "modified", [1.0], 8.0, 6, 11)
    c = monte_carlo(LOGN, grid, "modified", [1.0], 8.0, 6, 11, workers=2)
    assert a.mean == b.mean and np.array_equal(a.values, b.values)
    assert c.mean == pytest.approx(a.mean, rel=1e-12)
    assert c.variance == pytest.approx(a.variance, rel=1e-12)


def test_subwindow_estimate_drops_bounds():
    grid = PeriodicGrid(1, 64, 64.0)
    est = monte_carlo(LOGN, grid, "naive", [1.0], None, 3, 0, window=AveragingWindow(32.0))
    assert est.L == 32.0 and est.lower is None
    with pytest.raises(ValueError):
        est.bracketed()


def test_fit_rate_exact_power_laws():
    f = fit_rate([(1, 1), (2, 0.5), (4, 0.25)])
    assert f.slope == pytest.approx(-1.0, abs=1e-12) and f.r2 == pytest.approx(1.0)
    assert fit_rate([(4, 0.5), (16, 0.25), (64, 0.125)]).slope == pytest.approx(-0.5, abs=1e-12)
    with pytest.raises(ValueError):
        fit_rate([(1, 1), (2, 0.0)])
    with pytest.raises(ValueError):
        fit_rate([(1, 1)])


@given(st.lists(st.floats(-0.05, 0.05), min_size=6, max_size=6))
def test_fit_rate_noisy(eps):
    x = 2.0 ** np.arange(6)
    f = fit_rate(zip(x, x**-0.5 * (1 + np.array(eps))))
    assert -0.6 <= f.slope <= -0.4


def test_paired_constant_law_is_zero_and_unfitted():
    tab = paired_systematic_error(FieldLaw.constant(2.0), PeriodicGrid(1, 32, 32.0), [1.0], [2, 4, 8], 4, 1)
    assert np.all(tab.err_sys == 0) and np.all(tab.stderr == 0)
    assert not tab.noise_floor_mask().any()
    assert tab.fit() is None


def test_paired_error_decreases_in_T():
    tab = paired_systematic_error(LOGN, PeriodicGrid(1, 1024, 1024.0), [1.0], [2, 4, 8, 16, 32], 30, 5)
    e, s = tab.err_sys, tab.stderr
    for j in range(1, len(e) - 1):
        assert e[j + 1] <= e[j] + 2 * math.hypot(s[j], s[j + 1])
    assert np.all(tab.diffs >= -1e-10)
    lo, hi = tab.lower[:, None], tab.upper[:, None]
    assert np.all(tab.estimates >= lo * (1 - 1e-10)) and np.all(tab.estimates <= hi * (1 + 1e-10))


def test_paired_zeroth_order_matches_direct_solves():
    grid = PeriodicGrid(1, 64, 64.0)
    tab = paired_systematic_error(LOGN, grid, [1.0], [1, 10], 3, 2, method="zeroth_order")
    mc = monte_carlo(LOGN, grid, "zeroth_order", [1.0], 10.0, 3, 2)
    np.testing.assert_allclose(tab.estimates[:, 1], mc.values, rtol=1e-12)


def test_paired_modified_matches_standalone_solves():
    # the shared schedule hits each T exactly, so per-T solves must agree to time-step error
    grid = PeriodicGrid(1, 128, 128.0)
    tab = paired_systematic_error(LOGN, grid, [1.0], [4.0, 16.0], 4, 8)
    mc = monte_carlo(LOGN, grid, "modified", [1.0], 16.0, 4, 8)
    np.testing.assert_allclose(tab.estimates[:, 1], mc.values, rtol=2e-3)


def test_isotropy_2d():
    grid = PeriodicGrid(2, 32, 32.0)
    law = FieldLaw.lognormal(0.0, 0.5, 2.0)
    e1 = monte_carlo(law, grid, "naive", [1.0, 0.0], None, 30, 21)
    e2 = monte_carlo(law, grid, "naive", [0.0, 1.0], None, 30, 21)
    assert abs(e1.mean - e2.mean) <= 3 * math.hypot(e1.stderr, e2.stderr)


def test_sweep_surface():
    const = sweep_T_vs_R(FieldLaw.constant(1.5), [16, 32], [2, 4], 3, 0)
    assert np.all(const.err_sys == 0) and np.all(const.err_stat == 0)
    law = FieldLaw.lognormal(0.0, 1.0, 2.0)
    sw = sweep_T_vs_R(law, [64, 256, 1024], [1, 4, 16, 64], 24, 9)
    for T in (1, 4, 16, 64):
        col = sw.err_stat[sw.T == T]
        assert np.all(np.diff(col) < 0), T
    opt = sw.optimal_T()
    Rs = sorted(opt)
    assert all(opt[a] <= opt[b] for a, b in zip(Rs, Rs[1:]))


def test_csv_outputs(tmp_path):
    est = monte_carlo(FieldLaw.constant(2.0), PeriodicGrid(1, 8, 8.0), "naive", [1.0], None, 2, 4)
    path = tmp_path / "est.csv"
    write_estimates_csv(path, [est])
    rows = list(csv.reader(open(path)))
    assert tuple(rows[0]) == UpscaleEstimate.CSV_COLUMNS
    assert float(rows[1][8]) == 2.0 and rows[1][0] == "naive"
    fits = tmp_path / "fits.csv"
    write_rate_fits_csv(fits, {"a": fit_rate([(1, 1), (4, 0.5)]), "b": None})
    rows = list(csv.reader(open(fits)))
    assert rows[0][:5] == ["name", "slope", "intercept", "r2", "points_used"]
    assert float(rows[1][1]) == pytest.approx(-0.5) and rows[2][5] == "all points at noise floor"


def test_noise_floor_mask_excludes_unresolved_points():
    T = np.array([1.0, 2.0, 4.0])
    diffs = np.array([[1.0, 0.1, 0.01], [1.2, -0.1, 0.012]])
    tab = SystematicErrorTable("modified", T, diffs, np.zeros(2), diffs, PeriodicGrid(1, 4, 4.0), 0)
    np.testing.assert_array_equal(tab.noise_floor_mask(), [True, False, True])
