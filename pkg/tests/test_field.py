import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochhom.field import (
    CovarianceSpec,
    EdgeCoefficientField,
    FieldLaw,
    SpectrumError,
    child_seed,
    covariance_eval,
    periodized_covariance,
    sample_edge_coefficients,
    sample_gaussian,
    transform,
)
from stochhom.grid import PeriodicGrid


def test_covariance_closed_forms():
    exp1 = CovarianceSpec("exponential", 1.0, 1.0)
    assert covariance_eval(exp1, [0.0]) == 1.0
    assert covariance_eval(exp1, [1.0]) == pytest.approx(math.exp(-1), rel=1e-15)
    gau = CovarianceSpec("gaussian", 2.0, 2.0)
    assert covariance_eval(gau, [2.0, 0.0]) == pytest.approx(2 * math.exp(-1), rel=1e-15)
    assert covariance_eval(exp1, [3.0, 4.0]) == pytest.approx(math.exp(-5), rel=1e-15)


@given(st.sampled_from(["exponential", "gaussian"]), st.floats(0.1, 10), st.floats(0.1, 10),
       st.floats(0, 50), st.floats(0, 50))
def test_covariance_even_and_nonincreasing(kind, var, ell, r1, r2):
    spec = CovarianceSpec(kind, var, ell)
    assert covariance_eval(spec, [r1]) == covariance_eval(spec, [-r1])
    lo, hi = sorted((r1, r2))
    assert covariance_eval(spec, [hi]) <= covariance_eval(spec, [lo]) <= var


def test_covariance_spec_validation():
    for args in (("exponential", 0.0, 1.0), ("exponential", 1.0, -1.0), ("matern", 1.0, 1.0)):
        with pytest.raises(ValueError):
            CovarianceSpec(*args)


def test_periodized_covariance_matches_explicit_image_sum():
    spec = CovarianceSpec("exponential", 1.0, 6.0)
    N, h = 16, 1.0
    got = periodized_covariance((N,), h, spec)
    lags = np.arange(N) * h
    ref = np.array([math.fsum(math.exp(-abs(x + m * N * h) / 6.0) for m in range(-400, 401)) for x in lags])
    np.testing.assert_allclose(got, ref, rtol=1e-13)
    got2 = periodized_covariance((6, 6), 0.5, CovarianceSpec("gaussian", 1.0, 2.0))
    ref2 = np.zeros((6, 6))
    for i in range(6):
        for j in range(6):
            ref2[i, j] = math.fsum(
                math.exp(-(((i + 6 * m) * 0.5) ** 2 + ((j + 6 * n) * 0.5) ** 2) / 4.0)
                for m in range(-30, 31) for n in range(-30, 31)
            )
    np.testing.assert_allclose(got2, ref2, rtol=1e-13)


def test_transform_examples():
    g0 = np.zeros(1)
    assert transform(g0, FieldLaw.logitnormal(1.0, 9.0))[0] == 5.0
    assert transform(g0, FieldLaw.lognormal())[0] == 1.0
    assert transform(np.array([-0.3]), FieldLaw.two_phase(1.0, 4.0))[0] == 1.0
    assert transform(np.array([0.3]), FieldLaw.two_phase(1.0, 4.0))[0] == 4.0
    assert np.all(transform(np.ones(3), FieldLaw.constant(2.0)) == 2.0)


def test_lognormal_is_overflow_safe_and_clamped():
    out = transform(np.array([1e4, -1e4]), FieldLaw.lognormal())
    assert np.all(np.isfinite(out)) and np.all(out > 0)
    out = transform(np.array([5.0, -5.0, 0.0]), FieldLaw.lognormal(clamp=(0.1, 10.0)))
    np.testing.assert_array_equal(out, [10.0, 0.1, 1.0])


def test_law_validation_and_roundtrip():
    with pytest.raises(ValueError, match="bounds"):
        FieldLaw.logitnormal(9.0, 1.0)
    with pytest.raises(ValueError):
        FieldLaw.constant(-1.0)
    with pytest.raises(ValueError):
        FieldLaw.from_dict({"kind": "lognormal", "colour": 3})
    for law in (FieldLaw.lognormal(0.2, 0.5, 3.0, "gaussian", (0.1, 9.0)), FieldLaw.logitnormal(1, 9, 0.1),
                FieldLaw.two_phase(1, 4, phase_fraction=0.3), FieldLaw.constant(3.0)):
        assert FieldLaw.from_dict(law.to_dict()) == law


def test_child_seed_stable_and_distinct():
    assert child_seed(12, 3) == child_seed(12, 3)
    seeds = {child_seed(12, k) for k in range(100)} | {child_seed(13, k) for k in range(100)}
    assert len(seeds) == 200
    with pytest.raises(ValueError):
        child_seed(-1, 0)


def test_sampling_deterministic_and_seed_sensitive():
    grid = PeriodicGrid(2, 64, 64.0)
    law = FieldLaw.lognormal(0, 1, 4)
    f1 = sample_edge_coefficients(grid, law, 99)
    f2 = sample_edge_coefficients(grid, law, 99)
    f3 = sample_edge_coefficients(grid, law, 100)
    assert np.array_equal(f1.values, f2.values)
    assert np.any(f1.values != f3.values)
    assert not np.array_equal(f1.values[0], f1.values[1])


def test_constant_law_bypasses_sampling():
    grid = PeriodicGrid(2, 8, 8.0)
    f = sample_edge_coefficients(grid, FieldLaw.constant(3.0), 1)
    assert np.all(f.values == 3.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**63), st.sampled_from(["independent", "scalar"]), st.sampled_from([1, 2]))
def test_bounded_laws_stay_in_range(seed, coupling, d):
    grid = PeriodicGrid(d, 32, 32.0)
    for law in (FieldLaw.logitnormal(1.0, 9.0, 0.0, 4.0, 3.0), FieldLaw.two_phase(1.0, 4.0),
                FieldLaw.two_phase(1.0, 4.0, CovarianceSpec("exponential", 1.0, 2.0))):
        f = sample_edge_coefficients(grid, law, seed, coupling)
        assert f.values.min() >= 1.0 and f.values.max() <= law.bounds[1]


def test_scalar_coupling_reads_one_field():
    # the e_0 and e_1 faces of a cell are h/sqrt(2) apart, so with ell = 8 they correlate strongly
    grid = PeriodicGrid(2, 32, 32.0)
    law = FieldLaw.lognormal(0, 1, 8)
    f = sample_edge_coefficients(grid, law, 4, "scalar")
    g0, g1 = np.log(f.values[0]), np.log(f.values[1])
    assert np.corrcoef(g0.ravel(), g1.ravel())[0, 1] > 0.5
    fi = sample_edge_coefficients(grid, law, 4, "independent")
    assert abs(np.corrcoef(np.log(fi.values[0]).ravel(), np.log(fi.values[1]).ravel())[0, 1]) < 0.3


def test_negative_spectrum_policy():
    grid = PeriodicGrid(1, 64, 64.0)
    spec = CovarianceSpec("gaussian", 1.0, 8.0)
    sample_gaussian(grid, spec, 0)
    with pytest.raises(SpectrumError):
        sample_gaussian(grid, spec, 0, threshold=0.0)


def test_edge_field_validation():
    grid = PeriodicGrid(1, 4, 4.0)
    with pytest.raises(ValueError):
        EdgeCoefficientField(grid, np.ones((1, 3)))
    with pytest.raises(ValueError):
        EdgeCoefficientField(grid, np.array([[1.0, 0.0, 1.0, 1.0]]))
    with pytest.raises(ValueError):
        EdgeCoefficientField(grid, np.full((1, 4), 10.0), FieldLaw.logitnormal(1, 9))


M_DRAWS = 10_000


@pytest.fixture(scope="module")
def draws_1d():
    grid = PeriodicGrid(1, 256, 256.0)
    spec = CovarianceSpec("exponential", 1.0, 8.0)
    return spec, np.array([sample_gaussian(grid, spec, child_seed(2024, i)) for i in range(M_DRAWS)])


def test_site_variance(draws_1d):
    _, g = draws_1d
    v = g[:, 17].var()
    assert abs(v - 1.0) <= 3 * math.sqrt(2 / M_DRAWS)


def test_covariance_fidelity_and_stationarity(draws_1d):
    spec, g = draws_1d
    target = periodized_covariance((256,), 1.0, spec)
    for lag in (0, 8, 16):
        for site in (0, 100, 250):
            prod = g[:, site] * g[:, (site + lag) % 256]
            se = prod.std(ddof=1) / math.sqrt(M_DRAWS)
            assert abs(prod.mean() - target[lag]) <= 3 * se, (lag, site)
