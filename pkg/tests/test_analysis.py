import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from app.services.analysis import (
    AnalysisError,
    NormSpec,
    diagnostics_row,
    edge_jump,
    entropy,
    fit_lower_bound,
    fourier_decay_exponent,
    gaussian,
    interpolation_inequality_check,
    lower_bound_margin,
    lp_norm,
    maxwellian_for,
    moments,
    shell_spectrum,
    sobolev_norm,
    translation_weight_check,
    weighted_young_check,
)
from app.services.grid import Field, make_grid


def _maxwellian(grid, mass=1.0, mean=None, temperature=1.0):
    mean = [0.0] * grid.dimension if mean is None else mean
    return Field(grid, gaussian(grid, mass, mean, temperature), nonneg=True)


def test_lp_norms_of_a_constant(grid8):
    f = Field(grid8, np.ones(grid8.shape))
    assert lp_norm(f, 1.0) == pytest.approx(64.0)
    assert lp_norm(f, 2.0) == pytest.approx(8.0)
    assert lp_norm(f, math.inf) == 1.0
    with pytest.raises(AnalysisError):
        lp_norm(f, 0.5)


def test_weighted_norm_grows_with_weight(gaussian16):
    assert lp_norm(gaussian16, 2.0, 2.0) > lp_norm(gaussian16, 2.0, 0.0)
    assert lp_norm(gaussian16, 2.0, -2.0) < lp_norm(gaussian16, 2.0, 0.0)


def test_sobolev_norm_of_order_zero_is_l2(gaussian16):
    assert sobolev_norm(gaussian16, 0.0) == pytest.approx(lp_norm(gaussian16, 2.0), rel=1e-12)
    assert sobolev_norm(gaussian16, 1.0) > sobolev_norm(gaussian16, 0.5)
    with pytest.raises(AnalysisError):
        sobolev_norm(gaussian16, -1.0)


def test_norm_spec_dispatches(gaussian16):
    assert NormSpec("lebesgue", p=2.0)(gaussian16) == pytest.approx(lp_norm(gaussian16))
    assert NormSpec("sobolev", s=1.0)(gaussian16) == pytest.approx(sobolev_norm(gaussian16, 1.0))
    with pytest.raises(AnalysisError):
        NormSpec("besov")
    with pytest.raises(AnalysisError):
        NormSpec("lebesgue", p=0.5)


def test_entropy_of_a_constant(grid8):
    f = Field(grid8, np.full(grid8.shape, 0.5))
    assert entropy(f) == pytest.approx(64.0 * 0.5 * math.log(0.5))


def test_entropy_treats_zero_as_zero(grid8):
    values = np.zeros(grid8.shape)
    values[2, 2] = 1.0
    assert entropy(Field(grid8, values)) == 0.0


def test_entropy_clips_round_off_and_rejects_negative_fields(grid8):
    values = np.full(grid8.shape, 0.5)
    values[0, 0] = -1e-13
    assert math.isfinite(entropy(Field(grid8, values)))
    values[0, 0] = -1e-3
    with pytest.raises(AnalysisError):
        entropy(Field(grid8, values))


def test_moments_of_a_resolved_gaussian():
    # the box must hold the tail to ~1e-10 for a 1e-5 temperature check
    f = _maxwellian(make_grid(2, 32, 8.0), mass=2.0, mean=[0.5, -0.25], temperature=1.2)
    m = moments(f)
    assert m.mass == pytest.approx(2.0, rel=1e-6)
    assert np.allclose(m.mean_velocity, [0.5, -0.25], atol=1e-6)
    assert m.temperature == pytest.approx(1.2, rel=1e-5)
    assert m.energy == pytest.approx(2.0 * (2 * 1.2 + 0.5**2 + 0.25**2), rel=1e-5)


def test_maxwellian_for_a_gaussian_is_itself(grid16):
    f = _maxwellian(grid16, mass=2.0, mean=[0.5, 0.0], temperature=1.2)
    projected = maxwellian_for(f)
    assert np.allclose(projected.values, f.values, atol=1e-6 * f.values.max())


def test_maxwellian_for_matches_discrete_moments(grid16):
    coords = grid16.coordinates()
    values = np.where(np.hypot(coords[0] - 0.5, coords[1]) < 2.0, 1.0, 0.0)
    f = Field(grid16, values, nonneg=True)
    target, projected = moments(f), moments(maxwellian_for(f))
    assert projected.mass == pytest.approx(target.mass, rel=1e-12)
    assert np.allclose(projected.mean_velocity, target.mean_velocity, atol=1e-4)
    assert projected.temperature == pytest.approx(target.temperature, rel=1e-3)
    assert entropy(maxwellian_for(f)) <= entropy(f)


def test_maxwellian_for_needs_mass(grid8):
    with pytest.raises(AnalysisError):
        maxwellian_for(Field(grid8, np.zeros(grid8.shape)))


def test_fitted_lower_bound_holds(gaussian16):
    k0, a0 = fit_lower_bound(gaussian16)
    assert k0 > 0 and a0 > 0
    assert lower_bound_margin(gaussian16, k0, a0) > 0


def test_lower_bound_margin_detects_violation(gaussian16):
    assert lower_bound_margin(gaussian16, 10.0, 0.5) < 0
    with pytest.raises(AnalysisError):
        lower_bound_margin(gaussian16, 1.0, 0.5, q0=1.0)


def test_shell_spectrum_zero_shell_holds_the_mean(grid8):
    f = Field(grid8, np.ones(grid8.shape))
    shells, spectrum = shell_spectrum(f)
    assert shells[0] == 0
    assert spectrum[0] > 0
    assert np.allclose(spectrum[1:], 0.0, atol=1e-12)


def test_fourier_decay_separates_smooth_from_rough():
    grid = make_grid(2, 32, 8.0)
    smooth = fourier_decay_exponent(_maxwellian(grid))
    rough = fourier_decay_exponent(Field(grid, np.random.default_rng(11).random(grid.shape)))
    assert smooth > 4.0
    assert rough < 1.5
    with pytest.raises(AnalysisError):
        fourier_decay_exponent(_maxwellian(grid), band=(100.0, 200.0))


def test_young_equality_for_nonnegative_l1_data(grid16):
    f = _maxwellian(grid16)
    g = _maxwellian(grid16, mean=[1.0, 0.0], temperature=0.5)
    result = weighted_young_check(f, g, 1.0, 1.0, 1.0, 0.0)
    assert result.lhs == pytest.approx(result.rhs, rel=1e-10)
    assert result.passed


def test_weighted_young_with_maxwellians(grid16):
    f = _maxwellian(grid16)
    result = weighted_young_check(f, f, 4.0 / 3.0, 4.0 / 3.0, 2.0, 1.0)
    assert result.passed
    assert result.ratio < 1.0


def test_young_rejects_bad_exponents(gaussian16):
    with pytest.raises(AnalysisError):
        weighted_young_check(gaussian16, gaussian16, 2.0, 2.0, 2.0, 0.0)


@settings(max_examples=25, deadline=None)
@given(
    seed=st.integers(min_value=0, max_value=2**32 - 1),
    eta=st.floats(min_value=-2.0, max_value=2.0),
)
def test_weighted_young_holds_for_random_data(seed, eta):
    grid = make_grid(2, 8, 4.0)
    rng = np.random.default_rng(seed)
    f = Field(grid, rng.random(grid.shape))
    g = Field(grid, rng.random(grid.shape))
    assert weighted_young_check(f, g, 2.0, 1.0, 2.0, eta).passed


def test_translation_without_shift_or_weight_is_an_equality(gaussian16):
    still = translation_weight_check(gaussian16, (0, 0), 2.0, 1.0, 1.0)
    assert still.lhs == pytest.approx(still.rhs)
    unweighted = translation_weight_check(gaussian16, (2, -1), 2.0, 0.0, 0.0)
    assert unweighted.lhs == pytest.approx(unweighted.rhs)


@settings(max_examples=25, deadline=None)
@given(
    seed=st.integers(min_value=0, max_value=2**32 - 1),
    dx=st.integers(min_value=-3, max_value=3),
    dy=st.integers(min_value=-3, max_value=3),
    k1=st.floats(min_value=-2.0, max_value=2.0),
    k2=st.floats(min_value=0.0, max_value=3.0),
)
def test_translation_weight_inequality(seed, dx, dy, k1, k2):
    grid = make_grid(2, 8, 4.0)
    f = Field(grid, np.random.default_rng(seed).random(grid.shape))
    assert translation_weight_check(f, (dx, dy), 2.0, k1, k2).passed


def test_interpolation_inequality(gaussian16):
    result = interpolation_inequality_check(gaussian16, 0.0, 2.0, 1.0)
    assert result.passed
    assert result.lhs <= result.rhs * (1.0 + 1e-10)


def test_edge_jump_of_an_indicator():
    grid = make_grid(2, 32, 8.0)
    coords = grid.coordinates()
    f = Field(grid, np.where(np.hypot(coords[0], coords[1]) < 3.0, 1.0, 0.0))
    jump = edge_jump(f, 3.0)
    assert jump.amplitude == pytest.approx(1.0)
    assert jump.inside == pytest.approx(1.0)
    assert jump.outside == pytest.approx(0.0)
    assert np.allclose(jump.edge_point, [3.0, 0.0])


def test_edge_jump_of_a_continuous_field_is_small():
    grid = make_grid(2, 32, 8.0)
    jump = edge_jump(_maxwellian(grid), 2.0)
    assert abs(jump.amplitude) < 0.02


def test_edge_jump_needs_room(grid8):
    f = Field(grid8, np.ones(grid8.shape))
    with pytest.raises(AnalysisError):
        edge_jump(f, 10.0)


def test_diagnostics_row_of_a_maxwellian(gaussian16):
    row = diagnostics_row(gaussian16, 0.5, dt=0.1, extra={"steps": 3.0})
    assert row.t == 0.5
    assert row.mass == pytest.approx(1.0, rel=1e-6)
    assert row.l1_to_maxwellian < 1e-6
    assert row.header()[:4] == ["t", "mass", "momentum_0", "momentum_1"]
    assert row.header()[-1] == "steps"
    assert len(row.csv_values()) == len(row.header())


def test_lp_norm_with_a_large_exponent_stays_finite(grid8):
    f = Field(grid8, np.full(grid8.shape, 100.0))
    assert lp_norm(f, 1000.0) == pytest.approx(100.0 * 64.0**0.001)
    assert lp_norm(f, 1000.0, k=2.0) <= lp_norm(f, math.inf, k=2.0) * 64.0**0.001


def test_weighted_young_with_a_large_target_exponent(grid8):
    rng = np.random.default_rng(5)
    f = Field(grid8, 50.0 * rng.random(grid8.shape))
    g = Field(grid8, 50.0 * rng.random(grid8.shape))
    r = 1000.0
    q = 1.0 / (1.0 + 1.0 / r - 0.5)
    result = weighted_young_check(f, g, 2.0, q, r, 2.0)
    assert math.isfinite(result.lhs)
    assert math.isfinite(result.rhs)
    assert result.passed
