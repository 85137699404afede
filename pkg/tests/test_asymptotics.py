"""
Tests for decay series, rate fitting, profiles and remainders.
"""
import numpy as np
import pytest

from aniso_decay.asymptotics import (
    DecaySeries,
    ProfileSet,
    compute_profiles,
    correction_integrand_series,
    data_norm_weighted,
    data_norm_xs,
    diagnostic_norms,
    fit_rate,
    grad_h_l2,
    horizontal_first_moment,
    horizontal_mass,
    nonlinear_correction,
    plateau_statistics,
    remainder_series,
    vertical_derivative,
)
from aniso_decay.errors import FitError, ProfileError
from aniso_decay.grid_spectral import VelocityField, sample
from aniso_decay.operators import GaussianSpec, gaussian_eval
from aniso_decay.presets import sample_initial_data


def power_series(power=-1.5, prefactor=3.0, label="power"):
    t = np.logspace(0, 2, 11)
    return DecaySeries(label, t, prefactor * t ** power)


class TestDecaySeries:

    def test_validation(self):
        with pytest.raises(ValueError):
            DecaySeries("x", [1.0, 2.0], [1.0])
        with pytest.raises(ValueError):
            DecaySeries("x", [2.0, 1.0], [1.0, 1.0])
        with pytest.raises(ValueError):
            DecaySeries("x", [1.0, 2.0], [1.0, -1.0])
        with pytest.raises(ValueError):
            DecaySeries("x", [1.0, 2.0], [1.0, np.nan])

    def test_scaled_and_window(self):
        series = power_series().scaled(1.5)
        np.testing.assert_allclose(series.scaled_values, 3.0)
        windowed = series.window(2.0, 50.0)
        assert windowed.times[0] >= 2.0 and windowed.times[-1] <= 50.0
        assert len(windowed.scaled_values) == len(windowed)

    def test_frame_round_trip(self):
        series = power_series().scaled(1.5)
        again = DecaySeries.from_frame(series.to_frame())
        assert again.label == "power"
        np.testing.assert_array_equal(again.times, series.times)
        np.testing.assert_array_equal(again.scaled_values, series.scaled_values)

    def test_is_zero(self):
        assert DecaySeries("z", [1.0, 2.0], [0.0, 0.0]).is_zero


class TestFitRate:

    def test_exact_power_law(self):
        fit = fit_rate(power_series())
        assert fit.slope == pytest.approx(-1.5, abs=1e-12)
        assert fit.prefactor == pytest.approx(3.0, rel=1e-10)
        assert fit.residual_rms < 1e-12
        assert fit.n_samples == 11

    def test_constant(self):
        assert fit_rate(power_series(power=0.0)).slope == pytest.approx(0.0, abs=1e-12)

    def test_logarithmic_correction_flattens_the_slope(self):
        t = np.logspace(2, 4, 21)
        fit = fit_rate(DecaySeries("log", t, np.log(t) / t))
        assert -0.9 < fit.slope < -0.8

    def test_scaling_keeps_the_slope(self):
        a = fit_rate(power_series(prefactor=1.0))
        b = fit_rate(power_series(prefactor=7.0))
        assert b.slope == pytest.approx(a.slope, abs=1e-12)
        assert b.intercept - a.intercept == pytest.approx(np.log(7.0))

    def test_window(self):
        fit = fit_rate(power_series(), window=(1.0, 10.0))
        assert fit.t_max == pytest.approx(10.0) and fit.n_samples == 6

    def test_too_few_samples(self):
        with pytest.raises(FitError):
            fit_rate(DecaySeries("x", [1.0, 10.0, 100.0], [1.0, 0.1, 0.01]))

    def test_short_span(self):
        t = np.linspace(1.0, 5.0, 9)
        with pytest.raises(FitError):
            fit_rate(DecaySeries("x", t, 1 / t))

    def test_nonpositive_values(self):
        t = np.logspace(0, 2, 6)
        with pytest.raises(FitError):
            fit_rate(DecaySeries("x", t, np.array([1.0, 0.5, 0.0, 0.1, 0.1, 0.1])))


class TestPlateau:

    def test_flat_scaled_values(self):
        cv, ratio = plateau_statistics(power_series().scaled(1.5), (1.0, 100.0))
        assert cv == pytest.approx(0.0, abs=1e-12)
        assert ratio == pytest.approx(1.0)

    def test_needs_two_samples(self):
        with pytest.raises(FitError):
            plateau_statistics(power_series(), (1.0, 1.1))


class TestProfiles:

    def test_gaussian_mass(self, grid):
        f = sample(grid, lambda x1, x2, x3: gaussian_eval(GaussianSpec("horizontal", 2.0), (x1, x2)) + 0 * x3)
        np.testing.assert_allclose(horizontal_mass(f).values, 1.0, rtol=1e-6)
        first = horizontal_first_moment(f)
        assert np.abs(first[0].values).max() < 1e-6

    def test_corollary_data_has_no_vertical_mass(self, corollary_u0):
        assert np.abs(horizontal_mass(corollary_u0.component(2)).values).max() < 1e-10

    def test_corollary_mass_profiles(self, resolved_grid):
        u0 = sample_initial_data("corollary-phi", resolved_grid)
        x3 = resolved_grid.x_v
        np.testing.assert_allclose(horizontal_mass(u0.component(1)).values,
                                   -x3 * np.pi * np.exp(-x3 ** 2), rtol=0, atol=1e-8)
        vertical_mass = horizontal_mass(u0.component(2)).values
        assert np.abs(vertical_mass).max() < 1e-8
        assert np.abs(vertical_derivative(resolved_grid, vertical_mass)).max() < 1e-8

    def test_corollary_first_moments(self, resolved_grid):
        u0 = sample_initial_data("corollary-phi", resolved_grid)
        x3 = resolved_grid.x_v
        y1, y2 = horizontal_first_moment(u0.component(2))
        assert np.abs(y1.values).max() < 1e-8
        np.testing.assert_allclose(y2.values, np.pi / 2 * np.exp(-x3 ** 2), rtol=0, atol=1e-8)

    def test_vertical_moment_derivative_is_the_horizontal_mass(self, resolved_grid):
        u0 = sample_initial_data("corollary-phi", resolved_grid)
        moments = horizontal_first_moment(u0.component(2))
        for k in (0, 1):
            mass = horizontal_mass(u0.component(k)).values
            np.testing.assert_allclose(vertical_derivative(resolved_grid, moments[k].values), mass,
                                       rtol=0, atol=1e-8)

    def test_vertical_derivative(self, grid):
        k = 2 * np.pi / grid.L_v
        x3 = grid.x_v
        np.testing.assert_allclose(vertical_derivative(grid, np.sin(k * x3)), k * np.cos(k * x3), atol=1e-12)

    def test_missing_profile(self):
        with pytest.raises(ProfileError):
            ProfileSet().require("mass_3")

    def test_zero_flow_has_zero_corrections(self, zero_store):
        for kind in ("horizontal", "vertical-second-order"):
            profiles = nonlinear_correction(zero_store, kind)
            for profile in profiles:
                assert not profile.values.any()
                assert profile.tail_estimate == 0.0
                assert profile.warning is None

    def test_unknown_correction_kind(self, zero_store):
        with pytest.raises(ValueError):
            correction_integrand_series(zero_store, "diagonal")

    def test_compute_profiles(self, short_store):
        profiles = compute_profiles(short_store)
        assert len(profiles.require("correction_h")) == 2
        assert profiles.require("mass_3").values.shape == (short_store.grid.n_v,)
        assert isinstance(profiles.warnings, list)


class TestRemainders:

    def test_nonlinear_expansion_needs_corrections(self, short_store):
        with pytest.raises(ProfileError):
            remainder_series(short_store, "uh-leading", 2.0)

    def test_linear_remainder(self, linear_store):
        series = remainder_series(linear_store, "u3-linear", 2.0)
        assert series.label == "u3-linear-L2"
        assert series.scale_power == pytest.approx(0.75)
        assert series.times[-1] <= linear_store.grid.validity_time

    def test_unknown_expansion(self, linear_store):
        with pytest.raises(ValueError):
            remainder_series(linear_store, "u3-cubic", 2.0)


class TestDiagnostics:

    def test_linear_store_matches_its_linear_evolution(self, linear_store):
        norms = diagnostic_norms(linear_store, ["u3-L2", "linear-u3-L2"])
        np.testing.assert_allclose(norms["u3-L2"].values, norms["linear-u3-L2"].values, rtol=1e-10)

    def test_unknown_key(self, linear_store):
        with pytest.raises(ValueError):
            diagnostic_norms(linear_store, ["u9-L2"])

    def test_grad_h_vanishes_on_shear_flow(self, grid):
        data = np.zeros((3, *grid.shape))
        data[0] = sample(grid, lambda x1, x2, x3: np.cos(2 * np.pi * x3 / grid.L_v) + 0 * x1).data
        assert grad_h_l2(VelocityField(grid, data)) < 1e-12

    def test_weighted_data_norm_dominates(self, corollary_u0):
        xs = data_norm_xs(corollary_u0, 2)
        assert xs > 0
        assert data_norm_weighted(corollary_u0, 2) > xs
