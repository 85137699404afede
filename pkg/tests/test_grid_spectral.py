"""
Tests for grids, transforms and norms.
"""
import numpy as np
import pytest

from aniso_decay.errors import GridError, RepresentationError
from aniso_decay.grid_spectral import (
    NormSpec,
    ScalarField,
    VelocityField,
    divergence_residual,
    get_fft_workers,
    hs_norm,
    lp_norm,
    make_grid,
    norm,
    sample,
    set_fft_workers,
    to_physical,
    to_spectral,
    transform,
)


class TestGrid:

    @pytest.mark.parametrize("args", [(15, 16, 1.0, 1.0), (16, 2, 1.0, 1.0),
                                      (16, 16, 0.0, 1.0), (16, 16, 1.0, -2.0)])
    def test_rejects_bad_parameters(self, args):
        with pytest.raises(GridError):
            make_grid(*args)

    def test_shapes_and_spacing(self, grid):
        assert grid.shape == (16, 16, 16)
        assert grid.spectral_shape == (16, 16, 9)
        assert grid.dx_h == pytest.approx(1.5)
        assert grid.dx_v == pytest.approx(0.5)
        assert grid.validity_time == pytest.approx(4.0)

    def test_coordinates_are_box_centered(self, grid):
        assert grid.x_h[grid.n_h // 2] == 0.0
        assert grid.x_v[0] == pytest.approx(-grid.L_v / 2)

    def test_half_spectrum_weights(self, grid):
        w = grid.half_spectrum_weights[0, 0]
        assert w[0] == 1.0 and w[-1] == 1.0
        assert np.all(w[1:-1] == 2.0)

    def test_dealias_mask_keeps_two_thirds(self, grid):
        m1, _, m3 = grid.mode_numbers
        mask = np.broadcast_to(grid.dealias_mask, grid.spectral_shape)
        assert not mask[np.broadcast_to(np.abs(m1) > 5, grid.spectral_shape)].any()
        assert not mask[np.broadcast_to(m3 > 5, grid.spectral_shape)].any()
        assert mask[0, 0, 5]

    def test_odd_wavenumbers_zero_nyquist(self, grid):
        _, _, k3 = grid.odd_wavenumbers
        assert k3[0, 0, -1] == 0.0
        assert grid.wavenumbers[2][0, 0, -1] != 0.0


class TestTransforms:

    def test_round_trip(self, grid, rng):
        f = ScalarField(grid, rng.standard_normal(grid.shape))
        back = to_physical(to_spectral(f))
        np.testing.assert_allclose(back.data, f.data, atol=1e-13)

    def test_zero_mode_is_the_integral(self):
        g = make_grid(32, 32, 16.0, 16.0)
        f = sample(g, lambda x1, x2, x3: np.exp(-(x1 ** 2 + x2 ** 2 + x3 ** 2)))
        f_hat = to_spectral(f).data
        assert f_hat[0, 0, 0].real == pytest.approx(np.pi ** 1.5, rel=1e-10)

    def test_transform_matches_continuous_fourier_transform(self):
        g = make_grid(32, 32, 16.0, 16.0)
        f = sample(g, lambda x1, x2, x3: np.exp(-(x1 ** 2 + x2 ** 2 + x3 ** 2)))
        f_hat = to_spectral(f).data
        k = g.wavenumbers[2][0, 0, 1]
        expected = np.pi ** 1.5 * np.exp(-k ** 2 / 4)
        assert f_hat[0, 0, 1] == pytest.approx(expected, rel=1e-10)

    def test_representation_is_checked(self, grid):
        f = ScalarField(grid, np.zeros(grid.shape))
        with pytest.raises(RepresentationError):
            transform(f, "inverse")
        with pytest.raises(RepresentationError):
            norm(to_spectral(f), NormSpec())

    def test_fields_are_read_only(self, grid):
        u = VelocityField.zeros(grid)
        with pytest.raises(ValueError):
            u.data[0, 0, 0, 0] = 1.0

    def test_shape_mismatch(self, grid):
        with pytest.raises(GridError):
            VelocityField(grid, np.zeros(grid.shape))

    def test_derivative_symbol(self, grid):
        k = 2 * np.pi / grid.L_v
        f = sample(grid, lambda x1, x2, x3: np.sin(k * x3) + 0 * x1)
        spectrum = to_spectral(f).data * grid.derivative_symbol((0, 0, 1))
        derivative = to_physical(ScalarField(grid, spectrum, "spectral")).data
        x3 = grid.coordinates()[2]
        np.testing.assert_allclose(derivative, np.broadcast_to(k * np.cos(k * x3), grid.shape),
                                   atol=1e-12)

    def test_fft_workers(self):
        before = get_fft_workers()
        set_fft_workers(2)
        assert get_fft_workers() == 2
        set_fft_workers(before)
        with pytest.raises(ValueError):
            set_fft_workers(0)


class TestNorms:

    def test_parseval(self, grid, rng):
        f = ScalarField(grid, rng.standard_normal(grid.shape))
        assert hs_norm(f, 0) == pytest.approx(lp_norm(f, 2), rel=1e-12)

    def test_interpolation_between_l1_and_linf(self, grid, rng):
        f = ScalarField(grid, rng.standard_normal(grid.shape))
        low, high = lp_norm(f, 1), lp_norm(f, np.inf)
        for p in (2, 3, 4):
            assert lp_norm(f, p) <= low ** (1 / p) * high ** (1 - 1 / p) * (1 + 1e-12)

    def test_sobolev_norm_of_a_single_mode(self):
        box = make_grid(16, 16, 2 * np.pi, 2 * np.pi)
        f = sample(box, lambda x1, x2, x3: np.cos(x1) + 0 * (x2 + x3))
        l2 = np.sqrt((2 * np.pi) ** 3 / 2)
        assert hs_norm(f, 0) == pytest.approx(l2, rel=1e-12)
        assert hs_norm(f, 1) == pytest.approx(np.sqrt(2) * l2, rel=1e-12)

    def test_mixed_norm_of_constant(self, grid):
        f = ScalarField(grid, np.full(grid.shape, 2.0))
        assert norm(f, NormSpec(np.inf, 1.0)) == pytest.approx(2.0 * grid.L_v)
        assert norm(f, NormSpec(1.0, np.inf)) == pytest.approx(2.0 * grid.L_h ** 2)
        assert lp_norm(f, 2) == pytest.approx(2.0 * np.sqrt(grid.volume))

    def test_mixed_norm_of_separable_function(self, grid):
        f = sample(grid, lambda x1, x2, x3: np.exp(-(x1 ** 2 + x2 ** 2)) * (1 + 0 * x3))
        # L^inf_h L^2_v of a(x_h) * 1 is max|a| * sqrt(L_v)
        assert norm(f, NormSpec(np.inf, 2.0)) == pytest.approx(np.sqrt(grid.L_v))

    def test_velocity_magnitude_and_components(self, grid):
        data = np.zeros((3, *grid.shape))
        data[0] = 3.0
        data[2] = 4.0
        u = VelocityField(grid, data)
        assert lp_norm(u, np.inf) == pytest.approx(5.0)
        assert lp_norm(u, np.inf, components=(2,)) == pytest.approx(4.0)

    def test_weighted_norm(self, grid):
        f = ScalarField(grid, np.ones(grid.shape))
        weighted = norm(f, NormSpec(1.0, np.inf, weight_power=1))
        expected = grid.radius_h.sum() * grid.dx_h ** 2
        assert weighted == pytest.approx(expected)

    def test_norm_spec_keys(self):
        assert NormSpec.lp(2).key == "L2"
        assert NormSpec.lp(np.inf).key == "Linf"
        assert NormSpec(np.inf, 1.0).key == "Linf_h-L1_v"
        assert NormSpec(1.0, np.inf, weight_power=1).key == "xh-L1_h-Linf_v"
        assert NormSpec(1.0, 1.0, alpha=(0, 0, 1)).key == "d001-L1"

    def test_norm_spec_validation(self):
        with pytest.raises(ValueError):
            NormSpec(0.5, 2.0)
        with pytest.raises(ValueError):
            NormSpec(2.0, 2.0, weight_power=2)
        with pytest.raises(ValueError):
            NormSpec(2.0, 2.0, alpha=(1, 1, 1))

    def test_divergence_residual(self, corollary_u0, grid):
        assert divergence_residual(corollary_u0) < 1e-12
        data = np.zeros((3, *grid.shape))
        data[0] = sample(grid, lambda x1, x2, x3: np.sin(2 * np.pi * x1 / grid.L_h) + 0 * x3).data
        assert divergence_residual(VelocityField(grid, data)) > 0.1
