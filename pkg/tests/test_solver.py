import numpy as np
import pandas as pd
import pytest

from aniso_decay.errors import CFLViolation, NonFiniteError
from aniso_decay.grid_spectral import VelocityField, lp_norm, make_grid, sample, to_physical, to_spectral
from aniso_decay.operators import heat_semigroup_h
from aniso_decay.presets import preset_initial_data
from aniso_decay.snapshots import make_schedule
from aniso_decay.solver import (
    EnergyLedger,
    SolverConfig,
    nonlinear_rhs,
    run,
    step,
    temporal_order,
)


def shear_flow(grid, amplitude=1.0):
    data = np.zeros((3, *grid.shape))
    data[0] = amplitude * sample(grid, lambda x1, x2, x3: np.sin(2 * np.pi * x3 / grid.L_v) + 0 * x1).data
    return VelocityField(grid, data, "physical", True)


class TestSolverConfig:

    @pytest.mark.parametrize("kwargs", [dict(dt=0.0, t_end=1.0), dict(dt=0.1, t_end=0.05),
                                        dict(dt=0.1, t_end=1.0, cfl_safety=1.5),
                                        dict(dt=0.1, t_end=1.0, scheme="euler")])
    def test_rejects(self, kwargs):
        with pytest.raises(ValueError):
            SolverConfig(**kwargs)


class TestNonlinearity:

    def test_shear_flow_is_a_stationary_nonlinear_state(self, grid):
        rhs = nonlinear_rhs(shear_flow(grid))
        assert rhs.divergence_free
        assert np.abs(rhs.data).max() < 1e-13

    def test_rhs_is_divergence_free(self, corollary_u0):
        rhs = nonlinear_rhs(corollary_u0)
        assert rhs.representation == "spectral"
        g = corollary_u0.grid
        k1, k2, k3 = g.odd_wavenumbers
        div = k1 * rhs.data[0] + k2 * rhs.data[1] + k3 * rhs.data[2]
        assert np.abs(div).max() < 1e-12 * max(np.abs(rhs.data).max(), 1.0)

    def test_nonlinearity_is_energy_neutral(self, grid):
        u = preset_initial_data("random-solenoidal", 1.0, grid, seed=5)
        band = to_spectral(u).data * grid.dealias_mask
        u = to_physical(VelocityField(grid, band, "spectral", True))
        rhs = to_physical(nonlinear_rhs(u))
        inner = np.sum(rhs.data * u.data) * grid.cell_volume
        assert abs(inner) < 1e-10 * lp_norm(rhs, 2) * lp_norm(u, 2)


class TestStep:

    def test_cfl_violation(self, grid):
        with pytest.raises(CFLViolation) as info:
            step(shear_flow(grid), 0.0, 1.0)
        assert info.value.dt == 1.0
        assert info.value.limit == pytest.approx(0.5 * grid.dx_v)

    def test_linear_step_is_the_semigroup(self, corollary_u0):
        stepped = to_physical(step(corollary_u0, 0.0, 0.2, linear_only=True))
        exact = to_physical(heat_semigroup_h(corollary_u0, 0.2))
        np.testing.assert_allclose(stepped.data, exact.data, atol=1e-13)

    def test_step_keeps_the_field_solenoidal(self, corollary_u0):
        assert step(corollary_u0, 0.0, 0.05).divergence_free


class TestRun:

    def test_snapshot_times_follow_the_schedule(self, short_store, short_schedule):
        np.testing.assert_allclose(short_store.times, short_schedule.times)
        assert short_store.schedule["per_octave"] == 2 * short_schedule.per_octave

    def test_linear_run_matches_the_semigroup(self, linear_store, corollary_u0):
        exact = to_physical(heat_semigroup_h(corollary_u0, 4.0))
        np.testing.assert_allclose(linear_store.at(4.0).data, exact.data, atol=1e-12)

    def test_energy_ledger(self, short_run):
        _, _, ledger = short_run
        assert ledger.balance_drift() < 1e-4
        assert ledger.energy_margin(0) == pytest.approx(0.5, abs=1e-4)
        for s in (1, 2):
            assert ledger.energy_margin(s) <= 1.0
        assert np.all(np.diff(ledger.dissipation[0]) >= 0)

    def test_heat_flow_balance_is_exact(self, corollary_u0):
        config = SolverConfig(dt=0.1, t_end=2.0, linear_only=True, progress=False)
        _, ledger = run(corollary_u0, config, [1.0, 2.0])
        assert ledger.balance_drift() < 1e-10

    def test_ledger_frame_round_trip(self, short_run):
        _, _, ledger = short_run
        frame = ledger.to_frame()
        assert list(frame.columns[:3]) == ["t", "energy_h0", "dissipation_h0"]
        again = EnergyLedger.from_frame(frame)
        assert again.times == ledger.times
        assert again.balance_drift() == ledger.balance_drift()

    def test_last_step_is_shortened_to_hit_snapshots(self, corollary_u0):
        config = SolverConfig(dt=0.3, t_end=1.0, linear_only=True, progress=False)
        store, ledger = run(corollary_u0, config, make_schedule(0.25, 0.5, 1, 1.0))
        assert store.times == [0.0, 0.25, 0.5, 1.0]
        assert ledger.times[-1] == 1.0

    def test_ledger_rejects_non_finite_energy(self):
        ledger = EnergyLedger()
        finite = {0: 1.0, 1: 1.0, 2: 1.0}
        with pytest.raises(NonFiniteError):
            ledger.record(0.0, {0: np.nan, 1: 1.0, 2: 1.0}, finite, 0.0)

    def test_ledger_rejects_time_going_backwards(self):
        ledger = EnergyLedger()
        values = {0: 1.0, 1: 1.0, 2: 1.0}
        ledger.record(0.0, values, values, 0.0)
        with pytest.raises(ValueError):
            ledger.record(0.0, values, values, 0.0)

    def test_ledger_frame_columns(self):
        frame = EnergyLedger().to_frame()
        assert isinstance(frame, pd.DataFrame)
        assert "tail_fraction" in frame.columns


class TestTemporalOrder:

    def test_fourth_order(self):
        g = make_grid(16, 16, 16.0, 8.0)
        u0 = preset_initial_data("corollary-phi", 1.0, g)
        assert 3.6 <= temporal_order(u0, 0.05, 0.5) <= 4.4
