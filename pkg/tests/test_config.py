try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import pytest

from aniso_decay.config import (
    CONFIG_PRESETS,
    DiagnosticsParams,
    ExperimentConfig,
    GridParams,
    SolverParams,
    config_from_dict,
    load_config,
    preset_config,
)
from aniso_decay.errors import ConfigError


class TestValidation:

    def test_defaults_are_valid(self):
        config = ExperimentConfig()
        assert config.grid.build().validity_time == pytest.approx(64.0)

    def test_horizon_beyond_the_validity_window(self):
        with pytest.raises(ConfigError) as info:
            ExperimentConfig(grid=GridParams(16, 16, 24.0, 8.0), solver=SolverParams(dt=0.05, t_end=8.0),
                             diagnostics=DiagnosticsParams(fit_window=(0.5, 5.0)))
        assert "validity window" in str(info.value)
        assert "L_h=24.0" in str(info.value)

    def test_fit_window_inside_the_run(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(diagnostics=DiagnosticsParams(fit_window=(5.0, 80.0)))

    def test_bad_grid_is_a_config_error(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(grid=GridParams(15, 16, 96.0, 12.0))

    def test_bad_solver_is_a_config_error(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(solver=SolverParams(dt=-0.1))


class TestToml:

    def test_load(self, tmp_path):
        path = tmp_path / "small.toml"
        path.write_text(
            "[grid]\nn_h = 16\nn_v = 16\nL_h = 24\nL_v = 8\n\n"
            "[solver]\ndt = 0.05\nt_end = 4\n\n"
            "[data]\neta = 0.5\n\n"
            "[diagnostics]\nfit_window = [0.4, 4]\nterms = [\"Dh1\"]\n")
        config = load_config(path)
        assert config.name == "small"
        assert config.grid.L_h == 24.0 and isinstance(config.grid.L_h, float)
        assert config.diagnostics.fit_window == (0.4, 4.0)
        assert config.diagnostics.terms == ("Dh1",)

    def test_unknown_key(self):
        with pytest.raises(ConfigError) as info:
            config_from_dict({"grid": {"nh": 16}})
        assert "nh" in str(info.value)

    def test_unknown_section(self):
        with pytest.raises(ConfigError):
            config_from_dict({"mesh": {}})

    @pytest.mark.parametrize("raw", [{"grid": {"n_h": 16.5}}, {"solver": {"linear_only": 1}},
                                     {"solver": {"dt": "small"}}, {"diagnostics": {"terms": "Dh1"}}])
    def test_bad_types(self, raw):
        with pytest.raises(ConfigError):
            config_from_dict(raw)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.toml")

    def test_unparseable_file(self, tmp_path):
        path = tmp_path / "broken.toml"
        path.write_text("[grid\n")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_to_toml_round_trip(self, tmp_path):
        config = preset_config("smoke")
        path = tmp_path / "smoke.toml"
        path.write_text(config.to_toml())
        again = load_config(path)
        assert again == config
        assert again.config_hash == config.config_hash

    def test_infinite_norms_survive(self):
        text = ExperimentConfig().to_toml()
        raw = tomllib.loads(text)
        assert raw["diagnostics"]["remainder_norms"] == [2.0, float("inf")]


class TestOverridesAndPresets:

    def test_overrides(self):
        config = preset_config("smoke").with_overrides(**{"data.eta": 0.2, "solver.linear_only": True,
                                                          "output.directory": None})
        assert config.data.eta == 0.2
        assert config.solver.linear_only
        assert config.output.directory == "runs/smoke"

    def test_override_unknown_section(self):
        with pytest.raises(ConfigError):
            ExperimentConfig().with_overrides(**{"mesh.n": 3})

    def test_override_is_validated(self):
        with pytest.raises(ConfigError):
            ExperimentConfig().with_overrides(**{"data.eta": -1.0})

    def test_hash_changes_with_content(self):
        a = preset_config("smoke")
        assert a.config_hash != a.with_overrides(**{"data.eta": 0.02}).config_hash

    @pytest.mark.parametrize("name", CONFIG_PRESETS)
    def test_presets(self, name):
        config = preset_config(name)
        assert config.name == name

    def test_linear_preset(self):
        config = preset_config("linear-decay")
        assert config.solver.linear_only and not config.diagnostics.refine_check

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            preset_config("turbulence")

    def test_schedule_contains_the_windows(self):
        config = preset_config("smoke")
        times = list(config.schedule().times)
        for t in (*config.diagnostics.fit_window, *config.diagnostics.residual_times):
            assert any(abs(s - t) < 1e-9 for s in times)
        assert config.solver_config(progress=False).dt == 0.05
