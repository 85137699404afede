import numpy as np
import pandas as pd
import pytest

from aniso_decay.asymptotics import DecaySeries, fit_rate
from aniso_decay.presets import CheckResult
from aniso_decay.reports import (
    Report,
    read_fit_table,
    read_series_csv,
    series_file_name,
    write_fit_table,
    write_series_csv,
)


@pytest.fixture
def report():
    t = np.logspace(0, 2, 11)
    series = DecaySeries("uh-L2", t, 2.0 * t ** -0.5).scaled(0.5)
    out = Report("unit", "abc123", provenance={"grid": "16x16x16"})
    out.series[series.label] = series
    out.fits[series.label] = fit_rate(series)
    out.add_check(CheckResult("uh-L2", True, -0.5, "slope -0.500 +/- 0.1", "uh-decay"))
    return out


class TestReport:

    def test_passed(self, report):
        assert report.passed
        report.add_check(CheckResult("energy", False, 2.0, "<= 1", "energy-inequality"))
        assert not report.passed

    def test_text(self, report):
        report.warn("tail fit is rough")
        text = report.to_text()
        assert "experiment: unit" in text
        assert "grid: 16x16x16" in text
        assert "PASS uh-L2" in text
        assert "tail fit is rough" in text
        assert text.endswith("result: PASS\n")

    def test_warnings_go_to_the_log_at_warning_level(self, report, caplog):
        with caplog.at_level("WARNING", logger="aniso_decay.reports"):
            report.warn("tail fit is rough")
        (record,) = caplog.records
        assert record.levelname == "WARNING"
        assert record.getMessage() == "tail fit is rough"

    def test_write(self, report, tmp_path):
        path = report.write(tmp_path)
        assert path == tmp_path / "report.txt"
        assert (tmp_path / "series" / "uh-L2.csv").exists()
        checks = pd.read_csv(tmp_path / "checks.csv")
        assert checks["passed"].tolist() == [True]
        fits = read_fit_table(tmp_path / "fits.parquet")
        assert fits["slope"].iloc[0] == pytest.approx(-0.5, abs=1e-12)
        assert fits["n_samples"].dtype == np.int32

    def test_empty_report_writes(self, tmp_path):
        Report("empty", "-").write(tmp_path)
        assert read_fit_table(tmp_path / "fits.parquet").empty


class TestFiles:

    def test_series_file_name(self):
        assert series_file_name("xh-u3-L1_h-Linf_v") == "xh-u3-L1_h-Linf_v.csv"
        assert series_file_name("a/b c") == "a_b_c.csv"

    def test_series_round_trip(self, report, tmp_path):
        write_series_csv(report.series, tmp_path)
        loaded = read_series_csv(tmp_path)
        original = report.series["uh-L2"]
        np.testing.assert_array_equal(loaded["uh-L2"].values, original.values)
        np.testing.assert_array_equal(loaded["uh-L2"].scaled_values, original.scaled_values)

    def test_fit_table_round_trip(self, report, tmp_path):
        frame = report.fit_frame()
        write_fit_table(frame, tmp_path / "fits.parquet")
        pd.testing.assert_frame_equal(read_fit_table(tmp_path / "fits.parquet"),
                                      frame.astype({"n_samples": np.int32}))
