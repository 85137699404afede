"""
Report assembly and emission: one CSV per diagnostic series, a parquet fit
table, a CSV of checks and a plain-text summary.
"""
import logging
import os
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np
import pandas as pd
import pyarrow as pa
import pyarrow.parquet as pq

from aniso_decay.asymptotics import DecaySeries, RateFit
from aniso_decay.presets import CheckResult

logger = logging.getLogger(__name__)

PACKAGE_NAME = "anisotropic-ns-decay"

FIT_SCHEMA = pa.schema([
    ("series_label", pa.string()),
    ("slope", pa.float64()),
    ("intercept", pa.float64()),
    ("residual_rms", pa.float64()),
    ("n_samples", pa.int32()),
    ("t_min", pa.float64()),
    ("t_max", pa.float64()),
])


def code_version() -> str:
    try:
        return metadata.version(PACKAGE_NAME)
    except metadata.PackageNotFoundError:
        return "unknown"


@dataclass
class Report:
    """
    Everything a run produced that is worth keeping: fitted rates, checks
    against the expectation table, warnings and a provenance block.
    """
    name: str
    config_hash: str
    provenance: dict = field(default_factory=dict)
    series: dict[str, DecaySeries] = field(default_factory=dict)
    fits: dict[str, RateFit] = field(default_factory=dict)
    checks: list[CheckResult] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    code_version: str = field(default_factory=code_version)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def add_check(self, check: CheckResult) -> None:
        level = logging.INFO if check.passed else logging.WARNING
        logger.log(level, f"{'PASS' if check.passed else 'FAIL'} {check.name}: "
                          f"measured {check.measured:.4g}, expected {check.expected} [{check.source}]")
        self.checks.append(check)

    def warn(self, message: str) -> None:
        logger.warning(message)
        self.warnings.append(message)

    def fit_frame(self) -> pd.DataFrame:
        rows = [{"series_label": label, "slope": fit.slope, "intercept": fit.intercept,
                 "residual_rms": fit.residual_rms, "n_samples": fit.n_samples,
                 "t_min": fit.t_min, "t_max": fit.t_max}
                for label, fit in sorted(self.fits.items())]
        return pd.DataFrame(rows, columns=FIT_SCHEMA.names)

    def check_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [{"name": c.name, "passed": c.passed, "measured": c.measured, "expected": c.expected,
              "source": c.source, "detail": c.detail} for c in self.checks],
            columns=["name", "passed", "measured", "expected", "source", "detail"])

    def to_text(self) -> str:
        lines = [
            f"experiment: {self.name}",
            f"config hash: {self.config_hash}",
            f"code version: {self.code_version}",
            "",
            "provenance:",
        ]
        for key, value in self.provenance.items():
            lines.append(f"  {key}: {value}")
        lines += ["", "fits:"]
        for label, fit in sorted(self.fits.items()):
            lines.append(f"  {label:<40} slope {fit.slope:+.4f}  rms {fit.residual_rms:.2e}  "
                         f"n={fit.n_samples}  [{fit.t_min:g}, {fit.t_max:g}]")
        lines += ["", "checks:"]
        for check in self.checks:
            status = "PASS" if check.passed else "FAIL"
            lines.append(f"  {status} {check.name:<36} measured {check.measured:+.4g}  "
                         f"expected {check.expected}  [{check.source}] {check.detail}")
        if self.warnings:
            lines += ["", "warnings:"]
            lines += [f"  {w}" for w in self.warnings]
        lines += ["", f"result: {'PASS' if self.passed else 'FAIL'}"]
        return "\n".join(lines) + "\n"

    def write(self, directory: str | os.PathLike) -> Path:
        """
        Write series CSVs, fits.parquet, checks.csv and report.txt.

        Args:
            directory: output directory; created if missing.

        Returns: path of report.txt.
        """
        directory = Path(directory)
        write_series_csv(self.series, directory / "series")
        write_fit_table(self.fit_frame(), directory / "fits.parquet")
        self.check_frame().to_csv(directory / "checks.csv", index=False)
        path = directory / "report.txt"
        path.write_text(self.to_text())
        logger.info(f"report written to {path}")
        return path


def series_file_name(label: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in label) + ".csv"


def write_series_csv(series: dict[str, DecaySeries], directory: str | os.PathLike) -> list[Path]:
    """One CSV per series with columns series_label, t, value, scaled_value."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for label, s in series.items():
        path = directory / series_file_name(label)
        s.to_frame().to_csv(path, index=False, float_format="%.17g")
        paths.append(path)
    return paths


def read_series_csv(directory: str | os.PathLike) -> dict[str, DecaySeries]:
    out = {}
    for path in sorted(Path(directory).glob("*.csv")):
        frame = pd.read_csv(path)
        if len(frame):
            series = DecaySeries.from_frame(frame)
            out[series.label] = series
    return out


def write_fit_table(frame: pd.DataFrame, path: str | os.PathLike) -> None:
    table = pa.Table.from_pandas(frame.astype({"n_samples": np.int32}), schema=FIT_SCHEMA,
                                 preserve_index=False)
    pq.write_table(table, path)


def read_fit_table(path: str | os.PathLike) -> pd.DataFrame:
    return pd.read_parquet(path, engine="pyarrow")
