"""
Experiment pipeline: set up the initial data, solve, persist, run the
diagnostics and emit the report.

Output directory layout:

    config.toml          the resolved configuration
    snapshots/           ANS1 files and manifest.parquet
    ledger.csv           energy ledger, one row per step
    series/*.csv         one file per diagnostic series
    fits.parquet         fitted rates
    checks.csv           pass/fail table
    report.txt           human-readable summary
"""
import logging
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pandas as pd

from aniso_decay.asymptotics import (
    EXPANSIONS,
    DecaySeries,
    compute_profiles,
    correction_integrand_series,
    data_norm_weighted,
    data_norm_xs,
    diagnostic_norms,
    fit_rate,
    horizontal_mass,
    remainder_series,
)
from aniso_decay.config import ExperimentConfig, load_config
from aniso_decay.duhamel import (
    DuhamelTermId,
    horizontal_mode_violations,
    reconstruction_residuals,
    term_decay_series,
)
from aniso_decay.errors import AnisoDecayError, FitError, ScheduleError, StageError
from aniso_decay.grid_spectral import NormSpec, VelocityField, get_fft_workers, norm
from aniso_decay.operators import heat_semigroup_h
from aniso_decay.presets import (
    CheckResult,
    corollary_expectations,
    duhamel_expectations,
    evaluate,
    linear_expectations,
    nonlinear_expectations,
    PROJECTION_TOL,
    preset_initial_data,
    projection_change,
    sample_initial_data,
)
from aniso_decay.reports import Report
from aniso_decay.snapshots import SnapshotStore
from aniso_decay.solver import EnergyLedger, run

logger = logging.getLogger(__name__)

CONFIG_NAME = "config.toml"
SNAPSHOT_DIR = "snapshots"
LEDGER_NAME = "ledger.csv"

ENERGY_MARGIN_TOL = 1e-4
ENERGY_DRIFT_TOL = 1e-4
RECONSTRUCTION_TOL = 1e-3
REFINEMENT_RATIO = 0.6
LINEAR_AGREEMENT_TOL = 1e-12
MASS_TOL = 1e-10
TAIL_THRESHOLD = 1e-8


@contextmanager
def stage(name: str):
    logger.info(f"stage {name}")
    try:
        yield
    except StageError:
        raise
    except (AnisoDecayError, ValueError, OSError) as e:
        raise StageError(name, e) from e


def run_experiment(config: ExperimentConfig, out_dir: str | Path | None = None) -> Report:
    """
    Run one experiment end to end and write every artifact.

    Args:
        config: the validated experiment configuration.
        out_dir: output directory, config.output.directory by default.

    Returns: the Report; report.passed tells whether every check held.

    Raises: StageError naming the stage that failed.
    """
    out = Path(out_dir or config.output.directory)
    with stage("setup"):
        out.mkdir(parents=True, exist_ok=True)
        (out / CONFIG_NAME).write_text(config.to_toml())
        grid = config.grid.build()
        u0 = preset_initial_data(config.data.preset, config.data.eta, grid, config.data.seed)
        schedule = config.schedule()
        logger.info(f"{config.name}: grid {grid.shape}, L_h={grid.L_h}, L_v={grid.L_v}, "
                    f"{len(schedule.times)} snapshot times up to t={config.solver.t_end}")

    refine = config.diagnostics.refine_check and not config.solver.linear_only
    with stage("solve"):
        if refine:
            # the refined schedule contains the configured one, so one run serves both
            fine, ledger = run(u0, config.solver_config(), schedule.refine())
            store = fine.subsample(schedule.times)
            store.schedule = schedule.descriptor
        else:
            fine = None
            store, ledger = run(u0, config.solver_config(), schedule)

    with stage("persist"):
        if config.output.save_snapshots:
            store.save(out / SNAPSHOT_DIR)
        ledger.to_frame().to_csv(out / LEDGER_NAME, index=False, float_format="%.17g")

    with stage("diagnostics"):
        report = analyze_store(store, config, ledger)
        if fine is not None:
            refinement_check(report, store, fine, config.diagnostics.residual_times)

    with stage("report"):
        report.write(out)
    logger.info(f"{config.name}: {'PASS' if report.passed else 'FAIL'} "
                f"({sum(c.passed for c in report.checks)}/{len(report.checks)} checks)")
    return report


def analyze(directory: str | Path) -> Report:
    """
    Re-run the diagnostics on a persisted experiment and rewrite its report.

    The refinement check needs a second solver run and is not repeated.
    """
    directory = Path(directory)
    with stage("setup"):
        config = load_config(directory / CONFIG_NAME)
        store = SnapshotStore.load(directory / SNAPSHOT_DIR)
        ledger_path = directory / LEDGER_NAME
        ledger = EnergyLedger.from_frame(pd.read_csv(ledger_path)) if ledger_path.exists() else None
    with stage("diagnostics"):
        report = analyze_store(store, config, ledger)
    with stage("report"):
        report.write(directory)
    return report


def provenance(store: SnapshotStore, config: ExperimentConfig) -> dict:
    grid = store.grid
    u0 = store.initial
    return {
        "grid": f"{grid.n_h}x{grid.n_h}x{grid.n_v}, L_h={grid.L_h:g}, L_v={grid.L_v:g}",
        "validity window": f"t <= {grid.validity_time:g}",
        "initial data": f"{config.data.preset}, eta={config.data.eta:g}, seed={config.data.seed}",
        "dynamics": "linear (exp(t Delta_h) u0)" if config.solver.linear_only else "nonlinear",
        "time step": f"dt={config.solver.dt:g}, t_end={config.solver.t_end:g}",
        "snapshots": f"{len(store)} in [0, {store.t_max:g}]",
        "fft workers": get_fft_workers(),
        "||u0||_X^2": f"{data_norm_xs(u0, 2):.6e}",
        "||u0||_X~^2": f"{data_norm_weighted(u0, 2):.6e}",
        "calibration": "preset parameters chosen so the fit window lies in the validity window",
    }


def _passed(name: str, measured: float, ok: bool, expected: str, source: str,
            detail: str = "") -> CheckResult:
    return CheckResult(name, bool(ok), float(measured), expected, source, detail)


def energy_checks(report: Report, ledger: EnergyLedger) -> None:
    for sigma in (0, 1, 2):
        margin = ledger.energy_margin(sigma)
        report.add_check(_passed(f"energy-inequality-H{sigma}", margin,
                                 margin <= 1 + ENERGY_MARGIN_TOL,
                                 f"<= {1 + ENERGY_MARGIN_TOL:g}", "energy-inequality"))
    drift = ledger.balance_drift()
    report.add_check(_passed("energy-balance-drift", drift, drift < ENERGY_DRIFT_TOL,
                             f"< {ENERGY_DRIFT_TOL:g}", "energy-inequality"))
    tail = max(ledger.tail_fraction)
    if tail > TAIL_THRESHOLD:
        report.warn(f"vertical spectral tail reached {tail:.2e} of the energy "
                    f"(threshold {TAIL_THRESHOLD:.0e})")


def linear_agreement_check(report: Report, store: SnapshotStore) -> None:
    spec = NormSpec.lp(2)
    worst = 0.0
    for t, u in zip(store.times[1:], store.fields[1:]):
        exact = heat_semigroup_h(store.initial, t)
        scale = norm(exact, spec)
        if scale > 0:
            worst = max(worst, norm(VelocityField(u.grid, u.data - exact.data), spec) / scale)
    report.add_check(_passed("linear-semigroup-agreement", worst, worst < LINEAR_AGREEMENT_TOL,
                             f"< {LINEAR_AGREEMENT_TOL:g}", "semigroup"))


def reconstruction_checks(report: Report, store: SnapshotStore, times) -> dict[float, float]:
    times = [t for t in times if t <= store.t_max]
    residuals = reconstruction_residuals(store, times)
    for t, residual in residuals.items():
        report.add_check(_passed(f"duhamel-reconstruction-t{t:g}", residual,
                                 residual < RECONSTRUCTION_TOL, f"< {RECONSTRUCTION_TOL:g}",
                                 "duhamel-decomposition"))
    return residuals


def refinement_check(report: Report, coarse: SnapshotStore, fine: SnapshotStore, times) -> None:
    """Quadrature residual on the refined schedule against the configured one."""
    times = [t for t in times if t <= coarse.t_max]
    if not times:
        return
    before = reconstruction_residuals(coarse, times)
    after = reconstruction_residuals(fine, times)
    ratios = [after[t] / before[t] for t in times if before[t] > 0]
    if not ratios:
        return
    ratio = max(ratios)
    report.add_check(_passed("duhamel-refinement-ratio", ratio, ratio <= REFINEMENT_RATIO,
                             f"<= {REFINEMENT_RATIO:g}", "duhamel-decomposition",
                             f"worst over t in {times}"))


def initial_data_resolution(report: Report, store: SnapshotStore, config: ExperimentConfig) -> float:
    """
    How far the projection moved the sampled preset; above PROJECTION_TOL the run
    evolves the projected field rather than the named data, and the report says so.
    """
    grid = store.grid
    change = projection_change(sample_initial_data(config.data.preset, grid, config.data.seed))
    resolution = f"dx_h={grid.dx_h:g}, dx_v={grid.dx_v:g}"
    report.provenance["u0 projection change"] = f"{change:.3e} (tolerance {PROJECTION_TOL:g}, {resolution})"
    if change > PROJECTION_TOL:
        report.warn(f"{config.data.preset} is under-resolved at {resolution}: the projection "
                    f"changed it by {change:.2e} > {PROJECTION_TOL:g}, so the run starts from its projection")
    return change


def mass_check(report: Report, store: SnapshotStore) -> None:
    mass = horizontal_mass(store.initial.component(2)).values
    worst = float(np.abs(mass).max())
    report.add_check(_passed("u0_3-horizontal-mass", worst, worst < MASS_TOL, f"< {MASS_TOL:g}",
                             "u3-sup-plateau"))


def _collect(report: Report, series: DecaySeries) -> None:
    report.series[series.label] = series


def term_series(report: Report, store: SnapshotStore, config: ExperimentConfig) -> None:
    d = config.diagnostics
    norms = list(d.term_norms)
    for label in d.terms:
        term = DuhamelTermId.parse(label)
        specs = norms + ([float("inf")] if label == "Dh1" and float("inf") not in norms else [])
        for p in specs:
            _collect(report, term_decay_series(store, term, p, progress=config.output.progress))
    for label, count in horizontal_mode_violations(store.grid).items():
        if count:
            report.warn(f"{label}: {count} kernel modes with xi_h = 0 do not vanish")


def remainder_series_all(report: Report, store: SnapshotStore, config: ExperimentConfig) -> None:
    linear_only = config.solver.linear_only
    wanted = [e for e in config.diagnostics.expansions if not linear_only or EXPANSIONS[e][1]]
    skipped = set(config.diagnostics.expansions) - set(wanted)
    if skipped:
        logger.info(f"linear run: skipping nonlinear expansions {sorted(skipped)}")
    needs_corrections = any(
        name.startswith("correction") for e in wanted for name in EXPANSIONS[e][3])
    profiles = compute_profiles(store, corrections=needs_corrections)
    for warning in profiles.warnings:
        report.warn(warning)
    for expansion_id in wanted:
        for p in config.diagnostics.remainder_norms:
            _collect(report, remainder_series(store, expansion_id, p, profiles))


def expectations_for(config: ExperimentConfig):
    d = config.diagnostics
    if config.solver.linear_only:
        return linear_expectations(d.fit_window)
    out = nonlinear_expectations(d.fit_window) + linear_expectations(d.fit_window) \
        + duhamel_expectations(d.fit_window)
    if config.data.preset == "corollary-phi":
        out = out + corollary_expectations(d.plateau_window)
    return out


def fit_all(report: Report, window: tuple[float, float]) -> None:
    for label, series in report.series.items():
        if series.is_zero:
            continue
        try:
            report.fits[label] = fit_rate(series, window)
        except FitError as e:
            logger.debug(f"no fit for {label}: {e}")


def analyze_store(store: SnapshotStore, config: ExperimentConfig,
                  ledger: EnergyLedger | None = None) -> Report:
    """
    Every diagnostic the config asks for, on an existing store.

    Args:
        store: snapshots of the run described by config.
        config: the experiment configuration.
        ledger: energy ledger of the run, if available.

    Returns: the Report (not yet written).
    """
    d = config.diagnostics
    report = Report(config.name, config.config_hash, provenance(store, config))
    if ledger is not None:
        energy_checks(report, ledger)
    initial_data_resolution(report, store, config)
    if config.data.preset == "corollary-phi":
        mass_check(report, store)

    if config.solver.linear_only:
        linear_agreement_check(report, store)
    else:
        try:
            reconstruction_checks(report, store, d.residual_times)
        except ScheduleError as e:
            report.warn(f"Duhamel reconstruction skipped: {e}")
        if d.terms:
            term_series(report, store, config)
        _collect(report, correction_integrand_series(store, "horizontal"))

    for series in diagnostic_norms(store).values():
        _collect(report, series)
    remainder_series_all(report, store, config)
    fit_all(report, d.fit_window)

    for expectation in expectations_for(config):
        series = report.series.get(expectation.series)
        if series is None:
            logger.debug(f"no series {expectation.series}; expectation skipped")
            continue
        report.add_check(evaluate(expectation, series))
    return report
