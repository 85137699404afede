"""
Exact-identity and oracle suite, independent of any experiment run.
"""
import logging
import tempfile
import time
from pathlib import Path

import numpy as np
from tqdm import tqdm

from aniso_decay.asymptotics import DecaySeries, fit_rate
from aniso_decay.duhamel import (
    TERM_SIGNATURES,
    horizontal_mode_violations,
    projected_divergence_symbol_error,
    table_signature,
)
from aniso_decay.grid_spectral import (
    VelocityField,
    forward_array,
    inverse_array,
    lp_norm,
    make_grid,
    sample,
)
from aniso_decay.operators import (
    GaussianSpec,
    KernelSymbolSpec,
    apply_kernel,
    gaussian_eval,
    gaussian_norm,
    heat_multiplier,
    helmholtz_project,
    kernel_lattice,
    kernel_physical,
    kernel_quadrature,
    kernel_symbol,
)
from aniso_decay.presets import (
    CheckResult,
    heat_moment_exponent,
    kernel_exponent,
    preset_initial_data,
)
from aniso_decay.reports import Report
from aniso_decay.snapshots import read_snapshot, write_snapshot
from aniso_decay.solver import temporal_order

logger = logging.getLogger(__name__)

IDENTITY_TOL = 1e-14
PROJECTION_TOL = 1e-12
ORACLE_TOL = 1e-6
GAUSSIAN_TOL = 1e-6
SCALING_TOL = 1e-3
ORDER_RANGE = (3.6, 4.4)
ORACLE_TIMES = (0.5, 1.0, 4.0)
ORACLE_RADII = (0.0, 0.5, 1.0, 2.0, 4.0)
ORACLE_HEIGHTS = (0.0, 0.5, 1.5, 3.0)
# horizontal lattice for the kernel slices; the radii above sit on it
LATTICE_N = 768
LATTICE_L_H = 192.0
LATTICE_L_V = 768.0
# (beta, gamma) of the kernels whose L^1 decay is fitted
DECAY_CASES = (((3, 0), 0), ((1, 0), 2), ((2, 0), 2))
DECAY_TOL = 0.05


def _check(name: str, measured: float, ok: bool, expected: str, source: str,
           detail: str = "") -> CheckResult:
    return CheckResult(name, bool(ok), float(measured), expected, source, detail)


def _identity_grid():
    return make_grid(16, 12, 24.0, 8.0)


def multiplier_identities() -> list[CheckResult]:
    grid = _identity_grid()
    nonzero = np.broadcast_to(grid.k2 > 0, grid.spectral_shape)
    out = []
    for t in (0.5, 1.0, 4.0):
        heat = heat_multiplier(grid, t)
        d33k = kernel_symbol(KernelSymbolSpec(alpha=(0, 0, 2), t=t), grid)
        lap_k = kernel_symbol(KernelSymbolSpec(gamma=2, t=t), grid)
        err33 = np.abs(np.where(nonzero, d33k - (-heat + lap_k), 0)).max()
        d333k = kernel_symbol(KernelSymbolSpec(alpha=(0, 0, 3), t=t), grid)
        twisted = kernel_symbol(KernelSymbolSpec(gamma=3, tilde=True, t=t), grid)
        err333 = np.abs(np.where(nonzero, d333k - (-heat * grid.derivative_symbol((0, 0, 1)) - twisted),
                                 0)).max()
        out.append(_check(f"identity-d33K-t{t:g}", err33, err33 <= IDENTITY_TOL,
                          f"<= {IDENTITY_TOL:g}", "kernel-identities"))
        out.append(_check(f"identity-d333K-t{t:g}", err333, err333 <= IDENTITY_TOL,
                          f"<= {IDENTITY_TOL:g}", "kernel-identities"))
    composed = np.abs(heat_multiplier(grid, 0.7) * heat_multiplier(grid, 1.9)
                      - heat_multiplier(grid, 2.6)).max()
    out.append(_check("semigroup-composition", composed, composed <= IDENTITY_TOL,
                      f"<= {IDENTITY_TOL:g}", "semigroup"))

    rng = np.random.default_rng(7)
    v = VelocityField(grid, rng.standard_normal((3, *grid.shape)))
    once = helmholtz_project(v)
    twice = helmholtz_project(once)
    idem = np.abs(twice.data - once.data).max() / np.abs(once.data).max()
    out.append(_check("projection-idempotent", idem, idem <= PROJECTION_TOL,
                      f"<= {PROJECTION_TOL:g}", "projection"))
    phi_hat = forward_array(grid, rng.standard_normal(grid.shape))
    gradient = inverse_array(grid, np.stack([1j * p * phi_hat for p in grid.odd_wavenumbers]))
    killed = helmholtz_project(VelocityField(grid, gradient))
    annihilation = np.abs(killed.data).max() / np.abs(gradient).max()
    out.append(_check("projection-annihilates-gradients", annihilation,
                      annihilation <= PROJECTION_TOL, f"<= {PROJECTION_TOL:g}", "projection"))
    return out


def kernel_oracle(progress: bool = False) -> list[CheckResult]:
    """Hankel-form kernel against quadrature of the s-integral of Gaussians."""
    out = []
    points = [(r, x3) for r in ORACLE_RADII for x3 in ORACLE_HEIGHTS]
    for t in ORACLE_TIMES:
        worst = 0.0
        for r, x3 in tqdm(points, desc=f"oracle t={t:g}", disable=not progress, leave=False):
            worst = max(worst, abs(kernel_physical(t, r, x3) - kernel_quadrature(t, r, x3)))
        out.append(_check(f"kernel-oracle-t{t:g}", worst, worst < ORACLE_TOL, f"< {ORACLE_TOL:g}",
                          "kernel-representation", f"{len(points)} points"))
    out.extend(kernel_lattice_oracle(progress))
    return out


def kernel_lattice_oracle(progress: bool = False, gamma: int = 2) -> list[CheckResult]:
    """
    Lattice inverse of the (-Delta_h)^(gamma/2) K(t) symbol against the Hankel form.

    gamma = 2 makes the kernel decay like |x|^-3, so the periodic images on
    the large lattice stay below the oracle tolerance.
    """
    dx = LATTICE_L_H / LATTICE_N
    out = []
    for t in ORACLE_TIMES:
        spec = KernelSymbolSpec(gamma=gamma, t=t)
        worst = 0.0
        for x3 in tqdm(ORACLE_HEIGHTS, desc=f"lattice t={t:g}", disable=not progress, leave=False):
            values = kernel_lattice(spec, LATTICE_N, LATTICE_L_H, LATTICE_L_V, x3)
            for r in ORACLE_RADII:
                lattice = values[int(round(r / dx)), 0]
                worst = max(worst, abs(lattice - kernel_physical(t, r, x3, gamma)))
        out.append(_check(f"kernel-lattice-t{t:g}", worst, worst < ORACLE_TOL, f"< {ORACLE_TOL:g}",
                          "kernel-representation",
                          f"gamma={gamma}, {len(ORACLE_RADII) * len(ORACLE_HEIGHTS)} points, "
                          f"L_h={LATTICE_L_H:g}, n_h={LATTICE_N}"))
    return out


def kernel_decay() -> list[CheckResult]:
    """
    L^1 decay of d_h^beta (-Delta_h)^(gamma/2) K(t) * f fitted against kernel_exponent.

    f = exp(-|x_h|^2) is uniform in x3, so only the k3 = 0 modes carry it and
    K(t) * f is pi times the horizontal kernel at t + 1/4. The fit runs in
    that shifted time, where the decay is an exact power up to box effects.
    """
    grid = make_grid(1024, 4, 512.0, 2.0)
    f = sample(grid, lambda x1, x2, x3: np.exp(-(x1 ** 2 + x2 ** 2)) + 0 * x3)
    shifted = 0.5 * np.logspace(0, 1, 5)
    out = []
    for beta, gamma in DECAY_CASES:
        label = f"kernel-decay-b{beta[0]}{beta[1]}-g{gamma}"
        values = np.array([lp_norm(apply_kernel(KernelSymbolSpec(beta=beta, gamma=gamma, t=s - 0.25), f), 1.0)
                           for s in shifted])
        fit = fit_rate(DecaySeries(label, shifted, values))
        expected = kernel_exponent(1.0, 1.0, sum(beta) + gamma)
        error = abs(fit.slope - expected)
        out.append(_check(label, fit.slope, error <= DECAY_TOL, f"{expected:g} +- {DECAY_TOL:g}",
                          "kernel-decay", f"L_h={grid.L_h:g}, t+1/4 in [{shifted[0]:g}, {shifted[-1]:g}]"))
    return out


def _discrete_gaussian_norm(t: float, p: float, weight_power: int, order: int,
                            L: float = 48.0, n: int = 384) -> float:
    dx = L / n
    x = (np.arange(n) - n // 2) * dx
    x1, x2 = np.meshgrid(x, x, indexing="ij")
    spec = GaussianSpec("horizontal", t)
    values = gaussian_eval(spec, (x1, x2), derivative=0 if order else None)
    values = np.abs(values) * np.sqrt(x1 ** 2 + x2 ** 2) ** weight_power
    if np.isinf(p):
        return float(values.max())
    return float((np.sum(values ** p) * dx * dx) ** (1 / p))


def gaussian_closed_forms() -> list[CheckResult]:
    out = []
    mass = max(abs(gaussian_norm(t, 1.0) - 1) for t in (0.5, 1.0, 4.0))
    out.append(_check("gaussian-L1-mass", mass, mass < GAUSSIAN_TOL, f"< {GAUSSIAN_TOL:g}",
                      "gaussian-moments"))
    l2 = abs(gaussian_norm(1.0, 2.0) - (8 * np.pi) ** -0.5)
    out.append(_check("gaussian-L2-closed-form", l2, l2 < GAUSSIAN_TOL, f"< {GAUSSIAN_TOL:g}",
                      "gaussian-moments"))
    discrete = max(abs(_discrete_gaussian_norm(1.0, 1.0, 0, 0) - 1),
                   abs(_discrete_gaussian_norm(1.0, 2.0, 0, 0) - (8 * np.pi) ** -0.5))
    out.append(_check("gaussian-discrete-norms", discrete, discrete < GAUSSIAN_TOL,
                      f"< {GAUSSIAN_TOL:g}", "gaussian-moments", "L_h = 48"))
    worst_analytic, worst_discrete = 0.0, 0.0
    for p in (1.0, 2.0, np.inf):
        for m, order in ((0, 0), (1, 0), (0, 1)):
            expected = heat_moment_exponent(p, m, order)
            analytic = np.log(gaussian_norm(4.0, p, m, order) / gaussian_norm(1.0, p, m, order)) / np.log(4)
            worst_analytic = max(worst_analytic, abs(analytic - expected))
            if np.isinf(p):
                # grid maxima miss off-lattice peaks
                continue
            discrete = np.log(_discrete_gaussian_norm(4.0, p, m, order)
                              / _discrete_gaussian_norm(1.0, p, m, order)) / np.log(4)
            worst_discrete = max(worst_discrete, abs(discrete - expected))
    out.append(_check("gaussian-scaling-analytic", worst_analytic, worst_analytic < 1e-12,
                      "< 1e-12", "gaussian-moments"))
    out.append(_check("gaussian-scaling-discrete", worst_discrete, worst_discrete < SCALING_TOL,
                      f"< {SCALING_TOL:g}", "gaussian-moments"))
    return out


def term_table() -> list[CheckResult]:
    grid = _identity_grid()
    mismatched = [label for label, sig in table_signature().items() if TERM_SIGNATURES.get(label) != sig]
    out = [_check("duhamel-term-table", len(mismatched), not mismatched, "0 mismatches",
                  "duhamel-decomposition", ", ".join(mismatched))]
    error = projected_divergence_symbol_error(grid)
    out.append(_check("duhamel-symbol-sum", error, error < 1e-12, "< 1e-12", "duhamel-decomposition",
                      "terms sum to -P div W on dealiased modes"))
    violations = sum(horizontal_mode_violations(grid).values())
    out.append(_check("duhamel-xi_h-zero-modes", violations, violations == 0, "0 modes",
                      "duhamel-decomposition"))
    return out


def tooling() -> list[CheckResult]:
    t = np.logspace(0, 2, 30)
    fit = fit_rate(DecaySeries("synthetic", t, 5 * t ** -0.75))
    error = max(abs(fit.slope + 0.75), fit.residual_rms)
    out = [_check("fit-rate-exact", error, error < 1e-12, "< 1e-12", "fit-rate")]

    grid = make_grid(8, 8, 12.0, 6.0)
    u = preset_initial_data("random-solenoidal", 1.0, grid, seed=3)
    again = preset_initial_data("random-solenoidal", 1.0, grid, seed=3)
    out.append(_check("random-preset-deterministic", 0.0 if np.array_equal(u.data, again.data) else 1.0,
                      np.array_equal(u.data, again.data), "bit-identical", "presets"))
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "snap.ans"
        write_snapshot(path, u, 1.25)
        grid_back, t_back, u_back = read_snapshot(path)
        exact = grid_back == grid and t_back == 1.25 and np.array_equal(np.asarray(u_back.data), u.data)
    out.append(_check("snapshot-round-trip", 0.0 if exact else 1.0, exact, "bit-exact", "snapshots"))
    return out


def stepper_order() -> list[CheckResult]:
    grid = make_grid(16, 16, 16.0, 8.0)
    u0 = preset_initial_data("corollary-phi", 1.0, grid)
    order = temporal_order(u0, dt=0.05, horizon=0.5)
    lo, hi = ORDER_RANGE
    return [_check("rk4-temporal-order", order, lo <= order <= hi, f"in [{lo:g}, {hi:g}]", "stepper")]


SUITES = {
    "identities": multiplier_identities,
    "kernel-oracle": kernel_oracle,
    "kernel-decay": kernel_decay,
    "gaussians": gaussian_closed_forms,
    "term-table": term_table,
    "tooling": tooling,
    "stepper": stepper_order,
}


def run_selfcheck(suites=None, progress: bool = False) -> Report:
    """
    Run the named suites (all by default) and collect their checks.

    Returns: a Report named "selfcheck" with one check per identity or oracle.
    """
    names = list(SUITES) if suites is None else list(suites)
    unknown = set(names) - set(SUITES)
    if unknown:
        raise ValueError(f"unknown selfcheck suites {sorted(unknown)}, expected {sorted(SUITES)}")
    report = Report("selfcheck", "-")
    for name in names:
        start = time.perf_counter()
        checks = SUITES[name](progress) if name == "kernel-oracle" else SUITES[name]()
        for check in checks:
            report.add_check(check)
        report.provenance[f"{name} runtime"] = f"{time.perf_counter() - start:.2f} s"
    return report
