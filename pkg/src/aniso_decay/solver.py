"""
Pseudospectral time integration of the anisotropic Navier-Stokes system

    d_t u - Delta_h u + (u . grad) u + grad p = 0,   div u = 0,

with the horizontal heat semigroup applied exactly as an integrating factor
and classical RK4 on the transformed nonlinearity.
"""
import logging
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import pandas as pd
from tqdm import tqdm

from aniso_decay.errors import CFLViolation, NonFiniteError, OperatorError
from aniso_decay.grid_spectral import (
    Grid,
    VelocityField,
    inverse_array,
    symmetrize,
    to_physical,
    to_spectral,
)
from aniso_decay.operators import (
    heat_multiplier,
    pair_index,
    project_array,
    require_solenoidal,
    tensor_products,
)
from aniso_decay.snapshots import SnapshotStore

logger = logging.getLogger(__name__)

SIGMAS = (0, 1, 2)


@dataclass(frozen=True)
class SolverConfig:
    """
    Time-stepping parameters. The scheme and the dealiasing rule are fixed;
    they are fields only so that configs and reports can name them.
    """
    dt: float
    t_end: float
    cfl_safety: float = 0.5
    linear_only: bool = False
    scheme: Literal["if-rk4"] = "if-rk4"
    dealias: Literal["two-thirds"] = "two-thirds"
    tail_threshold: float = 1e-8
    progress: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_end >= self.dt:
            raise ValueError(f"t_end must be >= dt, got t_end={self.t_end}, dt={self.dt}")
        if not 0 < self.cfl_safety <= 1:
            raise ValueError(f"cfl_safety must lie in (0, 1], got {self.cfl_safety}")
        if self.scheme != "if-rk4" or self.dealias != "two-thirds":
            raise ValueError("only the if-rk4 scheme with two-thirds dealiasing is supported")


@dataclass
class EnergyLedger:
    """
    Per-step energies and cumulative horizontal dissipation.

    energy[sigma] holds 1/2 ||u||^2_{H^sigma}; dissipation[sigma] holds
    int_0^t ||grad_h u||^2_{H^sigma}, accumulated from per-step increments.
    """
    times: list[float] = field(default_factory=list)
    energy: dict[int, list[float]] = field(default_factory=lambda: {s: [] for s in SIGMAS})
    dissipation: dict[int, list[float]] = field(default_factory=lambda: {s: [] for s in SIGMAS})
    tail_fraction: list[float] = field(default_factory=list)

    def record(self, t: float, energies: dict[int, float], increments: dict[int, float],
               tail: float) -> None:
        """Append the state at t; increments is the dissipation since the previous record."""
        if self.times and not t > self.times[-1]:
            raise ValueError(f"ledger times must increase, got {t} after {self.times[-1]}")
        for s in SIGMAS:
            if not (np.isfinite(energies[s]) and np.isfinite(increments[s])):
                raise NonFiniteError(t)
            previous = self.dissipation[s][-1] if self.times else 0.0
            self.energy[s].append(energies[s])
            self.dissipation[s].append(previous + (increments[s] if self.times else 0.0))
        self.times.append(t)
        self.tail_fraction.append(tail)

    def energy_margin(self, sigma: int = 0) -> float:
        """max_t (||u||^2 + 2 int ||grad_h u||^2) / (2 ||u_0||^2) for H^sigma."""
        e = np.asarray(self.energy[sigma])
        d = np.asarray(self.dissipation[sigma])
        if e[0] == 0:
            return 0.0
        return float(np.max((2 * e + 2 * d) / (4 * e[0])))

    def balance_drift(self) -> float:
        """max_t |E(t) - E(0) + D(t)| / E(0) for the L^2 energy."""
        e = np.asarray(self.energy[0])
        d = np.asarray(self.dissipation[0])
        if e[0] == 0:
            return 0.0
        return float(np.max(np.abs(e - e[0] + d)) / e[0])

    def to_frame(self) -> pd.DataFrame:
        columns = {"t": self.times}
        for s in SIGMAS:
            columns[f"energy_h{s}"] = self.energy[s]
            columns[f"dissipation_h{s}"] = self.dissipation[s]
        columns["tail_fraction"] = self.tail_fraction
        return pd.DataFrame(columns)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "EnergyLedger":
        ledger = cls(times=[float(t) for t in frame["t"]],
                     tail_fraction=[float(x) for x in frame["tail_fraction"]])
        for s in SIGMAS:
            ledger.energy[s] = [float(x) for x in frame[f"energy_h{s}"]]
            ledger.dissipation[s] = [float(x) for x in frame[f"dissipation_h{s}"]]
        return ledger


def _rhs_array(grid: Grid, u_hat: np.ndarray) -> np.ndarray:
    """-P div(u (x) u) on spectral arrays, without input validation."""
    w_hat = tensor_products(VelocityField(grid, u_hat, "spectral"))
    p = grid.odd_wavenumbers
    div = np.zeros((3, *grid.spectral_shape), dtype=complex)
    for l in range(3):
        for k in range(3):
            div[l] += 1j * p[k] * w_hat[pair_index(k, l)]
    return -project_array(grid, div)


def nonlinear_rhs(u: VelocityField) -> VelocityField:
    """
    The projected, dealiased nonlinearity -P div(u (x) u).

    Args:
        u: divergence-free velocity field.

    Returns: the spectral right-hand side, certified divergence-free.
    """
    require_solenoidal(u, "nonlinear_rhs")
    return VelocityField(u.grid, _rhs_array(u.grid, to_spectral(u).data), "spectral", True)


def cfl_limit(grid: Grid, u_phys: np.ndarray, safety: float) -> tuple[float, float]:
    max_speed = float(np.abs(u_phys).max())
    dx = min(grid.dx_h, grid.dx_v)
    limit = np.inf if max_speed == 0 else safety * dx / max_speed
    return max_speed, limit


class _Stepper:
    """IF-RK4 on spectral arrays with cached integrating factors."""

    def __init__(self, grid: Grid, linear_only: bool):
        self.grid = grid
        self.linear_only = linear_only
        self._factors: dict[float, tuple[np.ndarray, np.ndarray]] = {}

    def factors(self, dt: float) -> tuple[np.ndarray, np.ndarray]:
        if dt not in self._factors:
            if len(self._factors) > 8:
                self._factors.clear()
            self._factors[dt] = (heat_multiplier(self.grid, dt), heat_multiplier(self.grid, dt / 2))
        return self._factors[dt]

    def __call__(self, v: np.ndarray, dt: float) -> np.ndarray:
        e_full, e_half = self.factors(dt)
        if self.linear_only:
            return e_full * v
        rhs = lambda w: _rhs_array(self.grid, w)
        k1 = rhs(v)
        k2 = rhs(e_half * (v + 0.5 * dt * k1))
        k3 = rhs(e_half * v + 0.5 * dt * k2)
        k4 = rhs(e_full * v + dt * e_half * k3)
        out = e_full * v + (dt / 6.0) * (e_full * k1 + 2.0 * e_half * (k2 + k3) + k4)
        return symmetrize(self.grid, project_array(self.grid, out))


def step(u: VelocityField, t: float, dt: float, cfl_safety: float = 0.5,
         linear_only: bool = False) -> VelocityField:
    """
    Advance u from t to t + dt with one integrating-factor RK4 step.

    Args:
        u: divergence-free velocity field.
        t: current time (only used in error messages).
        dt: step size.
        cfl_safety: fraction of the advective limit dx / max|u| allowed.
        linear_only: drop the nonlinearity (the step is then exp(dt Delta_h)).

    Returns: the spectral state at t + dt, certified divergence-free.
    """
    require_solenoidal(u, "step")
    grid = u.grid
    max_speed, limit = cfl_limit(grid, to_physical(u).data, cfl_safety)
    if dt > limit:
        raise CFLViolation(max_speed, dt, limit)
    out = _Stepper(grid, linear_only)(to_spectral(u).data, dt)
    if not np.all(np.isfinite(out)):
        raise NonFiniteError(t + dt)
    return VelocityField(grid, out, "spectral", True)


def _modal_power(grid: Grid, u_hat: np.ndarray) -> np.ndarray:
    return np.sum(np.abs(u_hat) ** 2, axis=0) * grid.half_spectrum_weights / grid.volume


def _ledger_entries(grid: Grid, power: np.ndarray) -> tuple[dict, float]:
    energies = {s: 0.5 * float(np.sum((1.0 + grid.k2) ** s * power)) for s in SIGMAS}
    _, _, m3 = grid.mode_numbers
    shell = m3 > (2 * (grid.n_v // 3)) // 3
    total = float(np.sum(power))
    tail = float(np.sum(np.where(shell, power, 0.0)) / total) if total > 0 else 0.0
    return energies, tail


def _log_mean(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(a - b) / (ln a - ln b) elementwise; (a + b) / 2 when a ~ b, 0 where either vanishes."""
    out = np.zeros_like(a)
    pos = (a > 0) & (b > 0)
    a, b = a[pos], b[pos]
    d = np.log(a) - np.log(b)
    close = np.abs(d) < 1e-6
    out[pos] = np.where(close, 0.5 * (a + b), (a - b) / np.where(close, 1.0, d))
    return out


def _dissipation_increments(grid: Grid, before: np.ndarray, after: np.ndarray,
                            dt: float) -> dict[int, float]:
    """
    int over one step of ||grad_h u||^2_{H^sigma}, interpolating each modal
    power exponentially between the step ends (exact for the heat flow).
    """
    mean = _log_mean(before, after)
    return {s: dt * float(np.sum((1.0 + grid.k2) ** s * grid.kh2 * mean)) for s in SIGMAS}


def run(u0: VelocityField, config: SolverConfig,
        schedule) -> tuple[SnapshotStore, EnergyLedger]:
    """
    Integrate from u0 over [0, config.t_end] and collect snapshots.

    The last step before each snapshot time is shortened so snapshots are hit
    exactly. The energy ledger is updated after every step.

    Args:
        u0: divergence-free initial velocity.
        config: step size, horizon and flags.
        schedule: snapshot times (sequence of floats, or an object with a
        `times` attribute); 0 is always included.

    Returns: the snapshot store and the energy ledger.
    """
    require_solenoidal(u0, "run")
    grid = u0.grid
    times = np.asarray(getattr(schedule, "times", schedule), dtype=float)
    times = np.unique(np.concatenate([[0.0], times[(times > 0) & (times <= config.t_end + 1e-12)]]))
    descriptor = getattr(schedule, "descriptor", {})
    store = SnapshotStore(grid, schedule=descriptor)
    ledger = EnergyLedger()
    stepper = _Stepper(grid, config.linear_only)

    v = to_spectral(u0).data.copy()
    if not u0.divergence_free:
        v = project_array(grid, v)
    t = 0.0
    store.append(0.0, VelocityField(grid, inverse_array(grid, v), "physical", True))
    power = _modal_power(grid, v)
    energies, tail = _ledger_entries(grid, power)
    ledger.record(0.0, energies, {s: 0.0 for s in SIGMAS}, tail)
    tail_warned = False

    n_steps = int(np.ceil(times[-1] / config.dt - 1e-9)) + len(times)
    with tqdm(total=n_steps, desc="solve", disable=not config.progress, leave=False) as bar:
        for target in times[1:]:
            while t < target - 1e-12 * max(1.0, target):
                dt = min(config.dt, target - t)
                if not config.linear_only:
                    max_speed, limit = cfl_limit(grid, inverse_array(grid, v), config.cfl_safety)
                    if dt > limit:
                        raise CFLViolation(max_speed, dt, limit)
                v = stepper(v, dt)
                t = target if target - (t + dt) < 1e-12 * max(1.0, target) else t + dt
                if not np.all(np.isfinite(v)):
                    raise NonFiniteError(t)
                after = _modal_power(grid, v)
                energies, tail = _ledger_entries(grid, after)
                ledger.record(t, energies, _dissipation_increments(grid, power, after, dt), tail)
                power = after
                if tail > config.tail_threshold and not tail_warned:
                    logger.warning(
                        f"vertical spectral tail holds {tail:.2e} of the energy at "
                        f"t={t:.4g} (threshold {config.tail_threshold:.0e}); "
                        f"vertical resolution may be insufficient")
                    tail_warned = True
                bar.update(1)
            store.append(t, VelocityField(grid, inverse_array(grid, v), "physical", True))
    logger.info(f"run finished: {len(store)} snapshots, {len(ledger.times) - 1} steps, "
                f"energy drift {ledger.balance_drift():.2e}")
    return store, ledger


def temporal_order(u0: VelocityField, dt: float, horizon: float) -> float:
    """
    Observed global order of the stepper from three runs with dt, dt/2, dt/4.

    Returns: log2(|u_dt - u_dt/2| / |u_dt/2 - u_dt/4|) in the L^2 sense.
    """
    require_solenoidal(u0, "temporal_order")
    grid = u0.grid
    finals = []
    for h in (dt, dt / 2, dt / 4):
        stepper = _Stepper(grid, linear_only=False)
        v = project_array(grid, to_spectral(u0).data)
        n = int(round(horizon / h))
        for _ in range(n):
            v = stepper(v, h)
        finals.append(v)
    e1 = np.sqrt(np.sum(np.abs(finals[0] - finals[1]) ** 2))
    e2 = np.sqrt(np.sum(np.abs(finals[1] - finals[2]) ** 2))
    if e2 == 0:
        raise OperatorError("temporal order undefined: refinement changed nothing")
    return float(np.log2(e1 / e2))
