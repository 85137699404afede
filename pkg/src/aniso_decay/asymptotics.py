"""
Large-time profiles, remainders and decay-rate fitting.

Profiles are per-height horizontal integrals (VerticalProfile) that are
spread by the horizontal Gaussian G_h(t) or its gradient. Remainders
subtract an assembled profile from the solution and measure what is left;
fit_rate turns any DecaySeries into a log-log slope.
"""
import logging
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd
import scipy.fft as spfft

from aniso_decay.errors import FitError, ProfileError, ScheduleError
from aniso_decay.grid_spectral import (
    Grid,
    NormSpec,
    ScalarField,
    VelocityField,
    hs_norm,
    inverse_array,
    norm,
    to_physical,
    to_spectral,
)
from aniso_decay.operators import (
    GaussianSpec,
    gaussian_eval,
    heat_semigroup_h,
    pair_index,
    tensor_products,
)

logger = logging.getLogger(__name__)

MIN_FIT_SAMPLES = 5
TAIL_RESIDUAL_THRESHOLD = 0.1


@dataclass(frozen=True)
class VerticalProfile:
    """Samples over x3 of a per-height horizontal integral."""
    values: np.ndarray
    label: str
    tail_estimate: float = 0.0
    warning: str | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or not np.all(np.isfinite(values)):
            raise ValueError(f"profile '{self.label}' must be a finite 1D array")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class DecaySeries:
    """
    (t, value) samples of a norm or remainder, optionally with the values
    multiplied by a theoretical power of t.
    """
    label: str
    times: np.ndarray
    values: np.ndarray
    scaled_values: np.ndarray | None = None
    scale_power: float = 0.0

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.shape != values.shape or times.ndim != 1:
            raise ValueError(f"series '{self.label}': times and values must be matching 1D arrays")
        if np.any(np.diff(times) <= 0):
            raise ValueError(f"series '{self.label}': times must increase strictly")
        if not (np.all(np.isfinite(values)) and np.all(values >= 0)):
            raise ValueError(f"series '{self.label}': values must be finite and nonnegative")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        if self.scaled_values is not None:
            object.__setattr__(self, "scaled_values", np.asarray(self.scaled_values, dtype=float))

    def __len__(self) -> int:
        return len(self.times)

    @property
    def is_zero(self) -> bool:
        return bool(np.all(self.values == 0))

    def scaled(self, power: float) -> "DecaySeries":
        """Attach t^power * value as the scaled column."""
        return replace(self, scaled_values=self.times ** power * self.values, scale_power=power)

    def window(self, t_min: float, t_max: float) -> "DecaySeries":
        keep = (self.times >= t_min * (1 - 1e-12)) & (self.times <= t_max * (1 + 1e-12))
        scaled = None if self.scaled_values is None else self.scaled_values[keep]
        return replace(self, times=self.times[keep], values=self.values[keep], scaled_values=scaled)

    def to_frame(self) -> pd.DataFrame:
        scaled = self.values if self.scaled_values is None else self.scaled_values
        return pd.DataFrame({
            "series_label": self.label,
            "t": self.times,
            "value": self.values,
            "scaled_value": scaled,
        })

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "DecaySeries":
        label = str(frame["series_label"].iloc[0]) if len(frame) else ""
        return cls(label, frame["t"].to_numpy(), frame["value"].to_numpy(),
                   frame["scaled_value"].to_numpy())


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    residual_rms: float
    n_samples: int
    t_min: float
    t_max: float

    @property
    def prefactor(self) -> float:
        return float(np.exp(self.intercept))


def fit_rate(series: DecaySeries, window: tuple[float, float] | None = None) -> RateFit:
    """
    Least-squares line through (log t, log value).

    Args:
        series: the samples.
        window: (t_min, t_max) to restrict to; the whole series by default.

    Returns: the RateFit.

    Raises: FitError for fewer than 5 samples, a span below one decade, or
    nonpositive values.
    """
    if window is not None:
        series = series.window(*window)
    n = len(series)
    if n < MIN_FIT_SAMPLES:
        raise FitError(f"'{series.label}': {n} samples in window, need at least {MIN_FIT_SAMPLES}")
    if series.times[0] <= 0 or series.times[-1] < 10 * series.times[0] * (1 - 1e-9):
        raise FitError(
            f"'{series.label}': window [{series.times[0]:g}, {series.times[-1]:g}] spans less than a decade")
    if np.any(series.values <= 0):
        raise FitError(f"'{series.label}': nonpositive values cannot be fitted in log-log")
    x = np.log(series.times)
    y = np.log(series.values)
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (slope * x + intercept)
    return RateFit(float(slope), float(intercept), float(np.sqrt(np.mean(residual ** 2))), n,
                   float(series.times[0]), float(series.times[-1]))


def plateau_statistics(series: DecaySeries, window: tuple[float, float]) -> tuple[float, float]:
    """
    Coefficient of variation and min/median ratio of the scaled values in a window.
    """
    values = series.window(*window)
    data = values.values if values.scaled_values is None else values.scaled_values
    if len(data) < 2:
        raise FitError(f"'{series.label}': plateau window holds {len(data)} samples")
    median = float(np.median(data))
    if median <= 0:
        return float("inf"), 0.0
    return float(np.std(data) / np.mean(data)), float(np.min(data) / median)


def horizontal_mass(f: ScalarField, label: str = "mass") -> VerticalProfile:
    """Per-height Riemann sum of f over the horizontal plane."""
    f = to_physical(f)
    dx = f.grid.dx_h
    return VerticalProfile(f.data.sum(axis=(0, 1)) * dx * dx, label)


def horizontal_first_moment(f: ScalarField, label: str = "moment") -> tuple[VerticalProfile, VerticalProfile]:
    """Per-height integrals of y1 f and y2 f, coordinates measured from the box center."""
    f = to_physical(f)
    grid = f.grid
    x1, x2, _ = grid.coordinates()
    dx = grid.dx_h
    return (
        VerticalProfile((x1 * f.data).sum(axis=(0, 1)) * dx * dx, f"{label}_y1"),
        VerticalProfile((x2 * f.data).sum(axis=(0, 1)) * dx * dx, f"{label}_y2"),
    )


def vertical_derivative(grid: Grid, profile: np.ndarray) -> np.ndarray:
    _, _, k3 = grid.odd_wavenumbers
    return spfft.irfft(spfft.rfft(profile) * 1j * k3[0, 0], n=grid.n_v)


def _product_masses(grid: Grid, u: VelocityField) -> tuple[np.ndarray, np.ndarray]:
    """Horizontal masses of the dealiased products u3 u1 and u3 u2."""
    w = inverse_array(grid, tensor_products(u))
    dx = grid.dx_h
    return tuple(w[pair_index(2, k)].sum(axis=(0, 1)) * dx * dx for k in (0, 1))


CORRECTION_KINDS = ("horizontal", "vertical-second-order")


def _correction_integrands(store, kind: str, t_max: float) -> tuple[np.ndarray, np.ndarray]:
    if kind not in CORRECTION_KINDS:
        raise ValueError(f"unknown correction kind '{kind}', expected one of {CORRECTION_KINDS}")
    grid = store.grid
    times, rows = [], []
    for t, u in zip(store.times, store.fields):
        if t > t_max * (1 + 1e-12):
            break
        masses = _product_masses(grid, u)
        if kind == "horizontal":
            masses = tuple(vertical_derivative(grid, m) for m in masses)
        times.append(t)
        rows.append(np.stack(masses))
    return np.asarray(times), np.asarray(rows)


def correction_integrand_series(store, kind: str, t_max: float | None = None) -> DecaySeries:
    """L^1_v norm of the per-height integrand of nonlinear_correction at each snapshot."""
    t_max = store.t_max if t_max is None else t_max
    times, rows = _correction_integrands(store, kind, t_max)
    values = np.abs(rows).sum(axis=(1, 2)) * store.grid.dx_v
    keep = times > 0
    return DecaySeries(f"{kind}-correction-integrand", times[keep], values[keep])


def _tail_estimate(series: DecaySeries, t_max: float) -> tuple[float, str | None]:
    if series.is_zero:
        return 0.0, None
    late = series.window(t_max / 10, t_max)
    try:
        fit = fit_rate(late)
    except FitError as e:
        return float("inf"), f"tail model unavailable: {e}"
    if fit.slope >= -1:
        return float("inf"), f"integrand decays like t^{fit.slope:.2f}, not integrable"
    tail = fit.prefactor * t_max ** (fit.slope + 1) / (-fit.slope - 1)
    warning = None
    if fit.residual_rms > TAIL_RESIDUAL_THRESHOLD:
        warning = (f"integrand not yet in its asymptotic regime "
                   f"(tail fit residual {fit.residual_rms:.3f})")
    return float(tail), warning


def nonlinear_correction(store, kind: str, t_max: float | None = None) -> tuple[VerticalProfile, VerticalProfile]:
    """
    Time-integrated nonlinear correction profiles.

    kind "horizontal" integrates int_{R^2} d3(u3 u_k) dy_h, kind
    "vertical-second-order" integrates int_{R^2} (u3 u_k) dy_h, for k = 1, 2,
    by the trapezoid rule over snapshots up to t_max. The neglected tail
    int_{t_max}^inf is estimated from a power-law fit of the integrand over
    its last decade and attached as tail_estimate (in L^1_v units).

    Args:
        store: snapshots starting at t = 0.
        kind: which integrand.
        t_max: truncation time, the last snapshot by default.

    Returns: the two profiles (k = 1, 2).
    """
    t_max = store.t_max if t_max is None else t_max
    times, rows = _correction_integrands(store, kind, t_max)
    if len(times) < 2:
        raise ScheduleError(f"correction integral needs at least two snapshots up to t={t_max}")
    integral = np.trapezoid(rows, x=times, axis=0)
    integrand = correction_integrand_series(store, kind, t_max)
    tail, warning = _tail_estimate(integrand, times[-1])
    if warning:
        logger.warning(f"{kind} correction: {warning}")
    return tuple(
        VerticalProfile(integral[k], f"{kind} correction u{k + 1}", tail, warning) for k in (0, 1))


@dataclass
class ProfileSet:
    """Profiles an expansion may need; missing ones raise ProfileError on access."""
    mass_h: tuple[VerticalProfile, VerticalProfile] | None = None
    mass_3: VerticalProfile | None = None
    moment_3: tuple[VerticalProfile, VerticalProfile] | None = None
    correction_h: tuple[VerticalProfile, VerticalProfile] | None = None
    correction_v: tuple[VerticalProfile, VerticalProfile] | None = None

    def require(self, name: str):
        value = getattr(self, name)
        if value is None:
            raise ProfileError(f"profile '{name}' has not been computed")
        return value

    @property
    def warnings(self) -> list[str]:
        out = []
        for name in ("correction_h", "correction_v"):
            for profile in getattr(self, name) or ():
                if profile.warning:
                    out.append(f"{profile.label}: {profile.warning}")
        return out


def compute_profiles(store, corrections: bool = True, t_max: float | None = None) -> ProfileSet:
    """Data masses and moments of the initial snapshot, plus the nonlinear corrections."""
    u0 = store.initial
    profiles = ProfileSet(
        mass_h=tuple(horizontal_mass(u0.component(k), f"mass u0_{k + 1}") for k in (0, 1)),
        mass_3=horizontal_mass(u0.component(2), "mass u0_3"),
        moment_3=horizontal_first_moment(u0.component(2), "moment u0_3"),
    )
    if corrections:
        profiles.correction_h = nonlinear_correction(store, "horizontal", t_max)
        profiles.correction_v = nonlinear_correction(store, "vertical-second-order", t_max)
    return profiles


def _inv(p: float) -> float:
    return 0.0 if np.isinf(p) else 1.0 / p


# scale exponent is a * (1 - 1/p) + b, where b may depend on 1/p
EXPANSIONS = {
    "uh-leading": ((0, 1), False, lambda p: (1 - _inv(p)), ("mass_h", "correction_h")),
    "uh-refined": ((0, 1), False, lambda p: (1 - _inv(p)) + 0.5, ("mass_h", "correction_h")),
    "u3-leading": ((2,), False, lambda p: 1.5 * (1 - _inv(p)), ("mass_3",)),
    "u3-leading-rate": ((2,), False, lambda p: 1.5 * (1 - _inv(p)) + 0.5 * _inv(p), ("mass_3",)),
    "u3-second-order": ((2,), False, lambda p: 1.5 * (1 - _inv(p)) + 0.5 * _inv(p),
                        ("mass_3", "moment_3", "correction_v")),
    "uh-linear": ((0, 1), True, lambda p: (1 - _inv(p)), ("mass_h",)),
    "u3-linear": ((2,), True, lambda p: 1.5 * (1 - _inv(p)), ("mass_3",)),
    "u3-linear-first-moment": ((2,), True, lambda p: 1.5 * (1 - _inv(p)) + 0.5,
                               ("mass_3", "moment_3")),
}


def _gaussians(grid: Grid, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x1, x2, _ = grid.coordinates()
    spec = GaussianSpec("horizontal", t)
    return (gaussian_eval(spec, (x1, x2)),
            gaussian_eval(spec, (x1, x2), derivative=0),
            gaussian_eval(spec, (x1, x2), derivative=1))


def assemble_profile(expansion_id: str, profiles: ProfileSet, grid: Grid, t: float) -> np.ndarray:
    """
    The asymptotic profile of expansion_id at time t on the grid, one array
    per component the expansion covers.
    """
    if expansion_id not in EXPANSIONS:
        raise ValueError(f"unknown expansion '{expansion_id}', expected one of {sorted(EXPANSIONS)}")
    g, d1g, d2g = _gaussians(grid, t)
    if expansion_id.startswith("uh"):
        mass = profiles.require("mass_h")
        out = []
        for k in (0, 1):
            vertical = mass[k].values
            if not expansion_id.endswith("linear"):
                vertical = vertical - profiles.require("correction_h")[k].values
            out.append(g * vertical)
        return np.stack(out)
    out = g * profiles.require("mass_3").values
    if expansion_id in ("u3-second-order", "u3-linear-first-moment"):
        moment = profiles.require("moment_3")
        out = out - d1g * moment[0].values - d2g * moment[1].values
    if expansion_id == "u3-second-order":
        corr = profiles.require("correction_v")
        out = out + d1g * corr[0].values + d2g * corr[1].values
    return out[None]


def remainder_series(store, expansion_id: str, p: float, profiles: ProfileSet | None = None,
                     t_min: float = 0.0) -> DecaySeries:
    """
    ||u(t) - profile(t)||_{L^p} at every snapshot time in the validity window.

    Linear expansions compare exp(t Delta_h) u_0 against the linear profile;
    the others compare the stored solution. The scaled column multiplies by
    the power of t under which the remainder is expected to vanish.

    Args:
        store: snapshots of a run.
        expansion_id: key of EXPANSIONS.
        p: Lebesgue exponent.
        profiles: precomputed profiles; linear ones are computed if omitted.
        t_min: drop times at or below this.

    Returns: the DecaySeries.

    Raises: ProfileError when a needed profile is missing.
    """
    if expansion_id not in EXPANSIONS:
        raise ValueError(f"unknown expansion '{expansion_id}', expected one of {sorted(EXPANSIONS)}")
    components, linear, power, needs = EXPANSIONS[expansion_id]
    if profiles is None:
        profiles = compute_profiles(store, corrections=False)
    for name in needs:
        profiles.require(name)
    grid = store.grid
    spec = NormSpec.lp(p)
    times, values = [], []
    for t, u in zip(store.times, store.fields):
        if t <= t_min or t > grid.validity_time * (1 + 1e-12):
            continue
        if linear:
            u = heat_semigroup_h(store.initial, t)
        profile = assemble_profile(expansion_id, profiles, grid, t)
        residual = np.zeros((3, *grid.shape))
        residual[list(components)] = u.data[list(components)] - profile
        values.append(norm(VelocityField(grid, residual), spec, components=components))
        times.append(t)
    label = f"{expansion_id}-{spec.key}"
    return DecaySeries(label, np.asarray(times), np.asarray(values)).scaled(power(p))


def grad_h_l2(u: VelocityField, components: tuple[int, ...] = (0, 1)) -> float:
    """||grad_h u||_{L^2} over the selected components, by Parseval."""
    grid = u.grid
    spectrum = to_spectral(u).data[list(components)]
    total = np.sum(grid.half_spectrum_weights * grid.kh2 * np.abs(spectrum) ** 2) / grid.volume
    return float(np.sqrt(total))


INF = float("inf")

# key -> (linear evolution?, components, norm spec or "grad_h")
DIAGNOSTICS = {
    "uh-L2": (False, (0, 1), NormSpec.lp(2)),
    "u3-L2": (False, (2,), NormSpec.lp(2)),
    "uh-Linf": (False, (0, 1), NormSpec.lp(INF)),
    "u3-Linf": (False, (2,), NormSpec.lp(INF)),
    "grad_h-uh-L2": (False, (0, 1), "grad_h"),
    "u-Linf_h-L1_v": (False, (0, 1, 2), NormSpec(INF, 1)),
    "xh-uh-L1_h-Linf_v": (False, (0, 1), NormSpec(1, INF, weight_power=1)),
    "xh-u3-L1_h-Linf_v": (False, (2,), NormSpec(1, INF, weight_power=1)),
    "linear-u-L2": (True, (0, 1, 2), NormSpec.lp(2)),
    "linear-u-Linf_h-L1_v": (True, (0, 1, 2), NormSpec(INF, 1)),
    "linear-u-Linf": (True, (0, 1, 2), NormSpec.lp(INF)),
    "linear-u3-L2": (True, (2,), NormSpec.lp(2)),
    "linear-u3-Linf": (True, (2,), NormSpec.lp(INF)),
    "linear-xh-u3-L1_h-Linf_v": (True, (2,), NormSpec(1, INF, weight_power=1)),
}


def diagnostic_norms(store, keys=None, t_min: float = 0.0) -> dict[str, DecaySeries]:
    """
    Norm series of the solution and of the linear evolution of its initial data.

    Args:
        store: snapshots of a run.
        keys: subset of DIAGNOSTICS keys; all by default.
        t_min: drop times at or below this.

    Returns: DecaySeries per key, at the snapshot times inside the validity window.
    """
    keys = list(DIAGNOSTICS) if keys is None else list(keys)
    unknown = set(keys) - set(DIAGNOSTICS)
    if unknown:
        raise ValueError(f"unknown diagnostics {sorted(unknown)}")
    grid = store.grid
    times = [t for t in store.times if t_min < t <= grid.validity_time * (1 + 1e-12)]
    columns = {key: [] for key in keys}
    for t in times:
        u = store.at(t)
        linear = None
        for key in keys:
            is_linear, components, spec = DIAGNOSTICS[key]
            if is_linear:
                if linear is None:
                    linear = heat_semigroup_h(store.initial, t)
                field_t = linear
            else:
                field_t = u
            if spec == "grad_h":
                columns[key].append(grad_h_l2(field_t, components))
            else:
                columns[key].append(norm(field_t, spec, components=components))
    return {key: DecaySeries(key, np.asarray(times), np.asarray(columns[key])) for key in keys}


def data_norm_xs(u: VelocityField, s: int) -> float:
    """||u||_{H^s} + sum over k <= 1 of ||d3^k u||_{L^1_h L^1_v} + ||d3^k u||_{L^1_h L^inf_v}."""
    total = hs_norm(u, s)
    physical = to_physical(u)
    for k in (0, 1):
        for q in (1.0, INF):
            total += norm(physical, NormSpec(1.0, q, alpha=(0, 0, k)))
    return float(total)


def data_norm_weighted(u: VelocityField, s: int) -> float:
    """data_norm_xs plus ||x_h| u||_{L^1_h (L^1 and L^inf)_v}."""
    physical = to_physical(u)
    weighted = sum(norm(physical, NormSpec(1.0, q, weight_power=1)) for q in (1.0, INF))
    return data_norm_xs(u, s) + float(weighted)
