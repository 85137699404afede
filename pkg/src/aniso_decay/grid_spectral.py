"""
Fields on a periodic box, spectral transforms and norm calculators.

The box [-L_h/2, L_h/2)^2 x [-L_v/2, L_v/2) stands in for R^3. Grid point
(i, j, k) sits at ((i - n_h/2) dx_h, (j - n_h/2) dx_h, (k - n_v/2) dx_v), so
data is centered in the box and the vertical axis is the fastest one in
memory.

Transform convention: the forward transform is the Riemann sum of the
continuous Fourier transform,

    f_hat(xi) = sum_x f(x) exp(-i xi.x) dV,

evaluated at box-centered coordinates. Discrete masses, norms and profiles
therefore approximate their continuum counterparts without rescaling, and
Parseval reads sum |f|^2 dV = (1/V) sum |f_hat|^2.
"""
import logging
import os
from dataclasses import dataclass
from functools import cached_property
from typing import Literal

import numpy as np
import scipy.fft as spfft

from aniso_decay.errors import GridError, RepresentationError

logger = logging.getLogger(__name__)

THREADS_ENV = "ANISO_DECAY_THREADS"
_workers = int(os.environ.get(THREADS_ENV, "1"))

Representation = Literal["physical", "spectral"]
Direction = Literal["forward", "inverse"]


def set_fft_workers(n: int) -> None:
    """
    Set the number of threads used by every scipy.fft call in the package.

    Args:
        n: number of worker threads, at least 1.
    """
    global _workers
    if n < 1:
        raise ValueError(f"thread count must be >= 1, got {n}")
    _workers = int(n)


def get_fft_workers() -> int:
    return _workers


@dataclass(frozen=True)
class Grid:
    """
    Uniform periodic grid with n_h x n_h x n_v points on an L_h x L_h x L_v box.

    Wavenumber arrays are broadcastable against the half-spectrum layout of a
    real transform: shape (n_h, 1, 1), (1, n_h, 1) and (1, 1, n_v//2 + 1).
    """
    n_h: int
    n_v: int
    L_h: float
    L_v: float

    @property
    def dx_h(self) -> float:
        return self.L_h / self.n_h

    @property
    def dx_v(self) -> float:
        return self.L_v / self.n_v

    @property
    def cell_volume(self) -> float:
        return self.dx_h * self.dx_h * self.dx_v

    @property
    def volume(self) -> float:
        return self.L_h * self.L_h * self.L_v

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n_h, self.n_h, self.n_v)

    @property
    def spectral_shape(self) -> tuple[int, int, int]:
        return (self.n_h, self.n_h, self.n_v // 2 + 1)

    @property
    def validity_time(self) -> float:
        """Last time at which whole-space asymptotics are trusted on this box."""
        return (self.L_h / 12.0) ** 2

    @cached_property
    def x_h(self) -> np.ndarray:
        return (np.arange(self.n_h) - self.n_h // 2) * self.dx_h

    @cached_property
    def x_v(self) -> np.ndarray:
        return (np.arange(self.n_v) - self.n_v // 2) * self.dx_v

    def coordinates(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Broadcastable physical coordinates (x1, x2, x3)."""
        return (
            self.x_h[:, None, None],
            self.x_h[None, :, None],
            self.x_v[None, None, :],
        )

    @cached_property
    def radius_h(self) -> np.ndarray:
        """|x_h| measured from the box center, shape (n_h, n_h, 1)."""
        x1, x2, _ = self.coordinates()
        return np.sqrt(x1 ** 2 + x2 ** 2)

    @cached_property
    def mode_numbers(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Integer mode numbers per axis in half-spectrum layout."""
        m_h = np.rint(spfft.fftfreq(self.n_h, 1.0 / self.n_h)).astype(np.int64)
        m_v = np.arange(self.n_v // 2 + 1, dtype=np.int64)
        return m_h[:, None, None], m_h[None, :, None], m_v[None, None, :]

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Wavenumbers xi_1, xi_2 in (2 pi / L_h) Z and xi_3 in (2 pi / L_v) Z."""
        m1, m2, m3 = self.mode_numbers
        return (
            (2.0 * np.pi / self.L_h) * m1.astype(float),
            (2.0 * np.pi / self.L_h) * m2.astype(float),
            (2.0 * np.pi / self.L_v) * m3.astype(float),
        )

    @cached_property
    def odd_wavenumbers(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Wavenumbers with the Nyquist entry zeroed, for odd-order derivatives."""
        zeroed = []
        for k, m, n in zip(self.wavenumbers, self.mode_numbers,
                           (self.n_h, self.n_h, self.n_v)):
            zeroed.append(np.where(np.abs(m) == n // 2, 0.0, k))
        return tuple(zeroed)

    @cached_property
    def kh2(self) -> np.ndarray:
        k1, k2, _ = self.wavenumbers
        return k1 ** 2 + k2 ** 2

    @cached_property
    def k2(self) -> np.ndarray:
        return self.kh2 + self.wavenumbers[2] ** 2

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """True on modes carrying a Nyquist index on any axis."""
        m1, m2, m3 = self.mode_numbers
        return ((np.abs(m1) == self.n_h // 2) | (np.abs(m2) == self.n_h // 2)
                | (m3 == self.n_v // 2))

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """Two-thirds rule: keep |m| <= n // 3 on every axis."""
        m1, m2, m3 = self.mode_numbers
        return ((np.abs(m1) <= self.n_h // 3) & (np.abs(m2) <= self.n_h // 3)
                & (m3 <= self.n_v // 3))

    @cached_property
    def half_spectrum_weights(self) -> np.ndarray:
        """Multiplicity of each stored mode in the full (conjugate-symmetric) lattice."""
        _, _, m3 = self.mode_numbers
        w = np.full(m3.shape, 2.0)
        w[m3 == 0] = 1.0
        if self.n_v % 2 == 0:
            w[m3 == self.n_v // 2] = 1.0
        return w

    @cached_property
    def phase(self) -> np.ndarray:
        """(-1)^(m1+m2+m3): shift from index-origin to box-centered coordinates."""
        m1, m2, m3 = self.mode_numbers
        return np.where((m1 + m2 + m3) % 2 == 0, 1.0, -1.0)

    def derivative_symbol(self, alpha: tuple[int, int, int]) -> np.ndarray | complex:
        """
        Spectral symbol (i xi)^alpha. Axes differentiated an odd number of
        times use Nyquist-zeroed wavenumbers so real fields stay real.
        """
        symbol: np.ndarray | complex = 1.0 + 0.0j
        for order, k, k_odd in zip(alpha, self.wavenumbers, self.odd_wavenumbers):
            if order == 0:
                continue
            base = k_odd if order % 2 else k
            symbol = symbol * (1j * base) ** order
        return symbol


def make_grid(n_h: int, n_v: int, L_h: float, L_v: float) -> Grid:
    """
    Build a grid after validating resolutions and box lengths.

    Args:
        n_h: points per horizontal axis, even and at least 4.
        n_v: points on the vertical axis, even and at least 4.
        L_h: horizontal side length.
        L_v: vertical side length.

    Returns: the Grid.
    """
    for name, n in (("n_h", n_h), ("n_v", n_v)):
        if int(n) != n or n < 4 or n % 2:
            raise GridError(f"{name} must be an even integer >= 4, got {n}")
    for name, length in (("L_h", L_h), ("L_v", L_v)):
        if not np.isfinite(length) or length <= 0:
            raise GridError(f"{name} must be positive, got {length}")
    for name, n in (("n_h", n_h), ("n_v", n_v)):
        if n & (n - 1):
            logger.warning(f"{name}={n} is not a power of two; transforms will be slower")
    return Grid(int(n_h), int(n_v), float(L_h), float(L_v))


def _freeze(array: np.ndarray) -> np.ndarray:
    array = np.ascontiguousarray(array)
    array.flags.writeable = False
    return array


@dataclass(frozen=True)
class ScalarField:
    """A scalar field, stored either as physical samples or half-spectrum coefficients."""
    grid: Grid
    data: np.ndarray
    representation: Representation = "physical"

    def __post_init__(self):
        expected = self.grid.shape if self.representation == "physical" else self.grid.spectral_shape
        if self.data.shape != expected:
            raise GridError(f"data shape {self.data.shape} does not match {expected}")
        object.__setattr__(self, "data", _freeze(self.data))


@dataclass(frozen=True)
class VelocityField:
    """
    Three-component field on a shared grid; data has a leading axis of length 3.

    divergence_free is a certificate set by operations that guarantee it
    (projection, the solver); it is never inferred.
    """
    grid: Grid
    data: np.ndarray
    representation: Representation = "physical"
    divergence_free: bool = False

    def __post_init__(self):
        base = self.grid.shape if self.representation == "physical" else self.grid.spectral_shape
        if self.data.shape != (3, *base):
            raise GridError(f"data shape {self.data.shape} does not match {(3, *base)}")
        object.__setattr__(self, "data", _freeze(self.data))

    def component(self, k: int) -> ScalarField:
        return ScalarField(self.grid, self.data[k], self.representation)

    @property
    def horizontal(self) -> np.ndarray:
        return self.data[:2]

    @classmethod
    def from_components(cls, u1: ScalarField, u2: ScalarField, u3: ScalarField,
                        divergence_free: bool = False) -> "VelocityField":
        grid, rep = u1.grid, u1.representation
        for u in (u2, u3):
            if u.grid != grid:
                raise GridError("components live on different grids")
            if u.representation != rep:
                raise RepresentationError("components have mixed representations")
        return cls(grid, np.stack([u1.data, u2.data, u3.data]), rep, divergence_free)

    @classmethod
    def zeros(cls, grid: Grid) -> "VelocityField":
        return cls(grid, np.zeros((3, *grid.shape)), "physical", True)


Field = ScalarField | VelocityField


def forward_array(grid: Grid, data: np.ndarray) -> np.ndarray:
    """Riemann-sum forward transform over the last three axes."""
    spectrum = spfft.rfftn(data, axes=(-3, -2, -1), workers=_workers)
    return spectrum * (grid.phase * grid.cell_volume)


def inverse_array(grid: Grid, spectrum: np.ndarray) -> np.ndarray:
    """Inverse of forward_array; always returns a real array."""
    return spfft.irfftn(spectrum * (grid.phase / grid.cell_volume), s=grid.shape,
                        axes=(-3, -2, -1), workers=_workers)


def symmetrize(grid: Grid, spectrum: np.ndarray) -> np.ndarray:
    """Project a half spectrum onto the spectra of real fields."""
    return forward_array(grid, inverse_array(grid, spectrum))


def transform(field: Field, direction: Direction) -> Field:
    """
    Transform a scalar or vector field between physical and spectral space.

    Args:
        field: the field to transform.
        direction: "forward" (physical -> spectral) or "inverse".

    Returns: a new field of the same kind in the other representation.
    """
    if direction == "forward":
        if field.representation != "physical":
            raise RepresentationError("forward transform needs a physical field")
        data = forward_array(field.grid, field.data)
        rep = "spectral"
    elif direction == "inverse":
        if field.representation != "spectral":
            raise RepresentationError("inverse transform needs a spectral field")
        data = inverse_array(field.grid, field.data)
        rep = "physical"
    else:
        raise ValueError(f"unknown transform direction '{direction}'")
    if isinstance(field, VelocityField):
        return VelocityField(field.grid, data, rep, field.divergence_free)
    return ScalarField(field.grid, data, rep)


def to_spectral(field: Field) -> Field:
    return field if field.representation == "spectral" else transform(field, "forward")


def to_physical(field: Field) -> Field:
    return field if field.representation == "physical" else transform(field, "inverse")


def divergence_residual(u: VelocityField) -> float:
    """max |xi . u_hat| / max |u_hat| over all modes (0 for the zero field)."""
    u_hat = to_spectral(u).data
    k1, k2, k3 = u.grid.odd_wavenumbers
    div = np.abs(k1 * u_hat[0] + k2 * u_hat[1] + k3 * u_hat[2])
    scale = np.abs(u_hat).max()
    return 0.0 if scale == 0 else float(div.max() / scale)


@dataclass(frozen=True)
class NormSpec:
    """
    Mixed Lebesgue norm ||(|x_h|^m) d^alpha f||_{L^p_h L^q_v}.

    Exponents are floats in [1, inf]; alpha = (a1, a2, a3) with |alpha| <= 2.
    """
    p_h: float = 2.0
    q_v: float = 2.0
    weight_power: int = 0
    alpha: tuple[int, int, int] = (0, 0, 0)

    def __post_init__(self):
        for name, e in (("p_h", self.p_h), ("q_v", self.q_v)):
            if not (e >= 1.0):
                raise ValueError(f"{name} must lie in [1, inf], got {e}")
        if self.weight_power not in (0, 1):
            raise ValueError(f"weight_power must be 0 or 1, got {self.weight_power}")
        if len(self.alpha) != 3 or min(self.alpha) < 0 or sum(self.alpha) > 2:
            raise ValueError(f"alpha must be a 3-multi-index of order <= 2, got {self.alpha}")

    @classmethod
    def lp(cls, p: float) -> "NormSpec":
        return cls(p, p)

    @property
    def label(self) -> str:
        def fmt(e):
            return "inf" if np.isinf(e) else f"{e:g}"
        text = f"L{fmt(self.p_h)}_h L{fmt(self.q_v)}_v"
        if self.weight_power:
            text = "|x_h| " + text
        if any(self.alpha):
            text = f"d{self.alpha} " + text
        return text

    @property
    def key(self) -> str:
        """Compact file-name friendly label, e.g. 'L2', 'Linf_h-L1_v', 'xh-L1_h-Linf_v'."""
        def fmt(e):
            return "inf" if np.isinf(e) else f"{e:g}"
        if self.p_h == self.q_v:
            text = f"L{fmt(self.p_h)}"
        else:
            text = f"L{fmt(self.p_h)}_h-L{fmt(self.q_v)}_v"
        if self.weight_power:
            text = "xh-" + text
        if any(self.alpha):
            text = "d" + "".join(str(a) for a in self.alpha) + "-" + text
        return text


def _power_sum(values: np.ndarray, e: float, axis, cell: float) -> np.ndarray:
    if np.isinf(e):
        return values.max(axis=axis)
    return (np.sum(values ** e, axis=axis) * cell) ** (1.0 / e)


def norm(field: Field, spec: NormSpec, components: tuple[int, ...] | None = None) -> float:
    """
    Mixed-norm quadrature of a physical field.

    Vector fields are measured through the pointwise Euclidean magnitude of
    the selected components (all three by default). Derivatives are applied
    spectrally before quadrature; the inner vertical q-norm is taken per
    horizontal point, then the outer horizontal p-norm. Infinite exponents
    are grid maxima.

    Args:
        field: physical ScalarField or VelocityField.
        spec: the norm to compute.
        components: component indices to include for a VelocityField.

    Returns: the norm value.
    """
    if field.representation != "physical":
        raise RepresentationError("norm needs a physical field")
    grid = field.grid
    max_order = max(spec.alpha)
    if max_order and max_order >= min(grid.n_h, grid.n_v) // 2:
        raise GridError(f"derivative order {spec.alpha} exceeds grid resolution")
    data = field.data
    if isinstance(field, VelocityField):
        data = data[list(components)] if components is not None else data
    else:
        data = data[None]
    if any(spec.alpha):
        spectrum = forward_array(grid, data) * grid.derivative_symbol(spec.alpha)
        data = inverse_array(grid, spectrum)
    magnitude = np.sqrt(np.sum(data ** 2, axis=0))
    if spec.weight_power:
        magnitude = magnitude * grid.radius_h
    inner = _power_sum(magnitude, spec.q_v, axis=2, cell=grid.dx_v)
    return float(_power_sum(inner, spec.p_h, axis=(0, 1), cell=grid.dx_h ** 2))


def lp_norm(field: Field, p: float, components: tuple[int, ...] | None = None) -> float:
    return norm(field, NormSpec.lp(p), components)


def hs_norm(field: Field, s: int, components: tuple[int, ...] | None = None) -> float:
    """
    Sobolev H^s norm from the spectral Parseval sum of (1 + |xi|^2)^s |f_hat|^2.

    Args:
        field: scalar or vector field in either representation.
        s: integer order in 0..9.
        components: component indices to include for a VelocityField.

    Returns: the norm value.
    """
    if int(s) != s or not 0 <= s <= 9:
        raise ValueError(f"Sobolev order must be an integer in 0..9, got {s}")
    grid = field.grid
    spectrum = to_spectral(field).data
    if isinstance(field, VelocityField) and components is not None:
        spectrum = spectrum[list(components)]
    weight = grid.half_spectrum_weights * (1.0 + grid.k2) ** int(s)
    total = np.sum(weight * np.abs(spectrum) ** 2) / grid.volume
    return float(np.sqrt(total))


def sample(grid: Grid, func) -> ScalarField:
    """Sample func(x1, x2, x3) on the grid's box-centered coordinates."""
    x1, x2, x3 = grid.coordinates()
    values = np.broadcast_to(func(x1, x2, x3), grid.shape).astype(float)
    return ScalarField(grid, values)
