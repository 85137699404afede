"""
Linear operators as spectral multipliers.

Every operator here is a pointwise multiplier on the half-spectrum lattice:
the horizontal heat semigroup, the Helmholtz projection, and the kernel
family d_h^beta (-Delta_h)^(gamma/2) K(t) with

    K_hat(t, xi) = exp(-t |xi_h|^2) / |xi|^2.

The sgn(x3)-twisted kernels are reduced to multipliers through

    sgn(x3) (-Delta_h)^(1/2) K = -d_3 K,

so no physical-space sign function is ever applied.
"""
import logging
from dataclasses import dataclass
from typing import Literal

import numpy as np
import scipy.fft as spfft
from scipy import integrate, special

from aniso_decay.errors import OperatorError
from aniso_decay.grid_spectral import (
    Field,
    Grid,
    ScalarField,
    VelocityField,
    divergence_residual,
    forward_array,
    get_fft_workers,
    inverse_array,
    to_spectral,
)

logger = logging.getLogger(__name__)

SOLENOIDAL_TOL = 1e-10

# upper-triangular index pairs of the symmetric product tensor u_k u_l
PRODUCT_PAIRS = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))


def pair_index(k: int, l: int) -> int:
    return PRODUCT_PAIRS.index((min(k, l), max(k, l)))


def apply_multiplier(field: Field, symbol) -> Field:
    """Multiply a field's spectrum by symbol, returning the input representation."""
    grid = field.grid
    if field.representation == "spectral":
        data = field.data * symbol
    else:
        data = inverse_array(grid, forward_array(grid, field.data) * symbol)
    if isinstance(field, VelocityField):
        return VelocityField(grid, data, field.representation, False)
    return ScalarField(grid, data, field.representation)


def heat_multiplier(grid: Grid, t: float) -> np.ndarray:
    return np.exp(-t * grid.kh2)


def heat_semigroup_h(field: Field, t: float) -> Field:
    """
    Apply the horizontal heat semigroup exp(t Delta_h).

    Modes with xi_h = 0 are left untouched. Solenoidal certificates survive
    because the multiplier is scalar.

    Args:
        field: scalar or vector field in either representation.
        t: time, t >= 0.

    Returns: the evolved field in the input representation.
    """
    if t < 0:
        raise OperatorError(f"heat semigroup needs t >= 0, got {t}")
    if t == 0:
        return field
    out = apply_multiplier(field, heat_multiplier(field.grid, t))
    if isinstance(field, VelocityField):
        return VelocityField(out.grid, out.data, out.representation, field.divergence_free)
    return out


def project_array(grid: Grid, u_hat: np.ndarray) -> np.ndarray:
    """u_hat - p (p . u_hat) / |p|^2 with Nyquist-zeroed p; p = 0 modes unchanged."""
    p = grid.odd_wavenumbers
    p2 = p[0] ** 2 + p[1] ** 2 + p[2] ** 2
    inv_p2 = np.divide(1.0, p2, out=np.zeros_like(p2), where=p2 > 0)
    flux = (p[0] * u_hat[0] + p[1] * u_hat[1] + p[2] * u_hat[2]) * inv_p2
    return np.stack([u_hat[k] - p[k] * flux for k in range(3)])


def helmholtz_project(v: VelocityField) -> VelocityField:
    """
    Leray/Helmholtz projection onto divergence-free fields.

    The projection uses the same Nyquist-zeroed wavevector as the discrete
    divergence, so it annihilates discrete gradients and is idempotent.

    Args:
        v: velocity field in either representation.

    Returns: the projected field in the input representation, certified
    divergence-free.
    """
    grid = v.grid
    if v.representation == "spectral":
        data = project_array(grid, v.data)
    else:
        data = inverse_array(grid, project_array(grid, forward_array(grid, v.data)))
    return VelocityField(grid, data, v.representation, True)


def require_solenoidal(u: VelocityField, what: str) -> None:
    if u.divergence_free:
        return
    residual = divergence_residual(u)
    if residual > SOLENOIDAL_TOL:
        raise OperatorError(f"{what} needs a divergence-free field (residual {residual:.3e})")


@dataclass(frozen=True)
class KernelSymbolSpec:
    """
    Kernel d_h^beta (-Delta_h)^(gamma/2) K(t), optionally twisted by sgn(x3),
    followed by the derivative d^alpha.

    beta is a horizontal multi-index (b1, b2), alpha a full one (a1, a2, a3).
    """
    beta: tuple[int, int] = (0, 0)
    gamma: int = 0
    tilde: bool = False
    alpha: tuple[int, int, int] = (0, 0, 0)
    t: float = 1.0

    def __post_init__(self):
        if self.gamma < 0 or int(self.gamma) != self.gamma:
            raise OperatorError(f"gamma must be a nonnegative integer, got {self.gamma}")
        if self.tilde and self.gamma % 2 == 0:
            raise OperatorError(f"sgn(x3)-twisted kernels need odd gamma, got {self.gamma}")
        if not 0 <= sum(self.beta) + self.gamma <= 4:
            raise OperatorError(
                f"|beta| + gamma must lie in 0..4, got {sum(self.beta) + self.gamma}")
        if min(self.beta) < 0 or min(self.alpha) < 0:
            raise OperatorError("multi-indices must be nonnegative")

    @property
    def order(self) -> int:
        return sum(self.beta) + self.gamma


def spatial_symbol(grid: Grid, beta: tuple[int, int], gamma: int, tilde: bool,
                   alpha: tuple[int, int, int], pressure_kernel: bool = True) -> np.ndarray:
    """
    Time-independent part of a kernel symbol on the grid lattice.

    With pressure_kernel the symbol carries 1/|xi|^2 and is 0 at xi = 0;
    without it the result is the plain derivative multiplier of a heat term.
    The twist contributes a factor -(i xi_3) and lowers gamma by one.
    """
    orders = [beta[0] + alpha[0], beta[1] + alpha[1], alpha[2] + (1 if tilde else 0)]
    symbol = np.ones(grid.spectral_shape, dtype=complex) * grid.derivative_symbol(tuple(orders))
    power = gamma - 1 if tilde else gamma
    if power:
        symbol = symbol * np.sqrt(grid.kh2) ** power
    if tilde:
        symbol = -symbol
    if pressure_kernel:
        k2 = grid.k2
        inv_k2 = np.divide(1.0, k2, out=np.zeros_like(k2), where=k2 > 0)
        symbol = symbol * inv_k2
    return symbol


def kernel_symbol(spec: KernelSymbolSpec, xi) -> np.ndarray | complex:
    """
    Symbol of the kernel described by spec.

    Args:
        spec: kernel description; spec.t must be positive.
        xi: a Grid (evaluate on its whole lattice) or a triple (xi1, xi2, xi3)
        of floats or broadcastable arrays.

    Returns: complex symbol values; exactly 0 at xi = 0.
    """
    if spec.t <= 0:
        raise OperatorError(f"kernel time must be positive, got {spec.t}")
    if isinstance(xi, Grid):
        return spatial_symbol(xi, spec.beta, spec.gamma, spec.tilde, spec.alpha) \
            * np.exp(-spec.t * xi.kh2)
    k1, k2, k3 = (np.asarray(c, dtype=float) for c in xi)
    kh2 = k1 ** 2 + k2 ** 2
    kk = kh2 + k3 ** 2
    n3 = spec.alpha[2] + (1 if spec.tilde else 0)
    value = ((1j * k1) ** (spec.beta[0] + spec.alpha[0])
             * (1j * k2) ** (spec.beta[1] + spec.alpha[1])
             * (1j * k3) ** n3
             * np.sqrt(kh2) ** (spec.gamma - 1 if spec.tilde else spec.gamma))
    if spec.tilde:
        value = -value
    inv = np.divide(1.0, kk, out=np.zeros_like(kk), where=kk > 0)
    result = value * np.exp(-spec.t * kh2) * inv
    return complex(result) if np.ndim(result) == 0 else result


def apply_kernel(spec: KernelSymbolSpec, field: Field) -> Field:
    """Convolve a field with the kernel of spec (spectral multiplication)."""
    if spec.t <= 0:
        raise OperatorError(f"kernel time must be positive, got {spec.t}")
    return apply_multiplier(field, kernel_symbol(spec, field.grid))


def kernel_lattice(spec: KernelSymbolSpec, n_h: int, L_h: float, L_v: float, x3: float) -> np.ndarray:
    """
    Periodic kernel of spec at height x3 on an n_h x n_h horizontal lattice.

    The horizontal modes are inverse-transformed from kernel_symbol. The sum
    over the vertical modes k3 = 2 pi m / L_v of 1 / (|xi_h|^2 + k3^2) is
    taken in closed form,

        cosh(a (L_v/2 - |x3|)) / (2 a sinh(a L_v / 2)),  a = |xi_h|,

    so no vertical truncation enters. Modes with xi_h = 0 are dropped.

    Args:
        spec: kernel without vertical derivatives or sgn(x3) twist.
        n_h: lattice points per horizontal axis.
        L_h: horizontal period.
        L_v: vertical period, |x3| <= L_v / 2.
        x3: height of the slice.

    Returns: real (n_h, n_h) array; index (j, l) sits at x_h = (j, l) * L_h / n_h
    taken modulo L_h.
    """
    if spec.tilde or spec.alpha[2]:
        raise OperatorError("the lattice slice covers kernels without vertical derivatives")
    h = abs(x3)
    if h > L_v / 2:
        raise OperatorError(f"|x3| must not exceed L_v/2 = {L_v / 2:g}, got {x3}")
    k = 2 * np.pi * spfft.fftfreq(n_h, d=L_h / n_h)
    k1, k2 = np.meshgrid(k, k, indexing="ij")
    a = np.hypot(k1, k2)
    # symbol on the k3 = 0 plane times |xi_h|^2 is the k3-independent numerator
    numerator = kernel_symbol(spec, (k1, k2, np.zeros_like(k1))) * a ** 2
    safe = np.where(a > 0, a, 1.0)
    vertical = (np.exp(-safe * h) + np.exp(-safe * (L_v - h))) / (2 * safe * -np.expm1(-safe * L_v))
    spectrum = np.where(a > 0, numerator * vertical, 0)
    values = spfft.ifft2(spectrum, workers=get_fft_workers())
    return (n_h / L_h) ** 2 * values.real


def dealias(grid: Grid, spectrum: np.ndarray) -> np.ndarray:
    return spectrum * grid.dealias_mask


def tensor_products(u: VelocityField) -> np.ndarray:
    """
    Dealiased spectra of the six products u_k u_l, ordered as PRODUCT_PAIRS.

    The velocity is truncated to the two-thirds set before the pointwise
    products are formed, and the product spectra are truncated again.
    """
    grid = u.grid
    u_phys = inverse_array(grid, dealias(grid, to_spectral(u).data))
    products = np.stack([u_phys[k] * u_phys[l] for k, l in PRODUCT_PAIRS])
    return dealias(grid, forward_array(grid, products))


def pressure_recover(u: VelocityField) -> ScalarField:
    """
    Recover the pressure p_hat = -sum_kl xi_k xi_l W_kl_hat / |xi|^2 with zero mean.

    Args:
        u: divergence-free velocity field.

    Returns: the physical pressure field.
    """
    require_solenoidal(u, "pressure recovery")
    grid = u.grid
    w_hat = tensor_products(u)
    p = grid.odd_wavenumbers
    k2 = grid.k2
    inv_k2 = np.divide(1.0, k2, out=np.zeros_like(k2), where=k2 > 0)
    p_hat = np.zeros(grid.spectral_shape, dtype=complex)
    for k in range(3):
        for l in range(3):
            p_hat -= p[k] * p[l] * w_hat[pair_index(k, l)]
    p_hat *= inv_k2
    return ScalarField(grid, inverse_array(grid, p_hat))


@dataclass(frozen=True)
class GaussianSpec:
    """2D horizontal Gaussian G_h or 1D vertical Gaussian G_v at time t."""
    kind: Literal["horizontal", "vertical"] = "horizontal"
    t: float = 1.0

    def __post_init__(self):
        if self.kind not in ("horizontal", "vertical"):
            raise OperatorError(f"unknown Gaussian kind '{self.kind}'")
        if not self.t > 0:
            raise OperatorError(f"Gaussian time must be positive, got {self.t}")


def gaussian_eval(spec: GaussianSpec, points, derivative: int | None = None) -> np.ndarray:
    """
    Evaluate G_h(t, x_h) = exp(-|x_h|^2 / 4t) / (4 pi t) or
    G_v(t, x3) = exp(-x3^2 / 4t) / sqrt(4 pi t).

    Args:
        spec: which Gaussian and at what time.
        points: for the horizontal kind a pair (x1, x2) of broadcastable
        arrays, for the vertical kind an array of x3 values.
        derivative: for the horizontal kind, 0 or 1 selects d/dx1 or d/dx2.

    Returns: the values.
    """
    t = spec.t
    if spec.kind == "vertical":
        x3 = np.asarray(points, dtype=float)
        return np.exp(-x3 ** 2 / (4 * t)) / np.sqrt(4 * np.pi * t)
    x1, x2 = (np.asarray(c, dtype=float) for c in points)
    g = np.exp(-(x1 ** 2 + x2 ** 2) / (4 * t)) / (4 * np.pi * t)
    if derivative is None:
        return g
    return -((x1, x2)[derivative] / (2 * t)) * g


def gaussian_norm(t: float, p: float, weight_power: int = 0, order: int = 0) -> float:
    """
    Closed form of || |x_h|^m d_1^order G_h(t) ||_{L^p(R^2)} for m, order in {0, 1}.

    Args:
        t: positive time.
        p: exponent in [1, inf].
        weight_power: m, the power of |x_h|.
        order: 0 for G_h itself, 1 for a single first derivative.

    Returns: the norm.
    """
    if not t > 0:
        raise OperatorError(f"Gaussian time must be positive, got {t}")
    if weight_power not in (0, 1) or order not in (0, 1):
        raise OperatorError("closed forms cover weight_power and order in {0, 1}")
    m = weight_power
    if np.isinf(p):
        # maximum of r^(m+order) exp(-r^2/4t) along the x1 axis
        n = m + order
        peak = (2 * t * n) ** (n / 2) * np.exp(-n / 2) if n else 1.0
        return float(peak / ((2 * t) ** order * 4 * np.pi * t))
    a = p / (4 * t)
    radial_power = p * (m + order) + 1
    radial = special.gamma((radial_power + 1) / 2) / (2 * a ** ((radial_power + 1) / 2))
    if order:
        angular = 2 * np.sqrt(np.pi) * special.gamma((p + 1) / 2) / special.gamma(p / 2 + 1)
    else:
        angular = 2 * np.pi
    integral = angular * radial / ((4 * np.pi * t) ** p * (2 * t) ** (p * order))
    return float(integral ** (1 / p))


def kernel_physical(t: float, r: float, x3: float, gamma: int = 0) -> float:
    """
    (-Delta_h)^(gamma/2) K(t, x) from its partial inverse transform,
    (1/4 pi) int_0^inf J0(rho r) rho^gamma exp(-t rho^2 - rho |x3|) d rho.
    """
    if not t > 0:
        raise OperatorError(f"kernel time must be positive, got {t}")
    value, _ = integrate.quad(
        lambda rho: special.j0(rho * r) * rho ** gamma * np.exp(-t * rho ** 2 - rho * abs(x3)),
        0.0, np.inf, epsabs=1e-13, epsrel=1e-11, limit=400)
    return value / (4 * np.pi)


def kernel_quadrature(t: float, r: float, x3: float) -> float:
    """
    K(t, x) = int_0^inf G_h(t + s, x_h) G_v(s, x3) ds by adaptive quadrature,
    substituting s = sigma^2 to remove the endpoint singularity at s = 0.
    """
    if not t > 0:
        raise OperatorError(f"kernel time must be positive, got {t}")

    def integrand(sigma):
        s = t + sigma ** 2
        g_h = np.exp(-r ** 2 / (4 * s)) / (4 * np.pi * s)
        g_v = np.exp(-x3 ** 2 / (4 * sigma ** 2)) if sigma > 0 else float(x3 == 0)
        return 2 * g_h * g_v / np.sqrt(4 * np.pi)

    value, _ = integrate.quad(integrand, 0.0, np.inf, epsabs=1e-13, epsrel=1e-11, limit=400)
    return value
