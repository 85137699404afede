"""
Kernel decomposition of the Duhamel integral.

The nonlinear part of the solution splits into five horizontal terms D^h_m
and three vertical terms D^v_m. Each term is a sum of pieces

    c * int_0^t S(t - tau) * (u_a u_b)(tau) dtau

where S is either the horizontal heat semigroup followed by a derivative,
or a kernel d_h^beta (-Delta_h)^(gamma/2) K, possibly twisted by sgn(x3).
All pieces share the time factor exp(-(t - tau) |xi_h|^2), so the six
time integrals

    I_ab(t) = int_0^t exp(-(t - tau) |xi_h|^2) (u_a u_b)^(tau) dtau

are accumulated once per target time and every term is a spatial
multiplier applied to them.
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Literal

import numpy as np
from tqdm import tqdm

from aniso_decay.asymptotics import DecaySeries
from aniso_decay.errors import OperatorError, ScheduleError
from aniso_decay.grid_spectral import (
    Grid,
    NormSpec,
    VelocityField,
    forward_array,
    inverse_array,
    norm,
)
from aniso_decay.operators import (
    PRODUCT_PAIRS,
    heat_semigroup_h,
    pair_index,
    spatial_symbol,
    tensor_products,
)
from aniso_decay.snapshots import SnapshotStore

logger = logging.getLogger(__name__)

MIN_SNAPSHOTS = 4

Side = Literal["horizontal", "vertical"]
_SIDE_SIZE = {"horizontal": 5, "vertical": 3}


@dataclass(frozen=True)
class DuhamelTermId:
    side: Side
    index: int

    def __post_init__(self):
        if self.side not in _SIDE_SIZE:
            raise OperatorError(f"unknown side '{self.side}'")
        if not 1 <= self.index <= _SIDE_SIZE[self.side]:
            raise OperatorError(
                f"{self.side} terms are numbered 1..{_SIDE_SIZE[self.side]}, got {self.index}")

    @property
    def label(self) -> str:
        return f"D{self.side[0]}{self.index}"

    @property
    def components(self) -> tuple[int, ...]:
        return (0, 1) if self.side == "horizontal" else (2,)

    @classmethod
    def parse(cls, label: str) -> "DuhamelTermId":
        """Parse labels like 'Dh3' or 'Dv1'."""
        if len(label) != 3 or label[0] != "D" or label[1] not in "hv" or not label[2].isdigit():
            raise OperatorError(f"bad Duhamel term label '{label}'")
        return cls("horizontal" if label[1] == "h" else "vertical", int(label[2]))


ALL_TERMS = tuple(
    [DuhamelTermId("horizontal", m) for m in range(1, 6)]
    + [DuhamelTermId("vertical", m) for m in range(1, 4)]
)


@dataclass(frozen=True)
class TermPiece:
    """
    One summand of a Duhamel term.

    Index tokens: "j" is the output component, "k" and "l" are summed over
    the horizontal directions, "3" is the vertical direction. pair names the
    product u_a u_b; beta lists horizontal kernel derivatives, alpha the
    derivatives applied after a heat kernel.
    """
    coefficient: int
    pair: tuple[str, str]
    kernel: Literal["heat", "K"]
    beta: tuple[str, ...] = ()
    gamma: int = 0
    tilde: bool = False
    alpha: tuple[str, ...] = ()


TERM_TABLE: dict[str, tuple[TermPiece, ...]] = {
    "Dh1": (TermPiece(-1, ("3", "j"), "heat", alpha=("3",)),),
    "Dh2": (TermPiece(-1, ("k", "j"), "heat", alpha=("k",)),),
    "Dh3": (TermPiece(+1, ("3", "3"), "heat", alpha=("j",)),),
    "Dh4": (TermPiece(-1, ("k", "l"), "K", beta=("j", "k", "l")),),
    "Dh5": (
        TermPiece(+2, ("3", "k"), "K", beta=("j", "k"), gamma=1, tilde=True),
        TermPiece(-1, ("3", "3"), "K", beta=("j",), gamma=2),
    ),
    "Dv1": (TermPiece(+1, ("3", "k"), "heat", alpha=("k",)),),
    "Dv2": (TermPiece(+1, ("k", "l"), "K", beta=("k", "l"), gamma=1, tilde=True),),
    "Dv3": (
        TermPiece(-2, ("3", "k"), "K", beta=("k",), gamma=2),
        TermPiece(+1, ("3", "3"), "K", gamma=3, tilde=True),
    ),
}

# coefficient, product, kernel, horizontal derivative count, gamma, twist, extra derivative
TERM_SIGNATURES = {
    "Dh1": ("-1*heat[3j]:d3",),
    "Dh2": ("-1*heat[kj]:dk",),
    "Dh3": ("+1*heat[33]:dj",),
    "Dh4": ("-1*K[kl]:b3g0",),
    "Dh5": ("+2*K~[3k]:b2g1", "-1*K[33]:b1g2"),
    "Dv1": ("+1*heat[3k]:dk",),
    "Dv2": ("+1*K~[kl]:b2g1",),
    "Dv3": ("-2*K[3k]:b1g2", "+1*K~[33]:b0g3"),
}


def table_signature() -> dict[str, tuple[str, ...]]:
    """Render TERM_TABLE in the compact form of TERM_SIGNATURES."""
    out = {}
    for label, pieces in TERM_TABLE.items():
        rendered = []
        for piece in pieces:
            kernel = piece.kernel + ("~" if piece.tilde else "")
            head = f"{piece.coefficient:+d}*{kernel}[{''.join(piece.pair)}]"
            if piece.kernel == "heat":
                rendered.append(f"{head}:d{''.join(piece.alpha)}")
            else:
                rendered.append(f"{head}:b{len(piece.beta)}g{piece.gamma}")
        out[label] = tuple(rendered)
    return out


def _resolve(token: str, j: int, k: int, l: int) -> int:
    return {"j": j, "k": k, "l": l, "3": 2}[token]


def _expand(piece: TermPiece, j: int) -> Iterator[tuple[int, tuple[int, int], tuple[int, int, int]]]:
    """Yield (pair index, beta, alpha) for every horizontal value of the summed tokens."""
    tokens = set(piece.pair) | set(piece.beta) | set(piece.alpha)
    k_values = (0, 1) if "k" in tokens else (0,)
    l_values = (0, 1) if "l" in tokens else (0,)
    for k in k_values:
        for l in l_values:
            a, b = (_resolve(s, j, k, l) for s in piece.pair)
            beta = [0, 0]
            for s in piece.beta:
                beta[_resolve(s, j, k, l)] += 1
            alpha = [0, 0, 0]
            for s in piece.alpha:
                alpha[_resolve(s, j, k, l)] += 1
            yield pair_index(a, b), tuple(beta), tuple(alpha)


@lru_cache(maxsize=16)
def term_symbols(grid: Grid, label: str) -> tuple[dict[int, np.ndarray], ...]:
    """
    Spatial multipliers of a term, one dict per output component mapping a
    product-pair index to the summed symbol acting on that product.
    """
    term = DuhamelTermId.parse(label)
    line = (grid.kh2 == 0) & (grid.k2 > 0)
    result = []
    for j in term.components:
        by_pair: dict[int, np.ndarray] = {}
        for piece in TERM_TABLE[label]:
            for pair, beta, alpha in _expand(piece, j):
                symbol = piece.coefficient * spatial_symbol(
                    grid, beta, piece.gamma, piece.tilde, alpha,
                    pressure_kernel=piece.kernel == "K")
                if piece.kernel == "K":
                    bad = line & (symbol != 0)
                    if bad.any():
                        logger.warning(
                            f"{label} kernel does not vanish on {int(bad.sum())} "
                            f"modes with xi_h = 0; excluding them")
                        symbol = np.where(bad, 0, symbol)
                by_pair[pair] = by_pair.get(pair, 0) + symbol
        result.append(by_pair)
    return tuple(result)


def horizontal_mode_violations(grid: Grid) -> dict[str, int]:
    """
    Count modes with xi_h = 0, xi3 != 0 where a pressure-kernel piece does
    not vanish. Every entry is 0 for the decomposition as tabulated.
    """
    line = (grid.kh2 == 0) & (grid.k2 > 0)
    line = np.broadcast_to(line, grid.spectral_shape)
    counts = {}
    for label, pieces in TERM_TABLE.items():
        outputs = (0, 1) if label[1] == "h" else (2,)
        bad = np.zeros(grid.spectral_shape, dtype=bool)
        for piece in pieces:
            if piece.kernel != "K":
                continue
            for j in outputs:
                for _, beta, alpha in _expand(piece, j):
                    symbol = spatial_symbol(grid, beta, piece.gamma, piece.tilde, alpha)
                    bad |= line & (symbol != 0)
        counts[label] = int(bad.sum())
    return counts


def projected_divergence_symbol_error(grid: Grid) -> float:
    """
    max over dealiased modes and (j, pair) of |sum over terms of the term
    symbol - symbol of -(P div W)_j|, relative to the largest symbol. The
    decomposition reproduces the projected nonlinearity exactly, so this is
    rounding-sized.
    """
    p = grid.wavenumbers
    k2 = grid.k2
    inv_k2 = np.divide(1.0, k2, out=np.zeros_like(k2), where=k2 > 0)
    mask = np.broadcast_to(grid.dealias_mask, grid.spectral_shape)
    total = {(j, q): np.zeros(grid.spectral_shape, dtype=complex)
             for j in range(3) for q in range(len(PRODUCT_PAIRS))}
    for term in ALL_TERMS:
        for j, by_pair in zip(term.components, term_symbols(grid, term.label)):
            for q, symbol in by_pair.items():
                total[(j, q)] = total[(j, q)] + symbol
    worst, scale = 0.0, 0.0
    for j in range(3):
        for q, (a, b) in enumerate(PRODUCT_PAIRS):
            # -(P div W)_j acting on W_ab, counting both (a, b) and (b, a)
            expected = np.zeros(grid.spectral_shape, dtype=complex)
            for k, l in {(a, b), (b, a)}:
                delta = 1.0 if j == l else 0.0
                expected = expected - (delta - p[j] * p[l] * inv_k2) * 1j * p[k]
            diff = np.abs(np.where(mask, total[(j, q)] - expected, 0))
            worst = max(worst, float(diff.max()))
            scale = max(scale, float(np.abs(np.where(mask, expected, 0)).max()))
    return worst / scale if scale else worst


def _check_store(store: SnapshotStore, t: float) -> int:
    n = store.index_of(t)
    if n > 0 and len(store) < MIN_SNAPSHOTS:
        raise ScheduleError(
            f"store has {len(store)} snapshots; Duhamel quadrature needs at least {MIN_SNAPSHOTS}")
    return n


def _interval_weight(kh2: np.ndarray, h: float) -> np.ndarray:
    """int_0^h exp(-s |xi_h|^2) ds, equal to h on xi_h = 0."""
    lam = kh2 * h
    weight = np.empty_like(kh2)
    small = lam == 0
    weight[small] = h
    weight[~small] = -np.expm1(-lam[~small]) / kh2[~small]
    return weight


def time_integrals(store: SnapshotStore, times) -> Iterator[tuple[float, np.ndarray]]:
    """
    Accumulate I_ab(t) for each requested snapshot time t, in increasing order.

    On [tau_i, tau_(i+1)] the product spectrum is frozen at the average of
    its endpoint values and the exponential is integrated exactly, which
    gives the recursion I(tau_(i+1)) = exp(-h |xi_h|^2) I(tau_i) + w_i W_i.

    Yields: (t, array of shape (6, *spectral_shape)).
    """
    grid = store.grid
    indices = sorted({_check_store(store, t) for t in times})
    if not indices:
        return
    accumulated = np.zeros((len(PRODUCT_PAIRS), *grid.spectral_shape), dtype=complex)
    pending = iter(indices)
    target = next(pending)
    if target == 0:
        yield store.times[0], accumulated.copy()
        target = next(pending, None)
    if target is None:
        return
    previous = tensor_products(store.fields[0])
    for i in range(indices[-1]):
        h = store.times[i + 1] - store.times[i]
        current = tensor_products(store.fields[i + 1])
        decay = np.exp(-h * grid.kh2)
        accumulated = decay * accumulated + _interval_weight(grid.kh2, h) * 0.5 * (previous + current)
        previous = current
        if i + 1 == target:
            yield store.times[i + 1], accumulated.copy()
            target = next(pending, None)
            if target is None:
                return


def _apply_term(grid: Grid, label: str, integrals: np.ndarray) -> np.ndarray:
    term = DuhamelTermId.parse(label)
    out = np.zeros((3, *grid.spectral_shape), dtype=complex)
    for j, by_pair in zip(term.components, term_symbols(grid, label)):
        for q, symbol in by_pair.items():
            out[j] += symbol * integrals[q]
    return out


def _as_field(grid: Grid, spectrum: np.ndarray) -> VelocityField:
    return VelocityField(grid, inverse_array(grid, spectrum), "physical", False)


def duhamel_term(store: SnapshotStore, term_id: DuhamelTermId, t: float) -> VelocityField:
    """
    Evaluate one Duhamel term at a snapshot time.

    Args:
        store: snapshots of a run, starting at t = 0.
        term_id: which term.
        t: a snapshot time.

    Returns: a physical VelocityField whose components term_id.components
    hold the term; the other components are zero.
    """
    grid = store.grid
    _, integrals = next(time_integrals(store, [t]))
    return _as_field(grid, _apply_term(grid, term_id.label, integrals))


def _nonlinear_total(grid: Grid, integrals: np.ndarray) -> np.ndarray:
    return sum(_apply_term(grid, term.label, integrals) for term in ALL_TERMS)


def _residual(store: SnapshotStore, t: float, integrals: np.ndarray, spec: NormSpec) -> float:
    grid = store.grid
    u = store.at(t)
    linear = heat_semigroup_h(store.initial, t)
    reconstructed = forward_array(grid, linear.data) + _nonlinear_total(grid, integrals)
    difference = VelocityField(grid, u.data - inverse_array(grid, reconstructed), "physical")
    scale = norm(u, spec)
    if scale == 0:
        return norm(difference, spec)
    return norm(difference, spec) / scale


def _norm_spec(p) -> NormSpec:
    return p if isinstance(p, NormSpec) else NormSpec.lp(float(p))


def reconstruction_residual(store: SnapshotStore, t: float, p=2.0) -> float:
    """
    Relative error ||u(t) - exp(t Delta_h) u_0 - sum of all terms|| / ||u(t)||.

    Args:
        store: snapshots of a run.
        t: a snapshot time.
        p: Lebesgue exponent or a NormSpec.

    Returns: the relative residual; 0 at t = 0.
    """
    if store.index_of(t) == 0:
        return 0.0
    _, integrals = next(time_integrals(store, [t]))
    return _residual(store, t, integrals, _norm_spec(p))


def reconstruction_residuals(store: SnapshotStore, times, p=2.0) -> dict[float, float]:
    """reconstruction_residual for several times in one sweep."""
    spec = _norm_spec(p)
    out = {}
    for t, integrals in time_integrals(store, times):
        out[t] = 0.0 if t == 0 else _residual(store, t, integrals, spec)
    return out


def series_times(store: SnapshotStore, t_min: float = 0.0) -> list[float]:
    """Positive snapshot times inside the box validity window."""
    limit = store.grid.validity_time
    return [t for t in store.times if t > t_min and t <= limit * (1 + 1e-12)]


def term_decay_series(store: SnapshotStore, term_id: DuhamelTermId, p=2.0,
                      t_min: float = 0.0, progress: bool = False) -> DecaySeries:
    """
    Norms of one Duhamel term at every snapshot time in the validity window.

    Args:
        store: snapshots of a run.
        term_id: which term.
        p: Lebesgue exponent or a NormSpec (for mixed norms).
        t_min: drop times at or below this.
        progress: show a tqdm bar.

    Returns: the DecaySeries labelled with the term and norm.
    """
    spec = _norm_spec(p)
    times = series_times(store, t_min)
    if len(times) < 2 or times[-1] < 10 * times[0]:
        raise ScheduleError(
            f"term series needs snapshots spanning a decade inside the validity window, "
            f"got {times[:1] + times[-1:]}")
    grid = store.grid
    values = []
    for t, integrals in tqdm(time_integrals(store, times), total=len(times),
                             desc=term_id.label, disable=not progress, leave=False):
        field = _as_field(grid, _apply_term(grid, term_id.label, integrals))
        values.append(norm(field, spec, components=term_id.components))
    return DecaySeries(f"{term_id.label}-{spec.key}", np.asarray(times), np.asarray(values))
