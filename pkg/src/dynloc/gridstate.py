"""Spatial grid, two-component wave functions, distributions, and moments.

Positions live on N uniform nodes x_j = -x_max + j*dx, dx = 2*x_max/N.  The
conjugate momentum nodes follow the discrete-Fourier convention scaled by the
effective Planck constant, p = kbar * 2*pi*fftfreq(N, dx), spacing
2*pi*kbar/(2*x_max), so a plane wave exp(i*p0*x/kbar) sits on momentum node
p0.  Momentum densities use the Parseval-consistent transform
psi_tilde(p_k) = dx/sqrt(2*pi*kbar) * exp(i p_k x_max/kbar) * FFT[psi]_k,
which makes sum |psi_tilde|^2 dp = sum |psi|^2 dx exact.

There are no absorbing boundaries: a hard leak monitor flags any state with
more than LEAK_TOLERANCE of its norm in the outer 1% of nodes, so runs fail
loudly instead of reflecting off the box edge.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property
from math import ceil, sqrt

import numpy as np
import scipy.fft as sfft

__all__ = [
    "Grid",
    "SpinorField",
    "Distribution",
    "MomentSummary",
    "LeakError",
    "LEAK_TOLERANCE",
    "init_gaussian",
    "position_distributions",
    "momentum_distributions",
    "moments",
    "window_average",
]

LEAK_TOLERANCE = 1e-6  # fraction of norm allowed in the outer 1% of nodes


class LeakError(RuntimeError):
    """State touched the box boundary; the run is invalid."""


@dataclass(frozen=True)
class Grid:
    """Uniform position grid and its conjugate momentum nodes."""

    n: int
    x_max: float
    kbar: float

    def __post_init__(self):
        if self.n < 2 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two, got {self.n}")
        if self.x_max <= 0.0 or self.kbar <= 0.0:
            raise ValueError("x_max and kbar must be positive")

    @property
    def dx(self) -> float:
        return 2.0 * self.x_max / self.n

    @property
    def dp(self) -> float:
        return 2.0 * np.pi * self.kbar / (2.0 * self.x_max)

    @cached_property
    def x(self) -> np.ndarray:
        return -self.x_max + self.dx * np.arange(self.n)

    @cached_property
    def p(self) -> np.ndarray:
        """Momentum nodes in DFT ordering."""
        return self.kbar * 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.dx)

    @cached_property
    def edge_slices(self) -> tuple:
        """Index slices of the outer 1% of nodes (half per side)."""
        m = max(1, ceil(0.005 * self.n))
        return (slice(0, m), slice(self.n - m, self.n))


@dataclass
class SpinorField:
    """Two complex amplitude rows on a grid: (psi_g, psi_e) or (psi_+, psi_-).

    ``psi`` has shape (2, n); row 0 is the g (or +) component.  The field is
    single-owner mutable; evolution code updates ``psi`` and ``t`` in place.
    """

    grid: Grid
    psi: np.ndarray
    t: float = 0.0
    basis: str = "ge"

    def __post_init__(self):
        if self.psi.shape != (2, self.grid.n):
            raise ValueError(f"psi must have shape (2, {self.grid.n}), got {self.psi.shape}")
        if self.basis not in ("ge", "pm"):
            raise ValueError(f"basis must be 'ge' or 'pm', got {self.basis!r}")
        self.psi = np.ascontiguousarray(self.psi, dtype=np.complex128)

    @property
    def psi_g(self) -> np.ndarray:
        return self.psi[0]

    @property
    def psi_e(self) -> np.ndarray:
        return self.psi[1]

    def density(self) -> np.ndarray:
        """|psi|^2 per component, shape (2, n)."""
        return self.psi.real**2 + self.psi.imag**2

    def norm2(self) -> float:
        return float(np.sum(self.density()) * self.grid.dx)

    def boundary_occupancy(self) -> float:
        """Norm fraction-like weight in the outer 1% of nodes (absolute, not relative)."""
        dens = self.density().sum(axis=0)
        lo, hi = self.grid.edge_slices
        return float((dens[lo].sum() + dens[hi].sum()) * self.grid.dx)

    def check_leak(self) -> None:
        occ = self.boundary_occupancy()
        if occ > LEAK_TOLERANCE * self.norm2():
            raise LeakError(
                f"boundary occupancy {occ:.3e} exceeds {LEAK_TOLERANCE:.0e} of norm "
                f"at t = {self.t:.6g}; enlarge x_max"
            )

    def copy(self) -> "SpinorField":
        return SpinorField(grid=self.grid, psi=self.psi.copy(), t=self.t, basis=self.basis)


@dataclass(frozen=True)
class Distribution:
    """Densities over position or momentum nodes; p_total = p_g + p_e."""

    abscissa: np.ndarray
    p_g: np.ndarray
    p_e: np.ndarray
    p_total: np.ndarray
    spacing: float
    kind: str  # "position" | "momentum"
    t: float | None = None
    normalized: bool = False

    def integral(self) -> float:
        return float(np.sum(self.p_total) * self.spacing)


@dataclass(frozen=True)
class MomentSummary:
    """First and second moments, widths, populations, and norm at one time."""

    t: float
    x_mean: float
    x2_mean: float
    dx_width: float
    p_mean: float
    p2_mean: float
    dp_width: float
    pop_g: float
    pop_e: float
    norm2: float


def init_gaussian(
    grid: Grid,
    width: float,
    x0: float = 0.0,
    p0: float = 0.0,
    internal: tuple = (1.0, 1.0),
    basis: str = "ge",
) -> SpinorField:
    """Minimum-uncertainty Gaussian packet with the given internal weights.

    |psi(x)|^2 ~ exp(-(x-x0)^2/(2*width^2)), plane-wave factor
    exp(i*p0*x/kbar), internal weights normalized, total norm exactly 1.
    Refuses widths under 2*dx (unresolvable) and packets whose tail violates
    the boundary-leak tolerance.
    """
    if width <= 0.0:
        raise ValueError(f"width must be positive, got {width}")
    if width < 2.0 * grid.dx:
        raise ValueError(f"width {width:.3g} below 2*dx = {2.0 * grid.dx:.3g}; refine the grid")
    w = np.asarray(internal, dtype=complex)
    if w.shape != (2,) or not np.any(w):
        raise ValueError("internal must be two complex weights, not both zero")
    w = w / np.sqrt(np.sum(np.abs(w) ** 2))
    envelope = np.exp(-((grid.x - x0) ** 2) / (4.0 * width**2) + 1j * p0 * grid.x / grid.kbar)
    psi = np.outer(w, envelope)
    field = SpinorField(grid=grid, psi=psi, t=0.0, basis=basis)
    field.psi /= sqrt(field.norm2())
    field.check_leak()
    return field


def position_distributions(field: SpinorField, normalize: bool = False) -> Distribution:
    """P_g = |psi_g|^2, P_e = |psi_e|^2, P = P_g + P_e on the position nodes."""
    dens = field.density()
    scale = 1.0 / field.norm2() if normalize else 1.0
    p_g = dens[0] * scale
    p_e = dens[1] * scale
    return Distribution(
        abscissa=field.grid.x,
        p_g=p_g,
        p_e=p_e,
        p_total=p_g + p_e,
        spacing=field.grid.dx,
        kind="position",
        t=field.t,
        normalized=normalize,
    )


def _momentum_density(field: SpinorField) -> np.ndarray:
    """|psi_tilde|^2 per component in DFT node ordering, shape (2, n)."""
    ft = sfft.fft(field.psi, axis=1)
    scale = field.grid.dx**2 / (2.0 * np.pi * field.grid.kbar)
    return (ft.real**2 + ft.imag**2) * scale


def momentum_distributions(field: SpinorField, normalize: bool = False) -> Distribution:
    """Momentum-space densities, sorted by momentum."""
    dens = _momentum_density(field)
    order = np.argsort(field.grid.p, kind="stable")
    scale = 1.0 / field.norm2() if normalize else 1.0
    p_g = dens[0][order] * scale
    p_e = dens[1][order] * scale
    return Distribution(
        abscissa=field.grid.p[order],
        p_g=p_g,
        p_e=p_e,
        p_total=p_g + p_e,
        spacing=field.grid.dp,
        kind="momentum",
        t=field.t,
        normalized=normalize,
    )


def moments(field: SpinorField) -> MomentSummary:
    """Position/momentum means, widths, populations, and norm.

    Moments are taken on the normalized density; populations keep the raw
    scale (pop_g + pop_e = norm2).
    """
    grid = field.grid
    dens = field.density()
    pop_g = float(dens[0].sum() * grid.dx)
    pop_e = float(dens[1].sum() * grid.dx)
    norm2 = pop_g + pop_e
    if norm2 <= 0.0:
        raise ValueError("zero-norm field has no moments")
    px = dens.sum(axis=0)
    x_mean = float(px @ grid.x * grid.dx / norm2)
    x2_mean = float(px @ (grid.x**2) * grid.dx / norm2)
    pdens = _momentum_density(field).sum(axis=0)
    p_mean = float(pdens @ grid.p * grid.dp / norm2)
    p2_mean = float(pdens @ (grid.p**2) * grid.dp / norm2)
    return MomentSummary(
        t=field.t,
        x_mean=x_mean,
        x2_mean=x2_mean,
        dx_width=sqrt(max(x2_mean - x_mean**2, 0.0)),
        p_mean=p_mean,
        p2_mean=p2_mean,
        dp_width=sqrt(max(p2_mean - p_mean**2, 0.0)),
        pop_g=pop_g,
        pop_e=pop_e,
        norm2=norm2,
    )


def window_average(series, window) -> Distribution:
    """Pointwise mean of the distributions with time stamps inside [t_a, t_b]."""
    t_a, t_b = window
    if not t_a < t_b:
        raise ValueError(f"bad window {window}")
    picked = [d for d in series if d.t is not None and t_a <= d.t <= t_b]
    if not picked:
        raise ValueError(f"no distributions recorded inside window {window}")
    first = picked[0]
    for d in picked[1:]:
        if d.kind != first.kind or d.abscissa.shape != first.abscissa.shape:
            raise ValueError("window_average needs distributions on a common abscissa")
    p_g = np.mean([d.p_g for d in picked], axis=0)
    p_e = np.mean([d.p_e for d in picked], axis=0)
    return replace(
        first,
        p_g=p_g,
        p_e=p_e,
        p_total=p_g + p_e,
        t=0.5 * (t_a + t_b),
    )
