"""Classical counterpart: Hamilton plus Bloch equations for trajectory ensembles.

Each trajectory carries (x, p, r1, r2, r3) obeying

    x' = p
    p' = -(a + 2 q cos 2t) x + kbar*Omega0*sin(x)*r1
    r1' = -2 Delta r2
    r2' =  2 Delta r1 + 2 Omega0 cos(x) r3
    r3' = -2 Omega0 cos(x) r2

i.e. the center of mass is forced by the in-phase dipole quadrature r1 while
the Bloch vector precesses about w = (-2 Omega0 cos x, 0, 2 Delta), so
r1^2 + r2^2 + r3^2 is conserved along every trajectory.

The integrator is an adaptive embedded Dormand-Prince 5(4) pair written
directly over trajectory columns with one step size per trajectory.  All
stage combinations are explicit elementwise expressions (no matrix-product
reductions), so a trajectory's arithmetic is identical no matter which other
trajectories share its batch; paths depend only on (seed, index), and results
do not change under any partitioning of the ensemble.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from math import sqrt

import numpy as np

from dynloc.gridstate import Distribution, MomentSummary
from dynloc.params import TrapParams

__all__ = [
    "ClassicalState",
    "Ensemble",
    "StepUnderflowError",
    "rhs",
    "rhs_rows",
    "integrate",
    "integrate_ensemble",
    "sample_ensemble",
    "ensemble_observables",
]

_SAFETY = 0.9
_MIN_FAC = 0.2
_MAX_FAC = 5.0
_ERR_EXP = -0.2  # 1/(order+1) for the 5(4) pair


class StepUnderflowError(RuntimeError):
    """Adaptive step fell below dt_min without meeting the tolerance."""


@dataclass(frozen=True)
class ClassicalState:
    """One trajectory: phase-space point plus Bloch vector."""

    x: float
    p: float
    r1: float
    r2: float
    r3: float
    t: float = 0.0

    def as_column(self) -> np.ndarray:
        return np.array([[self.x], [self.p], [self.r1], [self.r2], [self.r3]], dtype=float)

    def bloch_norm(self) -> float:
        return sqrt(self.r1**2 + self.r2**2 + self.r3**2)


@dataclass
class Ensemble:
    """Struct-of-arrays trajectory ensemble; rows (x, p, r1, r2, r3)."""

    y: np.ndarray  # (5, n)
    trap: TrapParams
    t: float = 0.0
    seed: int | None = None

    def __post_init__(self):
        self.y = np.ascontiguousarray(self.y, dtype=float)
        if self.y.ndim != 2 or self.y.shape[0] != 5:
            raise ValueError(f"ensemble array must have shape (5, n), got {self.y.shape}")

    @property
    def n(self) -> int:
        return self.y.shape[1]

    def state(self, i: int) -> ClassicalState:
        return ClassicalState(*(float(v) for v in self.y[:, i]), t=self.t)

    def bloch_norms(self) -> np.ndarray:
        return np.sqrt(self.y[2] ** 2 + self.y[3] ** 2 + self.y[4] ** 2)

    def copy(self) -> "Ensemble":
        return Ensemble(y=self.y.copy(), trap=self.trap, t=self.t, seed=self.seed)


def rhs_rows(t, y: np.ndarray, trap: TrapParams) -> np.ndarray:
    """Vectorized right-hand side over trajectory columns; y has shape (5, m)."""
    x, p, r1, r2, r3 = y
    cosx = np.cos(x)
    out = np.empty_like(y)
    out[0] = p
    out[1] = -(trap.a + 2.0 * trap.q * np.cos(2.0 * t)) * x + trap.kbar * trap.omega0 * np.sin(x) * r1
    out[2] = -2.0 * trap.delta * r2
    out[3] = 2.0 * trap.delta * r1 + 2.0 * trap.omega0 * cosx * r3
    out[4] = -2.0 * trap.omega0 * cosx * r2
    return out


def rhs(state: ClassicalState, t: float, trap: TrapParams) -> np.ndarray:
    """Derivative of (x, p, r1, r2, r3) for a single trajectory."""
    return rhs_rows(float(t), state.as_column(), trap)[:, 0]


# Dormand-Prince 5(4): e = b5 - b4 gives the embedded error estimate directly.
_E1 = 35.0 / 384.0 - 5179.0 / 57600.0
_E3 = 500.0 / 1113.0 - 7571.0 / 16695.0
_E4 = 125.0 / 192.0 - 393.0 / 640.0
_E5 = -2187.0 / 6784.0 + 92097.0 / 339200.0
_E6 = 11.0 / 84.0 - 187.0 / 2100.0
_E7 = -1.0 / 40.0


def _attempt(t, y, h, trap, k1):
    """One DP5(4) trial step per column; returns (y5, k7, error vector)."""
    k2 = rhs_rows(t + 0.2 * h, y + h * (0.2 * k1), trap)
    k3 = rhs_rows(t + 0.3 * h, y + h * (0.075 * k1 + 0.225 * k2), trap)
    k4 = rhs_rows(t + 0.8 * h, y + h * ((44.0 / 45.0) * k1 - (56.0 / 15.0) * k2 + (32.0 / 9.0) * k3), trap)
    k5 = rhs_rows(
        t + (8.0 / 9.0) * h,
        y + h * ((19372.0 / 6561.0) * k1 - (25360.0 / 2187.0) * k2
                 + (64448.0 / 6561.0) * k3 - (212.0 / 729.0) * k4),
        trap,
    )
    k6 = rhs_rows(
        t + h,
        y + h * ((9017.0 / 3168.0) * k1 - (355.0 / 33.0) * k2 + (46732.0 / 5247.0) * k3
                 + (49.0 / 176.0) * k4 - (5103.0 / 18656.0) * k5),
        trap,
    )
    y5 = y + h * ((35.0 / 384.0) * k1 + (500.0 / 1113.0) * k3 + (125.0 / 192.0) * k4
                  - (2187.0 / 6784.0) * k5 + (11.0 / 84.0) * k6)
    k7 = rhs_rows(t + h, y5, trap)  # FSAL: first stage of the next step
    errv = h * (_E1 * k1 + _E3 * k3 + _E4 * k4 + _E5 * k5 + _E6 * k6 + _E7 * k7)
    return y5, k7, errv


def _advance_columns(y, t, dt, k1, target, trap, rtol, atol, dt_min, dt_max):
    """Advance every column of y from its own t to the common target time.

    Mutates y, t, dt, k1 in place.  dt holds positive step magnitudes; the
    direction is set by the sign of (target - t).  FSAL derivative k1 stays
    valid across calls.
    """
    direction = 1.0 if target >= t[0] else -1.0
    while True:
        rem = (target - t) * direction
        idx = np.flatnonzero(rem > 0.0)
        if idx.size == 0:
            return
        ya = y[:, idx]
        ta = t[idx]
        da = dt[idx]
        ka = k1[:, idx]
        rema = rem[idx]
        clamped = da >= rema
        h_mag = np.where(clamped, rema, da)
        h = direction * h_mag
        y5, k7, errv = _attempt(ta, ya, h, trap, ka)
        sc = atol + rtol * np.maximum(np.abs(ya), np.abs(y5))
        err = np.sqrt(np.mean((errv / sc) ** 2, axis=0))
        pos = err > 0.0
        fac = np.full(err.shape, _MAX_FAC)
        if np.any(pos):
            fac[pos] = np.clip(_SAFETY * err[pos] ** _ERR_EXP, _MIN_FAC, _MAX_FAC)
        acc = err <= 1.0
        if np.any(acc):
            ai = idx[acc]
            y[:, ai] = y5[:, acc]
            k1[:, ai] = k7[:, acc]
            t[ai] = np.where(clamped[acc], target, ta[acc] + h[acc])
            # clamped steps do not update the working step size
            dt[ai] = np.where(clamped[acc], da[acc],
                              np.minimum(h_mag[acc] * fac[acc], dt_max))
        rej = ~acc
        if np.any(rej):
            bad = h_mag[rej] <= dt_min
            new_dt = h_mag[rej] * np.minimum(fac[rej], 1.0)
            if np.any(bad) or np.any(new_dt < dt_min):
                worst = idx[rej][int(np.argmax(err[rej]))]
                raise StepUnderflowError(
                    f"trajectory {worst}: step rejected at dt_min = {dt_min:.3e} "
                    f"(err {float(np.max(err[rej])):.3e} in tolerance units)"
                )
            dt[idx[rej]] = new_dt


def _sample_times(t0: float, t1: float, stride: float | None) -> np.ndarray:
    if stride is None or stride <= 0.0:
        return np.array([t1])
    span = abs(t1 - t0)
    direction = 1.0 if t1 >= t0 else -1.0
    k = int(np.floor(span / stride + 1e-9))
    times = t0 + direction * stride * np.arange(1, k + 1)
    if k == 0 or abs(times[-1] - t1) > 1e-9 * max(stride, 1.0):
        times = np.append(times, t1)
    else:
        times[-1] = t1
    return times


def integrate(state: ClassicalState, trap: TrapParams, t0: float, t1: float,
              rtol: float = 1e-9, atol: float = 1e-12, observer=None,
              stride: float | None = None, dt_min: float = 1e-12,
              dt_max: float = 0.5, dt_init: float = 0.01) -> ClassicalState:
    """Integrate one trajectory from t0 to t1 (either direction).

    The observer (if any) receives a ClassicalState at t0, at every stride
    multiple, and at t1.
    """
    y = state.as_column()
    t = np.array([t0])
    dt = np.array([min(max(dt_init, dt_min), dt_max)])
    k1 = rhs_rows(t, y, trap)
    current = replace(state, t=t0)
    if observer is not None:
        observer(current)
    if t1 == t0:
        return current
    for target in _sample_times(t0, t1, stride):
        _advance_columns(y, t, dt, k1, target, trap, rtol, atol, dt_min, dt_max)
        current = ClassicalState(*(float(v) for v in y[:, 0]), t=target)
        if observer is not None:
            observer(current)
    return current


def integrate_ensemble(ens: Ensemble, t1: float, rtol: float = 1e-9,
                       atol: float = 1e-12, observer=None,
                       stride: float | None = None, dt_min: float = 1e-12,
                       dt_max: float = 0.5, dt_init: float = 0.01) -> Ensemble:
    """Advance all trajectories in place to t1; all members share t at samples."""
    t0 = ens.t
    trap = ens.trap
    t = np.full(ens.n, t0)
    dt = np.full(ens.n, min(max(dt_init, dt_min), dt_max))
    k1 = rhs_rows(t, ens.y, trap)
    if observer is not None:
        observer(ens)
    if t1 == t0:
        return ens
    for target in _sample_times(t0, t1, stride):
        _advance_columns(ens.y, t, dt, k1, target, trap, rtol, atol, dt_min, dt_max)
        ens.t = target
        if observer is not None:
            observer(ens)
    return ens


def sample_ensemble(rng, n: int, kbar: float, trap: TrapParams | None = None,
                    internal: str = "superposition") -> Ensemble:
    """Gaussian phase-space ensemble matching the quantum packet widths.

    x ~ N(0, sqrt(kbar)), p ~ N(0, sqrt(kbar)/2) (minimum-uncertainty pair).
    ``internal`` selects the shared Bloch vector: "superposition" gives
    (1, 0, 0) — the (|g>+|e>)/sqrt(2) state — and "ground" gives (0, 0, -1).
    The (x, p) pair of trajectory i uses draws (2i, 2i+1) of the generator,
    so initial conditions depend only on (seed, i).
    """
    if n < 1:
        raise ValueError(f"need n >= 1 trajectories, got {n}")
    if kbar <= 0.0:
        raise ValueError(f"kbar must be positive, got {kbar}")
    if internal not in ("superposition", "ground"):
        raise ValueError(f"internal must be 'superposition' or 'ground', got {internal!r}")
    seed = None
    if isinstance(rng, (int, np.integer)):
        seed = int(rng)
        rng = np.random.default_rng(seed)
    draws = rng.standard_normal((n, 2))
    y = np.zeros((5, n))
    y[0] = draws[:, 0] * np.sqrt(kbar)
    y[1] = draws[:, 1] * (np.sqrt(kbar) / 2.0)
    if internal == "superposition":
        y[2] = 1.0
    else:
        y[4] = -1.0
    if trap is None:
        trap = TrapParams(a=0.0, q=0.0, omega0=0.0, delta=0.0, kbar=kbar)
    return Ensemble(y=y, trap=trap, t=0.0, seed=seed)


def _weighted_density(values, weights, bins, lo, hi, n_total):
    counts, edges = np.histogram(values, bins=bins, range=(lo, hi), weights=weights)
    width = edges[1] - edges[0]
    centers = 0.5 * (edges[:-1] + edges[1:])
    return centers, counts / (n_total * width), width


def ensemble_observables(ens: Ensemble, bins: int = 512,
                         x_range: tuple | None = None,
                         p_range: tuple | None = None):
    """Histograms split by internal-state weight, plus unbinned sample moments.

    Returns (position Distribution, momentum Distribution, MomentSummary).
    Per-trajectory weights (1 -+ r3)/2 give the ground/excited densities, so
    the total density integrates to 1.  Ranges default to a symmetric box
    just covering the samples; pass explicit ranges to share an abscissa
    across snapshots.
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    x, p = ens.y[0], ens.y[1]
    w_e = 0.5 * (1.0 + ens.y[4])
    w_g = 1.0 - w_e
    if x_range is None:
        lim = 1.05 * max(float(np.max(np.abs(x))), 1e-12)
        x_range = (-lim, lim)
    if p_range is None:
        lim = 1.05 * max(float(np.max(np.abs(p))), 1e-12)
        p_range = (-lim, lim)

    xc, xg, dx = _weighted_density(x, w_g, bins, *x_range, ens.n)
    _, xe, _ = _weighted_density(x, w_e, bins, *x_range, ens.n)
    dist_x = Distribution(abscissa=xc, p_g=xg, p_e=xe, p_total=xg + xe,
                          spacing=dx, kind="position", t=ens.t, normalized=True)
    pc, pg, dp = _weighted_density(p, w_g, bins, *p_range, ens.n)
    _, pe, _ = _weighted_density(p, w_e, bins, *p_range, ens.n)
    dist_p = Distribution(abscissa=pc, p_g=pg, p_e=pe, p_total=pg + pe,
                          spacing=dp, kind="momentum", t=ens.t, normalized=True)

    x_mean = float(np.mean(x))
    x2_mean = float(np.mean(x**2))
    p_mean = float(np.mean(p))
    p2_mean = float(np.mean(p**2))
    summary = MomentSummary(
        t=ens.t,
        x_mean=x_mean,
        x2_mean=x2_mean,
        dx_width=sqrt(max(x2_mean - x_mean**2, 0.0)),
        p_mean=p_mean,
        p2_mean=p2_mean,
        dp_width=sqrt(max(p2_mean - p_mean**2, 0.0)),
        pop_g=float(np.mean(w_g)),
        pop_e=float(np.mean(w_e)),
        norm2=1.0,
    )
    return dist_x, dist_p, summary
