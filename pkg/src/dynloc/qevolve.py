"""Split-operator propagator for the two-component Schrodinger equation.

The state obeys i*kbar dPsi/dt = H Psi with

    H = p^2/2 + s(x,t)*I + [[h(x), o(x)], [o(x), -h(x)]],
    s(x,t) = (1/2)[a + 2 q cos(2 t)] x^2,

where in the g/e basis (h, o) = (kbar*Delta, kbar*Omega0*cos x) — i.e. the
Pauli vector v = (kbar*Omega0*cos x, 0, -kbar*Delta) — and in the |+-> basis
(h, o) = (kbar*Omega0*cos x, kbar*Delta), v = (kbar*Delta, 0, kbar*Omega0*cos x).
At Delta = 0 the |+-> components decouple into the diabatic potentials
V(+-) = s +- kbar*Omega0*cos x.

One Strang step is V(dt/2) K(dt) V(dt/2); the potential factor is applied in
closed form through the Pauli identity exp(-i theta n.sigma) =
cos(theta) I - i sin(theta) n.sigma (never by series), with cos(2t) frozen at
the midpoint of each potential half-step, which keeps global second order for
the explicitly time-dependent term.  Step size is controlled by step doubling:
one dt step is compared against two dt/2 steps in the L2 norm and the halved
result is accepted, so accepted evolution stays a product of unitaries.

The optional ``gamma`` argument threads the non-hermitian decay used by the
quantum-jump module: each potential half-step becomes
exp(-gamma*dt/4) U_V exp(-gamma*dt/4) on the excited row (total decay
exp(-gamma*dt_half/2) per half-step, symmetric placement preserving second
order).  gamma = 0 takes exactly the closed-evolution code path.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from math import cos, exp, sin, sqrt

import numpy as np
import scipy.fft as sfft

from dynloc.gridstate import Grid, SpinorField
from dynloc.params import TrapParams

__all__ = [
    "PauliPotential",
    "StepController",
    "StepUnderflowError",
    "potential_phase",
    "kinetic_phase",
    "strang_step",
    "advance_step",
    "propagate",
    "to_pm_basis",
    "from_pm_basis",
]

_SAFETY = 0.9
_GROW_CAP = 2.0
_SHRINK_CAP = 0.2
_CACHE_MAX = 16


class StepUnderflowError(RuntimeError):
    """Adaptive step fell below dt_min without meeting the tolerance."""


class PauliPotential:
    """Node-wise potential s(x,t)*I + v(x).sigma for one basis, plus factor caches.

    The Pauli vector is static in time (only the scalar trap part carries t),
    so the unitary coupling factors for a given dt are precomputed once and
    reused; the same holds for the kinetic factor exp(-i p^2 dt / (2 kbar)),
    cached here because every propagation owns exactly one PauliPotential.
    """

    def __init__(self, trap: TrapParams, grid: Grid, basis: str = "ge"):
        if basis not in ("ge", "pm"):
            raise ValueError(f"basis must be 'ge' or 'pm', got {basis!r}")
        self.trap = trap
        self.grid = grid
        self.basis = basis
        coupling = trap.kbar * trap.omega0 * np.cos(grid.x)
        if basis == "ge":
            # v = (kbar*Omega0*cos x, 0, -kbar*Delta)
            self.v1 = coupling
            self.v3 = np.full(grid.n, -trap.kbar * trap.delta)
            h, o = -self.v3, self.v1
        else:
            # v = (kbar*Delta, 0, kbar*Omega0*cos x)
            self.v1 = np.full(grid.n, trap.kbar * trap.delta)
            self.v3 = coupling
            h, o = self.v3, self.v1
        self._h = h
        self._o = o
        vnorm = np.hypot(h, o)
        safe = np.where(vnorm > 0.0, vnorm, 1.0)
        self._vnorm = vnorm
        self._hhat = h / safe
        self._ohat = o / safe
        self._x2 = grid.x**2
        # x is sign-symmetric node for node (x[i] = -x[n-i] for i >= 1), so
        # even functions of x need evaluating on half the nodes only
        n = grid.n
        self._x2_mirror = n % 2 == 0 and bool(
            np.array_equal(self._x2[1:], self._x2[:0:-1]))
        if self._x2_mirror:
            self._x2_half = self._x2[n // 2:].copy()
            self._x2_edge = float(self._x2[0])
        self._ucache: dict = {}
        self._kcache: dict = {}

    def matrix(self, t: float) -> np.ndarray:
        """Dense (n, 2, 2) potential matrix at time t (tests and oracles)."""
        s = self.scalar(t)
        m = np.empty((self.grid.n, 2, 2), dtype=complex)
        m[:, 0, 0] = s + self._h
        m[:, 0, 1] = self._o
        m[:, 1, 0] = self._o
        m[:, 1, 1] = s - self._h
        return m

    def scalar(self, t: float) -> np.ndarray:
        """Trap scalar s(x, t)."""
        return 0.5 * (self.trap.a + 2.0 * self.trap.q * np.cos(2.0 * t)) * self._x2

    def diabatic_potentials(self, t: float) -> tuple:
        """(V+, V-) = s +- kbar*Omega0*cos x (meaningful at Delta = 0)."""
        s = self.scalar(t)
        w = self.trap.kbar * self.trap.omega0 * np.cos(self.grid.x)
        return s + w, s - w

    def unitary_factors(self, dt: float) -> tuple:
        """(A, B, conj(A)) with exp(-i v.sigma dt/kbar) = [[A, B], [B, conj(A)]]."""
        cached = self._ucache.get(dt)
        if cached is None:
            theta = self._vnorm * (dt / self.trap.kbar)
            sin_t, cos_t = np.sin(theta), np.cos(theta)
            a_fac = cos_t - 1j * sin_t * self._hhat
            cached = (a_fac, -1j * sin_t * self._ohat, np.conj(a_fac))
            if len(self._ucache) >= _CACHE_MAX:
                self._ucache.clear()
            self._ucache[dt] = cached
        return cached

    def scalar_phase(self, t_mid: float, dt: float) -> np.ndarray:
        """exp(-i s(x, t_mid) dt / kbar)."""
        coeff = 0.5 * (self.trap.a + 2.0 * self.trap.q * np.cos(2.0 * t_mid)) * dt / self.trap.kbar
        if not self._x2_mirror:
            return np.exp(-1j * coeff * self._x2)
        n = self.grid.n
        theta = coeff * self._x2_half
        cos_t, sin_t = np.cos(theta), np.sin(theta)
        out = np.empty(n, dtype=np.complex128)
        re, im = out.real, out.imag
        re[n // 2:] = cos_t
        im[n // 2:] = -sin_t
        re[1:n // 2] = cos_t[:0:-1]
        im[1:n // 2] = -sin_t[:0:-1]
        edge = coeff * self._x2_edge
        out[0] = complex(cos(edge), -sin(edge))
        return out

    def kinetic_factor(self, dt: float) -> np.ndarray:
        """exp(-i p^2 dt / (2 kbar)) on the DFT-ordered momentum nodes."""
        cached = self._kcache.get(dt)
        if cached is None:
            cached = np.exp(-1j * self.grid.p**2 * (dt / (2.0 * self.trap.kbar)))
            if len(self._kcache) >= _CACHE_MAX:
                self._kcache.clear()
            self._kcache[dt] = cached
        return cached


def potential_phase(field: SpinorField, pot: PauliPotential, t: float, dt: float,
                    gamma: float = 0.0) -> SpinorField:
    """Apply exp(-i (s I + v.sigma) dt / kbar) with cos(2t) at the midpoint.

    With gamma > 0 the excited row additionally decays by exp(-gamma*dt/2)
    split symmetrically around the unitary.  Does not advance field.t.
    """
    if field.basis != pot.basis:
        raise ValueError(f"field basis {field.basis!r} does not match potential {pot.basis!r}")
    if gamma < 0.0:
        raise ValueError("gamma must be nonnegative")
    if gamma > 0.0 and field.basis != "ge":
        raise ValueError("decay acts on the excited state; g/e basis required")
    a_fac, b_fac, a_conj = pot.unitary_factors(dt)
    phase = pot.scalar_phase(t + 0.5 * dt, dt)
    if gamma > 0.0:
        field.psi[1] *= exp(-0.25 * gamma * dt)
    g, e = field.psi
    new_g = a_fac * g + b_fac * e
    new_e = b_fac * g + a_conj * e
    new_g *= phase
    new_e *= phase
    field.psi[0] = new_g
    field.psi[1] = new_e
    if gamma > 0.0:
        field.psi[1] *= exp(-0.25 * gamma * dt)
    return field


def kinetic_phase(field: SpinorField, dt: float, pot: PauliPotential | None = None) -> SpinorField:
    """Multiply the momentum representation by exp(-i p^2 dt / (2 kbar))."""
    if pot is not None:
        factor = pot.kinetic_factor(dt)
    else:
        factor = np.exp(-1j * field.grid.p**2 * (dt / (2.0 * field.grid.kbar)))
    ft = sfft.fft(field.psi, axis=1)
    ft *= factor
    field.psi = sfft.ifft(ft, axis=1, overwrite_x=True)
    return field


def strang_step(field: SpinorField, pot: PauliPotential, t: float, dt: float,
                gamma: float = 0.0) -> SpinorField:
    """V(dt/2) K(dt) V(dt/2); advances field.t to t + dt."""
    half = 0.5 * dt
    potential_phase(field, pot, t, half, gamma)
    kinetic_phase(field, dt, pot)
    potential_phase(field, pot, t + half, half, gamma)
    field.t = t + dt
    return field


@dataclass
class StepController:
    """Step-doubling error control: tolerance on ||psi_dt - psi_{dt/2 x2}||_L2."""

    tol: float = 1e-8
    dt_min: float = 1e-12
    dt_max: float = 0.05
    dt_init: float = 0.01
    dt: float = dc_field(default=0.0)
    last_err: float = 0.0
    n_accepted: int = 0
    n_rejected: int = 0

    def __post_init__(self):
        if not (0.0 < self.dt_min <= self.dt_max):
            raise ValueError("need 0 < dt_min <= dt_max")
        if self.dt <= 0.0:
            self.dt = min(max(self.dt_init, self.dt_min), self.dt_max)

    def _factor(self, err: float) -> float:
        if err <= 0.0:
            return _GROW_CAP
        return min(_GROW_CAP, max(_SHRINK_CAP, _SAFETY * (self.tol / err) ** (1.0 / 3.0)))

    def after_accept(self, dt_used: float, err: float, clamped: bool) -> None:
        self.last_err = err
        self.n_accepted += 1
        if not clamped:
            self.dt = min(self.dt_max, max(self.dt_min, dt_used * self._factor(err)))

    def after_reject(self, dt_used: float, err: float) -> float:
        """Shrink after a failed attempt; returns the new working step."""
        self.last_err = err
        self.n_rejected += 1
        new_dt = dt_used * self._factor(err)
        if new_dt < self.dt_min or dt_used <= self.dt_min:
            raise StepUnderflowError(
                f"step {dt_used:.3e} rejected (err {err:.3e} > tol {self.tol:.3e}) "
                f"but dt_min = {self.dt_min:.3e} reached"
            )
        self.dt = new_dt
        return self.dt


def advance_step(field: SpinorField, pot: PauliPotential, ctrl: StepController,
                 t: float, t_limit: float, gamma: float = 0.0) -> float:
    """One accepted adaptive step from t toward t_limit; returns the new time.

    The last step into t_limit is clamped so the limit is hit exactly.
    """
    if t_limit == t:
        return t
    direction = 1.0 if t_limit > t else -1.0
    dx = field.grid.dx
    while True:
        remaining = (t_limit - t) * direction
        clamped = remaining <= ctrl.dt * (1.0 + 1e-12)
        dt_try = remaining if clamped else ctrl.dt
        dt_signed = direction * dt_try
        big = field.copy()
        strang_step(big, pot, t, dt_signed, gamma)
        small = field.copy()
        strang_step(small, pot, t, 0.5 * dt_signed, gamma)
        strang_step(small, pot, t + 0.5 * dt_signed, 0.5 * dt_signed, gamma)
        diff = small.psi - big.psi
        err = sqrt(float(np.sum(diff.real**2 + diff.imag**2)) * dx)
        if err <= ctrl.tol:
            field.psi = small.psi
            t = t_limit if clamped else t + dt_signed
            field.t = t
            ctrl.after_accept(dt_try, err, clamped)
            return t
        ctrl.after_reject(dt_try, err)


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


def propagate(field: SpinorField, pot: PauliPotential, t0: float, t1: float,
              ctrl: StepController, observer=None, stride: float | None = None,
              gamma: float = 0.0) -> SpinorField:
    """Advance field from t0 to t1 with adaptive Strang stepping.

    The observer (if any) is called with the field at t0, at every stride
    multiple, and at t1; sample times are hit exactly (the step is clamped).
    The boundary-leak monitor runs at every sample time and raises LeakError.
    """
    field.t = t0
    if observer is not None:
        observer(field)
    if t1 == t0:
        return field
    t = t0
    for target in _sample_times(t0, t1, stride):
        while t != target:
            t = advance_step(field, pot, ctrl, t, target, gamma)
        field.check_leak()
        if observer is not None:
            observer(field)
    return field


_INV_RT2 = 1.0 / np.sqrt(2.0)


def to_pm_basis(field: SpinorField) -> SpinorField:
    """(psi_g, psi_e) -> (psi_+, psi_-) = (psi_g + psi_e, psi_g - psi_e)/sqrt(2)."""
    if field.basis != "ge":
        raise ValueError(f"expected g/e basis, got {field.basis!r}")
    psi = np.vstack([
        (field.psi[0] + field.psi[1]) * _INV_RT2,
        (field.psi[0] - field.psi[1]) * _INV_RT2,
    ])
    return SpinorField(grid=field.grid, psi=psi, t=field.t, basis="pm")


def from_pm_basis(field: SpinorField) -> SpinorField:
    """Inverse of to_pm_basis (the map is involutive up to the basis tag)."""
    if field.basis != "pm":
        raise ValueError(f"expected +/- basis, got {field.basis!r}")
    psi = np.vstack([
        (field.psi[0] + field.psi[1]) * _INV_RT2,
        (field.psi[0] - field.psi[1]) * _INV_RT2,
    ])
    return SpinorField(grid=field.grid, psi=psi, t=field.t, basis="ge")
