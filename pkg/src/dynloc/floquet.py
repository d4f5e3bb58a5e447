"""Mathieu reference oscillator, Floquet solution, and sideband coupling table.

The trap contributes the time-periodic quadratic potential
``(1/2)[a + 2 q cos(2 t)] x^2``, whose classical amplitude obeys the Mathieu
equation

    eps'' + [a + 2 q cos(2 t)] eps = 0 .

In the stable region the solution with eps(0) = 1 and purely imaginary
eps'(0) = i*omega_r has Floquet form eps(t) = exp(i*omega_s*t) * phi(t) with
phi periodic of period pi.  omega_s is the secular frequency, omega_r the
reference-oscillator frequency used to define number states |n>, and
eta = sqrt(kbar / (2*omega_r)) the Lamb-Dicke parameter.

In the interaction picture of that reference oscillator the standing-wave
coupling decomposes into amplitudes

    w_l^(n, n+2k) = Omega0 * sqrt(n!/(n+2k)!) * (i*eta)^(2k) * (1/pi)
                    * Int dt  phi*(t)^(2k) * exp(-eta^2|phi(t)|^2 / 2)
                    * L_n^(2k)(eta^2 |phi(t)|^2) * exp(-2 i l t)

over one period, with L_n^a the generalized Laguerre polynomials.  A
transition n -> n+2k assisted by the l-th drive harmonic is resonant at
detuning Delta = k*omega_s - l.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from math import lgamma, log

import numpy as np
from scipy.integrate import solve_ivp

__all__ = [
    "FloquetSolution",
    "MatrixElementTable",
    "Resonance",
    "solve_mathieu",
    "lamb_dicke",
    "matrix_element",
    "build_matrix_element_table",
    "resonance_detunings",
    "genlaguerre",
]

# Tolerances for the stability/branch checks in solve_mathieu.
MULTIPLIER_TOL = 1e-8
_BRANCH_EDGE = 1e-6


@dataclass(frozen=True)
class FloquetSolution:
    """Stable Floquet solution of the Mathieu equation for one (a, q).

    ``phi`` holds the periodic factor phi(t_m) = exp(-i*omega_s*t_m)*eps(t_m)
    on the uniform nodes t_m = m*pi/M, m = 0..M-1.  Off-node values come from
    the discrete Fourier interpolant (phi is analytic and pi-periodic, so the
    interpolant converges spectrally).  ``eta`` is filled once an effective
    Planck constant is attached via :func:`solve_mathieu` or
    :meth:`with_lamb_dicke`.
    """

    a: float
    q: float
    omega_s: float
    omega_r: float
    phi: np.ndarray
    eta: float | None = None

    @property
    def n_samples(self) -> int:
        return self.phi.shape[0]

    @property
    def times(self) -> np.ndarray:
        """Sample nodes t_m = m*pi/M on [0, pi)."""
        m = self.phi.shape[0]
        return np.arange(m) * (np.pi / m)

    def with_lamb_dicke(self, kbar: float) -> "FloquetSolution":
        return dataclasses.replace(self, eta=lamb_dicke(kbar, self.omega_r))

    def _fourier_coeffs(self) -> tuple[np.ndarray, np.ndarray]:
        """DFT coefficients c_j and integer harmonics j: phi(t) = sum c_j e^{2ijt}."""
        m = self.phi.shape[0]
        c = np.fft.fft(self.phi) / m
        j = np.fft.fftfreq(m, d=1.0 / m)  # integers ..., -2, -1, 0, 1, ...
        return c, j

    def phi_at(self, t) -> np.ndarray:
        """Evaluate the periodic factor phi at arbitrary times (Fourier sum)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        c, j = self._fourier_coeffs()
        out = np.empty(t.shape, dtype=complex)
        # Chunk the (t, j) outer product to bound memory for long time arrays.
        step = max(1, 2_000_000 // max(1, c.size))
        for i0 in range(0, t.size, step):
            tt = t[i0 : i0 + step, None]
            out[i0 : i0 + step] = np.exp(2j * tt * j) @ c
        return out

    def phi_derivative_at(self, t, order: int = 1) -> np.ndarray:
        """Spectral derivative d^order phi / dt^order at arbitrary times."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        c, j = self._fourier_coeffs()
        c = c * (2j * j) ** order
        step = max(1, 2_000_000 // max(1, c.size))
        out = np.empty(t.shape, dtype=complex)
        for i0 in range(0, t.size, step):
            tt = t[i0 : i0 + step, None]
            out[i0 : i0 + step] = np.exp(2j * tt * j) @ c
        return out

    def eps_at(self, t) -> np.ndarray:
        """eps(t) = exp(i*omega_s*t) * phi(t)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.exp(1j * self.omega_s * t) * self.phi_at(t)

    def eps_derivative_at(self, t) -> np.ndarray:
        """eps'(t) via the Floquet form: e^{i w_s t} (phi' + i w_s phi)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.exp(1j * self.omega_s * t) * (
            self.phi_derivative_at(t, 1) + 1j * self.omega_s * self.phi_at(t)
        )

    def wronskian_at(self, t) -> np.ndarray:
        """Im(eps* eps'), conserved along the solution and equal to omega_r."""
        return np.imag(np.conj(self.eps_at(t)) * self.eps_derivative_at(t))

    def residual_at(self, t) -> np.ndarray:
        """|eps'' + [a + 2q cos(2t)] eps| from spectral derivatives of phi."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        phi = self.phi_at(t)
        dphi = self.phi_derivative_at(t, 1)
        ddphi = self.phi_derivative_at(t, 2)
        eps = np.exp(1j * self.omega_s * t) * phi
        ddeps = np.exp(1j * self.omega_s * t) * (
            ddphi + 2j * self.omega_s * dphi - self.omega_s**2 * phi
        )
        return np.abs(ddeps + (self.a + 2.0 * self.q * np.cos(2.0 * t)) * eps)

    def resampled_phi(self, n_samples: int) -> np.ndarray:
        """phi on n_samples uniform nodes via Fourier zero-padding (exact)."""
        m = self.phi.shape[0]
        if n_samples == m:
            return self.phi.copy()
        if n_samples < m:
            raise ValueError("resampling below the stored resolution discards modes")
        c = np.fft.fft(self.phi)
        half = m // 2
        cpad = np.zeros(n_samples, dtype=complex)
        cpad[:half] = c[:half]
        if half > 1:
            cpad[-(half - 1) :] = c[-(half - 1) :]
        # Split the Nyquist coefficient symmetrically (m is even).
        cpad[half] += 0.5 * c[half]
        cpad[n_samples - half] += 0.5 * c[half]
        return np.fft.ifft(cpad) * (n_samples / m)

    def to_json_dict(self) -> dict:
        return {
            "a": self.a,
            "q": self.q,
            "omega_s": self.omega_s,
            "omega_r": self.omega_r,
            "eta": self.eta,
            "phi_re": self.phi.real.tolist(),
            "phi_im": self.phi.imag.tolist(),
        }


def _fundamental_system(a: float, q: float, rtol: float, t_end: float):
    """Integrate the two fundamental Mathieu solutions y1, y2 over [0, t_end].

    State vector (y1, y1', y2, y2') with y1(0)=1, y1'(0)=0, y2(0)=0, y2'(0)=1.
    Returns the solve_ivp result with dense output.
    """

    def rhs(t, y):
        c = a + 2.0 * q * np.cos(2.0 * t)
        return (y[1], -c * y[0], y[3], -c * y[2])

    sol = solve_ivp(
        rhs,
        (0.0, t_end),
        (1.0, 0.0, 0.0, 1.0),
        method="DOP853",
        rtol=rtol,
        atol=rtol * 1e-2,
        dense_output=True,
    )
    if not sol.success:
        raise RuntimeError(f"Mathieu integration failed: {sol.message}")
    return sol


def solve_mathieu(
    a: float,
    q: float,
    tol: float = 1e-12,
    n_samples: int = 1024,
    kbar: float | None = None,
) -> FloquetSolution:
    """Solve the Mathieu problem and extract the stable Floquet solution.

    Integrates the two fundamental solutions over one period [0, pi], forms
    the monodromy matrix M, takes the eigenvalue exp(i*omega_s*pi) with
    omega_s in (0, 1) (positive imaginary part), and normalizes the
    eigenvector so eps(0) = 1; then omega_r = Im eps'(0) and
    phi(t) = exp(-i*omega_s*t)*eps(t) is sampled on n_samples uniform nodes.

    Raises ValueError outside the stable region (|tr M| > 2 or Floquet
    multiplier modulus away from 1) and when omega_s sits at the edge of the
    principal branch (near 0 or 1), where the branch is ambiguous.
    """
    if n_samples < 2 or n_samples % 2:
        raise ValueError("n_samples must be an even integer >= 2")
    ode = _fundamental_system(a, q, tol, np.pi)
    y1, dy1, y2, dy2 = ode.sol(np.pi)
    trace = y1 + dy2
    det = y1 * dy2 - dy1 * y2
    if abs(trace) > 2.0:
        raise ValueError(
            f"(a={a}, q={q}) is Mathieu-unstable: |tr M| = {abs(trace):.6g} > 2, "
            f"Floquet multiplier modulus {max(np.abs(np.roots([1.0, -trace, det]))):.6g}"
        )
    if abs(det - 1.0) > MULTIPLIER_TOL:
        raise ValueError(
            f"monodromy determinant {det} deviates from 1: multiplier modulus "
            f"{np.sqrt(abs(det)):.12g} outside 1 +/- {MULTIPLIER_TOL}"
        )
    omega_s = float(np.arccos(np.clip(trace / 2.0, -1.0, 1.0)) / np.pi)
    if omega_s < _BRANCH_EDGE or omega_s > 1.0 - _BRANCH_EDGE:
        raise ValueError(
            f"secular frequency {omega_s:.3g} sits at the principal-branch edge "
            "(near 0 or 1); the Floquet exponent is ambiguous there"
        )
    lam = complex(trace / 2.0, np.sqrt(max(0.0, 1.0 - (trace / 2.0) ** 2)))
    # Eigenvector (1, w): M (1, w)^T = lam (1, w)^T  =>  w = (lam - A)/B.
    w = (lam - y1) / y2
    if abs(w.real) > 1e-8:
        raise ValueError(
            f"Re eps'(0) = {w.real:.3g} not negligible; eigenvector phase convention broken"
        )
    omega_r = float(w.imag)
    t_m = np.arange(n_samples) * (np.pi / n_samples)
    ys = ode.sol(t_m)
    eps = ys[0] + w * ys[2]
    phi = np.exp(-1j * omega_s * t_m) * eps
    sol = FloquetSolution(a=float(a), q=float(q), omega_s=omega_s, omega_r=omega_r, phi=phi)
    if kbar is not None:
        sol = sol.with_lamb_dicke(kbar)
    return sol


def lamb_dicke(kbar: float, omega_r: float) -> float:
    """eta = sqrt(kbar / (2*omega_r))."""
    if omega_r <= 0.0:
        raise ValueError(f"reference frequency must be positive, got {omega_r}")
    if kbar <= 0.0:
        raise ValueError(f"effective Planck constant must be positive, got {kbar}")
    return float(np.sqrt(kbar / (2.0 * omega_r)))


def genlaguerre(n: int, alpha: float, z: np.ndarray) -> np.ndarray:
    """L_n^alpha(z) by the stable upward three-term recurrence.

    i L_i = (2i - 1 + alpha - z) L_{i-1} - (i - 1 + alpha) L_{i-2}.
    """
    if n < 0:
        raise ValueError("degree must be >= 0")
    z = np.asarray(z)
    prev = np.zeros_like(z, dtype=float)
    cur = np.ones_like(z, dtype=float)
    for i in range(1, n + 1):
        prev, cur = cur, ((2.0 * i - 1.0 + alpha - z) * cur - (i - 1.0 + alpha) * prev) / i
    return cur


def _laguerre_2k(n: int, k: int, z: np.ndarray) -> np.ndarray:
    """L_n^{2k}(z), using L_n^{-m}(z) = (-z)^m (n-m)!/n! L_{n-m}^m(z) for 2k < 0."""
    if k >= 0:
        return genlaguerre(n, 2 * k, z)
    m = -2 * k
    if m > n:
        raise ValueError(f"k = {k} below -floor(n/2) for n = {n}")
    scale = np.exp(lgamma(n - m + 1) - lgamma(n + 1))
    return (-z) ** m * scale * genlaguerre(n - m, m, z)


def matrix_element(
    n: int,
    k: int,
    l: int,
    omega0: float,
    sol: FloquetSolution,
    check: bool = True,
    t_offset: float = 0.0,
) -> complex:
    """Coupling amplitude w_l^(n, n+2k) between reference-oscillator states.

    The period integral is a uniform trapezoid over the stored phi samples
    (spectrally accurate for a periodic analytic integrand).  ``t_offset``
    shifts the quadrature nodes; the result is offset-independent (asserted in
    tests).  With ``check`` the node count is doubled once and the two values
    must agree to 1e-8, else ValueError.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if k < -(n // 2):
        raise ValueError(f"k = {k} must be >= -floor(n/2) = {-(n // 2)}")
    if sol.eta is None:
        raise ValueError("FloquetSolution carries no Lamb-Dicke eta; attach kbar first")
    eta = sol.eta
    if eta == 0.0:
        return complex(omega0) if (k == 0 and l == 0) else 0.0 + 0.0j

    def quad(phi: np.ndarray, t_m: np.ndarray) -> complex:
        zz = eta**2 * np.abs(phi) ** 2
        integrand = (
            np.conj(phi) ** (2 * k)
            * np.exp(-0.5 * zz)
            * _laguerre_2k(n, k, zz)
            * np.exp(-2j * l * t_m)
        )
        return complex(np.mean(integrand))

    # log-space prefactor: Omega0 sqrt(n!/(n+2k)!) (i eta)^(2k)
    pref = omega0 * (-1.0) ** k * np.exp(0.5 * (lgamma(n + 1) - lgamma(n + 2 * k + 1)) + 2 * k * log(eta))
    m = sol.n_samples
    if t_offset == 0.0:
        t_m = sol.times
        phi = sol.phi
    else:
        t_m = sol.times + t_offset
        phi = sol.phi_at(t_m)
    value = pref * quad(phi, t_m)
    if check:
        t2 = np.arange(2 * m) * (np.pi / (2 * m)) + t_offset
        phi2 = sol.phi_at(t2) if t_offset != 0.0 else sol.resampled_phi(2 * m)
        value2 = pref * quad(phi2, t2)
        if abs(value2 - value) > 1e-8:
            raise ValueError(
                f"quadrature not converged for (n={n}, k={k}, l={l}): "
                f"doubling nodes moves the value by {abs(value2 - value):.3g}"
            )
    return value


@dataclass(frozen=True)
class MatrixElementTable:
    """Tabulated w_l^(n,n+2k), keyed by (n, k, l)."""

    omega0: float
    eta: float
    entries: dict

    def value(self, n: int, k: int, l: int) -> complex:
        return self.entries[(n, k, l)]

    def to_rows(self) -> list[tuple]:
        """CSV rows (n, k, l, Re, Im, abs), sorted by key."""
        return [
            (n, k, l, v.real, v.imag, abs(v))
            for (n, k, l), v in sorted(self.entries.items())
        ]


def build_matrix_element_table(
    sol: FloquetSolution,
    omega0: float,
    n_values,
    k_values,
    l_values,
    check: bool = True,
) -> MatrixElementTable:
    """Tabulate w_l^(n,n+2k) over the requested index sets.

    Index combinations with k < -floor(n/2) are skipped (no such level).
    Every entry is finite and bounded by Omega0.
    """
    if sol.eta is None:
        raise ValueError("FloquetSolution carries no Lamb-Dicke eta; attach kbar first")
    entries = {}
    for n in n_values:
        for k in k_values:
            if k < -(n // 2):
                continue
            for l in l_values:
                v = matrix_element(n, k, l, omega0, sol, check=check)
                if not np.isfinite(v):
                    raise FloatingPointError(f"non-finite element at (n={n}, k={k}, l={l})")
                entries[(int(n), int(k), int(l))] = v
    return MatrixElementTable(omega0=float(omega0), eta=float(sol.eta), entries=entries)


@dataclass(frozen=True)
class Resonance:
    """A resonant detuning Delta* = k*omega_s - l for the n -> n+2k transition."""

    k: int
    l: int
    delta: float
    phonons: int


def resonance_detunings(omega_s: float, k_values, l_values) -> list[Resonance]:
    """Delta* = k*omega_s - l for each (k, l), annotated with the 2k-phonon order."""
    out = [
        Resonance(k=int(k), l=int(l), delta=float(k * omega_s - l), phonons=2 * int(k))
        for k in k_values
        for l in l_values
    ]
    out.sort(key=lambda r: (r.delta, r.k, r.l))
    return out
