import dataclasses

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy.special import eval_genlaguerre

from dynloc.floquet import (
    build_matrix_element_table,
    genlaguerre,
    lamb_dicke,
    matrix_element,
    resonance_detunings,
    solve_mathieu,
)
from oracles import dense_floquet_eps, quad_matrix_element

A, Q, KBAR, OMEGA0 = 0.0, 0.4, 0.29, 2.24

# Frozen solver outputs for (a, q) = (0, 0.4), cross-checked against the
# dense-ODE oracle, the Wronskian, and the small-q expansion.
OMEGA_S_REF = 0.2925662115
OMEGA_R_REF = 0.1837982680


@pytest.fixture(scope="module")
def sol():
    return solve_mathieu(A, Q, kbar=KBAR)


# ---------------------------------------------------------------- solve_mathieu


def test_harmonic_limit_exact():
    s = solve_mathieu(0.25, 0.0)
    assert abs(s.omega_s - 0.5) < 1e-9
    assert abs(s.omega_r - 0.5) < 1e-9
    assert np.max(np.abs(s.phi - 1.0)) < 1e-9


def test_trap_parameters_frozen_values(sol):
    assert abs(sol.omega_s - OMEGA_S_REF) < 1e-8
    assert abs(sol.omega_s - 0.29) < 0.005
    assert abs(sol.omega_r - OMEGA_R_REF) < 1e-8
    assert abs(sol.phi[0] - 1.0) < 1e-12


@pytest.mark.parametrize("q", [0.05, 0.2, 0.4])
def test_small_q_expansion(q):
    # Characteristic exponent at a = 0 is q/sqrt(2)*(1 + O(q^2)); stay within
    # the next-order term's size.
    s = solve_mathieu(0.0, q)
    assert abs(s.omega_s - q / np.sqrt(2.0)) < q**3


def test_wronskian_constant_over_ten_periods(sol):
    t = np.linspace(0.0, 10.0 * np.pi, 2001)
    w = sol.wronskian_at(t)
    assert np.max(np.abs(w - sol.omega_r)) < 1e-8


def test_phi_periodicity_against_independent_ode(sol):
    # Extend eps to [0, 2*pi] with a separate integrator and check that
    # phi(t + pi) = phi(t) and that the stored interpolant matches it.
    eps = dense_floquet_eps(A, Q, sol.omega_r, t_end=2.0 * np.pi)
    t = np.linspace(0.0, np.pi, 257)
    phi_a = np.exp(-1j * sol.omega_s * t) * np.array([eps(ti) for ti in t])
    phi_b = np.exp(-1j * sol.omega_s * (t + np.pi)) * np.array(
        [eps(ti + np.pi) for ti in t]
    )
    assert np.max(np.abs(phi_a - phi_b)) < 1e-7
    assert np.max(np.abs(sol.phi_at(t) - phi_a)) < 1e-9


def test_mathieu_residual_at_samples(sol):
    t = np.linspace(0.0, np.pi, 513)
    assert np.max(sol.residual_at(t)) < 1e-7


def test_resampled_phi_matches_interpolant(sol):
    fine = sol.resampled_phi(2 * sol.n_samples)
    t2 = np.arange(2 * sol.n_samples) * (np.pi / (2 * sol.n_samples))
    assert np.max(np.abs(fine - sol.phi_at(t2))) < 1e-12


def test_unstable_region_rejected():
    with pytest.raises(ValueError, match="unstable"):
        solve_mathieu(0.0, 2.0)


@pytest.mark.parametrize("a,q", [(1.0, 0.0), (0.0, 0.0)])
def test_branch_edge_flagged(a, q):
    with pytest.raises(ValueError, match="branch"):
        solve_mathieu(a, q)


@given(
    a=st.floats(min_value=-0.05, max_value=0.3),
    q=st.floats(min_value=0.05, max_value=0.6),
)
@settings(max_examples=10)
def test_stable_solutions_properties(a, q):
    try:
        s = solve_mathieu(a, q)
    except ValueError:
        assume(False)
        return
    assert 0.0 < s.omega_s < 1.0
    assert s.omega_r > 0.0
    t = np.linspace(0.0, np.pi, 101)
    assert np.max(np.abs(s.wronskian_at(t) - s.omega_r)) < 1e-8
    assert np.max(s.residual_at(t)) < 1e-7


# ------------------------------------------------------------------ lamb_dicke


def test_lamb_dicke_unit_case():
    assert lamb_dicke(2.0 * 0.37, 0.37) == pytest.approx(1.0, abs=1e-14)


def test_lamb_dicke_scales_linearly_in_kbar():
    e1 = lamb_dicke(0.29, OMEGA_R_REF)
    e2 = lamb_dicke(0.58, OMEGA_R_REF)
    assert e2**2 == pytest.approx(2.0 * e1**2, rel=1e-13)


@pytest.mark.parametrize("kbar,omega_r", [(0.29, 0.0), (0.29, -1.0), (0.0, 0.2), (-1.0, 0.2)])
def test_lamb_dicke_rejects_nonpositive(kbar, omega_r):
    with pytest.raises(ValueError):
        lamb_dicke(kbar, omega_r)


# ------------------------------------------------------------- matrix elements


def test_genlaguerre_matches_scipy():
    z = np.linspace(0.0, 50.0, 101)
    for n in (0, 1, 2, 5, 12, 30):
        for alpha in (0.0, 1.0, 2.0, 4.0, 7.5):
            mine = genlaguerre(n, alpha, z)
            ref = eval_genlaguerre(n, alpha, z)
            assert np.max(np.abs(mine - ref) / (1.0 + np.abs(ref))) < 1e-10


@pytest.mark.parametrize(
    "n,k,l",
    [(0, 1, 0), (10, 1, 0), (10, 2, 0), (3, 0, 1), (5, -1, 0), (7, -2, 1), (4, 1, -1)],
)
def test_matrix_element_matches_adaptive_quad(sol, n, k, l):
    mine = matrix_element(n, k, l, OMEGA0, sol)
    ref = quad_matrix_element(n, k, l, OMEGA0, A, Q, sol.omega_s, sol.omega_r, sol.eta)
    assert abs(mine - ref) < 1e-8


def test_two_phonon_amplitude_deep_minimum(sol):
    w2 = np.array([abs(matrix_element(n, 1, 0, OMEGA0, sol)) for n in range(31)])
    n_min = int(np.argmin(w2))
    assert n_min == 11  # deep dip location, pinned against the quad oracle
    assert w2[n_min] < 0.05 < w2[0]


def test_four_phonon_amplitude_shape(sol):
    # Verified curve: rises to a maximum at n = 10, decays monotonically on
    # [10, 26] down to a zero-crossing dip at n = 26, then grows again.
    w4 = np.array([abs(matrix_element(n, 2, 0, OMEGA0, sol)) for n in range(31)])
    assert int(np.argmax(w4)) == 10
    assert np.all(np.diff(w4[:11]) > 0.0)
    assert np.all(np.diff(w4[10:27]) < 0.0)
    assert int(np.argmin(w4)) == 26
    assert w4[26] < 0.01
    assert w4[30] > w4[26]


def test_eta_zero_is_kronecker_delta(sol):
    s0 = dataclasses.replace(sol, eta=0.0)
    assert matrix_element(3, 0, 0, OMEGA0, s0) == pytest.approx(OMEGA0)
    assert matrix_element(3, 0, 1, OMEGA0, s0) == 0.0
    assert matrix_element(3, 1, 0, OMEGA0, s0) == 0.0
    s_small = dataclasses.replace(sol, eta=1e-6)
    assert abs(matrix_element(3, 0, 0, OMEGA0, s_small) - OMEGA0) < 1e-9
    assert abs(matrix_element(3, 0, 1, OMEGA0, s_small)) < 1e-9


def test_sum_rule_small_eta(sol):
    s_small = dataclasses.replace(sol, eta=1e-3)
    n = 4
    total = 0.0
    for k in range(-(n // 2), 4):
        for l in range(-3, 4):
            total += abs(matrix_element(n, k, l, OMEGA0, s_small)) ** 2
    assert total == pytest.approx(OMEGA0**2, rel=1e-4)


def test_quadrature_shift_invariance(sol):
    for n, k, l in [(5, 1, 0), (8, 2, 1), (6, -1, 2)]:
        v0 = matrix_element(n, k, l, OMEGA0, sol, check=False)
        v1 = matrix_element(n, k, l, OMEGA0, sol, check=False, t_offset=-np.pi / 2)
        v2 = matrix_element(n, k, l, OMEGA0, sol, check=False, t_offset=0.1234)
        assert abs(v1 - v0) < 1e-10
        assert abs(v2 - v0) < 1e-10


def test_table_convergence_under_node_doubling(sol):
    ns = range(0, 31, 5)
    ks, ls = (1, 2), (0,)
    tab1 = build_matrix_element_table(sol, OMEGA0, ns, ks, ls, check=False)
    sol2 = solve_mathieu(A, Q, n_samples=2048, kbar=KBAR)
    tab2 = build_matrix_element_table(sol2, OMEGA0, ns, ks, ls, check=False)
    for key, v in tab1.entries.items():
        assert abs(abs(v) - abs(tab2.entries[key])) < 1e-8


def test_table_bounded_and_finite(sol):
    tab = build_matrix_element_table(
        sol, OMEGA0, range(0, 31, 3), range(-2, 3), range(-2, 3), check=False
    )
    vals = np.array(list(tab.entries.values()))
    assert np.all(np.isfinite(vals))
    assert np.max(np.abs(vals)) <= OMEGA0 * (1.0 + 1e-12)
    rows = tab.to_rows()
    assert rows == sorted(rows)
    n0, k0, l0, re, im, mag = rows[0]
    assert mag == pytest.approx(abs(tab.value(n0, k0, l0)))


def test_matrix_element_preconditions(sol):
    with pytest.raises(ValueError):
        matrix_element(-1, 0, 0, OMEGA0, sol)
    with pytest.raises(ValueError):
        matrix_element(3, -2, 0, OMEGA0, sol)  # k < -floor(n/2)
    bare = solve_mathieu(A, Q)  # no kbar attached
    with pytest.raises(ValueError, match="eta"):
        matrix_element(0, 0, 0, OMEGA0, bare)


# ------------------------------------------------------------------ resonances


def test_resonance_detunings_values(sol):
    res = resonance_detunings(sol.omega_s, k_values=range(0, 3), l_values=range(-1, 2))
    table = {(r.k, r.l): r for r in res}
    assert table[(1, 0)].delta == pytest.approx(sol.omega_s)
    assert table[(1, 0)].phonons == 2
    assert table[(2, 0)].delta == pytest.approx(2.0 * sol.omega_s)
    assert table[(0, 1)].delta == pytest.approx(-1.0)
    assert table[(0, -1)].delta == pytest.approx(1.0)
    deltas = [r.delta for r in res]
    assert deltas == sorted(deltas)
