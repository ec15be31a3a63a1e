import warnings

import numpy as np
import pytest

from jlsrealize.excitation import collect_observations, exact_observations, standard_basis
from jlsrealize.fixtures import BUILTIN, example2, example3, lti2
from jlsrealize.linalg import pinv, psd_project, vec
from jlsrealize.model import minimality_check
from jlsrealize.modes import (
    GaugeWarning,
    IdentifiabilityWarning,
    PFConfig,
    blind_factors,
    estimate_modes,
    inverse_swap_transform,
    largest_gap_rank,
    mode_count_exact,
    oracle_factors,
    pf_objective,
    psd_rank,
    recover_conjugated_moment,
    solve_pf_altmin,
    swap_transform,
)
from jlsrealize.oracle import second_moment

from conftest import random_orthogonal


def test_swap_identity():
    for n in (2, 3):
        np.testing.assert_array_equal(swap_transform(np.eye(n * n)), np.outer(vec(np.eye(n)), vec(np.eye(n))))


def test_swap_on_small_kron():
    A = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(swap_transform(np.kron(A, A)), np.outer(vec(A), vec(A)))


def test_swap_random_kron_and_inverse(rng):
    for _ in range(100):
        n = int(rng.integers(2, 5))
        A = rng.standard_normal((n, n))
        np.testing.assert_array_equal(swap_transform(np.kron(A, A)), np.outer(vec(A), vec(A)))
        M = rng.standard_normal((n * n, n * n))
        np.testing.assert_array_equal(inverse_swap_transform(swap_transform(M)), M)
        np.testing.assert_array_equal(swap_transform(inverse_swap_transform(M)), M)


def test_swap_is_linear(rng):
    M, N = rng.standard_normal((2, 9, 9))
    np.testing.assert_allclose(swap_transform(2 * M - N), 2 * swap_transform(M) - swap_transform(N))


def test_swap_rejects_bad_sides():
    with pytest.raises(ValueError):
        swap_transform(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        swap_transform(np.zeros((4, 9)))


def test_swap_of_moment_is_psd_with_span_rank(any_fixture):
    L = swap_transform(second_moment(any_fixture))
    np.testing.assert_allclose(L, L.T, atol=1e-14)
    rank, w, _ = psd_rank(L)
    assert w.min() >= -1e-12
    assert rank == minimality_check(any_fixture).rank


def test_example3_moment_transform():
    m = example3()
    expected = sum(0.25 * np.outer(vec(a), vec(a)) for a in m.modes)
    np.testing.assert_allclose(swap_transform(second_moment(m)), expected, atol=1e-15)


@pytest.mark.parametrize("name,s", [("ex3", 3), ("ex2", 2), ("lti2", 1), ("scalar", 1)])
def test_mode_count_exact(name, s):
    res = mode_count_exact(second_moment(BUILTIN[name]()))
    assert res.s == s
    assert res.gap >= 1e4


def test_mode_count_warns_off_gauge(rng):
    S = second_moment(example3())
    Z = rng.standard_normal((9, 9)) + 3 * np.eye(9)
    with pytest.warns(GaugeWarning):
        mode_count_exact(np.linalg.inv(Z) @ S @ Z)


def test_oracle_recovery_on_identified_subspace():
    m = example3().scaled(0.5)
    T = 6
    obs = exact_observations(m, standard_basis(1, T), T)
    U, W = oracle_factors(m, T)
    with pytest.warns(IdentifiabilityWarning):
        rec = recover_conjugated_moment(obs.Y, obs.Y_plus, U, W)
    S = second_moment(m)
    PU, PW = pinv(U) @ U, W @ pinv(W)
    np.testing.assert_allclose(rec.S_hat, PU @ S @ PW, atol=1e-9)
    # C_T misses the antisymmetric states here because the mean mode is a multiple of I
    assert rec.rank_U == 6 and rec.rank_W == 6


def test_oracle_pipeline_returns_model_moment():
    m = example3().scaled(0.5)
    T = 6
    obs = exact_observations(m, standard_basis(1, T), T)
    sol = estimate_modes(obs, factorization="oracle", model=m, n=3)
    assert sol.s == 3
    assert sol.notes["completed_from_model"] is True
    assert sol.notes["data_consistency"] < 1e-9


def test_recovery_single_mode_spectrum():
    m = lti2()
    T = 5
    obs = exact_observations(m, standard_basis(1, T), T)
    U, W = blind_factors(obs.Y, 3)
    rec = recover_conjugated_moment(obs.Y, obs.Y_plus, U, W)
    lam = np.linalg.eigvals(m.modes[0])
    expected = sorted(abs(lam[i] * lam[j]) for i in range(2) for j in range(i, 2))
    np.testing.assert_allclose(sorted(abs(np.linalg.eigvals(rec.S_hat))), expected, atol=1e-8)


def test_recovery_spectrum_is_gauge_invariant(rng):
    m = example2().scaled(0.5)
    T = 3
    obs = exact_observations(m, standard_basis(1, T), T)
    U, W = blind_factors(obs.Y, 6)
    Z = rng.standard_normal((6, 6)) + 4 * np.eye(6)
    a = recover_conjugated_moment(obs.Y, obs.Y_plus, U, W).S_hat
    b = recover_conjugated_moment(obs.Y, obs.Y_plus, U @ Z, np.linalg.inv(Z) @ W).S_hat
    np.testing.assert_allclose(b, np.linalg.inv(Z) @ a @ Z, atol=1e-8)
    ea = np.sort_complex(np.linalg.eigvals(a))
    eb = np.sort_complex(np.linalg.eigvals(b))
    np.testing.assert_allclose(ea, eb, atol=1e-8)


def test_recovery_flags_inconsistent_factors(rng):
    Y = rng.standard_normal((4, 4))
    with pytest.warns(IdentifiabilityWarning, match="reproduce"):
        recover_conjugated_moment(Y, Y, np.eye(4), np.eye(4) * 2)


@pytest.mark.parametrize("name,s", [("ex2", 2), ("ex3", 3), ("lti2", 1), ("scalar", 1)])
def test_pf_feasible_at_identity(name, s):
    sol = solve_pf_altmin(second_moment(BUILTIN[name]()))
    assert np.sqrt(sol.objective_log[0]) < 1e-8
    assert sol.start == 0
    assert sol.s == s


def test_pf_single_kron(rng):
    A = rng.standard_normal((3, 3))
    sol = solve_pf_altmin(np.kron(A, A))
    assert sol.s == 1
    v = vec(A)
    cos = abs(v @ sol.P @ v) / (np.linalg.norm(sol.P) * (v @ v))
    assert cos == pytest.approx(1.0, abs=1e-8)


def test_pf_conjugated_reports_honestly(rng):
    S = second_moment(example3())
    Z0 = random_orthogonal(9, rng)
    sol = solve_pf_altmin(Z0.T @ S @ Z0, PFConfig(starts=3, max_iter=60))
    assert np.isfinite(sol.residual)
    assert sol.eigenvalues.size == 9
    assert all(b <= a * (1 + 1e-9) + 1e-300 for a, b in zip(sol.objective_log, sol.objective_log[1:]))
    np.testing.assert_allclose(sol.P, sol.P.T, atol=1e-12)
    assert np.linalg.eigvalsh(sol.P).min() >= -1e-10
    assert sol.residual == pytest.approx(np.sqrt(pf_objective(Z0.T @ S @ Z0, sol.Z, sol.P)))
    assert np.trace(sol.Z) == pytest.approx(9.0)
    assert len(sol.starts) == 3


def test_pf_rank_invariant_under_scaling():
    S = second_moment(example2())
    assert solve_pf_altmin(S).s == solve_pf_altmin(3.0 * S).s


def test_pf_is_reproducible():
    S = second_moment(example3())
    Y = S + 0.01 * np.arange(81.0).reshape(9, 9) / 81
    a = solve_pf_altmin(Y, PFConfig(starts=3, max_iter=20))
    b = solve_pf_altmin(Y, PFConfig(starts=3, max_iter=20))
    np.testing.assert_array_equal(a.P, b.P)
    assert a.objective_log == b.objective_log


def test_pf_rejects_bad_input():
    with pytest.raises(ValueError):
        solve_pf_altmin(np.eye(5))
    with pytest.raises(ValueError):
        solve_pf_altmin(np.eye(4), PFConfig(b=-1.0))


def test_largest_gap_rank():
    assert largest_gap_rank(np.array([1.0, 0.9, 1e-12, 1e-13])) == 2
    assert largest_gap_rank(np.array([2.0])) == 1
    assert largest_gap_rank(np.zeros(3)) == 0


def test_psd_rank_gap():
    rank, w, gap = psd_rank(np.diag([1.0, 0.5, 1e-9]))
    assert rank == 2 and gap == pytest.approx(5e8)
    assert psd_project(np.diag([-1.0, -2.0])).max() == 0.0


@pytest.mark.parametrize("name,s", [("ex2", 2), ("ex3", 3), ("lti2", 1), ("scalar", 1)])
def test_estimate_modes_oracle_path(name, s):
    m = BUILTIN[name]()
    T = m.n ** 2 + m.n - 1
    sol = estimate_modes(exact_observations(m, standard_basis(1, T), T), factorization="oracle", model=m)
    assert sol.s == s
    assert sol.gap >= 1e4
    assert sol.notes["n"] == m.n
    assert sol.notes["gauge_ambiguous"] is False


def test_estimate_modes_blind_path_is_flagged():
    m = example3()
    T = 11
    sol = estimate_modes(exact_observations(m, standard_basis(1, T), T), factorization="blind",
                         config=PFConfig(starts=2, max_iter=30))
    assert sol.notes["gauge_ambiguous"] is True
    assert sol.eigenvalues.size == 9
    assert np.isfinite(sol.residual)


def test_estimate_modes_needs_model_for_oracle():
    m = lti2()
    obs = exact_observations(m, standard_basis(1, 5), 5)
    with pytest.raises(ValueError):
        estimate_modes(obs, factorization="oracle")


def test_estimate_modes_monte_carlo():
    # sampling noise of order 0.1 * lambda_max shows up in L(S_hat), so the
    # eigenvalue threshold is widened and the spectrum is checked directly
    m = example2().scaled(0.5)
    T = 4
    with warnings.catch_warnings():
        warnings.simplefilter("error", IdentifiabilityWarning)
        obs = collect_observations(m, standard_basis(1, T), T, 10_000, seed=0)
    sol = estimate_modes(obs, factorization="oracle", model=m, n=3, config=PFConfig(rank_tol=0.3))
    assert sol.s == 2
    w = sol.eigenvalues
    assert w[1] / w[0] > 0.5
    assert w[2] / w[0] < 0.3
