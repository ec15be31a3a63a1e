import numpy as np
import pytest

from jlsrealize.fixtures import BUILTIN, example2, example3, lti2, random_model
from jlsrealize.linalg import numerical_rank, symmetric_basis
from jlsrealize.model import JlsModel, simulate_with_switches
from jlsrealize.oracle import (
    EnumerationError,
    brute_force_expectation,
    ctrl_stack,
    expected_ctrl_kron,
    expected_hankel_kron,
    expected_obs_kron,
    hankel_for_copy,
    mean_matrix,
    obs_stack,
    second_moment,
)
from jlsrealize.realization import observability_rank


def test_mean_matrix_examples():
    np.testing.assert_allclose(mean_matrix(example3()), 0.5 * np.eye(3), atol=1e-15)
    m = lti2()
    np.testing.assert_array_equal(mean_matrix(m), m.modes[0])
    e2 = example2()
    degenerate = e2.with_modes(e2.modes, probs=[1.0, 0.0])
    np.testing.assert_array_equal(mean_matrix(degenerate), e2.modes[0])


def test_second_moment_examples():
    ident = JlsModel.from_arrays([np.eye(2)], [[1], [0]], [[1, 0]])
    np.testing.assert_array_equal(second_moment(ident), np.eye(4))
    m = example2()
    A2 = m.modes[1]
    np.testing.assert_allclose(second_moment(m), 0.5 * (np.eye(9) + np.kron(A2, A2)), atol=1e-15)


def test_second_moment_propagates_covariance(rng):
    m = example3()
    x = rng.standard_normal(3)
    avg = sum(p * np.outer(a @ x, a @ x) for p, a in zip(m.probs, m.modes))
    np.testing.assert_allclose(second_moment(m) @ np.outer(x, x).ravel(order="F"),
                               avg.ravel(order="F"), atol=1e-12)


def test_horizon_one_blocks(any_fixture):
    m = any_fixture
    np.testing.assert_allclose(expected_obs_kron(m, 1), np.kron(m.C, m.C))
    np.testing.assert_allclose(expected_ctrl_kron(m, 1), np.kron(m.B, m.B))
    CB = m.C @ m.B
    np.testing.assert_allclose(expected_hankel_kron(m, 1), np.kron(CB, CB), atol=1e-14)


def test_single_mode_grids():
    m = lti2()
    A, B, C = m.modes[0], m.B, m.C
    T = 4
    O = np.vstack([C @ np.linalg.matrix_power(A, j) for j in range(T)])
    R = np.hstack([np.linalg.matrix_power(A, j) @ B for j in range(T)])
    np.testing.assert_allclose(expected_obs_kron(m, T), np.kron(O, O), atol=1e-14)
    np.testing.assert_allclose(expected_ctrl_kron(m, T), np.kron(R, R), atol=1e-14)


CLOSED_FORM_CASES = [(name, T) for name in sorted(BUILTIN) for T in (1, 2, 3, 4)]


@pytest.mark.parametrize("name,T", CLOSED_FORM_CASES)
def test_closed_forms_match_enumeration(name, T):
    m = BUILTIN[name]()
    np.testing.assert_allclose(expected_obs_kron(m, T), brute_force_expectation(m, T, "obs"), rtol=0, atol=1e-12)
    np.testing.assert_allclose(expected_ctrl_kron(m, T), brute_force_expectation(m, T, "ctrl"), rtol=0, atol=1e-12)
    if m.s ** (2 * T) <= 5000:
        np.testing.assert_allclose(expected_hankel_kron(m, T), brute_force_expectation(m, T, "hankel"),
                                   rtol=0, atol=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_closed_forms_multi_channel(seed):
    m = random_model(2, 3, seed=seed, m=2, p=2)
    T = 3
    np.testing.assert_allclose(expected_obs_kron(m, T), brute_force_expectation(m, T, "obs"), atol=1e-12)
    np.testing.assert_allclose(expected_ctrl_kron(m, T), brute_force_expectation(m, T, "ctrl"), atol=1e-12)
    np.testing.assert_allclose(expected_hankel_kron(m, 2), brute_force_expectation(m, 2, "hankel"), atol=1e-12)


def test_example2_hankel_pairs():
    # 4 x 4 (mu, sigma) pairs at T = 2
    m = example2()
    np.testing.assert_allclose(expected_hankel_kron(m, 2), brute_force_expectation(m, 2, "hankel"), atol=1e-12)


def test_example3_two_step_enumeration():
    m = example3()
    direct = sum(
        0.0625 * np.kron(obs_stack(m, (i, j), 2), obs_stack(m, (i, j), 2))
        for i in range(4) for j in range(4)
    )
    np.testing.assert_allclose(brute_force_expectation(m, 2, "obs"), direct, atol=1e-13)


def test_enumeration_cap():
    with pytest.raises(EnumerationError):
        brute_force_expectation(example3(), 6, "hankel", cap=1000)


def test_single_mode_enumeration_is_deterministic():
    m = lti2()
    O = obs_stack(m, [0, 0, 0], 3)
    np.testing.assert_allclose(brute_force_expectation(m, 3, "obs"), np.kron(O, O))
    R = ctrl_stack(m, [0, 0, 0], 3)
    np.testing.assert_allclose(brute_force_expectation(m, 3, "ctrl"), np.kron(R, R))


def test_lti_hankel_full_rank():
    m = lti2()
    for T in (2, 3, 4):
        assert numerical_rank(expected_hankel_kron(m, T)).rank == m.n ** 2


def test_hankel_for_copy_lti_markov_parameters():
    m = lti2()
    T = m.n
    H = hankel_for_copy(m, [0] * T, [0] * T, T)
    A, B, C = m.modes[0], m.B, m.C
    for i in range(T):
        for k in range(T):
            # output y_{T+i} from input u_k
            np.testing.assert_allclose(H[i, k], (C @ np.linalg.matrix_power(A, T + i - 1 - k) @ B).item())


def test_hankel_for_copy_example2_corner():
    m = example2()
    H = hankel_for_copy(m, [1] * 4, [1] * 4, 4)
    assert H[0, 3] == 1.0  # y_4 from u_3 is C B
    assert H[0, 0] == 1.0  # three cyclic steps return to the first state


def test_hankel_for_copy_matches_simulator(rng):
    for _ in range(100):
        m = random_model(int(rng.integers(1, 4)), int(rng.integers(1, 4)), seed=int(rng.integers(1 << 30)),
                         m=int(rng.integers(1, 3)), p=int(rng.integers(1, 3)))
        T = int(rng.integers(1, 5))
        sigma = rng.integers(0, m.s, T)
        mu = rng.integers(0, m.s, T)
        v = rng.standard_normal(m.p * T)
        u = np.zeros((2 * T, m.p))
        u[:T] = v.reshape(T, m.p)
        out = simulate_with_switches(m, np.concatenate([sigma, mu]), u).outputs
        np.testing.assert_allclose(hankel_for_copy(m, mu, sigma, T) @ v, out[T - 1:2 * T - 1].ravel(), atol=1e-10)


def test_hankel_for_copy_length_check():
    with pytest.raises(ValueError):
        hankel_for_copy(example2(), [0], [0, 0], 2)


@pytest.mark.parametrize("name", ["ex2", "ex3", "lti2", "scalar"])
def test_obs_rank_saturates(name):
    m = BUILTIN[name]()
    T_star = m.n ** 2 + m.n - 1
    ranks = [numerical_rank(expected_obs_kron(m, T)).rank for T in range(1, T_star + 4)]
    assert all(a <= b for a, b in zip(ranks, ranks[1:]))
    assert len(set(ranks[T_star - 1:])) == 1


def _unobservable():
    # the second state never reaches the output
    return JlsModel.from_arrays([np.diag([0.5, 0.3]), np.diag([-0.4, 0.2])], [[1], [1]], [[1, 0]])


@pytest.mark.parametrize("make", [example2, example3, lti2, _unobservable])
def test_symmetric_rank_tracks_observability(make):
    m = make()
    T = m.n ** 2 + m.n - 1
    r = numerical_rank(expected_obs_kron(m, T) @ symmetric_basis(m.n)).rank
    full = m.n * (m.n + 1) // 2
    if observability_rank(m) == m.n:
        assert r >= full
    else:
        assert r < full
