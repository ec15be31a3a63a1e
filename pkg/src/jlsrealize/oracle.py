"""Exact expectation operators over i.i.d. switch sequences.

For a switch sequence ``mu`` the observability stack is
``C_mu = [C; C A_mu1; C A_mu2 A_mu1; ...]`` and the controllability row is
``B_mu = [B, A_mu1 B, A_mu2 A_mu1 B, ...]``.  Both use ``T`` blocks (prefix
lengths ``0 .. T-1``) so that the expected Kronecker Hankel has the same size
as the observation matrices produced by the excitation stage.

The closed forms only need the mean ``M = sum p_i A_i`` and the second moment
``S = sum p_i A_i (x) A_i``.  :func:`brute_force_expectation` enumerates every
sequence instead and is kept independent of those formulas so it can act as a
check on them.
"""
from __future__ import annotations

import itertools

import numpy as np

from .linalg import kron
from .model import JlsModel, second_moment_operator

ENUMERATION_CAP = 10**6


class EnumerationError(RuntimeError):
    pass


def mean_matrix(model: JlsModel) -> np.ndarray:
    M = np.zeros((model.n, model.n))
    for p, a in zip(model.probs, model.modes):
        M += p * a
    return M


def second_moment(model: JlsModel) -> np.ndarray:
    return second_moment_operator(model)


def _powers(a: np.ndarray, count: int) -> list[np.ndarray]:
    out = [np.eye(a.shape[0])]
    for _ in range(count - 1):
        out.append(out[-1] @ a)
    return out


def _assemble_rows(blocks, T: int, m: int, cols: int) -> np.ndarray:
    """Place ``blocks[j][k]`` (``m*m x cols``) at the rows of ``c_j (x) c_k``."""
    grid = np.empty((T, m, T, m, cols))
    for j in range(T):
        for k in range(T):
            grid[j, :, k, :, :] = blocks[j][k].reshape(m, m, cols)
    return grid.reshape(T * m * T * m, cols)


def _assemble_cols(blocks, T: int, p: int, rows: int) -> np.ndarray:
    """Place ``blocks[j][k]`` (``rows x p*p``) at the columns of ``b_j (x) b_k``."""
    grid = np.empty((rows, T, p, T, p))
    for j in range(T):
        for k in range(T):
            grid[:, j, :, k, :] = blocks[j][k].reshape(rows, p, p)
    return grid.reshape(rows, T * p * T * p)


def expected_obs_kron(model: JlsModel, T: int) -> np.ndarray:
    """``E[C_mu (x) C_mu]``, shape ``(m T)^2 x n^2``."""
    if T < 1:
        raise ValueError("T must be >= 1")
    C, n, m = model.C, model.n, model.m
    Mp = _powers(mean_matrix(model), T)
    Sp = _powers(second_moment(model), T)
    blocks = [[None] * T for _ in range(T)]
    for j in range(T):
        for k in range(T):
            if j >= k:
                blocks[j][k] = kron(C @ Mp[j - k], C) @ Sp[k]
            else:
                blocks[j][k] = kron(C, C @ Mp[k - j]) @ Sp[j]
    return _assemble_rows(blocks, T, m, n * n)


def expected_ctrl_kron(model: JlsModel, T: int) -> np.ndarray:
    """``E[B_sigma (x) B_sigma]``, shape ``n^2 x (p T)^2``."""
    if T < 1:
        raise ValueError("T must be >= 1")
    n, p = model.n, model.p
    I = np.eye(n)
    Mp = _powers(mean_matrix(model), T)
    Sp = _powers(second_moment(model), T)
    BB = kron(model.B, model.B)
    blocks = [[None] * T for _ in range(T)]
    for j in range(T):
        for k in range(T):
            if k >= j:
                blocks[j][k] = kron(I, Mp[k - j]) @ Sp[j] @ BB
            else:
                blocks[j][k] = kron(Mp[j - k], I) @ Sp[k] @ BB
    return _assemble_cols(blocks, T, p, n * n)


def expected_hankel_kron(model: JlsModel, T: int) -> np.ndarray:
    """``E[H (x) H]`` for ``H = C_mu B_sigma`` with independent ``mu``, ``sigma``."""
    return expected_obs_kron(model, T) @ expected_ctrl_kron(model, T)


# ------------------------------------------------------------ enumeration

def _sequences(model: JlsModel, T: int):
    seqs = list(itertools.product(range(model.s), repeat=T))
    weights = np.array([np.prod([model.probs[i] for i in seq]) for seq in seqs])
    return seqs, weights


def obs_stack(model: JlsModel, mu, T: int) -> np.ndarray:
    """``C_mu`` with ``T`` block rows; uses ``mu[0] .. mu[T-2]``."""
    modes = np.asarray(model.modes)
    prod = np.eye(model.n)
    rows = [model.C.copy()]
    for j in range(1, T):
        prod = modes[mu[j - 1]] @ prod
        rows.append(model.C @ prod)
    return np.vstack(rows)


def ctrl_stack(model: JlsModel, sigma, T: int) -> np.ndarray:
    """``B_sigma`` with ``T`` block columns; uses ``sigma[0] .. sigma[T-2]``."""
    modes = np.asarray(model.modes)
    cols = [model.B.copy()]
    for j in range(1, T):
        cols.append(modes[sigma[j - 1]] @ cols[-1])
    return np.hstack(cols)


def brute_force_expectation(model: JlsModel, T: int, target: str, cap: int = ENUMERATION_CAP) -> np.ndarray:
    """Probability-weighted sum over every sequence in ``[s]^T``.

    ``target`` is ``"obs"`` (``E[C_mu (x) C_mu]``), ``"ctrl"``
    (``E[B_sigma (x) B_sigma]``) or ``"hankel"`` (``E[H (x) H]`` over all
    independent pairs ``(mu, sigma)``).  Terms are stacked and reduced with
    numpy's pairwise summation in enumeration order.
    """
    if target not in ("obs", "ctrl", "hankel"):
        raise ValueError(f"unknown target {target!r}")
    terms = model.s ** T if target != "hankel" else model.s ** (2 * T)
    if terms > cap:
        raise EnumerationError(f"{terms} weighted terms exceed the enumeration cap {cap}")
    seqs, w = _sequences(model, T)
    if target == "obs":
        stacks = np.array([obs_stack(model, seq, T) for seq in seqs])
        return np.einsum("x,xac,xbd->abcd", w, stacks, stacks).reshape(
            stacks.shape[1] ** 2, stacks.shape[2] ** 2
        )
    if target == "ctrl":
        stacks = np.array([ctrl_stack(model, seq, T) for seq in seqs])
        return np.einsum("x,xac,xbd->abcd", w, stacks, stacks).reshape(
            stacks.shape[1] ** 2, stacks.shape[2] ** 2
        )
    cs = np.array([obs_stack(model, seq, T) for seq in seqs])
    bs = np.array([ctrl_stack(model, seq, T) for seq in seqs])
    H = np.einsum("xan,ync->xyac", cs, bs).reshape(-1, cs.shape[1], bs.shape[2])
    ww = np.outer(w, w).ravel()
    r, c = H.shape[1], H.shape[2]
    return np.einsum("x,xac,xbd->abcd", ww, H, H).reshape(r * r, c * c)


# ------------------------------------------------------------ single copy

def hankel_for_copy(model: JlsModel, mu, sigma, T: int) -> np.ndarray:
    """Map from ``[u_0; ...; u_{T-1}]`` to ``[y_T; ...; y_{2T-1}]`` for one copy.

    ``sigma`` holds ``theta(0) .. theta(T-1)`` and ``mu`` holds
    ``theta(T) .. theta(2T-1)``, i.e. ``simulate_with_switches`` driven by the
    concatenation ``sigma + mu``.  ``theta(0)`` acts on ``x_0 = 0`` and the
    last entry of ``mu`` only affects ``y_{2T}``, so neither changes the result.

    Block column ``k`` (input ``u_k``) is ``A_sigma[T-1] ... A_sigma[k+1] B``,
    so relative to ``B_sigma`` the time blocks appear in reverse order.
    """
    mu = np.asarray(mu, dtype=int)
    sigma = np.asarray(sigma, dtype=int)
    if mu.size < T or sigma.size < T:
        raise ValueError(f"mu and sigma need at least T={T} entries")
    modes = np.asarray(model.modes)
    n, p = model.n, model.p
    ctrl = np.empty((n, T * p))
    prod = np.eye(n)
    for k in range(T - 1, -1, -1):
        ctrl[:, k * p:(k + 1) * p] = prod @ model.B
        if k > 0:
            prod = prod @ modes[sigma[k]]
    obs = obs_stack(model, mu, T)
    return obs @ ctrl
