"""Mode counting: swap transform, moment recovery and the rank program.

The second-moment operator ``S = sum_i p_i A_i (x) A_i`` is an entry
permutation away from ``L(S) = sum_i p_i vec(A_i) vec(A_i)^T``, whose rank is
the number of linearly independent modes.  From data ``S`` is only available
up to a similarity ``Z^{-1} S Z``, so the count is posed as

    min rank(P)  s.t.  P >= 0,  Y Z = Z L^{-1}(P),  trace(Z) = b,

which is attacked by alternating minimisation of ``||Y Z - Z L^{-1}(P)||_F^2``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .excitation import ObservationPair, kron_columns, standard_basis, time_reversal
from .linalg import DEFAULT_RANK_TOL, numerical_rank, pinv, psd_project, symmetric_basis, symmetrize
from .model import JlsModel
from .oracle import expected_ctrl_kron, expected_obs_kron, second_moment
from .realization import infer_state_dim

EIG_RANK_TOL = 1e-6


class IdentifiabilityWarning(UserWarning):
    """The factors do not determine the full n^2 x n^2 moment operator."""


class GaugeWarning(UserWarning):
    """L(S_hat) is not symmetric, so S_hat is not S in the identity gauge."""


def _side(m: np.ndarray) -> int:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"swap transform needs a square matrix, got shape {m.shape}")
    n = math.isqrt(m.shape[0])
    if n * n != m.shape[0]:
        raise ValueError(f"side {m.shape[0]} is not a perfect square")
    return n


def swap_transform(m: np.ndarray) -> np.ndarray:
    """Entry permutation with ``L(A (x) A) = vec(A) vec(A)^T``.

    Entry ``((r1, r2), (c1, c2))`` moves to ``((c1, r1), (c2, r2))``, pairs read
    as ``first * n + second`` with 0-based indices.
    """
    n = _side(m)
    m4 = np.asarray(m).reshape(n, n, n, n)
    return np.einsum("bdac->abcd", m4).reshape(n * n, n * n)


def inverse_swap_transform(m: np.ndarray) -> np.ndarray:
    n = _side(m)
    l4 = np.asarray(m).reshape(n, n, n, n)
    return np.einsum("abcd->bdac", l4).reshape(n * n, n * n)


def psd_rank(P: np.ndarray, tol: float = EIG_RANK_TOL):
    """Rank of a symmetric matrix by eigenvalues above ``tol * lambda_max``.

    Returns ``(rank, eigenvalues descending, gap)`` where ``gap`` is the ratio
    of the last kept eigenvalue to the magnitude of the first dropped one.
    """
    w = np.linalg.eigvalsh(symmetrize(P))[::-1]
    top = w[0] if w.size else 0.0
    if top <= 0:
        return 0, w, math.inf
    rank = int(np.count_nonzero(w > tol * top))
    if rank >= w.size:
        return rank, w, math.inf
    dropped = abs(w[rank])
    return rank, w, (math.inf if dropped == 0 else float(w[rank - 1] / dropped))


def largest_gap_rank(eigs: np.ndarray, floor: float = 1e-14) -> int:
    """Position of the largest ratio between consecutive eigenvalues.

    Eigenvalues below ``floor * lambda_max`` are clipped to that floor; used
    as a tolerance-free rank estimate for noisy spectra.
    """
    w = np.asarray(eigs, dtype=float)
    if w.size == 0 or w[0] <= 0:
        return 0
    w = np.maximum(w, floor * w[0])
    ratios = w[:-1] / w[1:]
    if ratios.size == 0:
        return 1
    return int(np.argmax(ratios)) + 1


@dataclass
class ModeCount:
    s: int
    eigenvalues: np.ndarray
    gap: float
    symmetric: bool


def mode_count_exact(S_hat: np.ndarray, tol: float = EIG_RANK_TOL) -> ModeCount:
    """Rank of ``L(S_hat)``; only meaningful when ``S_hat`` is ``S`` itself."""
    L = swap_transform(S_hat)
    asym = np.linalg.norm(L - L.T)
    symmetric = asym <= 1e-6 * max(np.linalg.norm(L), 1e-300)
    if not symmetric:
        warnings.warn("L(S_hat) is not symmetric; S_hat is not in the identity gauge and "
                      "the exact mode count does not apply", GaugeWarning, stacklevel=2)
    s, w, gap = psd_rank(L, tol)
    return ModeCount(s, w, gap, bool(symmetric))


# ------------------------------------------------------------- recovery

@dataclass
class ConjugatedMoment:
    S_hat: np.ndarray
    rank_U: int
    rank_W: int
    size: int

    @property
    def identifiable(self) -> bool:
        return self.rank_U >= self.size and self.rank_W >= self.size


def recover_conjugated_moment(Y: np.ndarray, Y_plus: np.ndarray, U: np.ndarray, W: np.ndarray,
                              tol: float = DEFAULT_RANK_TOL) -> ConjugatedMoment:
    """``S_hat = U^+ Y^+ W^+`` for a factorisation ``Y = U W``.

    With full-rank factors ``S_hat`` is similar to the second-moment operator.
    If either factor has rank below its inner dimension, ``S_hat`` only
    captures the operator on the identified subspaces; this is flagged with an
    :class:`IdentifiabilityWarning` and in the returned ranks.
    """
    U = np.asarray(U, dtype=float)
    W = np.asarray(W, dtype=float)
    if U.shape[1] != W.shape[0]:
        raise ValueError(f"factor shapes {U.shape} and {W.shape} do not chain")
    if U.shape[0] != Y_plus.shape[0] or W.shape[1] != Y_plus.shape[1]:
        raise ValueError("factors do not match the observation shape")
    size = U.shape[1]
    rU = numerical_rank(U, tol).rank
    rW = numerical_rank(W, tol).rank
    S_hat = pinv(U, tol) @ np.asarray(Y_plus, dtype=float) @ pinv(W, tol)
    out = ConjugatedMoment(S_hat, rU, rW, size)
    if not out.identifiable:
        warnings.warn(f"factor ranks ({rU}, {rW}) are below {size}; the recovered operator is "
                      "only determined on a subspace", IdentifiabilityWarning, stacklevel=2)
    fit = np.linalg.norm(U @ W - Y) / max(np.linalg.norm(Y), 1e-300)
    if fit > 1e-6:
        warnings.warn(f"U W does not reproduce Y (relative error {fit:.3g})", IdentifiabilityWarning, stacklevel=2)
    return out


def oracle_factors(model: JlsModel, T: int, basis=None) -> tuple[np.ndarray, np.ndarray]:
    """Model-side factors of ``Y_O``: ``U = C_T`` and ``W = B_T (J (x) J) V``."""
    basis = standard_basis(model.p, T) if basis is None else basis
    J = time_reversal(model.p, T)
    return expected_obs_kron(model, T), expected_ctrl_kron(model, T) @ kron_columns(J @ basis.extended)


def blind_factors(Y: np.ndarray, r: int) -> tuple[np.ndarray, np.ndarray]:
    """Rank-``r`` SVD factorisation ``Y ~ (U_r sqrt(s)) (sqrt(s) V_r^T)``."""
    u, sv, vt = np.linalg.svd(Y, full_matrices=False)
    root = np.sqrt(sv[:r])
    return u[:, :r] * root, root[:, None] * vt[:r]


# ------------------------------------------------------- the rank program

@dataclass
class PFConfig:
    b: float | None = None  # trace(Z); defaults to n^2
    max_iter: int = 200
    tol: float = 1e-10  # relative objective improvement
    starts: int = 8
    seed: int = 0
    inner_steps: int = 25
    rank_tol: float = EIG_RANK_TOL
    success_residual: float = 1e-6
    perturbation: float = 0.5

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class ModeSolution:
    P: np.ndarray
    Z: np.ndarray
    residual: float
    s: int
    eigenvalues: np.ndarray
    gap: float
    converged: bool
    iterations: int
    objective_log: list[float]
    start: int
    config: PFConfig
    starts: list[dict] = field(default_factory=list)
    notes: dict = field(default_factory=dict)

    @property
    def success(self) -> bool:
        return self.converged

    def to_dict(self) -> dict:
        return {
            "s": self.s,
            "residual": self.residual,
            "converged": self.converged,
            "iterations": self.iterations,
            "start": self.start,
            "gap": self.gap,
            "rank_by_largest_gap": largest_gap_rank(self.eigenvalues),
            "spectrum": self.eigenvalues.tolist(),
            "objective_log": list(self.objective_log),
            "starts": self.starts,
            "config": self.config.to_dict(),
            **self.notes,
            "P": self.P.tolist(),
            "Z": self.Z.tolist(),
        }


def pf_objective(Y: np.ndarray, Z: np.ndarray, P: np.ndarray) -> float:
    R = Y @ Z - Z @ inverse_swap_transform(P)
    return float(np.sum(R * R))


def _z_step(Y: np.ndarray, Q: np.ndarray, b: float) -> tuple[np.ndarray, float]:
    """Minimise ``||Y Z - Z Q||_F`` over ``Z`` with ``trace(Z) = b`` (KKT system)."""
    k = Y.shape[0]
    I = np.eye(k)
    L = np.kron(I, Y) - np.kron(Q.T, I)
    t = I.reshape(-1, order="F")
    kkt = np.zeros((k * k + 1, k * k + 1))
    kkt[:-1, :-1] = 2.0 * L.T @ L
    kkt[:-1, -1] = t
    kkt[-1, :-1] = t
    rhs = np.zeros(k * k + 1)
    rhs[-1] = b
    sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
    return sol[:-1].reshape(k, k, order="F"), float(np.linalg.cond(kkt))


def _p_step(Y: np.ndarray, Z: np.ndarray, P: np.ndarray | None, steps: int) -> np.ndarray:
    """Approximate minimiser over PSD ``P`` for fixed ``Z``; never worse than ``P``.

    Starts from the better of ``P`` and the projected least-squares solution,
    then takes projected-gradient steps with step ``1 / Lipschitz``.
    """
    cands = [psd_project(swap_transform(pinv(Z) @ Y @ Z))]
    if P is not None:
        cands.append(P)
    P = min(cands, key=lambda c: pf_objective(Y, Z, c))
    lip = 2.0 * np.linalg.norm(Z, 2) ** 2
    if lip == 0:
        return P
    f = pf_objective(Y, Z, P)
    for _ in range(steps):
        R = Y @ Z - Z @ inverse_swap_transform(P)
        grad = swap_transform(-2.0 * Z.T @ R)
        trial = psd_project(P - grad / lip)
        ft = pf_objective(Y, Z, trial)
        if ft > f:
            break
        if f - ft <= 1e-15 * max(f, 1e-300):
            P, f = trial, ft
            break
        P, f = trial, ft
    return P


def _initial_z(k: int, b: float, start: int, seed: int, scale: float) -> np.ndarray:
    Z = np.eye(k)
    if start > 0:
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(start,))))
        G = rng.standard_normal((k, k))
        Z = Z + scale * G / np.linalg.norm(G, 2)
    return Z * (b / np.trace(Z))


def _run_start(Y: np.ndarray, b: float, cfg: PFConfig, start: int) -> dict:
    k = Y.shape[0]
    Z = _initial_z(k, b, start, cfg.seed, cfg.perturbation)
    P = None
    log: list[float] = []
    conds: list[float] = []
    it = 0
    for it in range(1, cfg.max_iter + 1):
        P = _p_step(Y, Z, P, cfg.inner_steps)
        f_mid = pf_objective(Y, Z, P)
        Z_new, cond = _z_step(Y, inverse_swap_transform(P), b)
        conds.append(cond)
        if not np.all(np.isfinite(Z_new)):
            raise FloatingPointError(f"Z-step diverged at iteration {it} (KKT condition {cond:.3g})")
        f_new = pf_objective(Y, Z_new, P)
        if f_new <= f_mid:
            Z = Z_new
        f = min(f_new, f_mid)
        prev = log[-1] if log else None
        log.append(f)
        if f <= 1e-30:
            break
        if prev is not None and prev - f <= cfg.tol * prev:
            break
    return {"P": P, "Z": Z, "objective": log[-1], "log": log, "iterations": it,
            "max_kkt_condition": max(conds) if conds else None}


def solve_pf_altmin(Y_plus: np.ndarray, config: PFConfig | None = None) -> ModeSolution:
    """Alternating minimisation of ``||Y Z - Z L^{-1}(P)||_F^2``.

    Start 0 begins at ``Z = (b / n^2) I``; further starts perturb it with
    seeded Gaussian noise.  Each iteration does a ``P`` step (projected least
    squares refined by projected gradient) and an exact ``Z`` step, so the
    objective never increases.  The reported solution is the start with the
    smallest residual, treating residuals below ``success_residual * 1e-4`` as
    ties broken by start index.
    """
    cfg = PFConfig() if config is None else config
    Y = np.asarray(Y_plus, dtype=float)
    _side(Y)
    k = Y.shape[0]
    b = float(k) if cfg.b is None else float(cfg.b)
    if b <= 0:
        raise ValueError("trace normalisation b must be positive")
    runs = []
    for start in range(max(1, cfg.starts)):
        run = _run_start(Y, b, cfg, start)
        run["start"] = start
        run["residual"] = math.sqrt(max(run["objective"], 0.0))
        runs.append(run)
    floor = cfg.success_residual * 1e-4
    best = min(runs, key=lambda r: (r["residual"] if r["residual"] > floor else 0.0, r["start"]))
    s, w, gap = psd_rank(best["P"], cfg.rank_tol)
    summary = []
    for r in runs:
        rs, _, _ = psd_rank(r["P"], cfg.rank_tol)
        summary.append({"start": r["start"], "residual": r["residual"], "rank": rs,
                        "iterations": r["iterations"], "max_kkt_condition": r["max_kkt_condition"]})
    return ModeSolution(
        P=best["P"], Z=best["Z"], residual=best["residual"], s=s, eigenvalues=w, gap=gap,
        converged=best["residual"] < cfg.success_residual, iterations=best["iterations"],
        objective_log=best["log"], start=best["start"], config=cfg, starts=summary,
    )


# ------------------------------------------------------------ pipeline

def estimate_modes(obs: ObservationPair, *, tol: float = DEFAULT_RANK_TOL, config: PFConfig | None = None,
                   factorization: str = "blind", model: JlsModel | None = None, n: int | None = None,
                   basis=None) -> ModeSolution:
    """Infer ``n`` from ``Y_O``, recover the conjugated moment and solve the rank program.

    ``factorization="oracle"`` needs ``model``: it factors ``Y_O`` with the
    model's ``C_T`` and ``B_T V`` (identity gauge).  Those factors only see
    ``S`` on symmetric states, so the rest of ``S`` is filled in from the model
    and the fraction that came from the data is reported.  ``"blind"`` factors
    ``Y_O`` by SVD at rank ``n(n+1)/2``, embeds the recovered operator on the
    symmetric subspace and leaves the gauge unknown.

    ``n`` overrides the rank-based inference (useful for noisy data).
    """
    rank_report = None
    if n is None:
        rep = infer_state_dim(obs.Y, tol, T=obs.T)
        n, rank_report = rep.n, rep.rank
    else:
        rank_report = numerical_rank(obs.Y, tol)
    cfg = PFConfig() if config is None else config
    notes: dict = {"n": n, "rank_Y": rank_report.rank, "factorization": factorization}

    if factorization == "oracle":
        if model is None:
            raise ValueError("oracle factorization needs the model")
        if model.n != n:
            raise ValueError(f"inferred n={n} does not match the model (n={model.n})")
        U, W = oracle_factors(model, obs.T, basis)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", IdentifiabilityWarning)
            rec = recover_conjugated_moment(obs.Y, obs.Y_plus, U, W, tol)
        S = second_moment(model)
        PU = pinv(U, tol) @ U
        PW = W @ pinv(W, tol)
        identified = PU @ S @ PW
        S_hat = rec.S_hat + (S - identified)
        notes.update({
            "rank_U": rec.rank_U,
            "rank_W": rec.rank_W,
            "data_consistency": float(np.linalg.norm(rec.S_hat - identified) / max(np.linalg.norm(S), 1e-300)),
            "completed_from_model": not rec.identifiable,
            "gauge_ambiguous": False,
        })
        sol = solve_pf_altmin(S_hat, cfg)
    elif factorization == "blind":
        r = n * (n + 1) // 2
        U, W = blind_factors(obs.Y, r)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", IdentifiabilityWarning)
            rec = recover_conjugated_moment(obs.Y, obs.Y_plus, U, W, tol)
        Q = symmetric_basis(n)
        Y_hat = Q @ rec.S_hat @ Q.T
        notes.update({"rank_U": rec.rank_U, "rank_W": rec.rank_W, "gauge_ambiguous": True,
                      "reduced_operator_moduli": np.sort(np.abs(np.linalg.eigvals(rec.S_hat)))[::-1].tolist()})
        sol = solve_pf_altmin(Y_hat, cfg)
    else:
        raise ValueError(f"unknown factorization {factorization!r}")
    sol.notes.update(notes)
    return sol
