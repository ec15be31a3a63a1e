"""State-dimension inference and the rank checks behind it."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import DEFAULT_RANK_TOL, RankReport, numerical_rank, symmetric_basis
from .model import JlsModel
from .oracle import expected_ctrl_kron, expected_obs_kron

DEFLATION_TOL = 1e-10


class NonTriangularRankError(ValueError):
    """The observation rank is not of the form n(n+1)/2."""

    def __init__(self, rank: int, report: RankReport | None = None):
        self.rank = rank
        self.report = report
        self.lower, self.upper = nearest_triangular(rank)
        super().__init__(
            f"rank {rank} is not a triangular number (nearest: {self.lower} and {self.upper}); "
            "the horizon may be below saturation, the data noisy, or the assumptions violated"
        )


class SaturationError(ValueError):
    """``rank(Y_O)`` at ``T`` is below its value at the model's saturation horizon."""

    def __init__(self, T: int, rank: int, T_sat: int, saturated_rank: int):
        self.T, self.rank, self.T_sat, self.saturated_rank = T, rank, T_sat, saturated_rank
        super().__init__(f"rank(Y_O) is {rank} at T={T} but {saturated_rank} at T={T_sat}; "
                         "the horizon is below saturation")


def nearest_triangular(r: int) -> tuple[int, int]:
    k = int((math.isqrt(8 * r + 1) - 1) // 2)
    lo = k * (k + 1) // 2
    if lo == r:
        return r, r
    return lo, (k + 1) * (k + 2) // 2


def state_dim_from_rank(r: int) -> int:
    """``n`` with ``n(n+1)/2 == r``; raises :class:`NonTriangularRankError` otherwise."""
    lo, hi = nearest_triangular(r)
    if lo != r or r == 0:
        raise NonTriangularRankError(r)
    return (math.isqrt(8 * r + 1) - 1) // 2


@dataclass
class RealizationReport:
    n: int
    rank: RankReport
    T: int | None = None
    r_B: int | None = None
    r_C: int | None = None

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "rank": self.rank.rank,
            "tol": self.rank.tol,
            "gap": self.rank.gap,
            "singular_values": self.rank.singular_values.tolist(),
            "T": self.T,
            "r_B": self.r_B,
            "r_C": self.r_C,
        }


def infer_state_dim(Y: np.ndarray, tol: float = DEFAULT_RANK_TOL, T: int | None = None) -> RealizationReport:
    rep = numerical_rank(Y, tol)
    try:
        n = state_dim_from_rank(rep.rank)
    except NonTriangularRankError as exc:
        raise NonTriangularRankError(rep.rank, rep) from exc
    return RealizationReport(n=n, rank=rep, T=T)


def check_saturation(model: JlsModel, T: int, tol: float = DEFAULT_RANK_TOL) -> int:
    """Compare exact ``rank(Y_O)`` at ``T`` with its value at ``n^2 + n - 1``.

    The model's own ``n`` bounds the minimal one, so its horizon is always
    past saturation.  Returns the rank; raises :class:`SaturationError` when
    ``T`` is too short to reach it.
    """
    from .excitation import exact_observations, standard_basis

    def rank_at(t):
        return numerical_rank(exact_observations(model, standard_basis(model.p, t), t).Y, tol).rank

    r = rank_at(T)
    T_sat = model.n ** 2 + model.n - 1
    if T < T_sat:
        r_sat = rank_at(T_sat)
        if r_sat != r:
            raise SaturationError(T, r, T_sat, r_sat)
    return r


# -------------------------------------------------------- reachable spans

def _orth(m: np.ndarray, tol: float) -> np.ndarray:
    if m.size == 0:
        return m
    u, sv, _ = np.linalg.svd(m, full_matrices=False)
    if sv.size == 0 or sv[0] == 0.0:
        return u[:, :0]
    return u[:, : int(np.count_nonzero(sv > tol * sv[0]))]


@dataclass
class SpanResult:
    rank: int
    basis: np.ndarray
    history: list[int] = field(default_factory=list)


def invariant_span(modes, start: np.ndarray, tol: float = DEFLATION_TOL) -> SpanResult:
    """Smallest subspace containing ``col(start)`` and invariant under every mode.

    Iterates ``V <- V + sum_l A_l V`` with re-orthonormalisation until the
    dimension stops growing (at most ``n`` rounds).
    """
    basis = _orth(np.asarray(start, dtype=float), tol)
    history = [basis.shape[1]]
    n = basis.shape[0]
    for _ in range(n):
        if basis.shape[1] in (0, n):
            break
        grown = _orth(np.hstack([basis] + [a @ basis for a in modes]), tol)
        history.append(grown.shape[1])
        if grown.shape[1] == basis.shape[1]:
            break
        basis = grown
    return SpanResult(basis.shape[1], basis, history)


def controllability_rank(model: JlsModel, tol: float = DEFLATION_TOL) -> int:
    return invariant_span(list(model.modes), model.B, tol).rank


def observability_rank(model: JlsModel, tol: float = DEFLATION_TOL) -> int:
    return invariant_span([a.T for a in model.modes], model.C.T, tol).rank


# ------------------------------------------------------ saturation scans

@dataclass(frozen=True)
class ScanRow:
    T: int
    rank_C: int
    rank_B: int
    rank_H: int
    rank_C_sym: int
    rank_B_sym: int


SCAN_COLUMNS = ("T", "rank_C", "rank_B", "rank_H", "rank_C_sym")


def symmetric_ranks(model: JlsModel, T: int, tol: float = DEFAULT_RANK_TOL) -> tuple[int, int]:
    """Ranks of ``C_T`` on symmetric states and of ``B_T`` on symmetric inputs."""
    CT = expected_obs_kron(model, T)
    BT = expected_ctrl_kron(model, T)
    rc = numerical_rank(CT @ symmetric_basis(model.n), tol).rank
    rb = numerical_rank(BT @ symmetric_basis(model.p * T), tol).rank
    return rc, rb


def rank_saturation_scan(model: JlsModel, T_max: int, tol: float = DEFAULT_RANK_TOL) -> list[ScanRow]:
    if T_max < 1:
        raise ValueError("T_max must be >= 1")
    rows = []
    Dn = symmetric_basis(model.n)
    for T in range(1, T_max + 1):
        CT = expected_obs_kron(model, T)
        BT = expected_ctrl_kron(model, T)
        rows.append(ScanRow(
            T=T,
            rank_C=numerical_rank(CT, tol).rank,
            rank_B=numerical_rank(BT, tol).rank,
            rank_H=numerical_rank(CT @ BT, tol).rank,
            rank_C_sym=numerical_rank(CT @ Dn, tol).rank,
            rank_B_sym=numerical_rank(BT @ symmetric_basis(model.p * T), tol).rank,
        ))
    return rows


def saturation_horizon(values) -> int | None:
    """First ``T`` (1-based) after which ``values`` never change again."""
    values = list(values)
    if not values:
        return None
    t = len(values)
    while t > 1 and values[t - 2] == values[-1]:
        t -= 1
    return t


def saturation_summary(rows: list[ScanRow]) -> dict:
    return {
        col: saturation_horizon(getattr(r, col) for r in rows)
        for col in ("rank_C", "rank_B", "rank_H", "rank_C_sym", "rank_B_sym")
    }


@dataclass
class Assumption4Result:
    passed: bool
    rank_C_sym: int
    rank_B_sym: int
    required: int
    T: int

    def to_dict(self) -> dict:
        return {"passed": self.passed, "rank_C_sym": self.rank_C_sym, "rank_B_sym": self.rank_B_sym,
                "required": self.required, "T": self.T}


def assumption4_diagnostic(model: JlsModel, T: int, tol: float = DEFAULT_RANK_TOL) -> Assumption4Result:
    """Necessary condition for orthogonal differentiability at horizon ``T``.

    Both symmetric-restricted ranks must reach ``n(n+1)/2``.  Passing does not
    prove the assumption.
    """
    rc, rb = symmetric_ranks(model, T, tol)
    need = model.n * (model.n + 1) // 2
    return Assumption4Result(rc >= need and rb >= need, rc, rb, need, T)
