"""Excitation and observation: build the observation pair ``(Y_O, Y_O^+)``.

Each basis input ``v`` (a stacked ``[u_0; ...; u_{T-1}]``) is applied to many
independent copies of the system for ``2T`` steps with zero input from time
``T`` on.  Column ``j`` of ``Y_O`` is the average of ``vec(Y Y^T)`` where ``Y``
stacks ``y_T .. y_{2T-1}``; ``Y_O^+`` uses ``y_{T+1} .. y_{2T}``.

The basis is extended with ``v_i + v_j`` and ``v_i - v_j`` for ``i < j`` so the
products ``v (x) v`` span the whole symmetric subspace of ``R^{pT} (x) R^{pT}``.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import serialize
from .model import JlsModel, draw_switches, simulate_ensemble, switch_rng, warn_if_unstable
from .oracle import expected_ctrl_kron, expected_obs_kron, second_moment


@dataclass(frozen=True)
class InputBasis:
    p: int
    T: int
    base: np.ndarray  # (pT, pT), columns v_1 .. v_pT
    extended: np.ndarray  # (pT, d)

    @property
    def dim(self) -> int:
        return self.p * self.T

    @property
    def d(self) -> int:
        return self.extended.shape[1]

    def kron_columns(self) -> np.ndarray:
        """``V = [v_1 (x) v_1, ..., v_d (x) v_d]``."""
        return kron_columns(self.extended)


def kron_columns(vectors: np.ndarray) -> np.ndarray:
    vectors = np.asarray(vectors, dtype=float)
    return np.einsum("ik,jk->ijk", vectors, vectors).reshape(vectors.shape[0] ** 2, -1)


def extend_basis(base: np.ndarray) -> np.ndarray:
    """Base vectors followed by ``v_i + v_j, v_i - v_j`` for every pair ``i < j``."""
    cols = [base[:, i] for i in range(base.shape[1])]
    k = base.shape[1]
    for i in range(k):
        for j in range(i + 1, k):
            cols.append(base[:, i] + base[:, j])
            cols.append(base[:, i] - base[:, j])
    return np.column_stack(cols)


def input_basis(base: np.ndarray, p: int, T: int) -> InputBasis:
    base = np.asarray(base, dtype=float)
    if base.shape != (p * T, p * T):
        raise ValueError(f"basis must be {p * T} x {p * T}, got {base.shape}")
    if np.linalg.matrix_rank(base) < p * T:
        raise ValueError("basis vectors are linearly dependent")
    return InputBasis(p, T, base, extend_basis(base))


def standard_basis(p: int, T: int) -> InputBasis:
    if p < 1 or T < 1:
        raise ValueError("p and T must be >= 1")
    return input_basis(np.eye(p * T), p, T)


def embed_input(v: np.ndarray, p: int, T: int, horizon: int | None = None) -> np.ndarray:
    """Unstack ``v`` into ``u_0 .. u_{T-1}`` (rows) and zero-pad to ``horizon`` rows."""
    v = np.asarray(v, dtype=float).ravel()
    if v.size != p * T:
        raise ValueError(f"input vector must have length {p * T}, got {v.size}")
    horizon = T if horizon is None else horizon
    if horizon < T:
        raise ValueError("horizon must cover the excitation window")
    u = np.zeros((horizon, p))
    u[:T] = v.reshape(T, p)
    return u


def time_reversal(p: int, T: int) -> np.ndarray:
    """Permutation sending the ``u_k`` block of a stacked input to block ``T-1-k``."""
    J = np.zeros((p * T, p * T))
    for k in range(T):
        J[(T - 1 - k) * p:(T - k) * p, k * p:(k + 1) * p] = np.eye(p)
    return J


@dataclass
class ObservationPair:
    Y: np.ndarray
    Y_plus: np.ndarray
    T: int
    N: int | None
    seed: int | None
    mode: str  # "monte-carlo" or "exact"
    meta: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.Y.shape[1]

    def metadata(self) -> dict:
        return {"T": self.T, "N": self.N, "d": self.d, "seed": self.seed, "mode": self.mode, **self.meta}


def collect_observations(model: JlsModel, basis: InputBasis, T: int, N: int, seed: int) -> ObservationPair:
    """Monte Carlo estimate of the observation pair from ``N`` copies per input.

    Input ``j`` draws its switches from stream ``(seed, j)``; copy ``c`` uses
    the ``c``-th block of ``2T`` uniforms, so a copy's switches depend only on
    ``(seed, j, c)``.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if basis.T != T or basis.p != model.p:
        raise ValueError("basis does not match (p, T)")
    warn_if_unstable(model)
    mT = model.m * T
    Y = np.empty((mT * mT, basis.d))
    Yp = np.empty((mT * mT, basis.d))
    for j in range(basis.d):
        u = embed_input(basis.extended[:, j], model.p, T, horizon=2 * T)
        sw = draw_switches(model.probs, (N, 2 * T), switch_rng(seed, j))
        out = simulate_ensemble(model, sw, u)  # y_1 .. y_2T
        now = out[:, T - 1:2 * T - 1].reshape(N, mT)
        nxt = out[:, T:2 * T].reshape(N, mT)
        Y[:, j] = (now.T @ now / N).ravel(order="F")
        Yp[:, j] = (nxt.T @ nxt / N).ravel(order="F")
    return ObservationPair(Y, Yp, T, N, seed, "monte-carlo")


def exact_observations(model: JlsModel, basis: InputBasis, T: int,
                       second_moment_override: np.ndarray | None = None) -> ObservationPair:
    """Infinite-sample limit of :func:`collect_observations`.

    ``Y_O = C_T B_T (J (x) J) V`` and ``Y_O^+ = C_T S B_T (J (x) J) V`` where
    ``J`` reverses the time blocks of the stacked input (``B_T`` is ordered by
    prefix length, the stacked input by time).
    """
    if basis.T != T or basis.p != model.p:
        raise ValueError("basis does not match (p, T)")
    CT = expected_obs_kron(model, T)
    BT = expected_ctrl_kron(model, T)
    S = second_moment(model) if second_moment_override is None else second_moment_override
    J = time_reversal(model.p, T)
    W = BT @ kron_columns(J @ basis.extended)
    return ObservationPair(CT @ W, CT @ S @ W, T, None, None, "exact")


# ----------------------------------------------------------- serialization

def observations_to_dict(obs: ObservationPair) -> dict:
    return {"metadata": obs.metadata(), "Y": obs.Y, "Y_plus": obs.Y_plus}


def observations_from_dict(data: dict) -> ObservationPair:
    meta = dict(data["metadata"])
    T, N, seed, mode = meta.pop("T"), meta.pop("N"), meta.pop("seed"), meta.pop("mode")
    meta.pop("d", None)
    return ObservationPair(np.array(data["Y"], dtype=float), np.array(data["Y_plus"], dtype=float),
                           T, N, seed, mode, meta)


def dumps_observations(obs: ObservationPair, fmt: str = "json") -> str:
    if fmt == "json":
        return serialize.dumps(observations_to_dict(obs))
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        for key, value in obs.metadata().items():
            w.writerow(["#", key, json.dumps(value)])
        w.writerow(["matrix", "row"] + [f"c{j}" for j in range(obs.d)])
        for name, mat in (("Y", obs.Y), ("Y_plus", obs.Y_plus)):
            for i, row in enumerate(mat):
                w.writerow([name, i] + [serialize.fmt_float(x) for x in row])
        return buf.getvalue()
    raise ValueError(f"unknown format {fmt!r}")


def loads_observations(text: str) -> ObservationPair:
    if text.lstrip().startswith("{"):
        return observations_from_dict(serialize.loads(text))
    meta, rows = {}, {"Y": [], "Y_plus": []}
    for rec in csv.reader(io.StringIO(text)):
        if not rec:
            continue
        if rec[0] == "#":
            meta[rec[1]] = json.loads(rec[2])
        elif rec[0] in rows:
            rows[rec[0]].append([float(x) for x in rec[2:]])
    return observations_from_dict({"metadata": meta, "Y": rows["Y"], "Y_plus": rows["Y_plus"]})


def save_observations(obs: ObservationPair, path: str | Path, fmt: str = "json") -> None:
    Path(path).write_text(dumps_observations(obs, fmt), encoding="utf-8")


def load_observations(path: str | Path) -> ObservationPair:
    return loads_observations(Path(path).read_text(encoding="utf-8"))
