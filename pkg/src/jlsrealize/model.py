"""Jump linear system model, simulation and model-level diagnostics.

The system is

    x_{k+1} = A[theta(k)] x_k + B u_k,    y_k = C x_k,    x_0 = 0,

with the mode indices theta(k) drawn i.i.d. from ``probs``.  Mode indices are
0-based everywhere inside the package; file formats and the CLI use 1-based
labels and convert at the boundary (:func:`parse_switches`,
:func:`format_switches`).

Random switching uses numpy's PCG64 bit generator.  A stream is identified by
``(seed, *key)`` and built from ``SeedSequence(seed, spawn_key=key)``; a run of
``K`` switches consumes ``K`` uniforms which are mapped to modes through the
cumulative probabilities.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .linalg import numerical_rank, spectral_radius, vec

PROB_TOL = 1e-12
STABILITY_TOL = 1e-9


class ModelError(ValueError):
    """Raised when a model file or model object is structurally unusable."""


class StabilityWarning(RuntimeWarning):
    """Monte Carlo run on a model that is not mean-square stable."""


@dataclass(frozen=True)
class JlsModel:
    n: int
    m: int
    p: int
    s: int
    modes: np.ndarray  # (s, n, n)
    B: np.ndarray
    C: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        # Shapes are not enforced here so that validate_model can report them.
        modes = self.modes
        if isinstance(modes, np.ndarray) and modes.ndim == 3:
            modes = np.array(modes, dtype=float)
        else:
            modes = [np.atleast_2d(np.array(a, dtype=float)) for a in modes]
            shapes = {a.shape for a in modes}
            modes = np.stack(modes) if len(shapes) == 1 else tuple(modes)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "B", np.atleast_2d(np.array(self.B, dtype=float)))
        object.__setattr__(self, "C", np.atleast_2d(np.array(self.C, dtype=float)))
        object.__setattr__(self, "probs", np.array(self.probs, dtype=float).ravel())

    @classmethod
    def from_arrays(cls, modes, B, C, probs=None) -> "JlsModel":
        """Build a model, inferring the dimensions from the arrays.

        ``probs`` defaults to the uniform distribution.
        """
        modes = np.array([np.atleast_2d(np.asarray(a, dtype=float)) for a in modes])
        B = np.asarray(B, dtype=float)
        if B.ndim == 1:
            B = B[:, None]
        C = np.atleast_2d(np.asarray(C, dtype=float))
        s, n = modes.shape[0], modes.shape[1]
        if probs is None:
            probs = np.full(s, 1.0 / s)
        return cls(n=n, m=C.shape[0], p=B.shape[1], s=s, modes=modes, B=B, C=C, probs=probs)

    def scaled(self, factor: float) -> "JlsModel":
        """Copy of the model with every mode matrix multiplied by ``factor``."""
        return JlsModel(self.n, self.m, self.p, self.s, np.asarray(self.modes) * factor,
                        self.B, self.C, self.probs)

    def with_modes(self, modes, probs=None) -> "JlsModel":
        modes = np.asarray(modes, dtype=float)
        probs = self.probs if probs is None else probs
        return JlsModel(self.n, self.m, self.p, modes.shape[0], modes, self.B, self.C, probs)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "p": self.p,
            "s": self.s,
            "modes": [np.asarray(a).tolist() for a in self.modes],
            "B": self.B.tolist(),
            "C": self.C.tolist(),
            "probs": self.probs.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "JlsModel":
        keys = ("n", "m", "p", "s", "modes", "B", "C", "probs")
        missing = [k for k in keys if k not in data]
        if missing:
            raise ModelError(f"model is missing fields: {', '.join(missing)}")
        for k in ("n", "m", "p", "s"):
            if not isinstance(data[k], int) or isinstance(data[k], bool):
                raise ModelError(f"field {k!r} must be an integer")
        try:
            modes = [np.array(a, dtype=float) for a in data["modes"]]
            B = np.array(data["B"], dtype=float)
            C = np.array(data["C"], dtype=float)
            probs = np.array(data["probs"], dtype=float)
        except (TypeError, ValueError) as exc:
            raise ModelError(f"model matrices must be numeric nested arrays: {exc}") from exc
        for name, arr in [("B", B), ("C", C), ("probs", probs)] + [
            (f"modes[{i}]", a) for i, a in enumerate(modes)
        ]:
            if not np.all(np.isfinite(arr)):
                raise ModelError(f"{name} contains NaN or Inf")
        return cls(data["n"], data["m"], data["p"], data["s"], modes, B, C, probs)


@dataclass
class ValidationReport:
    issues: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    def __bool__(self) -> bool:
        return self.ok


@dataclass(frozen=True)
class Trajectory:
    inputs: np.ndarray  # (K, p): u_0 .. u_{K-1}
    outputs: np.ndarray  # (K, m): y_1 .. y_K
    switches: np.ndarray  # (K,): theta(0) .. theta(K-1), 0-based
    states: np.ndarray  # (K+1, n): x_0 .. x_K


def validate_model(model: JlsModel) -> ValidationReport:
    """Check dimensions and the probability vector; never raises."""
    rep = ValidationReport()
    for k in ("n", "m", "p", "s"):
        if getattr(model, k) < 1:
            rep.issues.append(f"{k} must be >= 1, got {getattr(model, k)}")
    n, m, p, s = model.n, model.m, model.p, model.s
    modes = list(model.modes)
    if len(modes) != s:
        rep.issues.append(f"expected {s} mode matrices, got {len(modes)}")
    for i, a in enumerate(modes):
        if a.shape != (n, n):
            kind = "non-square mode" if a.shape[0] != a.shape[1] else "mode has wrong size"
            rep.issues.append(f"{kind}: A{i + 1} has shape {a.shape}, expected ({n}, {n})")
    if model.B.shape != (n, p):
        rep.issues.append(f"B has shape {model.B.shape}, expected ({n}, {p})")
    if model.C.shape != (m, n):
        rep.issues.append(f"C has shape {model.C.shape}, expected ({m}, {n})")
    probs = model.probs
    if probs.size != s:
        rep.issues.append(f"expected {s} probabilities, got {probs.size}")
    if np.any(probs <= 0):
        rep.issues.append("probabilities must be strictly positive")
    total = float(np.sum(probs))
    if abs(total - 1.0) > PROB_TOL:
        rep.issues.append(f"probabilities sum to {total:.12g}, expected 1")
    return rep


def require_valid(model: JlsModel) -> None:
    rep = validate_model(model)
    if not rep.ok:
        raise ModelError("; ".join(rep.issues))


def load_model(path: str | Path) -> JlsModel:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ModelError(f"cannot read model file {path}: {exc}") from exc

    def _reject(token):
        raise ModelError(f"model file contains non-finite number {token}")

    try:
        data = json.loads(text, parse_constant=_reject)
    except json.JSONDecodeError as exc:
        raise ModelError(f"model file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ModelError("model file must hold a JSON object")
    return JlsModel.from_dict(data)


def save_model(model: JlsModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=2) + "\n", encoding="utf-8")


# ---------------------------------------------------------------- switches

def parse_switches(text: str | Sequence[int]) -> np.ndarray:
    """Parse 1-based mode labels (``"2,2,1"`` or a sequence) into 0-based indices."""
    if isinstance(text, str):
        items = [t for t in text.replace(" ", "").split(",") if t]
        try:
            labels = [int(t) for t in items]
        except ValueError as exc:
            raise ValueError(f"switch labels must be integers: {text!r}") from exc
    else:
        labels = [int(t) for t in text]
    labels = np.asarray(labels, dtype=int)
    if np.any(labels < 1):
        raise ValueError("switch labels are 1-based and must be >= 1")
    return labels - 1


def format_switches(switches: Sequence[int]) -> list[int]:
    return [int(k) + 1 for k in switches]


def switch_rng(seed: int, *key: int) -> np.random.Generator:
    """PCG64 stream for ``(seed, *key)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def draw_switches(probs: np.ndarray, shape, rng: np.random.Generator) -> np.ndarray:
    """Draw i.i.d. 0-based mode indices; one uniform per draw, in C order."""
    cum = np.cumsum(np.asarray(probs, dtype=float))
    u = rng.random(shape)
    idx = np.searchsorted(cum, u * cum[-1], side="right")
    return np.minimum(idx, len(cum) - 1)


# -------------------------------------------------------------- simulation

def _as_inputs(model: JlsModel, inputs, horizon: int | None) -> np.ndarray:
    u = np.asarray(inputs, dtype=float)
    if u.ndim == 1:
        u = u.reshape(-1, model.p) if model.p > 1 else u[:, None]
    if u.ndim != 2 or u.shape[1] != model.p:
        raise ValueError(f"inputs must have shape (K, {model.p}), got {u.shape}")
    horizon = u.shape[0] if horizon is None else int(horizon)
    if horizon < u.shape[0]:
        raise ValueError(f"horizon {horizon} is shorter than the input sequence ({u.shape[0]})")
    if horizon > u.shape[0]:
        u = np.vstack([u, np.zeros((horizon - u.shape[0], model.p))])
    return u


def simulate_with_switches(model: JlsModel, switches, inputs, horizon: int | None = None) -> Trajectory:
    """Deterministic rollout from ``x_0 = 0`` with the given 0-based switch sequence.

    ``switches[k]`` is ``theta(k)``, the mode applied to ``x_k``; inputs shorter
    than ``horizon`` are padded with zeros.
    """
    u = _as_inputs(model, inputs, horizon)
    horizon = u.shape[0]
    sw = np.asarray(switches, dtype=int).ravel()
    if sw.size < horizon:
        raise ValueError(f"need at least {horizon} switches, got {sw.size}")
    if sw.size and (sw.min() < 0 or sw.max() >= model.s):
        bad = sw[(sw < 0) | (sw >= model.s)][0]
        raise ValueError(f"switch index {bad + 1} outside [1, {model.s}]")
    sw = sw[:horizon]
    modes = np.asarray(model.modes)
    x = np.zeros((horizon + 1, model.n))
    for k in range(horizon):
        x[k + 1] = modes[sw[k]] @ x[k] + model.B @ u[k]
    y = x[1:] @ model.C.T
    return Trajectory(inputs=u, outputs=y, switches=sw, states=x)


def simulate_random(model: JlsModel, inputs, horizon: int, seed: int) -> Trajectory:
    """Rollout with switches drawn i.i.d. from ``model.probs`` on stream ``(seed,)``."""
    u = _as_inputs(model, inputs, horizon)
    sw = draw_switches(model.probs, u.shape[0], switch_rng(seed))
    return simulate_with_switches(model, sw, u)


def simulate_ensemble(model: JlsModel, switches: np.ndarray, inputs: np.ndarray) -> np.ndarray:
    """Outputs of many copies driven by the same input.

    ``switches`` has shape ``(N, K)`` and ``inputs`` shape ``(K, p)``; returns
    ``(N, K, m)`` holding ``y_1 .. y_K`` for each copy.
    """
    sw = np.asarray(switches, dtype=int)
    u = np.asarray(inputs, dtype=float)
    N, K = sw.shape
    modes = np.asarray(model.modes)
    x = np.zeros((N, model.n))
    y = np.empty((N, K, model.m))
    for k in range(K):
        x = np.einsum("cij,cj->ci", modes[sw[:, k]], x) + model.B @ u[k]
        y[:, k] = x @ model.C.T
    return y


def warn_if_unstable(model: JlsModel) -> None:
    stable, rho = mean_square_stable(model)
    if not stable:
        warnings.warn(
            f"model is not mean-square stable (spectral radius of the second-moment "
            f"operator is {rho:.6g}); Monte Carlo averages may be dominated by rare copies",
            StabilityWarning,
            stacklevel=3,
        )


# ------------------------------------------------------------- diagnostics

def second_moment_operator(model: JlsModel) -> np.ndarray:
    n = model.n
    S = np.zeros((n * n, n * n))
    for p, a in zip(model.probs, model.modes):
        S += p * np.kron(a, a)
    return S


def mean_square_stable(model: JlsModel, tol: float = STABILITY_TOL) -> tuple[bool, float]:
    """Return ``(rho(S) < 1 - tol, rho(S))`` with ``S = sum_i p_i A_i (x) A_i``."""
    rho = spectral_radius(second_moment_operator(model))
    return rho < 1.0 - tol, rho


def minimality_check(model: JlsModel, tol: float = 1e-9):
    """Rank of ``[vec(A_1) ... vec(A_s)]``; below ``s`` means redundant modes."""
    stack = np.column_stack([vec(a) for a in model.modes])
    return numerical_rank(stack, tol)


def worst_case_sample_bound(model: JlsModel, sequence: Sequence[int]) -> float:
    """Expected number of copies before a given 0-based switch sequence shows up.

    Zero-probability entries give ``math.inf``.
    """
    bound = 1.0
    for k in sequence:
        p = float(model.probs[int(k)])
        if p <= 0.0:
            return math.inf
        bound /= p
    return bound
