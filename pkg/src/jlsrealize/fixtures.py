"""Reference models shipped with the package.

``ex2`` and ``ex3`` are the two worked examples of the method (three states,
scalar input and output).  Both have an identity mode and so are not
mean-square stable as printed; the ``*_scaled`` variants multiply every mode
by 0.5 for Monte Carlo work.  ``lti2`` is a single-mode controllable and
observable two-state system and ``scalar`` a two-mode one-state system.
"""
from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .model import JlsModel, load_model

FIXTURE_ENV = "JLSREALIZE_FIXTURES"
PACKAGE_FIXTURES = Path(__file__).with_name("fixtures")


def example2() -> JlsModel:
    cyclic = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    return JlsModel.from_arrays(
        [np.eye(3), cyclic], B=[[1.0], [0.0], [0.0]], C=[[1.0, 0.0, 0.0]], probs=[0.5, 0.5]
    )


def example3() -> JlsModel:
    a1 = [[0, 0, 0], [1, 1, 0], [-1, 0, 0]]
    a2 = [[1, 0, -1], [-1, 0, 0], [1, 0, 1]]
    a3 = [[0, 0, 1], [0, 0, 0], [0, 0, 0]]
    a4 = np.eye(3)
    return JlsModel.from_arrays(
        [a1, a2, a3, a4], B=[[1.0], [1.0], [1.0]], C=[[1.0, 1.0, 1.0]], probs=[0.25] * 4
    )


def lti2() -> JlsModel:
    return JlsModel.from_arrays(
        [[[0.5, 1.0], [0.0, 0.25]]], B=[[0.0], [1.0]], C=[[1.0, 0.0]], probs=[1.0]
    )


def scalar() -> JlsModel:
    return JlsModel.from_arrays([[[0.5]], [[-0.3]]], B=[[1.0]], C=[[1.0]], probs=[0.5, 0.5])


BUILTIN = {
    "ex2": example2,
    "ex2_scaled": lambda: example2().scaled(0.5),
    "ex3": example3,
    "ex3_scaled": lambda: example3().scaled(0.5),
    "lti2": lti2,
    "scalar": scalar,
}


def fixture_dir() -> Path:
    env = os.environ.get(FIXTURE_ENV)
    return Path(env) if env else PACKAGE_FIXTURES


def resolve_model_path(name: str | os.PathLike) -> Path:
    """Return ``name`` if it exists, else look it up in the fixture directory.

    A bare fixture name without ``.json`` is accepted.
    """
    path = Path(name)
    if path.exists():
        return path
    base = fixture_dir()
    for candidate in (base / path.name, base / f"{path.name}.json"):
        if candidate.exists():
            return candidate
    return path


def load_fixture(name: str) -> JlsModel:
    return load_model(resolve_model_path(name))


def random_model(n: int, s: int, seed: int, radius: float = 0.95, m: int = 1, p: int = 1) -> JlsModel:
    """Random model whose modes are scaled orthogonal matrices.

    Orthogonal modes keep the oracle powers from decaying quickly, which keeps
    rank decisions at long horizons well conditioned.
    """
    rng = np.random.default_rng(seed)
    modes = []
    for _ in range(s):
        q, r = np.linalg.qr(rng.standard_normal((n, n)))
        modes.append(radius * q * np.sign(np.diag(r)))
    probs = rng.dirichlet(np.full(s, 4.0))
    return JlsModel.from_arrays(
        modes, B=rng.standard_normal((n, p)), C=rng.standard_normal((m, n)), probs=probs
    )
