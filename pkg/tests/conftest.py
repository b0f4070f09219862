"""Shared fixtures: exact profiles, constant weight fields, and cached solves.

The four minimizer solves (one- and two-phase at 129 and 257 nodes) are the
expensive part of the suite; they are computed once per session and reused by
the unit and acceptance tests, with wall-clock time recorded for the runtime
budgets.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
import pytest

from fblab.functional import WeightField
from fblab.grid import GridDomain, GridFunction, make_grid, sample
from fblab.solver import SolveConfig, SolveResult, minimize

LAMBDA_PLUS = math.sqrt(2.0)
LAMBDA_MINUS = 1.0

# smoothing ladder used by the built-in scenarios; final width matches the
# spacing of the 129-node grid. The finer grid appends one h-matched rung.
EPS_129 = (0.05, 0.025, 0.011, 0.0056)
EPS_257 = (0.025, 0.011, 0.0056, 0.0028)
# legal down to 28 nodes per axis on the [-1,1]^2 square
EPS_COARSE = (0.1, 0.05, 0.027)


def plane_profile(coords: np.ndarray) -> np.ndarray:
    return np.maximum(coords[..., 1], 0.0)


def two_plane_profile(coords: np.ndarray) -> np.ndarray:
    x2 = coords[..., 1]
    return LAMBDA_PLUS * np.maximum(x2, 0.0) - LAMBDA_MINUS * np.maximum(-x2, 0.0)


def square_grid(n: int) -> GridDomain:
    return make_grid([-1.0, -1.0], [2.0, 2.0], [n, n])


def const_weights(
    g: GridDomain, q_plus: float, q_minus: float = 0.0, mode: str = "one-phase"
) -> WeightField:
    qp = sample(lambda c: np.full(c.shape[:-1], q_plus), g)
    qm = sample(lambda c: np.full(c.shape[:-1], q_minus), g)
    return WeightField(qp, qm, mode)


@dataclass
class Solve:
    domain: GridDomain
    weights: WeightField
    result: SolveResult
    seconds: float

    @property
    def u(self) -> GridFunction:
        return self.result.u


def _solve(n: int, mode: str) -> Solve:
    g = square_grid(n)
    eps = EPS_129 if n <= 129 else EPS_257
    cfg = SolveConfig(epsilons=eps, grad_tol=1e-7)
    if mode == "one-phase":
        w = const_weights(g, 1.0, 0.0, "one-phase")
        boundary, nonneg = plane_profile, True
    else:
        w = const_weights(g, LAMBDA_PLUS, LAMBDA_MINUS, "two-phase")
        boundary, nonneg = two_plane_profile, False
    t0 = time.perf_counter()
    result = minimize(g, w, boundary, cfg, nonneg=nonneg)
    return Solve(g, w, result, time.perf_counter() - t0)


@pytest.fixture(scope="session")
def one_phase_129() -> Solve:
    return _solve(129, "one-phase")


@pytest.fixture(scope="session")
def one_phase_257() -> Solve:
    return _solve(257, "one-phase")


@pytest.fixture(scope="session")
def two_phase_129() -> Solve:
    return _solve(129, "two-phase")


@pytest.fixture(scope="session")
def two_phase_257() -> Solve:
    return _solve(257, "two-phase")


def sup_error_inner(u: GridFunction, profile, half: float = 0.5) -> float:
    """Sup distance from the analytic profile over the inner half-domain."""
    coords = u.domain.node_coordinates()
    inner = np.all(np.abs(coords) <= half, axis=-1)
    return float(np.max(np.abs(u.values - profile(coords))[inner]))
