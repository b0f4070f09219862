"""The two-phase energy J on balls, competitor families, and defects.

J(v; B) = int_B |grad v|^2 + q_+^2 chi_{v>0} + q_-^2 chi_{v<0}.
Sign-set fractions per cell come from the same fixed 4^dim subsample rule
used for partial-cell ball weights, with the nodal field interpolated at
the subsample points, so J varies continuously as the interface crosses
nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from fblab.grid import (
    Ball,
    GridDomain,
    GridError,
    GridFunction,
    _subsample_offsets,
    gradient,
    integrate_ball,
    interpolate,
)

Sign = Literal["plus", "minus"]
Mode = Literal["one-phase", "two-phase"]


@dataclass(frozen=True)
class WeightField:
    """The weight pair (q_plus, q_minus); q_minus vanishes in one-phase mode."""

    q_plus: GridFunction
    q_minus: GridFunction
    mode: Mode = "two-phase"

    def __post_init__(self):
        if self.q_plus.domain != self.q_minus.domain:
            raise GridError("q_plus and q_minus must share a domain")
        if np.any(self.q_plus.values < 0.0) or np.any(self.q_minus.values < 0.0):
            raise GridError("weights must be nonnegative")
        if self.mode == "one-phase" and np.any(self.q_minus.values != 0.0):
            raise GridError("one-phase mode requires q_minus == 0")

    @property
    def domain(self) -> GridDomain:
        return self.q_plus.domain


@dataclass(frozen=True)
class AlmostMinParams:
    """Gauge h(r) = kappa * r^alpha; beta is the derived Hölder exponent."""

    kappa: float
    alpha: float

    def __post_init__(self):
        if self.kappa < 0.0:
            raise GridError("kappa must be nonnegative")
        if not (0.0 < self.alpha <= 1.0):
            raise GridError("alpha must lie in (0, 1]")

    def beta_derived(self, dim: int) -> float:
        return self.alpha / (dim + 2 + self.alpha)

    def gauge(self, r: float) -> float:
        return self.kappa * r**self.alpha


def cell_sign_fractions(u: GridFunction, sign: Sign) -> np.ndarray:
    """Per-cell fraction of subsample points where interpolated u > 0 (< 0)."""
    g = u.domain
    corners = g.node_coordinates()[tuple(slice(None, -1) for _ in range(g.dim))]
    offs = _subsample_offsets(g.dim) * np.asarray(g.spacing)
    pts = corners[..., None, :] + offs
    vals = interpolate(u, pts)
    if sign == "plus":
        return (vals > 0.0).mean(axis=-1)
    return (vals < 0.0).mean(axis=-1)


def cell_center_values(u: GridFunction) -> np.ndarray:
    """Nodal field averaged to cell centers (multilinear value at center)."""
    g = u.domain
    v = u.values
    if g.dim == 2:
        return 0.25 * (v[:-1, :-1] + v[1:, :-1] + v[:-1, 1:] + v[1:, 1:])
    return 0.125 * (
        v[:-1, :-1, :-1] + v[1:, :-1, :-1] + v[:-1, 1:, :-1] + v[:-1, :-1, 1:]
        + v[1:, 1:, :-1] + v[1:, :-1, 1:] + v[:-1, 1:, 1:] + v[1:, 1:, 1:]
    )


def energy(u: GridFunction, ball: Ball) -> float:
    """Dirichlet term int_B |grad u|^2."""
    grad = gradient(u)
    return integrate_ball(u.domain, np.sum(grad * grad, axis=-1), ball)


def measure_term(u: GridFunction, w: WeightField, ball: Ball, sign: Sign) -> float:
    """int_B q_pm^2 chi_{pm u > 0}, with subsampled sign fractions per cell."""
    if w.domain != u.domain:
        raise GridError("weights and function live on different domains")
    if sign == "plus":
        q = cell_center_values(w.q_plus)
    else:
        q = cell_center_values(w.q_minus)
    frac = cell_sign_fractions(u, sign)
    return integrate_ball(u.domain, q * q * frac, ball)


def J(u: GridFunction, w: WeightField, ball: Ball) -> float:
    """Full functional: energy plus both weighted sign-set measures."""
    total = energy(u, ball) + measure_term(u, w, ball, "plus")
    if w.mode == "two-phase":
        total += measure_term(u, w, ball, "minus")
    return total


def competitor_scale(
    u: GridFunction, ball: Ball, lam: float, phi: GridFunction, sign: Sign
) -> GridFunction:
    """Multiplicative perturbation v = (1 + lam*phi) u on the chosen sign set.

    phi must satisfy 0 <= phi <= 1 with support inside the ball; the
    perturbation leaves both sign sets invariant.
    """
    g = u.domain
    g.require_ball(ball)
    if phi.domain != g:
        raise GridError("cutoff lives on a different domain")
    pv = phi.values
    if np.any(pv < 0.0) or np.any(pv > 1.0):
        raise GridError("cutoff must take values in [0, 1]")
    coords = g.node_coordinates()
    d2 = np.sum((coords - np.asarray(ball.center)) ** 2, axis=-1)
    outside = d2 >= ball.radius * ball.radius
    if np.any(pv[outside] != 0.0):
        raise GridError("cutoff support must lie inside the ball")
    if np.max(np.abs(lam * pv)) >= 1.0:
        raise GridError("|lambda * phi| must stay below 1")
    uv = u.values
    on_set = uv > 0.0 if sign == "plus" else uv < 0.0
    out = uv.copy()
    out[on_set] = (1.0 + lam * pv[on_set]) * uv[on_set]
    return GridFunction(g, out)


def competitor_green_cutoff(g: GridDomain, ball: Ball, s: float) -> GridFunction:
    """Truncated Green-function cutoff of the ball, sampled at the nodes.

    Zero outside B(x,r); for 3D equals c3 (|y-x|^{-1} - r^{-1}) with
    c3 = 1/(3 omega_3) between radii s and r and is constant at its s-value
    inside B(x,s). In 2D the log Green function (1/2pi) log(r/|y-x|) plays
    the same role.
    """
    g.require_ball(ball)
    r = ball.radius
    if not (0.0 < s < r):
        raise GridError("truncation radius must satisfy 0 < s < r")
    coords = g.node_coordinates()
    dist = np.sqrt(np.sum((coords - np.asarray(ball.center)) ** 2, axis=-1))
    clipped = np.clip(dist, s, r)
    if g.dim == 2:
        vals = np.log(r / clipped) / (2.0 * np.pi)
    else:
        omega3 = 4.0 * np.pi / 3.0
        c3 = 1.0 / (3.0 * omega3)
        vals = c3 * (1.0 / clipped - 1.0 / r)
    vals[dist >= r] = 0.0
    return GridFunction(g, vals)


def normalized_green_cutoff(g: GridDomain, ball: Ball, s: float) -> GridFunction:
    """Green cutoff rescaled to peak value 1 (admissible for competitor_scale)."""
    phi = competitor_green_cutoff(g, ball, s)
    peak = float(np.max(phi.values))
    if peak <= 0.0:
        return phi
    return GridFunction(g, phi.values / peak)


def radial_cutoff(g: GridDomain, ball: Ball, s: float) -> GridFunction:
    """Piecewise-linear radial cutoff: 1 on B(x,s), 0 outside B(x,r)."""
    g.require_ball(ball)
    r = ball.radius
    if not (0.0 < s < r):
        raise GridError("plateau radius must satisfy 0 < s < r")
    coords = g.node_coordinates()
    dist = np.sqrt(np.sum((coords - np.asarray(ball.center)) ** 2, axis=-1))
    vals = np.clip((r - dist) / (r - s), 0.0, 1.0)
    vals[dist >= r] = 0.0
    return GridFunction(g, vals)


def defect(
    u: GridFunction,
    v: GridFunction,
    w: WeightField,
    params: AlmostMinParams,
    ball: Ball,
) -> float:
    """Almost-minimality defect J(u) - (1 + kappa r^alpha) J(v) on the ball.

    Nonpositive (up to discretization slack) for every admissible
    competitor when u is an almost minimizer with this gauge.
    """
    g = u.domain
    g.require_ball(ball)
    if v.domain != g:
        raise GridError("competitor lives on a different domain")
    coords = g.node_coordinates()
    d2 = np.sum((coords - np.asarray(ball.center)) ** 2, axis=-1)
    outside = d2 >= ball.radius * ball.radius
    if not np.array_equal(u.values[outside], v.values[outside]):
        raise GridError("competitor must equal u at all nodes outside the ball")
    j_u = J(u, w, ball)
    j_v = J(v, w, ball)
    # grouped so defect(u, u, .) == -gauge * J(u) exactly in floats
    return (j_u - j_v) - params.gauge(ball.radius) * j_v


def defect_slack(h: float, j_value: float) -> float:
    """Engineering tolerance for discrete defects: 10 h (J + 1)."""
    return 10.0 * h * (j_value + 1.0)
