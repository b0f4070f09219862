"""Regularity diagnostics on nodal fields.

Scaled energy averages, boundary averages, good-class membership, the
Lipschitz/log-Lipschitz moduli, the three-way ball classification, and the
nondegeneracy battery (vanishing, linear growth, zero/nonpositive density,
clean-ball search). Everything is a pure function of a GridFunction plus a
ball; reports serialize to flat JSON.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np

from fblab.grid import (
    Ball,
    GridDomain,
    GridError,
    GridFunction,
    ball_cell_fractions,
    ball_volume,
    gradient,
    integrate_ball,
    interpolate,
    ksum,
    sphere_average,
    _subsample_offsets,
)
from fblab.functional import AlmostMinParams


@dataclass(frozen=True)
class GoodClassParams:
    tau: float
    C0: float
    C1: float
    r0: float

    def __post_init__(self):
        if not (0.0 < self.tau < 1e-2):
            raise GridError("tau must lie in (0, 1e-2)")
        if self.C0 < 1.0 or self.C1 < 3.0 or self.r0 <= 0.0:
            raise GridError("need C0 >= 1, C1 >= 3, r0 > 0")


@dataclass(frozen=True)
class NondegParams:
    rho0: float
    L: float
    eta0: float

    def __post_init__(self):
        if self.rho0 <= 0.0 or self.L < 1.0 or self.eta0 <= 0.0:
            raise GridError("need rho0 > 0, L >= 1, eta0 > 0")


@dataclass(frozen=True)
class NondegChecks:
    vanish_ok: bool
    vanish_hypothesis_met: bool
    linear_growth: float
    zero_frac: float
    nonpos_frac: float
    clean_ball_found: bool
    clean_ball_center: Optional[tuple[float, ...]]


@dataclass(frozen=True)
class DiagnosticsReport:
    omega: float
    b: float
    b_plus: float
    in_good_class: bool
    case_label: str
    lipschitz_est: float
    nondeg: NondegChecks

    def to_json(self) -> str:
        flat = {
            "omega": self.omega,
            "b": self.b,
            "b_plus": self.b_plus,
            "in_good_class": self.in_good_class,
            "case_label": self.case_label,
            "lipschitz_est": self.lipschitz_est,
        }
        nd = asdict(self.nondeg)
        center = nd.pop("clean_ball_center")
        for k, v in nd.items():
            flat[f"nondeg_{k}"] = v
        flat["nondeg_clean_ball_center"] = list(center) if center else None
        return json.dumps(flat, sort_keys=True)


def default_zero_tol(u: GridFunction) -> float:
    """Nodal values cannot certify a zero finer than O(h * Lipschitz)."""
    h = max(u.domain.spacing)
    grad = gradient(u)
    bound = float(np.max(np.sqrt(np.sum(grad * grad, axis=-1))))
    return 10.0 * h * max(bound, 1.0)


def omega(u: GridFunction, ball: Ball) -> float:
    """Square root of the ball-averaged Dirichlet density."""
    grad = gradient(u)
    e = integrate_ball(u.domain, np.sum(grad * grad, axis=-1), ball)
    vol = ball_volume(u.domain, ball)
    return math.sqrt(max(e, 0.0) / vol)


def b_pair(u: GridFunction, ball: Ball, n_angular: int | None = None) -> tuple[float, float]:
    """Sphere averages of u and |u|."""
    b = sphere_average(u, ball, n_angular)
    uabs = u.with_values(np.abs(u.values))
    return b, sphere_average(uabs, ball, n_angular)


def good_class(
    u: GridFunction, ball: Ball, p: GoodClassParams, amp: AlmostMinParams
) -> bool:
    """Membership test: large normalized boundary average of one sign.

    Requires r^{-1}|b| >= C0 tau^{-n} (1 + r^alpha omega^2)^{1/2} and
    b_plus <= C1 |b|, with B(x, 2r) inside the domain and r <= r0.
    """
    g = u.domain
    r = ball.radius
    if r > p.r0:
        raise GridError("radius exceeds the class's r0")
    g.require_ball(Ball(ball.center, 2.0 * r))
    b, b_plus = b_pair(u, ball)
    om = omega(u, ball)
    n = g.dim
    lower = p.C0 * p.tau ** (-n) * math.sqrt(1.0 + r**amp.alpha * om * om)
    return abs(b) / r >= lower and b_plus <= p.C1 * abs(b)


def _halton(index: np.ndarray, base: int) -> np.ndarray:
    out = np.zeros(index.shape, dtype=float)
    f = 1.0
    i = index.astype(np.int64).copy()
    fbase = float(base)
    frac = 1.0 / fbase
    scale = frac
    while np.any(i > 0):
        out += (i % base) * scale
        i //= base
        scale *= frac
    return out


_HALTON_PRIMES = (2, 3, 5, 7, 11, 13)


def _halton_points_in_ball(center: np.ndarray, r: float, dim: int, count: int,
                           offset: int = 0) -> np.ndarray:
    """Deterministic low-discrepancy points in B(center, r) (rejection-free
    oversampling of the bounding box, truncated to count)."""
    picked = []
    idx = 1 + offset
    while len(picked) < count:
        n_try = 4 * (count - len(picked)) + 16
        ks = np.arange(idx, idx + n_try)
        idx += n_try
        pts = np.stack(
            [_halton(ks, _HALTON_PRIMES[d + (0 if offset == 0 else dim)]) for d in range(dim)],
            axis=-1,
        )
        pts = center + (2.0 * pts - 1.0) * r
        d2 = np.sum((pts - center) ** 2, axis=-1)
        for p in pts[d2 < r * r]:
            picked.append(p)
            if len(picked) == count:
                break
    return np.asarray(picked)


def log_lip_modulus(
    u: GridFunction, center, r0: float, samples: int = 256
) -> float:
    """Empirical constant in |u(x)-u(y)| <= C |x-y| (1 + log(2 r0/|x-y|)).

    Maximizes the ratio over deterministic low-discrepancy node pairs
    inside B(center, r0).
    """
    g = u.domain
    c = np.asarray(center, dtype=float)
    g.require_ball(Ball(tuple(c), 2.0 * r0))
    pts_a = _halton_points_in_ball(c, r0, g.dim, samples, offset=0)
    pts_b = _halton_points_in_ball(c, r0, g.dim, samples, offset=1)

    def snap(pts: np.ndarray) -> np.ndarray:
        k = np.rint((pts - np.asarray(g.origin)) / np.asarray(g.spacing)).astype(int)
        k = np.clip(k, 0, np.asarray(g.nodes_per_axis) - 1)
        return k

    ka, kb = snap(pts_a), snap(pts_b)
    xa = np.asarray(g.origin) + ka * np.asarray(g.spacing)
    xb = np.asarray(g.origin) + kb * np.asarray(g.spacing)
    va = u.values[tuple(ka.T)]
    vb = u.values[tuple(kb.T)]
    sep = np.sqrt(np.sum((xa - xb) ** 2, axis=-1))
    keep = sep > 0.0
    if not np.any(keep):
        return 0.0
    ratio = np.abs(va - vb)[keep] / (
        sep[keep] * (1.0 + np.log(2.0 * r0 / sep[keep]))
    )
    return float(np.max(ratio))


def gradient_bound(u: GridFunction, region: Ball) -> float:
    """Max cell-gradient magnitude over cells with centers in the region."""
    g = u.domain
    g.require_ball(region)
    centers = g.cell_centers()
    d2 = np.sum((centers - np.asarray(region.center)) ** 2, axis=-1)
    inside = d2 <= region.radius * region.radius
    if not np.any(inside):
        return 0.0
    grad = gradient(u)
    mags = np.sqrt(np.sum(grad * grad, axis=-1))
    return float(np.max(mags[inside]))


def classify_ball(
    u: GridFunction,
    ball: Ball,
    K2: float,
    gamma: float,
    amp: AlmostMinParams,
    two_phase: bool = False,
) -> tuple[str, bool]:
    """Three-way split by energy average and boundary average.

    case1: omega >= K2 and b >= gamma r (1 + omega); case2: omega >= K2
    with the boundary average small; case3: omega < K2. The two-phase
    variant compares |b| instead and the returned flag reports whether u
    has a zero inside B(x, 2r/3).
    """
    om = omega(u, ball)
    b, _ = b_pair(u, ball)
    r = ball.radius
    bb = abs(b) if two_phase else b
    if om < K2:
        label = "case3"
    elif bb >= gamma * r * (1.0 + om):
        label = "case1"
    else:
        label = "case2"
    tol = default_zero_tol(u)
    inner = Ball(ball.center, 2.0 * r / 3.0)
    has_zero = zero_distance(u, ball.center, tol) <= 2.0 * r / 3.0 or _ball_min_abs(
        u, inner
    ) <= tol
    return label, has_zero


def _ball_min_abs(u: GridFunction, ball: Ball) -> float:
    g = u.domain
    coords = g.node_coordinates()
    d2 = np.sum((coords - np.asarray(ball.center)) ** 2, axis=-1)
    inside = d2 <= ball.radius * ball.radius
    if not np.any(inside):
        return float("inf")
    return float(np.min(np.abs(u.values[inside])))


def zero_set_points(u: GridFunction, zero_tol: float) -> np.ndarray:
    """Discrete zero set: nodes with |u| <= tol plus linearly interpolated
    sign-change points on lattice edges. Shape (m, dim)."""
    g = u.domain
    coords = g.node_coordinates()
    v = u.values
    pts = [coords[np.abs(v) <= zero_tol]]
    for d in range(g.dim):
        lo = tuple(slice(None, -1) if i == d else slice(None) for i in range(g.dim))
        hi = tuple(slice(1, None) if i == d else slice(None) for i in range(g.dim))
        a, b = v[lo], v[hi]
        cross = (a > zero_tol) & (b < -zero_tol) | (a < -zero_tol) & (b > zero_tol)
        if not np.any(cross):
            continue
        t = a[cross] / (a[cross] - b[cross])
        base = coords[lo][cross]
        step = np.zeros(g.dim)
        step[d] = g.spacing[d]
        pts.append(base + t[:, None] * step)
    out = [p for p in pts if p.size]
    if not out:
        return np.empty((0, g.dim))
    return np.concatenate(out, axis=0)


def zero_distance(u: GridFunction, y, zero_tol: float | None = None) -> float:
    """Distance from y to the discrete zero set; +inf when it is empty."""
    if zero_tol is None:
        zero_tol = default_zero_tol(u)
    zs = zero_set_points(u, zero_tol)
    if zs.shape[0] == 0:
        return float("inf")
    y = np.asarray(y, dtype=float)
    return float(np.min(np.sqrt(np.sum((zs - y) ** 2, axis=-1))))


def nondeg_vanish(
    u: GridFunction,
    ball: Ball,
    p: NondegParams,
    w=None,
    zero_tol: float | None = None,
) -> tuple[bool, bool]:
    """Small boundary average of u+ forces u <= 0 on the quarter ball.

    Returns (conclusion_holds, hypothesis_met); vacuously true when the
    boundary average exceeds r * eta0. When weights are supplied the lower
    bound q_+ >= rho0 on the ball is verified first.
    """
    g = u.domain
    g.require_ball(ball)
    if zero_tol is None:
        zero_tol = default_zero_tol(u)
    if w is not None:
        slices, frac = ball_cell_fractions(g, ball)
        qcells = _cell_mean_of(w.q_plus)[slices]
        if np.any(qcells[frac > 0.0] < p.rho0 - 1e-12):
            raise GridError("q_plus drops below rho0 on the ball")
    uplus = u.with_values(np.maximum(u.values, 0.0))
    avg = sphere_average(uplus, ball)
    if avg > ball.radius * p.eta0:
        return True, False
    quarter = Ball(ball.center, ball.radius / 4.0)
    coords = g.node_coordinates()
    d2 = np.sum((coords - np.asarray(ball.center)) ** 2, axis=-1)
    inside = d2 <= (ball.radius / 4.0) ** 2
    ok = bool(np.all(u.values[inside] <= zero_tol)) if np.any(inside) else True
    return ok, True


def _cell_mean_of(q: GridFunction) -> np.ndarray:
    from fblab.functional import cell_center_values

    return cell_center_values(q)


def nondeg_linear_growth(
    u: GridFunction,
    ball: Ball,
    p: NondegParams | None = None,
    zero_tol: float | None = None,
) -> float:
    """Minimum of u+(y)/dist(y, zero set) over the positivity set of the
    half ball, skipping points the lattice cannot resolve (delta <= 2h).

    The default tolerance here is h*Lip/2, much tighter than
    default_zero_tol: a fat tolerance absorbs a band of small positive
    values into the zero set, shrinking every distance and inflating the
    ratio, so the exact planar profile would no longer report its slope.
    Half the one-node increment keeps the detected zero set at the actual
    contact set while still absorbing sub-node solver noise."""
    g = u.domain
    g.require_ball(ball)
    if zero_tol is None:
        zero_tol = default_zero_tol(u) / 20.0
    h = max(g.spacing)
    zs = zero_set_points(u, zero_tol)
    if zs.shape[0] == 0:
        raise GridError("zero set is empty; linear growth is undefined")
    coords = g.node_coordinates()
    d2c = np.sum((coords - np.asarray(ball.center)) ** 2, axis=-1)
    half = d2c <= (ball.radius / 2.0) ** 2
    pos = u.values > zero_tol
    pts = coords[half & pos]
    vals = u.values[half & pos]
    if pts.shape[0] == 0:
        raise GridError("no positive sample points in the half ball")
    # distance from each candidate to the zero set
    delta = np.min(
        np.sqrt(np.sum((pts[:, None, :] - zs[None, :, :]) ** 2, axis=-1)), axis=1
    )
    keep = delta > 2.0 * h
    if not np.any(keep):
        raise GridError("no sample points with resolvable distance to the zero set")
    return float(np.min(vals[keep] / delta[keep]))


def nondeg_density(
    u: GridFunction, ball: Ball, zero_tol: float | None = None
) -> tuple[float, float]:
    """Volume fractions of {|u| <= tol} and {u <= tol} inside the ball,
    by subsampled interpolation."""
    g = u.domain
    g.require_ball(ball)
    if zero_tol is None:
        zero_tol = default_zero_tol(u)
    slices, frac = ball_cell_fractions(g, ball)
    corners_all = g.node_coordinates()[tuple(slice(None, -1) for _ in range(g.dim))]
    corners = corners_all[slices]
    offs = _subsample_offsets(g.dim) * np.asarray(g.spacing)
    pts = corners[..., None, :] + offs
    vals = interpolate(u, pts)
    d2 = np.sum((pts - np.asarray(ball.center)) ** 2, axis=-1)
    inside = d2 <= ball.radius * ball.radius
    total = ksum(inside.astype(float))
    if total == 0.0:
        return 0.0, 0.0
    zero = ksum((inside & (np.abs(vals) <= zero_tol)).astype(float))
    nonpos = ksum((inside & (vals <= zero_tol)).astype(float))
    return zero / total, nonpos / total


def clean_ball_search(
    u: GridFunction,
    ball: Ball,
    eta3: float,
    zero_tol: float | None = None,
) -> Optional[tuple[float, ...]]:
    """First grid node y in B(x, r/2) (lexicographic) with u <= tol on all
    subsample points of B(y, eta3 r); None when no such ball exists."""
    g = u.domain
    g.require_ball(ball)
    if not (0.0 < eta3 < 1.0 / 3.0):
        raise GridError("eta3 must lie in (0, 1/3)")
    if zero_tol is None:
        zero_tol = default_zero_tol(u)
    rr = eta3 * ball.radius
    coords = g.node_coordinates()
    corners_all = coords[tuple(slice(None, -1) for _ in range(g.dim))]
    offs = _subsample_offsets(g.dim) * np.asarray(g.spacing)
    flat = coords.reshape(-1, g.dim)
    d2 = np.sum((flat - np.asarray(ball.center)) ** 2, axis=-1)
    candidates = flat[d2 <= (ball.radius / 2.0) ** 2]
    for y in candidates:
        cand = Ball(tuple(y), rr)
        if not g.contains_ball(cand):
            continue
        slices, frac = ball_cell_fractions(g, cand)
        corners = corners_all[slices]
        pts = corners[..., None, :] + offs
        vals = interpolate(u, pts)
        dd = np.sum((pts - y) ** 2, axis=-1)
        inside = dd <= rr * rr
        if np.all(vals[inside] <= zero_tol):
            return tuple(float(c) for c in y)
    return None


def omega_decay_trace(
    u: GridFunction, center, r: float, theta: float, depth: int
) -> list[float]:
    """[omega(x, theta^k r)] for k = 0..depth."""
    if not (0.0 < theta <= 0.5):
        raise GridError("theta must lie in (0, 1/2]")
    c = tuple(float(v) for v in np.asarray(center, dtype=float))
    u.domain.require_ball(Ball(c, r))
    out = []
    for k in range(depth + 1):
        out.append(omega(u, Ball(c, r * theta**k)))
    return out


def full_report(
    u: GridFunction,
    ball: Ball,
    gc: GoodClassParams,
    nd: NondegParams,
    amp: AlmostMinParams,
    K2: float = 1e3,
    gamma: float = 1e-2,
    w=None,
) -> DiagnosticsReport:
    """The whole battery on one ball."""
    om = omega(u, ball)
    b, b_plus = b_pair(u, ball)
    try:
        in_gc = good_class(u, ball, gc, amp)
    except GridError:
        in_gc = False
    label, _ = classify_ball(u, ball, K2, gamma, amp, two_phase=True)
    lip = gradient_bound(u, ball)
    vanish_ok, hyp = nondeg_vanish(u, ball, nd, w=w)
    try:
        growth = nondeg_linear_growth(u, ball, nd)
    except GridError:
        growth = float("nan")
    zero_frac, nonpos_frac = nondeg_density(u, ball)
    center = clean_ball_search(u, ball, eta3=0.2)
    checks = NondegChecks(
        vanish_ok=vanish_ok,
        vanish_hypothesis_met=hyp,
        linear_growth=growth,
        zero_frac=zero_frac,
        nonpos_frac=nonpos_frac,
        clean_ball_found=center is not None,
        clean_ball_center=center,
    )
    return DiagnosticsReport(
        omega=om,
        b=b,
        b_plus=b_plus,
        in_good_class=in_gc,
        case_label=label,
        lipschitz_est=lip,
        nondeg=checks,
    )
