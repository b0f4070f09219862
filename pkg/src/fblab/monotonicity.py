"""Weighted two-phase energy product along radii.

A_pm(r) integrates |grad u^pm|^2 / |x-y|^{n-2} over B(x,r) (kernel 1 in
2D), and the product functional is phi(r) = r^{-4} A_+(r) A_-(r). For
almost minimizers phi is almost nondecreasing with an r^delta error; the
trace records a geometric radius ladder and its worst normalized
violation of monotonicity.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Literal

import numpy as np

from fblab.grid import Ball, GridError, GridFunction, gradient, integrate_ball, interpolate
from fblab.diagnostics import default_zero_tol


@dataclass(frozen=True)
class MonotonicityTrace:
    center: tuple[float, ...]
    radii: tuple[float, ...]
    A_plus: tuple[float, ...]
    A_minus: tuple[float, ...]
    phi: tuple[float, ...]
    delta_exponent: float
    violation: float


def _signed_part(u: GridFunction, sign: Literal["plus", "minus"]) -> GridFunction:
    v = u.values
    if sign == "plus":
        return u.with_values(np.maximum(v, 0.0))
    return u.with_values(np.maximum(-v, 0.0))


def A_pm(
    u: GridFunction,
    ball: Ball,
    sign: Literal["plus", "minus"],
    warn_center: bool = True,
    kernel_floor: float | None = None,
) -> float:
    """Kernel-weighted energy of the signed part over the ball.

    The kernel |y-x|^{2-n} is evaluated at cell centers and clamped at
    distance kernel_floor (default h/2) around the singularity; in 2D it
    is identically 1.
    """
    g = u.domain
    g.require_ball(ball)
    if warn_center:
        tol = default_zero_tol(u)
        uc = float(interpolate(u, np.asarray(ball.center)))
        if abs(uc) > tol:
            warnings.warn(
                f"|u(center)| = {abs(uc):.3g} exceeds zero_tol = {tol:.3g}; "
                "the product functional is meaningful at zeros of u",
                stacklevel=2,
            )
    part = _signed_part(u, sign)
    grad = gradient(part)
    dens = np.sum(grad * grad, axis=-1)
    if g.dim == 3:
        centers = g.cell_centers()
        dist = np.sqrt(np.sum((centers - np.asarray(ball.center)) ** 2, axis=-1))
        floor = kernel_floor if kernel_floor is not None else max(g.spacing) / 2.0
        if floor <= 0.0:
            raise GridError("kernel_floor must be positive")
        dist = np.maximum(dist, floor)
        dens = dens / dist
    return integrate_ball(g, dens, ball)


def phi(u: GridFunction, center, r: float, warn_center: bool = True) -> float:
    """r^{-4} A_+(r) A_-(r) at the given center."""
    ball = Ball(tuple(float(c) for c in np.asarray(center, dtype=float)), r)
    ap = A_pm(u, ball, "plus", warn_center=warn_center)
    am = A_pm(u, ball, "minus", warn_center=False)
    return ap * am / r**4


def trace(
    u: GridFunction,
    center,
    r_min: float,
    r_max: float,
    count: int,
    delta: float,
) -> MonotonicityTrace:
    """Geometric radius ladder with the normalized monotonicity violation.

    violation = max over rung pairs s < r of (phi(s) - phi(r))_+ / r^delta.
    """
    c = tuple(float(v) for v in np.asarray(center, dtype=float))
    g = u.domain
    if not (0.0 < r_min < r_max):
        raise GridError("need 0 < r_min < r_max")
    if count < 2:
        raise GridError("need at least 2 rungs")
    h = max(g.spacing)
    if r_min < 4.0 * h:
        raise GridError("r_min below 4h; the kernel is unresolved there")
    g.require_ball(Ball(c, 2.0 * r_max))
    n = g.dim
    if not (0.0 < delta < 1.0 / (4.0 * (n + 1))):
        # alpha <= 1, so delta < alpha/(4(n+1)) <= this bound
        warnings.warn("delta outside (0, alpha/4(n+1)) for any alpha <= 1", stacklevel=2)
    ratio = (r_max / r_min) ** (1.0 / (count - 1))
    radii = tuple(r_min * ratio**k for k in range(count))
    ap, am, ph = [], [], []
    for i, r in enumerate(radii):
        ball = Ball(c, r)
        a_p = A_pm(u, ball, "plus", warn_center=(i == 0))
        a_m = A_pm(u, ball, "minus", warn_center=False)
        ap.append(a_p)
        am.append(a_m)
        ph.append(a_p * a_m / r**4)
    violation = 0.0
    for i in range(count):
        for j in range(i + 1, count):
            gap = ph[i] - ph[j]  # radii[i] < radii[j]
            if gap > 0.0:
                violation = max(violation, gap / radii[j] ** delta)
    return MonotonicityTrace(
        center=c,
        radii=radii,
        A_plus=tuple(ap),
        A_minus=tuple(am),
        phi=tuple(ph),
        delta_exponent=delta,
        violation=violation,
    )


def phi_limit_estimate(tr: MonotonicityTrace) -> float:
    """Small-radius limit proxy: mean of phi over the smallest quartile of
    rungs (at least one rung)."""
    count = len(tr.radii)
    if count < 4:
        raise GridError("need at least 4 rungs to estimate the limit")
    k = max(1, count // 4)
    return float(np.mean(tr.phi[:k]))


def write_trace_csv(tr: MonotonicityTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("r,A_plus,A_minus,phi\n")
        for r, ap, am, p in zip(tr.radii, tr.A_plus, tr.A_minus, tr.phi):
            fh.write(f"{r:.17g},{ap:.17g},{am:.17g},{p:.17g}\n")
