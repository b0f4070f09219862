"""Discrete harmonic extension on balls and a Poisson-kernel disk oracle.

The extension replaces the nodal field strictly inside a ball by the
minimizer of the discrete Dirichlet energy with all outside nodes pinned;
that minimizer solves the 5/7-point Laplace equation and is found by plain
conjugate gradients. The Poisson-kernel quadrature gives an independent
analytic route to the same values on the 2D disk.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from fblab.grid import Ball, GridDomain, GridError, GridFunction, gradient, integrate_ball, ksum

MAX_CG_ITERATIONS = 10**6


class SolveFailure(RuntimeError):
    """Iteration cap reached before the requested residual tolerance."""


@dataclass(frozen=True)
class ExtensionResult:
    extension: GridFunction
    iterations: int
    residual: float


def _laplacian(values: np.ndarray, g: GridDomain) -> np.ndarray:
    """Weighted 5/7-point Laplacian, zero on the outermost node layer."""
    out = np.zeros_like(values)
    core = tuple(slice(1, -1) for _ in range(g.dim))
    for d in range(g.dim):
        h2 = g.spacing[d] ** 2
        up = tuple(
            slice(2, None) if i == d else slice(1, -1) for i in range(g.dim)
        )
        down = tuple(
            slice(None, -2) if i == d else slice(1, -1) for i in range(g.dim)
        )
        out[core] += (values[up] - 2.0 * values[core] + values[down]) / h2
    return out


def interior_ball_mask(g: GridDomain, ball: Ball) -> np.ndarray:
    """Nodes strictly inside the open ball."""
    coords = g.node_coordinates()
    d2 = np.sum((coords - np.asarray(ball.center)) ** 2, axis=-1)
    return d2 < ball.radius * ball.radius


def solve_laplace_masked(
    base: np.ndarray, mask: np.ndarray, g: GridDomain, tol: float
) -> tuple[np.ndarray, int, float]:
    """Minimize Dirichlet energy over the masked nodes, others pinned.

    Returns (values, iterations, max-norm Laplacian residual on the mask).
    CG on the SPD system; residuals are exactly the discrete Laplacian of
    the current iterate at masked nodes.
    """
    u = base.copy()
    u[mask] = 0.0

    def apply_A(x: np.ndarray) -> np.ndarray:
        full = np.zeros_like(base)
        full[mask] = x
        return -_laplacian(full, g)[mask]

    b = _laplacian(u, g)[mask]
    x = base[mask].copy()  # warm start from the input values
    r = b - apply_A(x)
    if r.size == 0:
        return base.copy(), 0, 0.0
    res = float(np.max(np.abs(r)))
    if res <= tol:
        out = base.copy()
        out[mask] = x
        return out, 0, res
    p = r.copy()
    rs = float(r @ r)
    for it in range(1, MAX_CG_ITERATIONS + 1):
        Ap = apply_A(p)
        denom = float(p @ Ap)
        if denom <= 0.0:
            break
        alpha = rs / denom
        x += alpha * p
        r -= alpha * Ap
        res = float(np.max(np.abs(r)))
        if res <= tol:
            out = base.copy()
            out[mask] = x
            return out, it, res
        rs_new = float(r @ r)
        p = r + (rs_new / rs) * p
        rs = rs_new
    raise SolveFailure(
        f"conjugate gradient did not reach tol={tol} (residual {res})"
    )


def harmonic_extension(u: GridFunction, ball: Ball, tol: float) -> ExtensionResult:
    """Energy-minimizing replacement of u strictly inside the ball.

    Outside the open ball the result equals u bitwise; inside it solves the
    discrete Laplace equation to max-norm residual <= tol.
    """
    if tol <= 0.0:
        raise GridError("tol must be positive")
    g = u.domain
    g.require_ball(ball)
    mask = interior_ball_mask(g, ball)
    # interior unknowns must have all lattice neighbors; nodes on the grid
    # boundary cannot be unknowns (ball containment makes this impossible
    # except for degenerate float ties, which we pin)
    edge = np.zeros_like(mask)
    for d in range(g.dim):
        sl0 = tuple(slice(0, 1) if i == d else slice(None) for i in range(g.dim))
        sl1 = tuple(slice(-1, None) if i == d else slice(None) for i in range(g.dim))
        edge[sl0] = True
        edge[sl1] = True
    mask = mask & ~edge
    vals, its, res = solve_laplace_masked(u.values.copy(), mask, g, tol)
    return ExtensionResult(extension=GridFunction(g, vals), iterations=its, residual=res)


def poisson_disk_value(
    boundary: Callable[[np.ndarray], np.ndarray],
    point,
    radius: float,
    n_quad: int = 512,
) -> float:
    """Poisson integral of boundary(theta) on the 2D disk of given radius.

    Trapezoid rule on the periodic integrand: value(z) =
    (r^2-|z|^2)/(2 pi r) * int boundary(theta) / |z - r e^{i theta}|^2 * r dtheta.
    """
    z = np.asarray(point, dtype=float)
    if z.shape != (2,):
        raise GridError("point must be a 2-vector")
    if n_quad < 64:
        raise GridError("n_quad must be at least 64")
    r = float(radius)
    if np.hypot(z[0], z[1]) >= r:
        raise GridError("evaluation point must lie strictly inside the circle")
    theta = 2.0 * np.pi * np.arange(n_quad) / n_quad
    bx = r * np.cos(theta)
    by = r * np.sin(theta)
    dist2 = (z[0] - bx) ** 2 + (z[1] - by) ** 2
    vals = np.asarray(boundary(theta), dtype=float)
    kernel = (r * r - (z[0] ** 2 + z[1] ** 2)) / (2.0 * np.pi * r) * r / dist2
    return ksum(vals * kernel) * (2.0 * np.pi / n_quad)


def orthogonality_defect(u: GridFunction, ext: ExtensionResult, ball: Ball) -> float:
    """| int_B |grad u*|^2 - int_B <grad u, grad u*> | on the ball.

    Near zero for a converged extension: the minimizer's gradient is
    orthogonal to gradients of perturbations vanishing outside the ball.
    """
    if ext.extension.domain != u.domain:
        raise GridError("extension was computed on a different domain")
    gu = gradient(u)
    gs = gradient(ext.extension)
    e_star = integrate_ball(u.domain, np.sum(gs * gs, axis=-1), ball)
    cross = integrate_ball(u.domain, np.sum(gu * gs, axis=-1), ball)
    return abs(e_star - cross)
