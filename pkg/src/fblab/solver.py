"""Smoothed-functional continuation for discrete minimizers of J.

The indicator terms of J make the nodal objective discontinuous, so each
continuation stage replaces chi_{u>0} by the smooth ramp
H_eps(t) = (1 + tanh(t/eps)) / 2 and minimizes

    J_eps(u) = sum_cells (|grad u|^2 + q_+^2 H_eps(u_c) + q_-^2 H_eps(-u_c)) vol

over interior nodal values (boundary pinned), warm-starting the next,
narrower eps from the previous stage. Each smooth stage is driven by
limited-memory BFGS with a monotone line search (scipy's L-BFGS-B); the
one-phase constraint u >= 0 enters as a bound so iterates stay feasible
and stationarity is measured by the projected gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np

from fblab.grid import Ball, GridDomain, GridError, GridFunction, sample
from fblab.functional import AlmostMinParams, WeightField, cell_center_values
from fblab.harmonic import solve_laplace_masked


class Divergence(RuntimeError):
    """The smoothed objective increased across a full continuation stage."""


@dataclass(frozen=True)
class SolveConfig:
    epsilons: tuple[float, ...] = (0.2, 0.1, 0.05, 0.02, 0.01)
    max_outer: int = 20000
    grad_tol: float = 1e-8
    step_rule: Literal["fixed", "backtracking"] = "backtracking"

    def scaled_epsilons(self, domain: GridDomain) -> tuple[float, ...]:
        """Stage widths as fractions of the domain diameter."""
        diam = float(np.linalg.norm(domain.extent))
        eps = tuple(e * diam for e in self.epsilons)
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise GridError("epsilon schedule must be strictly decreasing")
        if eps[-1] < max(domain.spacing):
            raise GridError("smallest smoothing width is below the grid spacing")
        return eps


@dataclass
class SolveResult:
    u: GridFunction
    J_history: list[float]
    grad_norm_final: float
    stage_count: int
    # per accepted step: (stage, epsilon, iter, J_eps, grad_norm)
    trace: list[tuple[int, float, int, float, float]] = field(default_factory=list)


def _interior_mask(g: GridDomain) -> np.ndarray:
    mask = np.ones(g.nodes_per_axis, dtype=bool)
    for d in range(g.dim):
        sl0 = tuple(slice(0, 1) if i == d else slice(None) for i in range(g.dim))
        sl1 = tuple(slice(-1, None) if i == d else slice(None) for i in range(g.dim))
        mask[sl0] = False
        mask[sl1] = False
    return mask


def _scatter_cells_to_nodes(cell: np.ndarray, g: GridDomain) -> np.ndarray:
    """Adjoint of cell-center averaging: spread cell values to corners."""
    out = np.zeros(g.nodes_per_axis)
    if g.dim == 2:
        for a in (slice(None, -1), slice(1, None)):
            for b in (slice(None, -1), slice(1, None)):
                out[a, b] += cell
        return 0.25 * out
    for a in (slice(None, -1), slice(1, None)):
        for b in (slice(None, -1), slice(1, None)):
            for c in (slice(None, -1), slice(1, None)):
                out[a, b, c] += cell
    return 0.125 * out


def _energy_and_grad(values: np.ndarray, g: GridDomain) -> tuple[float, np.ndarray]:
    """sum_cells |grad u|^2 vol and its nodal gradient."""
    h = g.spacing
    vol = g.cell_volume
    grad_nodes = np.zeros_like(values)
    total = 0.0
    if g.dim == 2:
        dx = (values[1:, :] - values[:-1, :]) / h[0]
        gx = 0.5 * (dx[:, :-1] + dx[:, 1:])
        dy = (values[:, 1:] - values[:, :-1]) / h[1]
        gy = 0.5 * (dy[:-1, :] + dy[1:, :])
        total = float(np.sum(gx * gx + gy * gy)) * vol
        cx = 2.0 * gx * vol * 0.5 / h[0]
        grad_nodes[1:, :-1] += cx
        grad_nodes[1:, 1:] += cx
        grad_nodes[:-1, :-1] -= cx
        grad_nodes[:-1, 1:] -= cx
        cy = 2.0 * gy * vol * 0.5 / h[1]
        grad_nodes[:-1, 1:] += cy
        grad_nodes[1:, 1:] += cy
        grad_nodes[:-1, :-1] -= cy
        grad_nodes[1:, :-1] -= cy
        return total, grad_nodes
    # 3D: each component averages the four parallel edge differences
    slabs = (slice(None, -1), slice(1, None))
    comps = []
    for d in range(3):
        diff = (
            values[tuple(slice(1, None) if i == d else slice(None) for i in range(3))]
            - values[tuple(slice(None, -1) if i == d else slice(None) for i in range(3))]
        ) / h[d]
        acc = np.zeros(g.cells_per_axis)
        others = [i for i in range(3) if i != d]
        for a in slabs:
            for b in slabs:
                sl = [slice(None)] * 3
                sl[others[0]] = a
                sl[others[1]] = b
                acc += diff[tuple(sl)]
        comps.append(0.25 * acc)
    total = float(np.sum(sum(c * c for c in comps))) * vol
    for d in range(3):
        coef = 2.0 * comps[d] * vol * 0.25 / h[d]
        others = [i for i in range(3) if i != d]
        for a in slabs:
            for b in slabs:
                sl_hi = [slice(None)] * 3
                sl_hi[d] = slice(1, None)
                sl_lo = [slice(None)] * 3
                sl_lo[d] = slice(None, -1)
                sl_hi[others[0]] = sl_lo[others[0]] = a
                sl_hi[others[1]] = sl_lo[others[1]] = b
                grad_nodes[tuple(sl_hi)] += coef
                grad_nodes[tuple(sl_lo)] -= coef
    return total, grad_nodes


def _objective(
    values: np.ndarray,
    g: GridDomain,
    qp2: np.ndarray,
    qm2: np.ndarray,
    eps: float,
    one_sided: bool,
) -> tuple[float, np.ndarray]:
    """Smoothed objective J_eps and its nodal gradient.

    Two-phase uses the symmetric ramp H_eps(t) = (1 + tanh(t/eps))/2, which
    charges the full indicator jump across a sign change. Under the
    one-phase constraint u >= 0 the transition starts at the contact set
    where the symmetric ramp sits at 1/2 and would only charge half the
    jump (recovered slope q/sqrt(2) instead of q), so that branch uses the
    one-sided ramp tanh(t/eps), which has the same eps -> 0 limit on
    nonnegative fields.
    """
    e, grad = _energy_and_grad(values, g)
    uc = _cell_mean(values, g)
    t = np.tanh(uc / eps)
    vol = g.cell_volume
    if one_sided:
        h_plus = np.maximum(t, 0.0)
        dH = np.where(uc >= 0.0, (1.0 - t * t) / eps, 0.0)
    else:
        h_plus = 0.5 * (1.0 + t)
        dH = 0.5 * (1.0 - t * t) / eps
    total = e + float(np.sum(qp2 * h_plus)) * vol
    cell_force = qp2 * dH * vol
    if qm2 is not None:
        h_minus = 0.5 * (1.0 - t)
        total += float(np.sum(qm2 * h_minus)) * vol
        cell_force = cell_force - 0.5 * (1.0 - t * t) / eps * qm2 * vol
    grad += _scatter_cells_to_nodes(cell_force, g)
    return total, grad


def _cell_mean(values: np.ndarray, g: GridDomain) -> np.ndarray:
    if g.dim == 2:
        return 0.25 * (values[:-1, :-1] + values[1:, :-1] + values[:-1, 1:] + values[1:, 1:])
    v = values
    return 0.125 * (
        v[:-1, :-1, :-1] + v[1:, :-1, :-1] + v[:-1, 1:, :-1] + v[:-1, :-1, 1:]
        + v[1:, 1:, :-1] + v[1:, :-1, 1:] + v[:-1, 1:, 1:] + v[1:, 1:, 1:]
    )


def _stage_lbfgs(
    u: np.ndarray,
    interior: np.ndarray,
    domain: GridDomain,
    qp2: np.ndarray,
    qm2: np.ndarray | None,
    eps: float,
    nonneg: bool,
    cfg: SolveConfig,
    record: Callable[[int, float, float], None],
) -> tuple[np.ndarray, float, float]:
    """One continuation stage; returns (u, J_eps, projected grad max-norm)."""
    from scipy.optimize import Bounds, minimize as scipy_minimize

    n_int = int(interior.sum())
    last: dict[str, object] = {}

    def fg(x: np.ndarray) -> tuple[float, np.ndarray]:
        full = u.copy()
        full[interior] = x
        f, grad = _objective(full, domain, qp2, qm2, eps, nonneg)
        g_int = grad[interior]
        if nonneg:
            gn = float(np.max(np.abs(np.where((x <= 0.0) & (g_int > 0.0), 0.0, g_int))))
        else:
            gn = float(np.max(np.abs(g_int)))
        last["x"] = x.copy()
        last["f"] = f
        last["gn"] = gn
        return f, g_int

    step = 0

    def on_step(xk: np.ndarray) -> None:
        nonlocal step
        step += 1
        # the line search's accepting evaluation is the one just cached
        if np.array_equal(xk, last["x"]):
            record(step, float(last["f"]), float(last["gn"]))

    bounds = Bounds(np.zeros(n_int), np.full(n_int, np.inf)) if nonneg else None
    res = scipy_minimize(
        fg,
        u[interior],
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        callback=on_step,
        options={
            "maxiter": cfg.max_outer,
            "maxfun": 10 * cfg.max_outer,
            "gtol": cfg.grad_tol,
            "ftol": 1e-16,
            "maxcor": 10,
        },
    )
    out = u.copy()
    out[interior] = np.maximum(res.x, 0.0) if nonneg else res.x
    f_final, _ = fg(out[interior])
    return out, f_final, float(last["gn"])


def _stage_fixed(
    u: np.ndarray,
    interior: np.ndarray,
    domain: GridDomain,
    qp2: np.ndarray,
    qm2: np.ndarray | None,
    eps: float,
    nonneg: bool,
    cfg: SolveConfig,
    record: Callable[[int, float, float], None],
) -> tuple[np.ndarray, float, float]:
    """Projected gradient descent with a fixed Lipschitz-safe step."""
    vol = domain.cell_volume
    lip = 16.0 * vol * sum(1.0 / h**2 for h in domain.spacing)
    lip += vol * (float(np.max(qp2)) + (float(np.max(qm2)) if qm2 is not None else 0.0)) / eps
    t = 1.0 / lip
    f, grad = _objective(u, domain, qp2, qm2, eps, nonneg)
    for it in range(1, cfg.max_outer + 1):
        g_int = np.where(interior, grad, 0.0)
        if nonneg:
            g_eff = np.where((u <= 0.0) & (g_int > 0.0), 0.0, g_int)
        else:
            g_eff = g_int
        gn = float(np.max(np.abs(g_eff)))
        if gn <= cfg.grad_tol:
            break
        u = u - t * g_int
        if nonneg:
            u = np.maximum(u, 0.0)
        f, grad = _objective(u, domain, qp2, qm2, eps, nonneg)
        record(it, f, gn)
    g_int = np.where(interior, grad, 0.0)
    if nonneg:
        g_int = np.where((u <= 0.0) & (g_int > 0.0), 0.0, g_int)
    return u, f, float(np.max(np.abs(g_int)))


def minimize(
    domain: GridDomain,
    w: WeightField,
    boundary: Callable[[np.ndarray], np.ndarray],
    cfg: SolveConfig | None = None,
    nonneg: bool = False,
) -> SolveResult:
    """Minimize J with Dirichlet data on the grid boundary.

    boundary is evaluated at node coordinates (vectorized over (..., dim)).
    With nonneg=True the one-phase constraint u >= 0 is enforced by
    projection after every accepted step.
    """
    cfg = cfg or SolveConfig()
    if w.domain != domain:
        raise GridError("weights live on a different domain")
    bfun = sample(boundary, domain)
    if nonneg and np.any(bfun.values < 0.0):
        raise GridError("one-phase boundary data must be nonnegative")
    interior = _interior_mask(domain)

    # deterministic start: harmonic extension of the boundary data
    init, _, _ = solve_laplace_masked(bfun.values.copy(), interior, domain, 1e-12)
    u = init
    if nonneg:
        u = np.maximum(u, 0.0)

    qp2 = cell_center_values(w.q_plus) ** 2
    qm2 = None
    if w.mode == "two-phase":
        qm2 = cell_center_values(w.q_minus) ** 2

    eps_list = cfg.scaled_epsilons(domain)
    J_history: list[float] = []
    trace: list[tuple[int, float, int, float, float]] = []
    grad_norm = np.inf

    stage_driver = _stage_lbfgs if cfg.step_rule == "backtracking" else _stage_fixed

    for stage, eps in enumerate(eps_list):
        stage_start, g0 = _objective(u, domain, qp2, qm2, eps, nonneg)
        g0_int = np.where(interior, g0, 0.0)
        if nonneg:
            g0_int = np.where((u <= 0.0) & (g0_int > 0.0), 0.0, g0_int)
        trace.append((stage, eps, 0, stage_start, float(np.max(np.abs(g0_int)))))

        def record(it: int, f_it: float, gn_it: float, _s=stage, _e=eps) -> None:
            trace.append((_s, _e, it, f_it, gn_it))

        u, f, grad_norm = stage_driver(
            u, interior, domain, qp2, qm2, eps, nonneg, cfg, record
        )
        if f > stage_start + 1e-12 * (abs(stage_start) + 1.0):
            raise Divergence(
                f"objective increased across stage {stage} (eps={eps:g})"
            )
        J_history.append(f)

    return SolveResult(
        u=GridFunction(domain, u),
        J_history=J_history,
        grad_norm_final=grad_norm,
        stage_count=len(eps_list),
        trace=trace,
    )


def make_almost_minimizer(
    base: SolveResult,
    w_frozen: WeightField,
    params: AlmostMinParams,
    ball: Ball,
) -> GridFunction:
    """Tag a minimizer for variable weights as an almost minimizer for the
    weights frozen at the ball center.

    The Hölder modulus of the original weights bounds the effective gauge;
    the nodal field itself is returned unchanged.
    """
    if w_frozen.domain != base.u.domain:
        raise GridError("frozen weights live on a different domain")
    base.u.domain.require_ball(ball)
    return base.u


def write_convergence_csv(result: SolveResult, path) -> None:
    """Per-step convergence trace: stage, epsilon, iter, J_eps, grad_norm."""
    with open(path, "w", newline="") as fh:
        fh.write("stage,epsilon,iter,J_eps,grad_norm\n")
        for stage, eps, it, f, gn in result.trace:
            fh.write(f"{stage},{eps:.17g},{it},{f:.17g},{gn:.17g}\n")
