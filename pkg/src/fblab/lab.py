"""Experiment configs, built-in scenarios, and the run pipelines.

A config is a single self-describing JSON document (see
:class:`ExperimentConfig`); one file is one experiment. Pipelines write
FBGF solution files, CSV traces, and JSON reports into the output
directory and never print to stdout, so identical configs give
byte-identical artifacts.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from fblab import blowup as blowup_mod
from fblab import diagnostics as diag
from fblab import monotonicity as mono
from fblab.expressions import ExpressionError, parse_expression
from fblab.functional import (
    AlmostMinParams,
    WeightField,
    J,
    defect,
    defect_slack,
    energy,
)
from fblab.grid import (
    Ball,
    GridError,
    GridFunction,
    ball_volume,
    gradient,
    interpolate,
    make_grid,
    read_fbgf,
    sample,
    sphere_average,
    write_fbgf,
)
from fblab.harmonic import harmonic_extension, orthogonality_defect
from fblab.solver import Divergence, SolveConfig, minimize, write_convergence_csv

Kind = Literal["minimize", "diagnose", "monotonicity", "blowup", "verify"]


class GridSpec(BaseModel):
    origin: list[float]
    extent: list[float]
    nodes: list[int]

    def build(self):
        return make_grid(self.origin, self.extent, self.nodes)


class WeightSpec(BaseModel):
    mode: Literal["one-phase", "two-phase"] = "two-phase"
    q_plus: str | float = 1.0
    q_minus: str | float = 0.0


class SolverSpec(BaseModel):
    epsilons: list[float] = [0.2, 0.1, 0.05, 0.02, 0.01]
    max_outer: int = 20000
    grad_tol: float = 1e-8
    step_rule: Literal["fixed", "backtracking"] = "backtracking"

    def build(self) -> SolveConfig:
        return SolveConfig(
            epsilons=tuple(self.epsilons),
            max_outer=self.max_outer,
            grad_tol=self.grad_tol,
            step_rule=self.step_rule,
        )


class AlmostMinSpec(BaseModel):
    kappa: float = 1.0
    alpha: float = 1.0

    def build(self) -> AlmostMinParams:
        return AlmostMinParams(kappa=self.kappa, alpha=self.alpha)


class BallSpec(BaseModel):
    center: list[float]
    radius: float

    def build(self) -> Ball:
        return Ball(tuple(self.center), self.radius)


class MonotonicitySpec(BaseModel):
    center: list[float]
    r_min: float
    r_max: float
    count: int = 12
    delta: float = 0.02


class BlowupSpec(BaseModel):
    center: list[float]
    radii: list[float]
    R: float = 1.0
    res: int = 65


class ExperimentConfig(BaseModel):
    kind: Kind
    name: str = "experiment"
    grid: GridSpec
    weights: WeightSpec = WeightSpec()
    boundary: str | float = 0.0
    profile: Optional[str] = None  # analytic nodal field; skips the solve
    solver: SolverSpec = SolverSpec()
    almost_min: AlmostMinSpec = AlmostMinSpec()
    targets: list[BallSpec] = Field(default_factory=list)
    monotonicity: Optional[MonotonicitySpec] = None
    blowup: Optional[BlowupSpec] = None

    @model_validator(mode="after")
    def _expressions_parse(self):
        dim = len(self.grid.origin)
        parse_expression(self.boundary, dim)
        parse_expression(self.weights.q_plus, dim)
        parse_expression(self.weights.q_minus, dim)
        if self.profile is not None:
            parse_expression(self.profile, dim)
        return self


@dataclass
class RunResult:
    exit_code: int
    artifacts: list[str] = field(default_factory=list)
    report: dict | None = None
    message: str = ""


# ---------------------------------------------------------------------------
# scenario registry

def _scenario_configs() -> dict[str, dict]:
    square = {"origin": [-1.0, -1.0], "extent": [2.0, 2.0], "nodes": [129, 129]}
    root2 = "pow(2, 0.5)"
    # smoothing ladder calibrated so the final width matches h at 129 nodes
    solver = {"epsilons": [0.05, 0.025, 0.011, 0.0056], "grad_tol": 1e-7}
    return {
        "plane-one-phase": {
            "kind": "verify",
            "name": "plane-one-phase",
            "grid": square,
            "solver": solver,
            "weights": {"mode": "one-phase", "q_plus": 1.0, "q_minus": 0.0},
            "boundary": "max(x2, 0)",
            "profile": "max(x2, 0)",
            "almost_min": {"kappa": 1.0, "alpha": 1.0},
            "targets": [{"center": [0.0, 0.0], "radius": 0.5}],
        },
        "two-plane-acf": {
            "kind": "verify",
            "name": "two-plane-acf",
            "grid": square,
            "solver": solver,
            "weights": {"mode": "two-phase", "q_plus": root2, "q_minus": 1.0},
            "boundary": f"{root2} * max(x2, 0) - max(-x2, 0)",
            "profile": f"{root2} * max(x2, 0) - max(-x2, 0)",
            "almost_min": {"kappa": 1.0, "alpha": 1.0},
            "targets": [{"center": [0.0, 0.0], "radius": 0.5}],
            "monotonicity": {
                "center": [0.0, 0.0],
                "r_min": 0.1,
                "r_max": 0.4,
                "count": 12,
                "delta": 0.02,
            },
        },
        "harmonic-only": {
            "kind": "verify",
            "name": "harmonic-only",
            "grid": square,
            "weights": {"mode": "two-phase", "q_plus": 0.0, "q_minus": 0.0},
            "boundary": "x2",
            "profile": "x2",
            "almost_min": {"kappa": 1.0, "alpha": 1.0},
            "targets": [{"center": [0.0, 0.0], "radius": 0.5}],
        },
        "holder-weights": {
            "kind": "minimize",
            "name": "holder-weights",
            "grid": square,
            "solver": solver,
            "weights": {
                "mode": "one-phase",
                "q_plus": "1 + 0.3 * pow(x1*x1 + x2*x2, 0.25)",
                "q_minus": 0.0,
            },
            "boundary": "max(x2, 0)",
            "almost_min": {"kappa": 0.3, "alpha": 0.5},
            "targets": [{"center": [0.0, 0.0], "radius": 0.5}],
        },
        "blowup-cone": {
            "kind": "blowup",
            "name": "blowup-cone",
            "grid": square,
            "weights": {"mode": "one-phase", "q_plus": 1.0, "q_minus": 0.0},
            "boundary": "max(x2, 0)",
            "profile": "max(x2, 0)",
            "almost_min": {"kappa": 1.0, "alpha": 1.0},
            "blowup": {
                "center": [0.0, 0.0],
                "radii": [0.5, 0.25, 0.125, 0.0625],
                "R": 1.0,
                "res": 65,
            },
        },
    }


def scenario_names() -> list[str]:
    return sorted(_scenario_configs())


def scenario(name: str) -> ExperimentConfig:
    configs = _scenario_configs()
    if name not in configs:
        raise KeyError(
            f"unknown scenario {name!r}; available: {', '.join(sorted(configs))}"
        )
    return ExperimentConfig.model_validate(configs[name])


# ---------------------------------------------------------------------------
# pipeline helpers

def _build_weights(cfg: ExperimentConfig, domain) -> WeightField:
    dim = domain.dim
    qp = sample(parse_expression(cfg.weights.q_plus, dim), domain)
    if cfg.weights.mode == "one-phase":
        qm = sample(parse_expression(0.0, dim), domain)
    else:
        qm = sample(parse_expression(cfg.weights.q_minus, dim), domain)
    return WeightField(q_plus=qp, q_minus=qm, mode=cfg.weights.mode)


def _field_for(cfg: ExperimentConfig, domain, w: WeightField):
    """The nodal field a pipeline works on: analytic profile when present,
    otherwise a fresh solve. Returns (GridFunction, SolveResult|None)."""
    if cfg.profile is not None:
        return sample(parse_expression(cfg.profile, domain.dim), domain), None
    boundary = parse_expression(cfg.boundary, domain.dim)
    result = minimize(
        domain, w, boundary, cfg.solver.build(), nonneg=cfg.weights.mode == "one-phase"
    )
    return result.u, result


def _default_target(domain) -> Ball:
    center = tuple(
        domain.origin[d] + 0.5 * domain.extent[d] for d in range(domain.dim)
    )
    return Ball(center, min(domain.extent) / 4.0)


def _json_dump(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _frozen_weights_at(w: WeightField, point, target_domain) -> WeightField:
    qp = float(interpolate(w.q_plus, np.asarray(point, dtype=float)))
    qm = float(interpolate(w.q_minus, np.asarray(point, dtype=float)))
    const_p = sample(lambda c: np.full(c.shape[:-1], qp), target_domain)
    const_m = sample(lambda c: np.full(c.shape[:-1], qm), target_domain)
    return WeightField(q_plus=const_p, q_minus=const_m, mode=w.mode)


# ---------------------------------------------------------------------------
# pipelines

def run(cfg: ExperimentConfig, out_dir: str) -> RunResult:
    """Execute the configured pipeline, writing artifacts into out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    try:
        domain = cfg.grid.build()
        w = _build_weights(cfg, domain)
    except (GridError, ExpressionError, ValueError) as exc:
        return RunResult(exit_code=2, message=str(exc))
    try:
        if cfg.kind == "minimize":
            return _run_minimize(cfg, domain, w, out_dir)
        if cfg.kind == "diagnose":
            return _run_diagnose(cfg, domain, w, out_dir)
        if cfg.kind == "monotonicity":
            return _run_monotonicity(cfg, domain, w, out_dir)
        if cfg.kind == "blowup":
            return _run_blowup(cfg, domain, w, out_dir)
        return _run_verify(cfg, domain, w, out_dir)
    except Divergence as exc:
        return RunResult(exit_code=3, message=str(exc))
    except (GridError, ExpressionError) as exc:
        return RunResult(exit_code=2, message=str(exc))


def _run_minimize(cfg, domain, w, out_dir) -> RunResult:
    boundary = parse_expression(cfg.boundary, domain.dim)
    result = minimize(
        domain, w, boundary, cfg.solver.build(), nonneg=cfg.weights.mode == "one-phase"
    )
    sol_path = os.path.join(out_dir, "solution.fbgf")
    write_fbgf(result.u, sol_path)
    csv_path = os.path.join(out_dir, "convergence.csv")
    write_convergence_csv(result, csv_path)
    report = {
        "name": cfg.name,
        "kind": "minimize",
        "J_history": result.J_history,
        "grad_norm_final": result.grad_norm_final,
        "stage_count": result.stage_count,
    }
    rep_path = os.path.join(out_dir, "report.json")
    _json_dump(report, rep_path)
    return RunResult(
        exit_code=0,
        artifacts=["solution.fbgf", "convergence.csv", "report.json"],
        report=report,
    )


def _run_diagnose(cfg, domain, w, out_dir) -> RunResult:
    u, solve_result = _field_for(cfg, domain, w)
    write_fbgf(u, os.path.join(out_dir, "field.fbgf"))
    targets = [t.build() for t in cfg.targets] or [_default_target(domain)]
    amp = cfg.almost_min.build()
    gc = diag.GoodClassParams(tau=5e-3, C0=1.0, C1=3.0, r0=max(domain.extent))
    nd = diag.NondegParams(rho0=1e-6, L=10.0, eta0=0.05)
    reports = []
    for ball in targets:
        rep = diag.full_report(u, ball, gc, nd, amp, w=w)
        entry = json.loads(rep.to_json())
        entry["ball_center"] = list(ball.center)
        entry["ball_radius"] = ball.radius
        reports.append(entry)
    report = {"name": cfg.name, "kind": "diagnose", "balls": reports}
    _json_dump(report, os.path.join(out_dir, "report.json"))
    artifacts = ["field.fbgf", "report.json"]
    return RunResult(exit_code=0, artifacts=artifacts, report=report)


def _run_monotonicity(cfg, domain, w, out_dir) -> RunResult:
    if cfg.monotonicity is None:
        return RunResult(exit_code=2, message="monotonicity section missing")
    u, _ = _field_for(cfg, domain, w)
    ms = cfg.monotonicity
    tr = mono.trace(u, ms.center, ms.r_min, ms.r_max, ms.count, ms.delta)
    mono.write_trace_csv(tr, os.path.join(out_dir, "trace.csv"))
    report = {
        "name": cfg.name,
        "kind": "monotonicity",
        "center": list(tr.center),
        "delta": tr.delta_exponent,
        "violation": tr.violation,
    }
    if len(tr.radii) >= 4:
        report["phi_limit_estimate"] = mono.phi_limit_estimate(tr)
    _json_dump(report, os.path.join(out_dir, "report.json"))
    return RunResult(
        exit_code=0, artifacts=["trace.csv", "report.json"], report=report
    )


def _run_blowup(cfg, domain, w, out_dir) -> RunResult:
    if cfg.blowup is None:
        return RunResult(exit_code=2, message="blowup section missing")
    u, _ = _field_for(cfg, domain, w)
    bs = cfg.blowup
    seq = blowup_mod.build_sequence(u, bs.center, bs.radii, bs.R, bs.res)
    manifest = blowup_mod.write_sequence_manifest(seq, out_dir)
    w_frozen = _frozen_weights_at(w, bs.center, seq.members[0].domain)
    rep = blowup_mod.convergence_report(seq, w_frozen)
    report = {
        "name": cfg.name,
        "kind": "blowup",
        "radii": list(rep.radii),
        "sup_distance": list(rep.sup_distance),
        "grad_l2_distance": list(rep.grad_l2_distance),
        "j_gap": list(rep.j_gap),
    }
    _json_dump(report, os.path.join(out_dir, "report.json"))
    artifacts = sorted(os.path.basename(p) for p in os.listdir(out_dir))
    return RunResult(exit_code=0, artifacts=artifacts, report=report)


def _run_verify(cfg, domain, w, out_dir) -> RunResult:
    """Scenario verification: lattice invariants plus profile oracles.

    Any failed check makes the run exit nonzero.
    """
    checks: list[dict] = []

    def check(name: str, value: float, bound: float, passed: bool | None = None):
        ok = bool(value <= bound) if passed is None else bool(passed)
        checks.append({"name": name, "value": value, "bound": bound, "pass": ok})

    h = max(domain.spacing)
    target = (cfg.targets[0].build() if cfg.targets else _default_target(domain))
    r = target.radius

    # lattice invariants
    vol = ball_volume(domain, target)
    exact_vol = (
        math.pi * r**2 if domain.dim == 2 else 4.0 / 3.0 * math.pi * r**3
    )
    check("quadrature_unit_ball_rel_err", abs(vol - exact_vol) / exact_vol, 2.0 * h / r)

    affine = sample(lambda c: 3.0 * c[..., 0] - 2.0 * c[..., 1], domain)
    ga = gradient(affine)
    err = max(
        float(np.max(np.abs(ga[..., 0] - 3.0))), float(np.max(np.abs(ga[..., 1] + 2.0)))
    )
    check("gradient_affine_max_err", err, 1e-10)

    const = sample(lambda c: np.full(c.shape[:-1], 2.5), domain)
    check(
        "sphere_average_constant_err",
        abs(sphere_average(const, target) - 2.5),
        1e-12,
    )

    u, _ = _field_for(cfg, domain, w)
    fbgf_path = os.path.join(out_dir, "field.fbgf")
    write_fbgf(u, fbgf_path)
    back = read_fbgf(fbgf_path)
    check(
        "fbgf_roundtrip_bit_exact",
        0.0 if np.array_equal(back.values, u.values) else 1.0,
        0.0,
    )

    b = sphere_average(u, target)
    b_plus = sphere_average(u.with_values(np.abs(u.values)), target)
    check("b_plus_dominates_abs_b", abs(b) - b_plus, 1e-12)

    ext = harmonic_extension(u, target, tol=1e-10)
    e_u = energy(u, target)
    e_star = energy(ext.extension, target)
    check("harmonic_energy_minimality", e_star - e_u, 10.0 * h * (e_u + 1.0))
    check(
        "orthogonality_defect",
        orthogonality_defect(u, ext, target),
        5e-2 * (e_u + 1.0),
    )

    amp = cfg.almost_min.build()
    j_u = J(u, w, target)
    check(
        "defect_vs_harmonic_extension",
        defect(u, ext.extension, w, amp, target),
        defect_slack(h, j_u),
    )

    if cfg.monotonicity is not None:
        ms = cfg.monotonicity
        tr = mono.trace(u, ms.center, ms.r_min, ms.r_max, ms.count, ms.delta)
        mono.write_trace_csv(tr, os.path.join(out_dir, "trace.csv"))
        a_mono = max(
            max(
                (prev - nxt for prev, nxt in zip(tr.A_plus, tr.A_plus[1:])),
                default=0.0,
            ),
            max(
                (prev - nxt for prev, nxt in zip(tr.A_minus, tr.A_minus[1:])),
                default=0.0,
            ),
        )
        check("a_pm_nondecreasing", a_mono, 1e-12)
        check("phi_violation", tr.violation, 0.05 * (1.0 + max(tr.phi)))

    if cfg.blowup is not None:
        bs = cfg.blowup
        seq = blowup_mod.build_sequence(u, bs.center, bs.radii, bs.R, bs.res)
        w_frozen = _frozen_weights_at(w, bs.center, seq.members[0].domain)
        rep = blowup_mod.convergence_report(seq, w_frozen)
        worst = 0.0
        for a, bv in zip(rep.sup_distance[:-1], rep.sup_distance[1:]):
            worst = max(worst, bv - a - 1e-12)
        check("blowup_sup_distances_nonincreasing", worst, 0.0)

    all_pass = all(c["pass"] for c in checks)
    report = {
        "name": cfg.name,
        "kind": "verify",
        "checks": checks,
        "all_pass": all_pass,
    }
    _json_dump(report, os.path.join(out_dir, "verify_report.json"))
    artifacts = sorted(os.path.basename(p) for p in os.listdir(out_dir))
    code = 0 if all_pass else 1
    return RunResult(exit_code=code, artifacts=artifacts, report=report)
