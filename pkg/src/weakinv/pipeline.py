"""Scenario pipelines: classify, verify, decompose.

The verify battery runs every property check appropriate to the
classification; each executed check appears exactly once in the report, and
the JSON serialization is deterministic (timing is kept out of it).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .actions import check_action_axioms, check_differentials
from .cascade import (QuotientPoint, build_cascade, check_well_definedness,
                      export_cascade_run, reconstruct)
from .flows import (IntegratorConfig, check_flow_weak_invariance,
                    check_group_map_is_flow, check_small_time_extension,
                    differentiate_flow_at_zero, export_trajectory, flow,
                    recovered_map_of_flow)
from .groups import TangentVectorG, VectorFieldG, exp
from .invariance import (PARTIAL_ONLY, STRONG, WEAK, check_automorphism,
                         classify_vector_field, recovered_velocity_field,
                         solve_group_velocity)
from .reporting import CheckResult, canonical_json, make_check
from .scenarios import Scenario, ScenarioError


@dataclass
class RunReport:
    scenario: str
    command: str
    classification: str | None
    checks: list[CheckResult]
    recovered: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)
    notes: tuple = ()
    exit_code: int = 0
    timing_seconds: float = 0.0

    def __post_init__(self):
        names = [c.name for c in self.checks]
        if len(names) != len(set(names)):
            raise ValueError(f"duplicate check names in report: {names}")

    def to_json_dict(self) -> dict:
        # timing is deliberately excluded so reruns are byte-identical
        return {
            "command": self.command,
            "scenario": self.scenario,
            "classification": self.classification,
            "checks": [{"name": c.name, **c.to_dict()} for c in self.checks],
            "recovered": self.recovered,
            "extras": self.extras,
            "notes": list(self.notes),
            "exit_code": self.exit_code,
        }

    def to_json(self) -> str:
        return canonical_json(self.to_json_dict())

    def table(self) -> str:
        lines = [f"scenario: {self.scenario}",
                 f"command:  {self.command}"]
        if self.classification is not None:
            lines.append(f"classification: {self.classification}")
        if self.checks:
            width = max(len(c.name) for c in self.checks) + 2
            lines.append(f"{'check'.ljust(width)}{'max residual':>14}"
                         f"{'tolerance':>12}  status")
            for c in self.checks:
                status = "PASS" if c.passed else "FAIL"
                lines.append(f"{c.name.ljust(width)}{c.max_residual:>14.3e}"
                             f"{c.tolerance:>12.1e}  {status}")
        for key, value in self.extras.items():
            lines.append(f"{key}: {value}")
        for note in self.notes:
            lines.append(f"note: {note}")
        lines.append(f"elapsed: {self.timing_seconds:.2f} s")
        return "\n".join(lines)


CLASSIFY_EXIT_CODES = {STRONG: 0, WEAK: 0, PARTIAL_ONLY: 2, "none": 3}


def run_classification(scn: Scenario) -> RunReport:
    started = time.perf_counter()
    report = classify_vector_field(scn.field, scn.action, scn.plan, scn.tolerances)
    return RunReport(
        scenario=scn.name, command="classify",
        classification=report.classification,
        checks=list(report.checks.values()),
        recovered=report.to_json_dict(),
        notes=report.notes,
        exit_code=CLASSIFY_EXIT_CODES[report.classification],
        timing_seconds=time.perf_counter() - started)


def _scaled_group_field(W: VectorFieldG, scale: float) -> VectorFieldG:
    return VectorFieldG(W.group,
                        lambda g: TangentVectorG(g, scale * W.eval(g).matrix),
                        kind=W.kind)


def _group_flow_config(config: IntegratorConfig) -> IntegratorConfig:
    return IntegratorConfig(scheme="rkmk4", step=config.step, blowup=config.blowup)


VERIFY_TIMES = (0.1, 0.5, 1.0)
SIGMA_TIME_PAIRS = ((0.1, 0.1), (0.1, 0.2), (0.2, 0.1), (0.2, 0.2))
SMALL_TIME_DELTA = 0.05
SMALL_TIME_STEPS = 8
AUTOMORPHISM_PAIRS = 50


def run_verification(scn: Scenario) -> RunReport:
    started = time.perf_counter()
    action, V, plan, tol = scn.action, scn.field, scn.plan, scn.tolerances
    checks: list[CheckResult] = [
        check_action_axioms(action, plan, tolerance=tol.axioms),
        check_differentials(action, plan, tolerance=tol.differentials),
    ]
    inv_report = classify_vector_field(V, action, plan, tol)
    label = inv_report.classification
    extras: dict = {}

    if label in (STRONG, WEAK):
        checks.extend(_flow_battery(scn, inv_report, extras))
    elif label == PARTIAL_ONLY:
        checks.append(inv_report.checks["orbit_tangency"])

    exit_code = 0 if all(c.passed for c in checks) else 4
    return RunReport(
        scenario=scn.name, command="verify", classification=label,
        checks=checks, recovered=inv_report.to_json_dict(), extras=extras,
        notes=inv_report.notes, exit_code=exit_code,
        timing_seconds=time.perf_counter() - started)


def _flow_battery(scn: Scenario, inv_report, extras) -> list[CheckResult]:
    action, V, plan, tol = scn.action, scn.field, scn.plan, scn.tolerances
    label = inv_report.classification
    group = action.group
    out: list[CheckResult] = []

    if label == WEAK:
        out.append(inv_report.checks["weak_consistency"])
        out.append(inv_report.checks["group_linear"])
    else:
        out.append(inv_report.checks["strong_residual"])

    # two points keep every builtin generator system overdetermined while
    # minimizing the flow evaluations behind each solver-backed evaluation
    recovery_points = plan.manifold_points(action.manifold,
                                           count=min(plan.point_count, 2))
    if label == WEAK:
        W = recovered_velocity_field(V, action, recovery_points)
    else:
        W = inv_report.recovered_group_field  # the zero field
    corruption = scn.corruption.get("group_field_scale")
    if corruption is not None:
        W = _scaled_group_field(W, float(corruption))
        extras["corruption"] = {"group_field_scale": float(corruption)}

    v_flow = flow(V, scn.integrator)
    w_flow = flow(W, _group_flow_config(scn.integrator))
    map_factory = recovered_map_of_flow(v_flow, action, recovery_points)
    map_cache: dict = {}

    def map_at(t: float):
        # one solver-backed map per time; distinct times stay independent
        if t not in map_cache:
            map_cache[t] = map_factory(t)
        return map_cache[t]

    if label == STRONG:
        velocities = [solve_group_velocity(V, action, g, recovery_points)[0].norm()
                      for g in plan.group_elements(group, count=6)]
        out.append(make_check("group_velocity_zero", velocities, tol.weak))
        sigma_probe = map_at(0.1)
        gaps = [float(np.linalg.norm(sigma_probe.eval(g).matrix - g.matrix))
                for g in plan.group_elements(group, count=5)]
        out.append(make_check("group_map_identity", gaps, tol.sigma_match))

    sigma = map_at(0.1)
    auto_plan = replace(plan, pair_count=AUTOMORPHISM_PAIRS)
    out.append(check_automorphism(sigma, auto_plan, tolerance=tol.automorphism))

    out.append(check_flow_weak_invariance(v_flow, w_flow, action, VERIFY_TIMES,
                                          plan, tolerance=tol.flow_invariance))
    out.append(_derivative_check(scn, v_flow, w_flow))
    out.append(check_group_map_is_flow(map_at, SIGMA_TIME_PAIRS, group, plan,
                                       tolerance=tol.sigma_flow))
    out.append(check_small_time_extension(v_flow, action, plan,
                                          delta=SMALL_TIME_DELTA,
                                          n_max=SMALL_TIME_STEPS,
                                          tolerance=tol.small_time))
    return out


def _derivative_check(scn: Scenario, v_flow, w_flow) -> CheckResult:
    """Both t=0 derivatives of the flow relation must match each other and
    the field value at the moved point."""
    action, V, tol = scn.action, scn.field, scn.tolerances
    residuals = []
    gs = scn.plan.group_elements(action.group, count=3)
    qs = scn.plan.manifold_points(action.manifold, count=3)
    for g, q in zip(gs, qs):
        lhs, rhs = differentiate_flow_at_zero(v_flow, w_flow, action, g, q)
        field_value = V.eval(action.apply(g, q)).ambient()
        residuals.append(np.linalg.norm(lhs.ambient() - rhs.ambient()))
        residuals.append(np.linalg.norm(rhs.ambient() - field_value))
    return make_check("flow_derivative_at_zero", residuals, tol.flow_derivative)


def run_decomposition(scn: Scenario, t: float, y0_coords=None, g0_coords=None,
                      out_dir: Path | None = None) -> RunReport:
    started = time.perf_counter()
    if scn.chart is None:
        raise ScenarioError(f"scenario '{scn.name}' has no chart; decomposition "
                            "needs one (or a transitive self-action chart)")
    action, V, plan, tol, chart = scn.action, scn.field, scn.plan, scn.tolerances, scn.chart

    inv_report = classify_vector_field(V, action, plan, scn.tolerances)
    label = inv_report.classification
    if label not in (STRONG, WEAK):
        raise ScenarioError(
            f"scenario '{scn.name}' classified '{label}'; only strongly or weakly "
            "invariant fields admit the structured decomposition")

    checks = [check_well_definedness(V, chart, plan, tolerance=tol.chart)]
    system = build_cascade(V, inv_report.recovered_group_field, chart,
                           tolerance=tol.chart)

    if y0_coords is None:
        y0_coords = scn.initial_y0 if scn.initial_y0 is not None \
            else np.zeros(chart.quotient_dim)
    if g0_coords is None:
        g0_coords = scn.initial_g0 if scn.initial_g0 is not None \
            else np.zeros(action.group.algebra_dim)
    y0 = QuotientPoint(np.asarray(y0_coords, dtype=float))
    if y0.coords.shape != (chart.quotient_dim,):
        raise ScenarioError(f"y0: expected {chart.quotient_dim} coords, "
                            f"got {y0.coords.shape[0]}")
    g0 = exp(action.group.algebra(np.asarray(g0_coords, dtype=float)))

    out_dir = Path(out_dir) if out_dir is not None else Path.cwd()
    out_dir.mkdir(parents=True, exist_ok=True)
    cascade_csv = out_dir / f"{scn.name}_cascade.csv"
    direct_csv = out_dir / f"{scn.name}_direct.csv"

    y1, g1 = export_cascade_run(system, scn.integrator, t, y0, g0, cascade_csv)
    via_cascade = reconstruct(chart, y1, g1)

    p0 = reconstruct(chart, y0, g0)
    direct_flow = flow(V, scn.integrator)
    export_trajectory(direct_flow, t, p0, direct_csv)
    direct_terminal = direct_flow.evaluate(t, p0)

    deviation = float(np.linalg.norm(via_cascade.ambient() - direct_terminal.ambient()))
    checks.append(CheckResult("cascade_equivalence", deviation, deviation, 1,
                              tol.flow_invariance, deviation < tol.flow_invariance))

    extras = {
        "t": t,
        "terminal_deviation": deviation,
        "y0": [float(v) for v in np.asarray(y0_coords, dtype=float)],
        "g0_coords": [float(v) for v in np.asarray(g0_coords, dtype=float)],
        "cascade_csv": str(cascade_csv),
        "direct_csv": str(direct_csv),
    }
    if dict(scn.field_params).get("family") == "group_affine":
        extras["D"] = list(map(float, scn.field_params["D"]))
        extras["U"] = list(map(float, scn.field_params["U"]))

    exit_code = 0 if all(c.passed for c in checks) else 4
    return RunReport(
        scenario=scn.name, command="decompose", classification=label,
        checks=checks, recovered=inv_report.to_json_dict(), extras=extras,
        exit_code=exit_code, timing_seconds=time.perf_counter() - started)
