"""Declarative scenario files: closed-form system descriptions in TOML.

A scenario names a builtin group, manifold, action, and parametric field
family (plus optional chart, sampling, tolerance, and integrator settings).
Field families are closed enumerations with coefficient arrays, never code.
All dimensions are cross-validated on load with field-path error messages.
"""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .actions import (GroupAction, ManifoldDescriptor, VectorFieldM, affine_field,
                      cascade_synthetic_field, euclidean, group_affine_field_m,
                      group_manifold, left_action, left_invariant_field_m,
                      radial_scaled_field, rotation_action, scaling_action,
                      special_euclidean_action, translation_action)
from .cascade import (BundleChart, identity_section_chart, radial_chart,
                      translation_chart)
from .flows import IntegratorConfig
from .groups import LieGroupDescriptor, se2, se3, so2, so3, translation_group
from .reporting import Tolerances
from .sampling import SamplingPlan

SCENARIO_PATH_ENV = "WEAKINV_SCENARIO_PATH"

GROUP_KINDS = ("translation", "so2", "so3", "se2", "se3")
ACTION_KINDS = ("translation", "rotation", "left", "rigid", "scaling")
FIELD_FAMILIES = ("affine", "group_affine", "left_invariant",
                  "cascade_synthetic", "radial_scaled")
CHART_KINDS = ("translation", "identity_section", "radial")


class ScenarioError(ValueError):
    """Scenario file failed validation; message carries the field path."""


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    description: str
    group: LieGroupDescriptor
    manifold: ManifoldDescriptor
    action: GroupAction
    field: VectorFieldM
    field_params: dict
    chart: BundleChart | None
    plan: SamplingPlan
    tolerances: Tolerances
    integrator: IntegratorConfig
    initial_y0: np.ndarray | None
    initial_g0: np.ndarray | None
    corruption: dict
    source: str


def _need(table: dict, key: str, path: str):
    if key not in table:
        raise ScenarioError(f"{path}.{key}: required key is missing")
    return table[key]


def _matrix(value, rows: int, cols: int, path: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape != (rows, cols):
        raise ScenarioError(f"{path}: expected a {rows}x{cols} matrix, got shape {arr.shape}")
    return arr


def _vector(value, length: int, path: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape != (length,):
        raise ScenarioError(f"{path}: expected a vector of length {length}, "
                            f"got shape {arr.shape}")
    return arr


def _build_group(table: dict) -> LieGroupDescriptor:
    kind = _need(table, "kind", "group")
    if kind not in GROUP_KINDS:
        raise ScenarioError(f"group.kind: unknown kind '{kind}' (known: {GROUP_KINDS})")
    if kind == "translation":
        dim = int(_need(table, "dim", "group"))
        if dim < 1:
            raise ScenarioError("group.dim: must be a positive integer")
        return translation_group(dim)
    return {"so2": so2, "so3": so3, "se2": se2, "se3": se3}[kind]()


def _build_manifold(table: dict, group: LieGroupDescriptor) -> ManifoldDescriptor:
    kind = _need(table, "kind", "manifold")
    if kind == "euclidean":
        dim = int(_need(table, "dim", "manifold"))
        if dim < 1:
            raise ScenarioError("manifold.dim: must be a positive integer")
        return euclidean(dim)
    if kind == "group":
        return group_manifold(group)
    raise ScenarioError(f"manifold.kind: unknown kind '{kind}' (known: euclidean, group)")


def _build_action(table: dict, group: LieGroupDescriptor,
                  manifold: ManifoldDescriptor) -> GroupAction:
    kind = _need(table, "kind", "action")
    if kind not in ACTION_KINDS:
        raise ScenarioError(f"action.kind: unknown kind '{kind}' (known: {ACTION_KINDS})")
    if kind == "translation":
        if group.kind != "translation":
            raise ScenarioError("action.kind: 'translation' needs a translation group")
        if manifold.kind != "euclidean":
            raise ScenarioError("action.kind: 'translation' needs a euclidean manifold")
        axes = [int(a) for a in _need(table, "axes", "action")]
        if len(axes) != group.algebra_dim:
            raise ScenarioError(
                f"action.axes: {len(axes)} axes but the group translates "
                f"{group.algebra_dim} directions")
        n = manifold.shape[0]
        if any(a < 0 or a >= n for a in axes):
            raise ScenarioError(f"action.axes: values must lie in [0, {n - 1}]")
        return translation_action(n, axes)
    if kind == "rotation":
        if group.kind not in ("so2", "so3"):
            raise ScenarioError("action.kind: 'rotation' needs an SO(2) or SO(3) group")
        if manifold.kind != "euclidean" or manifold.shape[0] != group.matrix_dim:
            raise ScenarioError(
                f"manifold.dim: rotation action of {group.name} needs euclidean "
                f"dimension {group.matrix_dim}")
        return rotation_action(group)
    if kind == "left":
        if manifold.kind != "matrix_group" or manifold.group is not group:
            raise ScenarioError("manifold.kind: the left action needs kind 'group'")
        return left_action(group)
    if kind == "rigid":
        if group.kind not in ("se2", "se3"):
            raise ScenarioError("action.kind: 'rigid' needs an SE(2) or SE(3) group")
        n = group.matrix_dim - 1
        if manifold.kind != "euclidean" or manifold.shape[0] != n:
            raise ScenarioError(
                f"manifold.dim: rigid action of {group.name} needs euclidean dimension {n}")
        return special_euclidean_action(group)
    if group.kind != "translation" or group.algebra_dim != 1:
        raise ScenarioError("action.kind: 'scaling' needs the one-dimensional "
                            "translation group")
    if manifold.kind != "euclidean":
        raise ScenarioError("action.kind: 'scaling' needs a euclidean manifold")
    return scaling_action(manifold.shape[0])


def _build_field(table: dict, group: LieGroupDescriptor,
                 manifold: ManifoldDescriptor) -> VectorFieldM:
    family = _need(table, "family", "field")
    if family not in FIELD_FAMILIES:
        raise ScenarioError(f"field.family: unknown family '{family}' "
                            f"(known: {FIELD_FAMILIES})")
    if family == "affine":
        if manifold.kind != "euclidean":
            raise ScenarioError("field.family: 'affine' needs a euclidean manifold")
        n = manifold.shape[0]
        A = _matrix(_need(table, "A", "field"), n, n, "field.A")
        b = _vector(_need(table, "b", "field"), n, "field.b")
        return affine_field(manifold, A, b)
    if family == "group_affine":
        if manifold.kind != "matrix_group":
            raise ScenarioError("field.family: 'group_affine' needs manifold kind 'group'")
        d = group.algebra_dim
        D = _vector(_need(table, "D", "field"), d, "field.D")
        U = _vector(_need(table, "U", "field"), d, "field.U")
        return group_affine_field_m(group, group.algebra(D), group.algebra(U))
    if family == "left_invariant":
        if manifold.kind != "matrix_group":
            raise ScenarioError("field.family: 'left_invariant' needs manifold kind 'group'")
        xi = _vector(_need(table, "xi", "field"), group.algebra_dim, "field.xi")
        return left_invariant_field_m(group, group.algebra(xi))
    if family == "cascade_synthetic":
        if manifold.kind != "euclidean":
            raise ScenarioError("field.family: 'cascade_synthetic' needs a euclidean manifold")
        n = manifold.shape[0]
        axis = int(_need(table, "axis", "field"))
        if axis < 0 or axis >= n:
            raise ScenarioError(f"field.axis: must lie in [0, {n - 1}]")
        k = n - 1
        F = _matrix(_need(table, "F", "field"), k, k, "field.F")
        h = _vector(_need(table, "h", "field"), k, "field.h")
        c = float(_need(table, "c", "field"))
        return cascade_synthetic_field(n, axis, F, c, h)
    if manifold.kind != "euclidean":
        raise ScenarioError("field.family: 'radial_scaled' needs a euclidean manifold")
    return radial_scaled_field(manifold)


def _build_chart(table: dict, scenario_action: GroupAction) -> BundleChart:
    kind = _need(table, "kind", "chart")
    if kind not in CHART_KINDS:
        raise ScenarioError(f"chart.kind: unknown kind '{kind}' (known: {CHART_KINDS})")
    params = dict(scenario_action.params)
    if kind == "translation":
        if params.get("kind") != "translation":
            raise ScenarioError("chart.kind: 'translation' chart needs a translation action")
        return translation_chart(scenario_action, params["axes"])
    if kind == "identity_section":
        if params.get("kind") != "left":
            raise ScenarioError("chart.kind: 'identity_section' chart needs the left action")
        return identity_section_chart(scenario_action)
    if params.get("kind") != "rotation" or scenario_action.group.kind != "so2":
        raise ScenarioError("chart.kind: 'radial' chart needs the SO(2) rotation action")
    return radial_chart(scenario_action)


def _build_plan(table: dict) -> SamplingPlan:
    known = {"seed", "group_count", "point_count", "pair_count", "box",
             "point_center", "point_box"}
    for key in table:
        if key not in known:
            raise ScenarioError(f"sampling.{key}: unknown key (known: {sorted(known)})")
    kwargs = dict(table)
    if "point_center" in kwargs:
        kwargs["point_center"] = tuple(float(v) for v in kwargs["point_center"])
    return SamplingPlan(**kwargs)


def _build_integrator(table: dict) -> IntegratorConfig:
    known = {"scheme", "step", "projection", "blowup"}
    for key in table:
        if key not in known:
            raise ScenarioError(f"integrator.{key}: unknown key (known: {sorted(known)})")
    try:
        return IntegratorConfig(**table)
    except ValueError as err:
        raise ScenarioError(f"integrator: {err}") from err


def load_scenario(path, seed_override: int | None = None,
                  tolerance_overrides: dict | None = None) -> Scenario:
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text())
    except (OSError, tomllib.TOMLDecodeError) as err:
        raise ScenarioError(f"{path}: {err}") from err
    return build_scenario(raw, source=str(path), seed_override=seed_override,
                          tolerance_overrides=tolerance_overrides)


def build_scenario(raw: dict, source: str = "<memory>", seed_override: int | None = None,
                   tolerance_overrides: dict | None = None) -> Scenario:
    name = raw.get("name")
    if not isinstance(name, str) or not name:
        raise ScenarioError("name: required string is missing")
    group = _build_group(_need(raw, "group", ""))
    manifold = _build_manifold(_need(raw, "manifold", ""), group)
    action = _build_action(_need(raw, "action", ""), group, manifold)
    field_table = _need(raw, "field", "")
    field = _build_field(field_table, group, manifold)
    chart = _build_chart(raw["chart"], action) if "chart" in raw else None
    plan = _build_plan(raw.get("sampling", {}))
    if seed_override is not None:
        plan = plan.reseeded(seed_override)
    try:
        tolerances = Tolerances().override(**raw.get("tolerances", {}))
        if tolerance_overrides:
            tolerances = tolerances.override(**tolerance_overrides)
    except KeyError as err:
        raise ScenarioError(f"tolerances: {err.args[0]}") from err
    integrator = _build_integrator(raw.get("integrator", {}))

    initial = raw.get("initial", {})
    initial_y0 = initial_g0 = None
    if "y0" in initial:
        if chart is None:
            raise ScenarioError("initial.y0: requires a chart")
        initial_y0 = _vector(initial["y0"], chart.quotient_dim, "initial.y0")
    if "g0" in initial:
        initial_g0 = _vector(initial["g0"], group.algebra_dim, "initial.g0")

    corruption = raw.get("corruption", {})
    for key in corruption:
        if key != "group_field_scale":
            raise ScenarioError(f"corruption.{key}: unknown key")

    return Scenario(name=name, description=raw.get("description", ""), group=group,
                    manifold=manifold, action=action, field=field,
                    field_params=dict(field_table), chart=chart, plan=plan,
                    tolerances=tolerances, integrator=integrator,
                    initial_y0=initial_y0, initial_g0=initial_g0,
                    corruption=dict(corruption), source=source)


# ---------------------------------------------------------------------------
# Scenario discovery
# ---------------------------------------------------------------------------

def bundled_scenario_dir() -> Path:
    return Path(resources.files("weakinv") / "data" / "scenarios")


def scenario_search_dirs() -> list[Path]:
    dirs = []
    env = os.environ.get(SCENARIO_PATH_ENV, "")
    for part in env.split(os.pathsep):
        if part:
            dirs.append(Path(part))
    dirs.append(bundled_scenario_dir())
    return dirs


def list_scenarios() -> dict[str, Path]:
    """Scenario name -> file, search path first, bundled last (no overrides)."""
    found: dict[str, Path] = {}
    for directory in scenario_search_dirs():
        if not directory.is_dir():
            continue
        for path in sorted(directory.glob("*.toml")):
            found.setdefault(path.stem, path)
    return found


def resolve_scenario(ref: str) -> Path:
    """A scenario reference is a file path or the name of a discoverable file."""
    path = Path(ref)
    if path.is_file():
        return path
    catalog = list_scenarios()
    stem = ref[:-5] if ref.endswith(".toml") else ref
    if stem in catalog:
        return catalog[stem]
    raise ScenarioError(
        f"scenario '{ref}' not found (known: {', '.join(sorted(catalog)) or 'none'})")
