"""Cascade decomposition: quotient dynamics driving group-affine dynamics.

Given a free action with a global section, a weakly invariant field splits
into an autonomous quotient field plus a group equation whose right-hand side
is the recovered group field shifted by a quotient-dependent forcing term.
Charts are supplied analytically per scenario; nothing here synthesizes a
section from the action.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .actions import (GroupAction, ManifoldPoint, TangentVectorM, VectorFieldM,
                      generator_matrix)
from .groups import (AlgebraVector, GroupElement, LieGroupDescriptor, VectorFieldG,
                     check_group_linear, compose, exp, left_trivialize)
from .flows import IntegratorConfig, _exp_of_matrix, _rk4_step, _rkmk4_step, _step_sizes
from .reporting import CheckResult, make_check
from .sampling import SamplingPlan


class ChartError(ValueError):
    """Chart data is inconsistent with the field or action."""


@dataclass(frozen=True, eq=False)
class QuotientPoint:
    coords: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coords", np.atleast_1d(np.asarray(self.coords, dtype=float)))


@dataclass(frozen=True, eq=False)
class QuotientTangent:
    base: QuotientPoint
    coords: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coords", np.atleast_1d(np.asarray(self.coords, dtype=float)))


@dataclass(frozen=True, eq=False)
class BundleChart:
    """Global trivialization of the action: projection, section, their
    differentials, and the solve of p = apply(g, section(y))."""

    action: GroupAction
    quotient_dim: int
    project: Callable[[ManifoldPoint], QuotientPoint]
    section: Callable[[QuotientPoint], ManifoldPoint]
    d_project: Callable[[TangentVectorM], QuotientTangent]
    d_section: Callable[[QuotientTangent], TangentVectorM]
    decompose: Callable[[ManifoldPoint], tuple[GroupElement, QuotientPoint]]


# ---------------------------------------------------------------------------
# Builtin charts
# ---------------------------------------------------------------------------

def translation_chart(action: GroupAction, axes: Sequence[int]) -> BundleChart:
    """Chart for translations along `axes`: the quotient keeps the rest."""
    manifold = action.manifold
    n = manifold.shape[0]
    axes = tuple(axes)
    comp = [i for i in range(n) if i not in axes]
    group = action.group

    def project(p):
        return QuotientPoint(p.value[comp])

    def section(y):
        v = np.zeros(n)
        v[comp] = y.coords
        return ManifoldPoint(manifold, v)

    def d_project(tv):
        return QuotientTangent(project(tv.base), tv.dir[comp])

    def d_section(qt):
        v = np.zeros(n)
        v[comp] = qt.coords
        return TangentVectorM(section(qt.base), v)

    def decompose(p):
        g = exp(group.algebra(p.value[list(axes)]))
        return g, QuotientPoint(p.value[comp])

    return BundleChart(action, len(comp), project, section, d_project, d_section, decompose)


def identity_section_chart(action: GroupAction) -> BundleChart:
    """Chart for the transitive self-action: quotient is a point, section is
    the identity, and the group component of p is p itself."""
    manifold = action.manifold
    group = action.group
    empty = QuotientPoint(np.zeros(0))

    def project(_p):
        return empty

    def section(_y):
        return ManifoldPoint(manifold, np.eye(group.matrix_dim))

    def d_project(tv):
        return QuotientTangent(empty, np.zeros(0))

    def d_section(_qt):
        return TangentVectorM(section(empty), np.zeros((group.matrix_dim,) * 2))

    def decompose(p):
        return GroupElement(group, p.value), empty

    return BundleChart(action, 0, project, section, d_project, d_section, decompose)


def radial_chart(action: GroupAction) -> BundleChart:
    """Chart for SO(2) rotating the punctured plane: quotient is the radius,
    section lands on the positive x-axis. Undefined at the origin."""
    manifold = action.manifold
    group = action.group

    def _radius(value):
        r = float(np.linalg.norm(value))
        if r < 1e-12:
            raise ChartError("radial chart is undefined at the origin")
        return r

    def project(p):
        return QuotientPoint([_radius(p.value)])

    def section(y):
        _radius(np.array([y.coords[0], 0.0]))
        return ManifoldPoint(manifold, np.array([y.coords[0], 0.0]))

    def d_project(tv):
        r = _radius(tv.base.value)
        return QuotientTangent(project(tv.base), [tv.base.value @ tv.dir / r])

    def d_section(qt):
        return TangentVectorM(section(qt.base), np.array([qt.coords[0], 0.0]))

    def decompose(p):
        theta = math.atan2(p.value[1], p.value[0])
        return exp(group.algebra([theta])), project(p)

    return BundleChart(action, 1, project, section, d_project, d_section, decompose)


# ---------------------------------------------------------------------------
# Quotient field, forcing term, cascade integration
# ---------------------------------------------------------------------------

def induced_quotient_field(V: VectorFieldM, chart: BundleChart,
                           y: QuotientPoint) -> QuotientTangent:
    """Quotient-side field at y: push V through the projection at the section
    point. Well-definedness is a separate check, not an assumption."""
    return chart.d_project(V.eval(chart.section(y)))


def check_well_definedness(V: VectorFieldM, chart: BundleChart,
                           plan: SamplingPlan, tolerance: float = 1e-8) -> CheckResult:
    """The projected field must agree along each orbit: compare the pushforward
    of V at p and at apply(g, p) for sampled (g, p)."""
    action = chart.action
    residuals = []
    for g in plan.group_elements(action.group, count=min(plan.group_count, 8)):
        for p in plan.manifold_points(action.manifold, count=min(plan.point_count, 8)):
            a = chart.d_project(V.eval(p)).coords
            b = chart.d_project(V.eval(action.apply(g, p))).coords
            residuals.append(np.linalg.norm(a - b))
    return make_check("quotient_well_defined", residuals, tolerance)


def forcing_term(V: VectorFieldM, chart: BundleChart, y: QuotientPoint,
                 tolerance: float = 1e-8) -> AlgebraVector:
    """Algebra-valued drive of the group equation at quotient state y.

    Solves the generator system at the section point for the orbit-tangent
    part of V minus the section-lifted quotient velocity; a large substitution
    residual means the field is not weakly invariant for this chart.
    """
    s_y = chart.section(y)
    G = generator_matrix(chart.action, s_y)
    vertical = V.eval(s_y).ambient() - chart.d_section(induced_quotient_field(V, chart, y)).ambient()
    if G.shape[1] == 0:
        raise ChartError("group has algebra dimension zero")
    x, *_ = np.linalg.lstsq(G, vertical, rcond=None)
    residual = float(np.linalg.norm(G @ x - vertical))
    scale = max(1.0, float(np.linalg.norm(vertical)))
    if residual > tolerance * scale:
        raise ChartError(
            f"forcing term substitution residual {residual:.3e} exceeds tolerance; "
            "field is not weakly invariant with respect to this chart")
    return AlgebraVector(chart.action.group, x)


@dataclass(frozen=True, eq=False)
class CascadeSystem:
    quotient_field: Callable[[QuotientPoint], QuotientTangent]
    group_field: VectorFieldG
    forcing: Callable[[QuotientPoint], AlgebraVector]
    chart: BundleChart


def build_cascade(V: VectorFieldM, W: VectorFieldG, chart: BundleChart,
                  tolerance: float = 1e-8) -> CascadeSystem:
    return CascadeSystem(
        quotient_field=lambda y: induced_quotient_field(V, chart, y),
        group_field=W,
        forcing=lambda y: forcing_term(V, chart, y, tolerance=tolerance),
        chart=chart)


class _QuotientTrajectory:
    """Dense cubic-Hermite output of the quotient solve on a fixed grid."""

    def __init__(self, system: CascadeSystem, t: float, y0: QuotientPoint, dt: float):
        self.times = [0.0]
        self.values = [np.asarray(y0.coords, dtype=float)]
        self.slopes = [self._slope(system, self.values[0])]
        now = 0.0
        y = self.values[0]
        for h in _step_sizes(t, dt):
            y = _rk4_step(lambda _t, v: self._slope(system, v), now, y, h)
            now += h
            self.times.append(now)
            self.values.append(y)
            self.slopes.append(self._slope(system, y))
        self.sign = 1.0 if t >= 0 else -1.0

    @staticmethod
    def _slope(system, coords):
        return np.asarray(system.quotient_field(QuotientPoint(coords)).coords, dtype=float)

    def at(self, t: float) -> np.ndarray:
        times = self.times
        if len(times) == 1:
            return self.values[0]
        # locate interval (grid is monotone in integration direction)
        lo, hi = 0, len(times) - 1
        key = self.sign * t
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if self.sign * times[mid] <= key:
                lo = mid
            else:
                hi = mid
        t0, t1 = times[lo], times[lo + 1]
        h = t1 - t0
        s = np.clip((t - t0) / h, 0.0, 1.0)
        y0, y1 = self.values[lo], self.values[lo + 1]
        f0, f1 = self.slopes[lo], self.slopes[lo + 1]
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        h11 = s**3 - s**2
        return h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1


def integrate_cascade(system: CascadeSystem, config: IntegratorConfig, t: float,
                      y0: QuotientPoint, g0: GroupElement, record: bool = False):
    """Integrate the quotient equation, then the driven group equation on the
    same grid with the quotient state interpolated at stage times.

    Returns (terminal QuotientPoint, terminal GroupElement), plus the list of
    (time, y coords, group matrix) grid rows when `record` is set.
    """
    group = system.chart.action.group
    has_quotient = system.chart.quotient_dim > 0
    dense = _QuotientTrajectory(system, t, y0, config.step) if has_quotient else None

    if has_quotient:
        def xi_fun(tau, g):
            y = QuotientPoint(dense.at(tau))
            body = left_trivialize(system.group_field, g).coords + system.forcing(y).coords
            return group.algebra_matrix(body)
    else:
        drive = system.forcing(y0).coords

        def xi_fun(_tau, g):
            return group.algebra_matrix(left_trivialize(system.group_field, g).coords + drive)

    g = g0
    now = 0.0
    rows = [(0.0, np.array(y0.coords, dtype=float), g.matrix.copy())]
    for h in _step_sizes(t, config.step):
        if config.scheme == "lie_euler":
            g = compose(g, GroupElement(group, _exp_of_matrix(group, h * xi_fun(now, g))))
        else:
            g = _rkmk4_step(group, xi_fun, now, g, h)
        now += h
        if record:
            y_now = dense.at(now) if has_quotient else np.array(y0.coords)
            rows.append((now, y_now, g.matrix.copy()))
    y_final = QuotientPoint(dense.at(now) if has_quotient else y0.coords)
    if record:
        return (y_final, g), rows
    return y_final, g


def reconstruct(chart: BundleChart, y: QuotientPoint, g: GroupElement) -> ManifoldPoint:
    """Invert the decomposition: the state with quotient part y moved by g."""
    return chart.action.apply(g, chart.section(y))


def export_cascade_run(system: CascadeSystem, config: IntegratorConfig, t: float,
                       y0: QuotientPoint, g0: GroupElement, path) -> tuple[QuotientPoint, GroupElement]:
    """CSV with header t, y_*, g_* (row-major), p_* (reconstructed ambient)."""
    (y_final, g_final), rows = integrate_cascade(system, config, t, y0, g0, record=True)
    chart = system.chart
    n_y = chart.quotient_dim
    m = chart.action.group.matrix_dim
    p0 = reconstruct(chart, y0, g0)
    n_p = p0.ambient().size
    header = (["t"] + [f"y_{i}" for i in range(n_y)]
              + [f"g_{i}" for i in range(m * m)] + [f"p_{i}" for i in range(n_p)])
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for time, y_coords, g_matrix in rows:
            p = reconstruct(chart, QuotientPoint(y_coords),
                            GroupElement(chart.action.group, g_matrix))
            writer.writerow([repr(float(time))] + [repr(float(v)) for v in y_coords]
                            + [repr(float(v)) for v in g_matrix.reshape(-1)]
                            + [repr(float(v)) for v in p.ambient()])
    return y_final, g_final


# ---------------------------------------------------------------------------
# Group-affine structure on Lie groups
# ---------------------------------------------------------------------------

def _as_group_field(V, group: LieGroupDescriptor | None = None):
    """Accept either a VectorFieldG or a VectorFieldM over a group manifold."""
    if isinstance(V, VectorFieldG):
        return V, V.group
    if V.manifold.kind != "matrix_group":
        raise ValueError("group-affine checks need a field on a matrix-group manifold")
    grp = V.manifold.group if group is None else group

    def eval_at(g: GroupElement):
        from .groups import TangentVectorG
        tv = V.eval(ManifoldPoint(V.manifold, g.matrix))
        return TangentVectorG(g, tv.dir)

    return VectorFieldG(grp, eval_at, kind=V.kind), grp


def check_group_affine(V, plan: SamplingPlan, tolerance: float = 1e-8) -> CheckResult:
    """Residual of V(gh) = dL_g V(h) + dR_h V(g) - dL_g dR_h V(e) over pairs."""
    field, group = _as_group_field(V)
    e = group.identity()
    v_e = field.eval(e).matrix
    residuals = []
    for g, h in plan.group_pairs(group):
        lhs = field.eval(compose(g, h)).matrix
        rhs = (g.matrix @ field.eval(h).matrix + field.eval(g).matrix @ h.matrix
               - g.matrix @ v_e @ h.matrix)
        residuals.append(np.linalg.norm(lhs - rhs))
    return make_check("group_affine", residuals, tolerance)


class GroupAffineError(ValueError):
    """Decomposition consistency failed: the field was not group affine."""


def group_affine_decompose(V, plan: SamplingPlan,
                           tolerance: float = 1e-8) -> tuple[VectorFieldG, AlgebraVector, CheckResult]:
    """Split a group-affine field into its group-linear part and constant
    drift: the drift is the body value at the identity, the group-linear part
    is the remainder. The remainder's group-linearity is re-checked and a
    failure rejects the input."""
    field, group = _as_group_field(V)
    U = left_trivialize(field, group.identity())
    U_mat = U.matrix

    def w_eval(g: GroupElement):
        from .groups import TangentVectorG
        return TangentVectorG(g, field.eval(g).matrix - g.matrix @ U_mat)

    W = VectorFieldG(group, w_eval, kind="group_linear")
    linear_check = check_group_linear(W, plan, tolerance=tolerance)
    if not linear_check.passed:
        raise GroupAffineError(
            f"extracted group-linear part failed its defining identity "
            f"(max residual {linear_check.max_residual:.3e}); the field is not group affine")
    return W, U, linear_check
