"""Symmetry classification of vector fields and diffeomorphisms.

A vector field (or map) is classified by how its invariance defect under the
action decomposes:

    strong        defect vanishes at every sampled (g, p)
    weak          defect at each g is the generator field of a single algebra
                  element, recovering a vector field on the group (or a group
                  map for diffeomorphisms)
    partial_only  defect is orbit-tangent at each point but not generated by
                  one algebra element per g
    none          defect leaves the orbit directions somewhere

Certification is at sampled points only; reports record the plan and the
tolerances instead of claiming a proof.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .actions import (GroupAction, ManifoldPoint, TangentVectorM, VectorFieldM,
                      generator_matrix)
from .groups import (AlgebraVector, GroupElement, LieGroupDescriptor, VectorFieldG,
                     check_group_linear, compose, d_left, exp, inverse, log,
                     zero_field_g)
from .reporting import CheckResult, Tolerances, make_check
from .sampling import SamplingPlan

STRONG = "strong"
WEAK = "weak"
PARTIAL_ONLY = "partial_only"
NONE = "none"


class RankDeficiencyError(ValueError):
    """Generator matrix is rank deficient at a sample point."""


class RecoveryError(RuntimeError):
    """Gauss-Newton group-map recovery stagnated; carries the best iterate."""

    def __init__(self, message: str, best: GroupElement, objective: float):
        super().__init__(message)
        self.best = best
        self.objective = objective


@dataclass(frozen=True, eq=False)
class Diffeomorphism:
    manifold: object
    forward: Callable[[ManifoldPoint], ManifoldPoint]
    inverse: Callable[[ManifoldPoint], ManifoldPoint]
    differential: Callable[[TangentVectorM], TangentVectorM] | None = None
    forward_many: Callable[[Sequence[ManifoldPoint]], list] | None = None

    def forward_batch(self, points: Sequence[ManifoldPoint]) -> list:
        if self.forward_many is not None:
            return list(self.forward_many(points))
        return [self.forward(p) for p in points]


@dataclass(frozen=True, eq=False)
class GroupMap:
    group: LieGroupDescriptor
    eval_at: Callable[[GroupElement], GroupElement]
    prefetch: Callable[[Sequence[GroupElement]], None] | None = None

    def eval(self, g: GroupElement) -> GroupElement:
        return self.eval_at(g)

    def prime(self, gs: Sequence[GroupElement]) -> None:
        """Warm any solver cache for a known set of arguments (no-op for
        closed-form maps)."""
        if self.prefetch is not None:
            self.prefetch(gs)


@dataclass(frozen=True, eq=False)
class InvarianceReport:
    classification: str
    recovered_group_field: VectorFieldG | None
    recovered_group_map: GroupMap | None
    checks: dict
    group_velocity_table: tuple = ()
    group_map_table: tuple = ()
    samples: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    notes: tuple = ()

    def to_json_dict(self) -> dict:
        return {
            "classification": self.classification,
            "checks": {name: res.to_dict() for name, res in self.checks.items()},
            "group_velocity_table": [
                {"g_coords": list(gc), "velocity_coords": list(xc)}
                for gc, xc in self.group_velocity_table
            ],
            "group_map_table": [
                {"g": gm, "image": sm} for gm, sm in self.group_map_table
            ],
            "samples": self.samples,
            "tolerances": self.tolerances,
            "notes": list(self.notes),
        }


# ---------------------------------------------------------------------------
# Residual field and group-velocity recovery
# ---------------------------------------------------------------------------

def residual_field(V: VectorFieldM, action: GroupAction, g: GroupElement,
                   p: ManifoldPoint) -> TangentVectorM:
    """Invariance defect of V at (g, p): pull V back through the action at g
    and subtract V. Vanishes identically iff V is strongly invariant."""
    moved = action.apply(g, p)
    pulled = action.d_state(inverse(g), V.eval(moved))
    return TangentVectorM(p, pulled.dir - V.eval(p).dir)


class _VelocitySolver:
    """Pre-factorized least-squares solver for the generator system over a
    fixed point batch; the per-g solve then costs only field evaluations."""

    def __init__(self, V: VectorFieldM, action: GroupAction,
                 points: Sequence[ManifoldPoint], rank_threshold: float = 1e-8):
        if not points:
            raise ValueError("group-velocity solve needs at least one point")
        self.V = V
        self.action = action
        self.points = list(points)
        self.mats = []
        for i, p in enumerate(self.points):
            G = generator_matrix(action, p)
            svals = np.linalg.svd(G, compute_uv=False)
            if svals.size == 0 or svals[-1] < rank_threshold:
                raise RankDeficiencyError(
                    f"action '{action.name}' is not infinitesimally free at sample "
                    f"point {i} (min singular value "
                    f"{svals[-1] if svals.size else 0.0:.3e})")
            self.mats.append(G)
        self.pinv = np.linalg.pinv(np.vstack(self.mats))
        self.v_at_points = [V.eval(p).ambient() for p in self.points]

    def solve(self, g: GroupElement) -> tuple[AlgebraVector, float]:
        g_inv = inverse(g)
        defects = []
        for p, vp in zip(self.points, self.v_at_points):
            pulled = self.action.d_state(g_inv, self.V.eval(self.action.apply(g, p)))
            defects.append(pulled.ambient() - vp)
        x = self.pinv @ np.concatenate(defects)
        worst = max(float(np.linalg.norm(G @ x - r))
                    for G, r in zip(self.mats, defects))
        return AlgebraVector(self.action.group, x), worst


def solve_group_velocity(V: VectorFieldM, action: GroupAction, g: GroupElement,
                         points: Sequence[ManifoldPoint],
                         rank_threshold: float = 1e-8) -> tuple[AlgebraVector, float]:
    """Algebra coordinates whose generator field matches the defect of V at g.

    Stacks one least-squares system over all points; the returned consistency
    residual is the worst per-point mismatch after substituting the joint
    solution. A small residual certifies the defect is the generator field of
    a single algebra element at this g.
    """
    return _VelocitySolver(V, action, points, rank_threshold).solve(g)


def _field_scale(V: VectorFieldM, points: Sequence[ManifoldPoint]) -> float:
    return max(1.0, max(float(np.linalg.norm(V.eval(p).ambient())) for p in points))


def recovered_velocity_field(V: VectorFieldM, action: GroupAction,
                             points: Sequence[ManifoldPoint]) -> VectorFieldG:
    """Materialize the recovered group field: each evaluation solves the
    pre-factorized least-squares system at that group element."""
    solver = _VelocitySolver(V, action, points)

    def eval_at(g: GroupElement):
        xi, _ = solver.solve(g)
        return d_left(g, _tangent_at_identity(xi))

    return VectorFieldG(action.group, eval_at, kind="recovered")


def _tangent_at_identity(xi: AlgebraVector):
    from .groups import algebra_tangent
    return algebra_tangent(xi)


def classify_vector_field(V: VectorFieldM, action: GroupAction, plan: SamplingPlan,
                          tolerances: Tolerances = Tolerances()) -> InvarianceReport:
    """Full classification pipeline for a vector field under an action."""
    tol = tolerances
    gs = plan.group_elements(action.group)
    points = plan.manifold_points(action.manifold)
    scale = _field_scale(V, points)
    notes: list[str] = []
    checks: dict[str, CheckResult] = {}

    defects = {}
    strong_residuals = []
    for g in gs:
        for p in points:
            r = residual_field(V, action, g, p).ambient()
            defects[(id(g), id(p))] = r
            strong_residuals.append(np.linalg.norm(r) / scale)
    checks["strong_residual"] = make_check("strong_residual", strong_residuals, tol.strong)
    if checks["strong_residual"].passed:
        return InvarianceReport(
            STRONG, zero_field_g(action.group), None, checks,
            group_velocity_table=tuple(
                (tuple(log(g).coords), tuple(np.zeros(action.group.algebra_dim))) for g in gs),
            samples=plan.record(), tolerances=tol.to_dict(), notes=tuple(notes))

    gen_mats = {id(p): generator_matrix(action, p) for p in points}
    min_sv = min((np.linalg.svd(G, compute_uv=False)[-1] if min(G.shape) else 0.0)
                 for G in gen_mats.values())
    if min_sv < tol.freeness:
        notes.append(
            f"action not infinitesimally free on the sampled set (min singular value "
            f"{min_sv:.3e}); classification restricted to strong/none")
        return InvarianceReport(NONE, None, None, checks, samples=plan.record(),
                                tolerances=tol.to_dict(), notes=tuple(notes))

    solver = _VelocitySolver(V, action, points)
    velocity_table = []
    consistency = []
    for g in gs:
        xi, worst = solver.solve(g)
        consistency.append(worst / scale)
        velocity_table.append((tuple(log(g).coords), tuple(xi.coords)))
    checks["weak_consistency"] = make_check("weak_consistency", consistency, tol.weak)

    if checks["weak_consistency"].passed:
        W = recovered_velocity_field(V, action, points)
        checks["group_linear"] = check_group_linear(W, plan, tolerance=tol.group_linear)
        return InvarianceReport(
            WEAK, W, None, checks, group_velocity_table=tuple(velocity_table),
            samples=plan.record(), tolerances=tol.to_dict(), notes=tuple(notes))

    # per-point orbit tangency without global consistency -> partial symmetry
    tangency = []
    for g in gs:
        for p in points:
            G = gen_mats[id(p)]
            r = defects[(id(g), id(p))]
            x, *_ = np.linalg.lstsq(G, r, rcond=None)
            tangency.append(np.linalg.norm(G @ x - r) / scale)
    checks["orbit_tangency"] = make_check("orbit_tangency", tangency, tol.orbit)
    label = PARTIAL_ONLY if checks["orbit_tangency"].passed else NONE
    return InvarianceReport(label, None, None, checks,
                            group_velocity_table=tuple(velocity_table),
                            samples=plan.record(), tolerances=tol.to_dict(),
                            notes=tuple(notes))


# ---------------------------------------------------------------------------
# Group-map recovery for diffeomorphisms
# ---------------------------------------------------------------------------

def recover_group_map_at(f: Diffeomorphism, action: GroupAction, g: GroupElement,
                         points: Sequence[ManifoldPoint], init: GroupElement | None = None,
                         max_iterations: int = 50, gradient_tol: float = 1e-12,
                         targets: Sequence[ManifoldPoint] | None = None
                         ) -> tuple[GroupElement, float]:
    """Solve for the group element h with apply(h, p_i) = f(apply(g, f^{-1}(p_i))).

    Gauss-Newton in exponential coordinates about the current iterate,
    initialized at g (near-strong systems have h close to g). Failure to
    descend is evidence the map is not weakly invariant at this g.
    """
    if not action.declared_effective:
        raise ValueError(f"action '{action.name}' is not effective; group-map "
                         "recovery is not well-posed")
    if targets is None:
        targets = f.forward_batch([action.apply(g, f.inverse(p)) for p in points])
    target_vec = np.concatenate([q.ambient() for q in targets])
    group = action.group
    basis_eye = np.eye(group.algebra_dim)

    def residual_vec(h):
        return np.concatenate([action.apply(h, p).ambient() for p in points]) - target_vec

    h = init if init is not None else g
    r = residual_vec(h)
    obj = float(r @ r)
    for _ in range(max_iterations):
        if obj < 1e-28:
            break
        cols = []
        for j in range(group.algebra_dim):
            w = d_left(h, _tangent_at_identity(group.algebra(basis_eye[j])))
            cols.append(np.concatenate([action.d_orbit(p, w).ambient() for p in points]))
        J = np.stack(cols, axis=1)
        grad = J.T @ r
        if np.linalg.norm(grad) < gradient_tol:
            break
        delta, *_ = np.linalg.lstsq(J, -r, rcond=None)
        step = 1.0
        improved = False
        for _ in range(25):
            candidate = compose(h, exp(group.algebra(step * delta)))
            r_new = residual_vec(candidate)
            obj_new = float(r_new @ r_new)
            if obj_new < obj:
                h, r, obj = candidate, r_new, obj_new
                improved = True
                break
            step *= 0.5
        if not improved:
            if np.linalg.norm(grad) > gradient_tol:
                raise RecoveryError(
                    f"group-map recovery stagnated (objective {obj:.3e}, "
                    f"gradient {np.linalg.norm(grad):.3e})", h, obj)
            break
    match = max(float(np.linalg.norm(action.apply(h, p).ambient() - q.ambient()))
                for p, q in zip(points, targets))
    return h, match


def recovered_group_map(f: Diffeomorphism, action: GroupAction,
                        points: Sequence[ManifoldPoint]) -> GroupMap:
    """Group map backed by the recovery solver, with cached point preimages
    and memoized evaluations (each evaluation is otherwise a fresh solve).

    `prefetch` computes the flow targets for many arguments in one batched
    forward pass, which is where nearly all the cost lives. The cache is
    locked so concurrent callers stay observationally pure.
    """
    preimages = [f.inverse(p) for p in points]
    cache: dict[bytes, GroupElement] = {}
    lock = threading.Lock()

    def _key(g: GroupElement) -> bytes:
        return np.ascontiguousarray(g.matrix).tobytes()

    def _solve(g: GroupElement, targets) -> GroupElement:
        h, _ = recover_group_map_at(f, action, g, points, targets=targets)
        return h

    def prefetch(gs: Sequence[GroupElement]) -> None:
        pending = []
        seen = set()
        with lock:
            for g in gs:
                key = _key(g)
                if key not in cache and key not in seen:
                    seen.add(key)
                    pending.append((key, g))
        if not pending:
            return
        starts = [action.apply(g, q) for _, g in pending for q in preimages]
        images = f.forward_batch(starts)
        k = len(preimages)
        solved = {key: _solve(g, images[i * k:(i + 1) * k])
                  for i, (key, g) in enumerate(pending)}
        with lock:
            cache.update(solved)

    def eval_at(g: GroupElement) -> GroupElement:
        key = _key(g)
        with lock:
            if key in cache:
                return cache[key]
        targets = f.forward_batch([action.apply(g, q) for q in preimages])
        h = _solve(g, targets)
        with lock:
            cache.setdefault(key, h)
            return cache[key]

    return GroupMap(action.group, eval_at, prefetch=prefetch)


def classify_diffeomorphism(f: Diffeomorphism, action: GroupAction, plan: SamplingPlan,
                            tolerances: Tolerances = Tolerances()) -> InvarianceReport:
    """Classify a diffeomorphism: strong, weak (with recovered group map), or none."""
    tol = tolerances
    gs = plan.group_elements(action.group)
    points = plan.manifold_points(action.manifold)
    scale = max(1.0, max(float(np.linalg.norm(p.ambient())) for p in points))
    checks: dict[str, CheckResult] = {}
    notes: list[str] = []

    matches, identity_gaps, table = [], [], []
    for g in gs:
        try:
            h, match = recover_group_map_at(f, action, g, points)
        except RecoveryError as err:
            notes.append(f"recovery stagnated at a sampled g: {err}")
            checks["map_match"] = CheckResult("map_match", float("inf"), float("inf"),
                                              len(matches), tol.sigma_match, False)
            return InvarianceReport(NONE, None, None, checks, samples=plan.record(),
                                    tolerances=tol.to_dict(), notes=tuple(notes))
        matches.append(match / scale)
        identity_gaps.append(float(np.linalg.norm(h.matrix - g.matrix)))
        table.append((g.matrix.tolist(), h.matrix.tolist()))
    checks["map_match"] = make_check("map_match", matches, tol.sigma_match)
    if not checks["map_match"].passed:
        return InvarianceReport(NONE, None, None, checks, group_map_table=tuple(table),
                                samples=plan.record(), tolerances=tol.to_dict(),
                                notes=tuple(notes))

    sigma = recovered_group_map(f, action, points)
    checks["identity_gap"] = make_check("identity_gap", identity_gaps, tol.sigma_match)
    auto = check_automorphism(sigma, plan, tolerance=tol.automorphism)
    checks["automorphism"] = auto
    label = STRONG if checks["identity_gap"].passed else WEAK
    return InvarianceReport(label, None, sigma, checks, group_map_table=tuple(table),
                            samples=plan.record(), tolerances=tol.to_dict(),
                            notes=tuple(notes))


def check_automorphism(sigma: GroupMap, plan: SamplingPlan, tolerance: float = 1e-8,
                       invert_count: int = 3) -> CheckResult:
    """Homomorphism, identity-preservation, and invertibility evidence.

    Invertibility solves sigma(x) = y by Gauss-Newton with a finite-difference
    Jacobian; its worst final mismatch is reported alongside the homomorphism
    residual (which is the pass/fail quantity).
    """
    group = sigma.group
    pairs = plan.group_pairs(group)
    e = group.identity()
    sigma.prime([g for g, _ in pairs] + [h for _, h in pairs]
                + [compose(g, h) for g, h in pairs] + [e])
    hom = []
    for g, h in pairs:
        lhs = compose(sigma.eval(g), sigma.eval(h)).matrix
        rhs = sigma.eval(compose(g, h)).matrix
        hom.append(np.linalg.norm(lhs - rhs))
    identity_residual = float(np.linalg.norm(sigma.eval(e).matrix - e.matrix))

    invert_worst = 0.0
    for y in plan.group_elements(group, count=invert_count, salt=7):
        x = _invert_group_map(sigma, y)
        invert_worst = max(invert_worst,
                           float(np.linalg.norm(sigma.eval(x).matrix - y.matrix)))
    return make_check("automorphism", hom, tolerance,
                      extra=(("identity_residual", identity_residual),
                             ("invert_max_residual", invert_worst)))


def _invert_group_map(sigma: GroupMap, y: GroupElement, max_iterations: int = 30,
                      fd_step: float = 1e-6) -> GroupElement:
    group = sigma.group
    basis_eye = np.eye(group.algebra_dim)
    x = y
    r = (sigma.eval(x).matrix - y.matrix).reshape(-1)
    obj = float(r @ r)
    for _ in range(max_iterations):
        if obj < 1e-26:
            break
        probes = []
        for j in range(group.algebra_dim):
            probes.append(compose(x, exp(group.algebra(fd_step * basis_eye[j]))))
            probes.append(compose(x, exp(group.algebra(-fd_step * basis_eye[j]))))
        sigma.prime(probes)
        cols = []
        for j in range(group.algebra_dim):
            plus, minus = sigma.eval(probes[2 * j]), sigma.eval(probes[2 * j + 1])
            cols.append((plus.matrix - minus.matrix).reshape(-1) / (2.0 * fd_step))
        J = np.stack(cols, axis=1)
        delta, *_ = np.linalg.lstsq(J, -r, rcond=None)
        step = 1.0
        improved = False
        for _ in range(20):
            candidate = compose(x, exp(group.algebra(step * delta)))
            r_new = (sigma.eval(candidate).matrix - y.matrix).reshape(-1)
            obj_new = float(r_new @ r_new)
            if obj_new < obj:
                x, r, obj = candidate, r_new, obj_new
                improved = True
                break
            step *= 0.5
        if not improved:
            break
    return x
