"""Group actions on embedded manifolds, their differentials, and generators.

Every builtin action supplies analytic differentials in both slots; finite
differences are used only to cross-check them, never as the primary path.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .groups import (AlgebraVector, GroupElement, LieGroupDescriptor, TangentVectorG,
                     algebra_tangent, compose, d_left)
from .reporting import CheckResult, make_check
from .sampling import SamplingPlan


@dataclass(frozen=True, eq=False)
class ManifoldDescriptor:
    """Embedded manifold: a Euclidean space or a matrix group's underlying set."""

    kind: str                      # euclidean | matrix_group
    shape: tuple[int, ...]         # (N,) for vectors, (m, m) for matrices
    group: LieGroupDescriptor | None = None
    constraint: Callable[[np.ndarray], float] | None = None

    @property
    def ambient_dim(self) -> int:
        return int(np.prod(self.shape))

    def check_point(self, value: np.ndarray, tolerance: float = 1e-9) -> float:
        residual = self.constraint(value) if self.constraint is not None else 0.0
        if residual > tolerance:
            raise ValueError(f"point violates manifold constraint: residual {residual:.3e}")
        return residual


def euclidean(n: int) -> ManifoldDescriptor:
    return ManifoldDescriptor("euclidean", (n,))


def group_manifold(group: LieGroupDescriptor) -> ManifoldDescriptor:
    return ManifoldDescriptor("matrix_group", (group.matrix_dim, group.matrix_dim),
                              group=group, constraint=group.membership_residual)


@dataclass(frozen=True, eq=False)
class ManifoldPoint:
    manifold: ManifoldDescriptor
    value: np.ndarray

    def __post_init__(self):
        value = np.asarray(self.value, dtype=float)
        if value.shape != self.manifold.shape:
            raise ValueError(f"point shape {value.shape} != manifold shape {self.manifold.shape}")
        object.__setattr__(self, "value", value)

    def ambient(self) -> np.ndarray:
        return self.value.reshape(-1)


@dataclass(frozen=True, eq=False)
class TangentVectorM:
    base: ManifoldPoint
    dir: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "dir", np.asarray(self.dir, dtype=float))

    def ambient(self) -> np.ndarray:
        return self.dir.reshape(-1)


@dataclass(frozen=True, eq=False)
class GroupAction:
    """Smooth left action of `group` on `manifold` with analytic differentials.

    d_state pushes a tangent on M through p -> apply(g, p);
    d_orbit pushes a tangent on G through g -> apply(g, p) (the orbit map).
    """

    name: str
    group: LieGroupDescriptor
    manifold: ManifoldDescriptor
    apply_fn: Callable[[GroupElement, ManifoldPoint], ManifoldPoint]
    d_state_fn: Callable[[GroupElement, TangentVectorM], TangentVectorM]
    d_orbit_fn: Callable[[ManifoldPoint, TangentVectorG], TangentVectorM]
    declared_free: bool
    declared_effective: bool
    declared_proper: bool = True
    params: tuple = ()

    def apply(self, g: GroupElement, p: ManifoldPoint) -> ManifoldPoint:
        return self.apply_fn(g, p)

    def d_state(self, g: GroupElement, v: TangentVectorM) -> TangentVectorM:
        return self.d_state_fn(g, v)

    def d_orbit(self, p: ManifoldPoint, w: TangentVectorG) -> TangentVectorM:
        return self.d_orbit_fn(p, w)


# ---------------------------------------------------------------------------
# Builtin actions
# ---------------------------------------------------------------------------

def translation_action(n_ambient: int, axes: Sequence[int]) -> GroupAction:
    """R^k acting on R^N by translating the listed coordinate axes."""
    from .groups import translation_group
    axes = tuple(axes)
    if len(set(axes)) != len(axes) or any(a < 0 or a >= n_ambient for a in axes):
        raise ValueError(f"axes {axes} invalid for ambient dimension {n_ambient}")
    group = translation_group(len(axes))
    manifold = euclidean(n_ambient)
    k = len(axes)
    B = np.zeros((n_ambient, k))
    for j, a in enumerate(axes):
        B[a, j] = 1.0

    def apply_fn(g, p):
        return ManifoldPoint(manifold, p.value + B @ g.matrix[:k, k])

    def d_state_fn(g, v):
        return TangentVectorM(apply_fn(g, v.base), v.dir.copy())

    def d_orbit_fn(p, w):
        return TangentVectorM(apply_fn(w.base, p), B @ w.matrix[:k, k])

    return GroupAction(f"translation(axes={list(axes)})", group, manifold,
                       apply_fn, d_state_fn, d_orbit_fn,
                       declared_free=True, declared_effective=True,
                       params=(("kind", "translation"), ("axes", axes)))


def rotation_action(group: LieGroupDescriptor) -> GroupAction:
    """SO(n) rotating R^n about the origin. Effective but not free."""
    if group.kind not in ("so2", "so3"):
        raise ValueError("rotation_action expects SO(2) or SO(3)")
    n = group.matrix_dim
    manifold = euclidean(n)

    def apply_fn(g, p):
        return ManifoldPoint(manifold, g.matrix @ p.value)

    def d_state_fn(g, v):
        return TangentVectorM(apply_fn(g, v.base), g.matrix @ v.dir)

    def d_orbit_fn(p, w):
        return TangentVectorM(apply_fn(w.base, p), w.matrix @ p.value)

    # SO(2) fixes only the origin, so it is free on R^2 minus the origin;
    # SO(3) fixes every axis and is never free on R^3.
    return GroupAction(f"rotation({group.name})", group, manifold,
                       apply_fn, d_state_fn, d_orbit_fn,
                       declared_free=(group.kind == "so2"), declared_effective=True,
                       params=(("kind", "rotation"),))


def left_action(group: LieGroupDescriptor) -> GroupAction:
    """The group acting on itself by left multiplication. Free and transitive."""
    manifold = group_manifold(group)

    def apply_fn(g, p):
        return ManifoldPoint(manifold, g.matrix @ p.value)

    def d_state_fn(g, v):
        return TangentVectorM(apply_fn(g, v.base), g.matrix @ v.dir)

    def d_orbit_fn(p, w):
        return TangentVectorM(apply_fn(w.base, p), w.matrix @ p.value)

    return GroupAction(f"left({group.name})", group, manifold,
                       apply_fn, d_state_fn, d_orbit_fn,
                       declared_free=True, declared_effective=True,
                       params=(("kind", "left"),))


def special_euclidean_action(group: LieGroupDescriptor) -> GroupAction:
    """SE(n) acting on R^n by rigid motions. Effective, transitive, not free."""
    if group.kind not in ("se2", "se3"):
        raise ValueError("special_euclidean_action expects SE(2) or SE(3)")
    n = group.matrix_dim - 1
    manifold = euclidean(n)

    def apply_fn(g, p):
        return ManifoldPoint(manifold, g.matrix[:n, :n] @ p.value + g.matrix[:n, n])

    def d_state_fn(g, v):
        return TangentVectorM(apply_fn(g, v.base), g.matrix[:n, :n] @ v.dir)

    def d_orbit_fn(p, w):
        return TangentVectorM(apply_fn(w.base, p), w.matrix[:n, :n] @ p.value + w.matrix[:n, n])

    return GroupAction(f"rigid({group.name})", group, manifold,
                       apply_fn, d_state_fn, d_orbit_fn,
                       declared_free=False, declared_effective=True,
                       params=(("kind", "rigid"),))


def scaling_action(n_ambient: int) -> GroupAction:
    """(R, +) acting on R^N by p -> e^s p. Free away from the origin."""
    from .groups import translation_group
    group = translation_group(1)
    manifold = euclidean(n_ambient)

    def apply_fn(g, p):
        return ManifoldPoint(manifold, np.exp(g.matrix[0, 1]) * p.value)

    def d_state_fn(g, v):
        return TangentVectorM(apply_fn(g, v.base), np.exp(g.matrix[0, 1]) * v.dir)

    def d_orbit_fn(p, w):
        s = w.base.matrix[0, 1]
        return TangentVectorM(apply_fn(w.base, p), w.matrix[0, 1] * np.exp(s) * p.value)

    return GroupAction(f"scaling(R^{n_ambient})", group, manifold,
                       apply_fn, d_state_fn, d_orbit_fn,
                       declared_free=True, declared_effective=True,
                       params=(("kind", "scaling"),))


# ---------------------------------------------------------------------------
# Generators and action checks
# ---------------------------------------------------------------------------

def infinitesimal_generator(action: GroupAction, xi: AlgebraVector,
                            p: ManifoldPoint) -> TangentVectorM:
    """Tangent at p of t -> apply(exp(t xi), p), evaluated analytically."""
    return action.d_orbit(p, algebra_tangent(xi))


def generator_matrix(action: GroupAction, p: ManifoldPoint) -> np.ndarray:
    """Ambient (N x d) matrix whose column j is the generator of basis_j at p."""
    group = action.group
    cols = []
    for j in range(group.algebra_dim):
        coords = np.zeros(group.algebra_dim)
        coords[j] = 1.0
        cols.append(infinitesimal_generator(action, AlgebraVector(group, coords), p).ambient())
    return np.stack(cols, axis=1)


@dataclass(frozen=True)
class FreenessReport:
    passed: bool
    min_singular_value: float
    mean_singular_value: float
    count: int
    threshold: float


def check_free(action: GroupAction, plan: SamplingPlan,
               threshold: float = 1e-8) -> FreenessReport:
    """Infinitesimal freeness: the generator matrix has full rank at samples.

    This is exactly the hypothesis the least-squares recovery needs; it does
    not certify set-theoretic freeness.
    """
    mins = []
    for p in plan.manifold_points(action.manifold):
        svals = np.linalg.svd(generator_matrix(action, p), compute_uv=False)
        mins.append(float(svals[-1]) if svals.size else 0.0)
    overall = min(mins) if mins else 0.0
    return FreenessReport(overall >= threshold, overall,
                          float(np.mean(mins)) if mins else 0.0, len(mins), threshold)


def check_action_axioms(action: GroupAction, plan: SamplingPlan,
                        tolerance: float = 1e-10) -> CheckResult:
    """Identity and compatibility laws at sampled (g, h, p)."""
    e = action.group.identity()
    points = plan.manifold_points(action.manifold)
    pairs = plan.group_pairs(action.group)
    residuals = []
    for p in points:
        residuals.append(np.linalg.norm(action.apply(e, p).ambient() - p.ambient()))
    for (g, h), p in zip(pairs, itertools.cycle(points)):
        lhs = action.apply(g, action.apply(h, p)).ambient()
        rhs = action.apply(compose(g, h), p).ambient()
        residuals.append(np.linalg.norm(lhs - rhs))
    return make_check("action_axioms", residuals, tolerance)


def check_differentials(action: GroupAction, plan: SamplingPlan,
                        tolerance: float = 1e-5, fd_step: float = 1e-5) -> CheckResult:
    """Cross-check both analytic differentials against central differences."""
    rng = np.random.default_rng(plan.seed)
    gs = plan.group_elements(action.group, count=4)
    points = plan.manifold_points(action.manifold, count=4)
    basis_dirs = np.eye(action.group.algebra_dim)
    residuals = []
    for g, p in zip(gs, points):
        # state slot: perturb p along a random ambient direction
        direction = rng.standard_normal(action.manifold.shape)
        direction /= np.linalg.norm(direction)
        analytic = action.d_state(g, TangentVectorM(p, direction)).ambient()
        plus = action.apply(g, ManifoldPoint(p.manifold, p.value + fd_step * direction))
        minus = action.apply(g, ManifoldPoint(p.manifold, p.value - fd_step * direction))
        fd = (plus.ambient() - minus.ambient()) / (2.0 * fd_step)
        residuals.append(np.linalg.norm(analytic - fd) / max(1.0, np.linalg.norm(analytic)))
        # group slot: perturb g along each basis direction
        from .groups import exp
        for j in range(action.group.algebra_dim):
            w = d_left(g, algebra_tangent(action.group.algebra(basis_dirs[j])))
            analytic = action.d_orbit(p, w).ambient()
            g_plus = compose(g, exp(action.group.algebra(fd_step * basis_dirs[j])))
            g_minus = compose(g, exp(action.group.algebra(-fd_step * basis_dirs[j])))
            fd = (action.apply(g_plus, p).ambient()
                  - action.apply(g_minus, p).ambient()) / (2.0 * fd_step)
            residuals.append(np.linalg.norm(analytic - fd) / max(1.0, np.linalg.norm(analytic)))
    return make_check("action_differentials", residuals, tolerance)


# ---------------------------------------------------------------------------
# Vector fields on the manifold
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class VectorFieldM:
    """Vector field on M: p -> TangentVectorM with base p.

    Parametric families evaluate as raw array expressions so integrators may
    probe slightly off-manifold stage points; they may also supply
    `eval_batch` over stacked values for batched integration.
    """

    manifold: ManifoldDescriptor
    eval_at: Callable[[ManifoldPoint], TangentVectorM]
    kind: str = "custom"
    eval_batch: Callable[[np.ndarray], np.ndarray] | None = None

    def eval(self, p: ManifoldPoint) -> TangentVectorM:
        return self.eval_at(p)


def affine_field(manifold: ManifoldDescriptor, A: np.ndarray, b: np.ndarray) -> VectorFieldM:
    """V(p) = A p + b on R^N."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    n = manifold.shape[0]
    if A.shape != (n, n) or b.shape != (n,):
        raise ValueError(f"affine_field: need A {n}x{n} and b length {n}, "
                         f"got {A.shape} and {b.shape}")
    return VectorFieldM(manifold, lambda p: TangentVectorM(p, A @ p.value + b),
                        kind="affine", eval_batch=lambda vals: vals @ A.T + b)


def group_affine_field_m(group: LieGroupDescriptor, D: AlgebraVector,
                         U: AlgebraVector) -> VectorFieldM:
    """V(g) = D g - g D + g U on the group manifold."""
    manifold = group_manifold(group)
    D_mat, U_mat = D.matrix, U.matrix
    return VectorFieldM(
        manifold,
        lambda p: TangentVectorM(p, D_mat @ p.value - p.value @ D_mat + p.value @ U_mat),
        kind="group_affine",
        eval_batch=lambda vals: D_mat @ vals - vals @ D_mat + vals @ U_mat)


def left_invariant_field_m(group: LieGroupDescriptor, xi: AlgebraVector) -> VectorFieldM:
    manifold = group_manifold(group)
    xi_mat = xi.matrix
    return VectorFieldM(manifold, lambda p: TangentVectorM(p, p.value @ xi_mat),
                        kind="left_invariant", eval_batch=lambda vals: vals @ xi_mat)


def cascade_synthetic_field(n_ambient: int, driven_axis: int, F: np.ndarray,
                            c: float, h: np.ndarray) -> VectorFieldM:
    """Quotient-linear field with one driven axis:

    along the quotient axes q:  dq/dt = F q
    along the driven axis z:    dz/dt = c z + h . q
    """
    manifold = euclidean(n_ambient)
    q_axes = [i for i in range(n_ambient) if i != driven_axis]
    F = np.asarray(F, dtype=float)
    h = np.asarray(h, dtype=float)
    k = len(q_axes)
    if F.shape != (k, k) or h.shape != (k,):
        raise ValueError(f"cascade_synthetic_field: need F {k}x{k} and h length {k}, "
                         f"got {F.shape} and {h.shape}")

    def eval_at(p):
        q = p.value[q_axes]
        out = np.zeros(n_ambient)
        out[q_axes] = F @ q
        out[driven_axis] = c * p.value[driven_axis] + h @ q
        return TangentVectorM(p, out)

    def eval_batch(vals):
        q = vals[:, q_axes]
        out = np.zeros_like(vals)
        out[:, q_axes] = q @ F.T
        out[:, driven_axis] = c * vals[:, driven_axis] + q @ h
        return out

    return VectorFieldM(manifold, eval_at, kind="cascade_synthetic", eval_batch=eval_batch)


def radial_scaled_field(manifold: ManifoldDescriptor) -> VectorFieldM:
    """V(p) = |p| p: orbit-tangent under scaling at every point, but with a
    point-dependent rate, so only partially symmetric."""
    return VectorFieldM(
        manifold,
        lambda p: TangentVectorM(p, np.linalg.norm(p.value) * p.value),
        kind="radial_scaled",
        eval_batch=lambda vals: np.linalg.norm(vals, axis=1, keepdims=True) * vals)


def field_from_group_field(W) -> VectorFieldM:
    """Lift a VectorFieldG to a field on the group manifold.

    Evaluation constructs validated group elements, so integrate it with a
    group scheme (exp-based), not an ambient one.
    """
    manifold = group_manifold(W.group)

    def eval_at(p):
        g = GroupElement(W.group, p.value)
        return TangentVectorM(p, W.eval(g).matrix)

    return VectorFieldM(manifold, eval_at, kind=f"lifted_{W.kind}")
