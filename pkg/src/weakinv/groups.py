"""Matrix Lie groups: elements, algebra coordinates, exp/log, translations.

All groups are embedded matrix groups so that composition is a plain matrix
product. Translations and the special Euclidean groups use homogeneous
(n+1)x(n+1) matrices. Every group fixes an ordered algebra basis, giving
reproducible coordinates for algebra elements across runs:

    translation(n): E_i has a 1 in slot (i, n)                  -> coords (t_0..t_{n-1})
    so2:            J = [[0,-1],[1,0]]                          -> coords (theta,)
    so3:            skew generators about x, y, z, in that order
    se2:            (d/dx, d/dy, J-block)                       -> coords (tx, ty, theta)
    se3:            translations x,y,z then rotations x,y,z     -> coords (t, omega)
    product:        factor bases embedded block-diagonally, coords concatenated
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .reporting import CheckResult, make_check
from .sampling import SamplingPlan

_SMALL_ANGLE = 1e-8


class MembershipError(ValueError):
    """Matrix violates the group's defining constraints beyond tolerance."""


class DescriptorMismatchError(ValueError):
    """Operands belong to different groups."""


class CutLocusError(ValueError):
    """Logarithm requested at or too close to the cut locus."""


class AlgebraMembershipError(ValueError):
    """Matrix does not lie in the span of the algebra basis within tolerance."""


@dataclass(frozen=True, eq=False)
class LieGroupDescriptor:
    """A fixed matrix Lie group with an ordered algebra basis."""

    name: str
    kind: str                      # translation | so2 | so3 | se2 | se3 | product
    matrix_dim: int
    algebra_dim: int
    basis: tuple[np.ndarray, ...]
    membership_tolerance: float = 1e-9
    factors: tuple["LieGroupDescriptor", ...] = ()

    def __post_init__(self):
        stack = np.stack([b.reshape(-1) for b in self.basis], axis=1)
        if np.linalg.matrix_rank(stack) != self.algebra_dim:
            raise ValueError(f"{self.name}: algebra basis is not linearly independent")
        object.__setattr__(self, "_basis_flat", stack)          # (m*m, d)
        object.__setattr__(self, "_basis_pinv", np.linalg.pinv(stack))
        object.__setattr__(self, "_basis_stack", np.stack(self.basis))

    # -- elements ----------------------------------------------------------

    def identity(self) -> "GroupElement":
        return GroupElement(self, np.eye(self.matrix_dim))

    def element(self, matrix: np.ndarray) -> "GroupElement":
        return GroupElement(self, np.asarray(matrix, dtype=float))

    def membership_residual(self, matrix: np.ndarray) -> float:
        return _membership_residual(self, np.asarray(matrix, dtype=float))

    # -- algebra -----------------------------------------------------------

    def algebra(self, coords: Sequence[float]) -> "AlgebraVector":
        return AlgebraVector(self, np.asarray(coords, dtype=float))

    def algebra_matrix(self, coords: np.ndarray) -> np.ndarray:
        m = self.matrix_dim
        return (self._basis_flat @ np.asarray(coords, dtype=float)).reshape(m, m)

    def algebra_coords(self, matrix: np.ndarray, tolerance: float | None = None) -> np.ndarray:
        """Coordinates of `matrix` in the algebra basis; errors if off the span."""
        vec = np.asarray(matrix, dtype=float).reshape(-1)
        coords = self._basis_pinv @ vec
        residual = float(np.linalg.norm(self._basis_flat @ coords - vec))
        tol = self.membership_tolerance if tolerance is None else tolerance
        scale = max(1.0, float(np.linalg.norm(vec)))
        if residual > tol * scale:
            raise AlgebraMembershipError(
                f"{self.name}: matrix is off the algebra span (residual {residual:.3e})")
        return coords

    def algebra_residual(self, matrix: np.ndarray) -> float:
        vec = np.asarray(matrix, dtype=float).reshape(-1)
        coords = self._basis_pinv @ vec
        return float(np.linalg.norm(self._basis_flat @ coords - vec))


@dataclass(frozen=True, eq=False)
class GroupElement:
    group: LieGroupDescriptor
    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", np.asarray(self.matrix, dtype=float))
        residual = _membership_residual(self.group, self.matrix)
        if residual > self.group.membership_tolerance:
            raise MembershipError(
                f"{self.group.name}: membership residual {residual:.3e} exceeds "
                f"tolerance {self.group.membership_tolerance:.1e}")


@dataclass(frozen=True, eq=False)
class AlgebraVector:
    group: LieGroupDescriptor
    coords: np.ndarray

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        if coords.shape != (self.group.algebra_dim,):
            raise ValueError(
                f"{self.group.name}: expected {self.group.algebra_dim} coords, "
                f"got shape {coords.shape}")
        object.__setattr__(self, "coords", coords)

    @property
    def matrix(self) -> np.ndarray:
        return self.group.algebra_matrix(self.coords)

    def norm(self) -> float:
        return float(np.linalg.norm(self.coords))


@dataclass(frozen=True, eq=False)
class TangentVectorG:
    """Tangent vector on the group, stored as an ambient matrix at `base`."""

    base: GroupElement
    matrix: np.ndarray


def _same_group(a: LieGroupDescriptor, b: LieGroupDescriptor) -> bool:
    return a is b or (a.name == b.name and a.matrix_dim == b.matrix_dim
                      and a.algebra_dim == b.algebra_dim)


def _require_same_group(a: LieGroupDescriptor, b: LieGroupDescriptor):
    if not _same_group(a, b):
        raise DescriptorMismatchError(f"group mismatch: {a.name} vs {b.name}")


# ---------------------------------------------------------------------------
# Builtin group constructors
# ---------------------------------------------------------------------------

def _skew3(w) -> np.ndarray:
    wx, wy, wz = w
    return np.array([[0.0, -wz, wy], [wz, 0.0, -wx], [-wy, wx, 0.0]])


def _vee3(S: np.ndarray) -> np.ndarray:
    return np.array([S[2, 1], S[0, 2], S[1, 0]])


@functools.lru_cache(maxsize=None)
def translation_group(n: int) -> LieGroupDescriptor:
    """(R^n, +) as homogeneous (n+1)x(n+1) matrices [[I, t], [0, 1]]."""
    basis = []
    for i in range(n):
        E = np.zeros((n + 1, n + 1))
        E[i, n] = 1.0
        basis.append(E)
    return LieGroupDescriptor(f"T({n})", "translation", n + 1, n, tuple(basis))


@functools.lru_cache(maxsize=None)
def so2() -> LieGroupDescriptor:
    J = np.array([[0.0, -1.0], [1.0, 0.0]])
    return LieGroupDescriptor("SO(2)", "so2", 2, 1, (J,))


@functools.lru_cache(maxsize=None)
def so3() -> LieGroupDescriptor:
    basis = tuple(_skew3(np.eye(3)[i]) for i in range(3))
    return LieGroupDescriptor("SO(3)", "so3", 3, 3, basis)


@functools.lru_cache(maxsize=None)
def se2() -> LieGroupDescriptor:
    e1 = np.zeros((3, 3)); e1[0, 2] = 1.0
    e2 = np.zeros((3, 3)); e2[1, 2] = 1.0
    e3 = np.zeros((3, 3)); e3[0, 1] = -1.0; e3[1, 0] = 1.0
    return LieGroupDescriptor("SE(2)", "se2", 3, 3, (e1, e2, e3))


@functools.lru_cache(maxsize=None)
def se3() -> LieGroupDescriptor:
    basis = []
    for i in range(3):
        E = np.zeros((4, 4))
        E[i, 3] = 1.0
        basis.append(E)
    for i in range(3):
        E = np.zeros((4, 4))
        E[:3, :3] = _skew3(np.eye(3)[i])
        basis.append(E)
    return LieGroupDescriptor("SE(3)", "se3", 4, 6, tuple(basis))


def direct_product(*groups: LieGroupDescriptor) -> LieGroupDescriptor:
    """Block-diagonal product of matrix groups."""
    if len(groups) < 2:
        raise ValueError("direct_product needs at least two factors")
    dims = [g.matrix_dim for g in groups]
    total = sum(dims)
    offsets = np.cumsum([0] + dims)
    basis = []
    for gi, g in enumerate(groups):
        for b in g.basis:
            E = np.zeros((total, total))
            o = offsets[gi]
            E[o:o + g.matrix_dim, o:o + g.matrix_dim] = b
            basis.append(E)
    name = " x ".join(g.name for g in groups)
    return LieGroupDescriptor(name, "product", total, sum(g.algebra_dim for g in groups),
                              tuple(basis), factors=tuple(groups))


def _product_blocks(group: LieGroupDescriptor):
    offsets = np.cumsum([0] + [g.matrix_dim for g in group.factors])
    return list(zip(group.factors, offsets[:-1], offsets[1:]))


# ---------------------------------------------------------------------------
# Membership
# ---------------------------------------------------------------------------

def _det_small(R: np.ndarray) -> float:
    # closed forms keep element validation off the hot-path profiler
    if R.shape[0] == 2:
        a, b, c, d = R.ravel().tolist()
        return a * d - b * c
    if R.shape[0] == 3:
        a, b, c, d, e, f, g, h, i = R.ravel().tolist()
        return a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g)
    return float(np.linalg.det(R))


def _rotation_residual(R: np.ndarray) -> float:
    n = R.shape[0]
    gram = R.T @ R
    ortho = math.sqrt(float(((gram - np.eye(n)) ** 2).sum()))
    return ortho + abs(_det_small(R) - 1.0)


def _homogeneous_row_residual(M: np.ndarray) -> float:
    n = M.shape[0] - 1
    row = M[n, :].copy()
    row[n] -= 1.0
    return math.sqrt(float((row ** 2).sum()))


def _membership_residual(group: LieGroupDescriptor, M: np.ndarray) -> float:
    m = group.matrix_dim
    if M.shape != (m, m):
        raise MembershipError(f"{group.name}: expected {m}x{m} matrix, got {M.shape}")
    kind = group.kind
    if kind == "translation":
        n = m - 1
        block = math.sqrt(float(((M[:n, :n] - np.eye(n)) ** 2).sum()))
        return block + _homogeneous_row_residual(M)
    if kind in ("so2", "so3"):
        return _rotation_residual(M)
    if kind in ("se2", "se3"):
        n = m - 1
        return _rotation_residual(M[:n, :n]) + _homogeneous_row_residual(M)
    if kind == "product":
        return max(_membership_residual(g, M[o:p, o:p]) for g, o, p in _product_blocks(group))
    raise ValueError(f"unknown group kind '{kind}'")


def project_to_group(group: LieGroupDescriptor, M: np.ndarray) -> np.ndarray:
    """Nearest group member: polar projection of rotation blocks, exact structure
    for homogeneous rows. Used by ambient integrators to cancel drift."""
    M = np.asarray(M, dtype=float)
    kind = group.kind
    if kind == "translation":
        n = group.matrix_dim - 1
        out = np.eye(n + 1)
        out[:n, n] = M[:n, n]
        return out
    if kind in ("so2", "so3"):
        return _polar_rotation(M)
    if kind in ("se2", "se3"):
        n = group.matrix_dim - 1
        out = np.eye(n + 1)
        out[:n, :n] = _polar_rotation(M[:n, :n])
        out[:n, n] = M[:n, n]
        return out
    if kind == "product":
        out = M.copy()
        for g, o, p in _product_blocks(group):
            out[o:p, o:p] = project_to_group(g, M[o:p, o:p])
            out[o:p, p:] = 0.0
            out[p:, o:p] = 0.0
        return out
    raise ValueError(f"unknown group kind '{kind}'")


def _polar_rotation(A: np.ndarray) -> np.ndarray:
    U, _, Vt = np.linalg.svd(A)
    R = U @ Vt
    if np.linalg.det(R) < 0:
        U = U.copy()
        U[:, -1] = -U[:, -1]
        R = U @ Vt
    return R


# ---------------------------------------------------------------------------
# Group operations
# ---------------------------------------------------------------------------

def compose(a: GroupElement, b: GroupElement) -> GroupElement:
    _require_same_group(a.group, b.group)
    return GroupElement(a.group, a.matrix @ b.matrix)


def _inverse_matrix(group: LieGroupDescriptor, M: np.ndarray) -> np.ndarray:
    kind = group.kind
    if kind in ("so2", "so3"):
        return M.T.copy()
    if kind in ("se2", "se3", "translation"):
        n = group.matrix_dim - 1
        R = M[:n, :n]
        out = np.eye(n + 1)
        out[:n, :n] = R.T
        out[:n, n] = -R.T @ M[:n, n]
        return out
    if kind == "product":
        out = np.eye(group.matrix_dim)
        for fac, o, p in _product_blocks(group):
            out[o:p, o:p] = _inverse_matrix(fac, M[o:p, o:p])
        return out
    return np.linalg.inv(M)


def inverse(g: GroupElement) -> GroupElement:
    """Closed-form inverse per group kind (transpose for rotations, etc.)."""
    return GroupElement(g.group, _inverse_matrix(g.group, g.matrix))


def exp(xi: AlgebraVector) -> GroupElement:
    """Group exponential via closed-form per-kind formulas."""
    return GroupElement(xi.group, _exp_matrix(xi.group, xi.coords))


def _exp_matrix(group: LieGroupDescriptor, coords: np.ndarray) -> np.ndarray:
    kind = group.kind
    if kind == "translation":
        n = group.matrix_dim - 1
        M = np.eye(n + 1)
        M[:n, n] = coords
        return M
    if kind == "so2":
        th = coords[0]
        c, s = math.cos(th), math.sin(th)
        return np.array([[c, -s], [s, c]])
    if kind == "so3":
        return _rodrigues(coords)
    if kind == "se2":
        v, th = coords[:2], coords[2]
        M = np.eye(3)
        c, s = math.cos(th), math.sin(th)
        M[:2, :2] = [[c, -s], [s, c]]
        M[:2, 2] = _se2_v_matrix(th) @ v
        return M
    if kind == "se3":
        v, w = coords[:3], coords[3:]
        M = np.eye(4)
        M[:3, :3] = _rodrigues(w)
        M[:3, 3] = _se3_v_matrix(w) @ v
        return M
    if kind == "product":
        M = np.eye(group.matrix_dim)
        k = 0
        for fac, o, p in _product_blocks(group):
            M[o:p, o:p] = _exp_matrix(fac, coords[k:k + fac.algebra_dim])
            k += fac.algebra_dim
        return M
    raise ValueError(f"unknown group kind '{kind}'")


def _rodrigues(w: np.ndarray) -> np.ndarray:
    th = float(np.linalg.norm(w))
    K = _skew3(w)
    if th < _SMALL_ANGLE:
        # 2-term series keeps full double precision for tiny angles
        return np.eye(3) + K + 0.5 * (K @ K)
    return np.eye(3) + (math.sin(th) / th) * K + ((1.0 - math.cos(th)) / th ** 2) * (K @ K)


def _se2_v_matrix(th: float) -> np.ndarray:
    if abs(th) < _SMALL_ANGLE:
        a = 1.0 - th * th / 6.0
        b = th / 2.0 - th ** 3 / 24.0
    else:
        a = math.sin(th) / th
        b = (1.0 - math.cos(th)) / th
    return np.array([[a, -b], [b, a]])


def _se3_v_matrix(w: np.ndarray) -> np.ndarray:
    th = float(np.linalg.norm(w))
    K = _skew3(w)
    if th < _SMALL_ANGLE:
        return np.eye(3) + 0.5 * K + (K @ K) / 6.0
    a = (1.0 - math.cos(th)) / th ** 2
    b = (th - math.sin(th)) / th ** 3
    return np.eye(3) + a * K + b * (K @ K)


def _exp_matrix_batch(group: LieGroupDescriptor, coords: np.ndarray) -> np.ndarray:
    """Vectorized exponential: coords (B, d) -> matrices (B, m, m)."""
    coords = np.asarray(coords, dtype=float)
    B = coords.shape[0]
    kind = group.kind
    if kind == "translation":
        n = group.matrix_dim - 1
        out = np.broadcast_to(np.eye(n + 1), (B, n + 1, n + 1)).copy()
        out[:, :n, n] = coords
        return out
    if kind == "so2":
        th = coords[:, 0]
        c, s = np.cos(th), np.sin(th)
        out = np.empty((B, 2, 2))
        out[:, 0, 0] = c; out[:, 0, 1] = -s
        out[:, 1, 0] = s; out[:, 1, 1] = c
        return out
    if kind == "so3":
        return _rodrigues_batch(coords)
    if kind == "se2":
        th = coords[:, 2]
        out = np.broadcast_to(np.eye(3), (B, 3, 3)).copy()
        c, s = np.cos(th), np.sin(th)
        out[:, 0, 0] = c; out[:, 0, 1] = -s
        out[:, 1, 0] = s; out[:, 1, 1] = c
        small = np.abs(th) < _SMALL_ANGLE
        th_safe = np.where(small, 1.0, th)
        a = np.where(small, 1.0 - th * th / 6.0, np.sin(th_safe) / th_safe)
        b = np.where(small, th / 2.0 - th ** 3 / 24.0, (1.0 - np.cos(th_safe)) / th_safe)
        out[:, 0, 2] = a * coords[:, 0] - b * coords[:, 1]
        out[:, 1, 2] = b * coords[:, 0] + a * coords[:, 1]
        return out
    if kind == "se3":
        out = np.broadcast_to(np.eye(4), (B, 4, 4)).copy()
        w = coords[:, 3:]
        out[:, :3, :3] = _rodrigues_batch(w)
        th = np.linalg.norm(w, axis=1)
        small = th < _SMALL_ANGLE
        th_safe = np.where(small, 1.0, th)
        a = np.where(small, 0.5 - th ** 2 / 24.0, (1.0 - np.cos(th_safe)) / th_safe ** 2)
        b = np.where(small, 1.0 / 6.0 - th ** 2 / 120.0,
                     (th_safe - np.sin(th_safe)) / th_safe ** 3)
        K = _skew3_batch(w)
        V = np.eye(3) + a[:, None, None] * K + b[:, None, None] * (K @ K)
        out[:, :3, 3] = np.einsum("bij,bj->bi", V, coords[:, :3])
        return out
    if kind == "product":
        out = np.broadcast_to(np.eye(group.matrix_dim),
                              (B, group.matrix_dim, group.matrix_dim)).copy()
        k = 0
        for fac, o, p in _product_blocks(group):
            out[:, o:p, o:p] = _exp_matrix_batch(fac, coords[:, k:k + fac.algebra_dim])
            k += fac.algebra_dim
        return out
    raise ValueError(f"unknown group kind '{kind}'")


def _skew3_batch(w: np.ndarray) -> np.ndarray:
    out = np.zeros((w.shape[0], 3, 3))
    out[:, 0, 1] = -w[:, 2]; out[:, 0, 2] = w[:, 1]
    out[:, 1, 0] = w[:, 2]; out[:, 1, 2] = -w[:, 0]
    out[:, 2, 0] = -w[:, 1]; out[:, 2, 1] = w[:, 0]
    return out


def _rodrigues_batch(w: np.ndarray) -> np.ndarray:
    th = np.linalg.norm(w, axis=1)
    small = th < _SMALL_ANGLE
    th_safe = np.where(small, 1.0, th)
    a = np.where(small, 1.0, np.sin(th_safe) / th_safe)
    b = np.where(small, 0.5, (1.0 - np.cos(th_safe)) / th_safe ** 2)
    K = _skew3_batch(w)
    return np.eye(3) + a[:, None, None] * K + b[:, None, None] * (K @ K)


def _membership_residual_batch(group: LieGroupDescriptor, Ms: np.ndarray) -> np.ndarray:
    """Vectorized membership residuals for a stack of candidate matrices."""
    kind = group.kind
    m = group.matrix_dim
    if kind == "translation":
        n = m - 1
        block = np.sqrt(((Ms[:, :n, :n] - np.eye(n)) ** 2).sum(axis=(1, 2)))
        row = Ms[:, n, :].copy()
        row[:, n] -= 1.0
        return block + np.sqrt((row ** 2).sum(axis=1))
    if kind in ("so2", "so3"):
        gram = np.einsum("bji,bjk->bik", Ms, Ms)
        ortho = np.sqrt(((gram - np.eye(m)) ** 2).sum(axis=(1, 2)))
        return ortho + np.abs(np.linalg.det(Ms) - 1.0)
    if kind in ("se2", "se3"):
        n = m - 1
        R = Ms[:, :n, :n]
        gram = np.einsum("bji,bjk->bik", R, R)
        ortho = np.sqrt(((gram - np.eye(n)) ** 2).sum(axis=(1, 2)))
        rot = ortho + np.abs(np.linalg.det(R) - 1.0)
        row = Ms[:, n, :].copy()
        row[:, n] -= 1.0
        return rot + np.sqrt((row ** 2).sum(axis=1))
    if kind == "product":
        return np.max(np.stack([_membership_residual_batch(g, Ms[:, o:p, o:p])
                                for g, o, p in _product_blocks(group)]), axis=0)
    raise ValueError(f"unknown group kind '{kind}'")


def log(g: GroupElement) -> AlgebraVector:
    """Group logarithm; errors within 1e-6 of the cut locus (angle pi)."""
    return AlgebraVector(g.group, _log_coords(g.group, g.matrix))


_CUT_LOCUS_MARGIN = 1e-6


def _check_cut_locus(group_name: str, th: float):
    if abs(th) > math.pi - _CUT_LOCUS_MARGIN:
        raise CutLocusError(
            f"{group_name}: rotation angle {th:.9f} lies within "
            f"{_CUT_LOCUS_MARGIN:.0e} of the cut locus at pi")


def _log_coords(group: LieGroupDescriptor, M: np.ndarray) -> np.ndarray:
    kind = group.kind
    if kind == "translation":
        n = group.matrix_dim - 1
        return M[:n, n].copy()
    if kind == "so2":
        th = math.atan2(M[1, 0], M[0, 0])
        _check_cut_locus(group.name, th)
        return np.array([th])
    if kind == "so3":
        return _so3_log(M, group.name)
    if kind == "se2":
        th = math.atan2(M[1, 0], M[0, 0])
        _check_cut_locus(group.name, th)
        v = np.linalg.solve(_se2_v_matrix(th), M[:2, 2])
        return np.array([v[0], v[1], th])
    if kind == "se3":
        w = _so3_log(M[:3, :3], group.name)
        v = np.linalg.solve(_se3_v_matrix(w), M[:3, 3])
        return np.concatenate([v, w])
    if kind == "product":
        parts = []
        for fac, o, p in _product_blocks(group):
            parts.append(_log_coords(fac, M[o:p, o:p]))
        return np.concatenate(parts)
    raise ValueError(f"unknown group kind '{kind}'")


def _so3_log(R: np.ndarray, name: str) -> np.ndarray:
    cos_th = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    th = math.acos(cos_th)
    _check_cut_locus(name, th)
    skew_part = 0.5 * (R - R.T)
    if th < _SMALL_ANGLE:
        return _vee3(skew_part) * (1.0 + th * th / 6.0)
    return _vee3(skew_part) * (th / math.sin(th))


def adjoint(g: GroupElement, xi: AlgebraVector) -> AlgebraVector:
    """Conjugation action of the group on its algebra, in basis coordinates."""
    _require_same_group(g.group, xi.group)
    M = g.matrix @ xi.matrix @ inverse(g).matrix
    return AlgebraVector(g.group, g.group.algebra_coords(M))


# ---------------------------------------------------------------------------
# Translation differentials and vector fields on the group
# ---------------------------------------------------------------------------

def d_left(g: GroupElement, v: TangentVectorG) -> TangentVectorG:
    """Pushforward of `v` by left translation with `g`."""
    _require_same_group(g.group, v.base.group)
    return TangentVectorG(compose(g, v.base), g.matrix @ v.matrix)


def d_right(h: GroupElement, v: TangentVectorG) -> TangentVectorG:
    """Pushforward of `v` by right translation with `h`."""
    _require_same_group(h.group, v.base.group)
    return TangentVectorG(compose(v.base, h), v.matrix @ h.matrix)


def algebra_tangent(xi: AlgebraVector) -> TangentVectorG:
    """View an algebra vector as a tangent vector at the identity."""
    return TangentVectorG(xi.group.identity(), xi.matrix)


@dataclass(frozen=True, eq=False)
class VectorFieldG:
    """Vector field on a group: g -> TangentVectorG with base g.

    `kind` is a family tag: group_linear | group_affine | left_invariant |
    zero | custom. Parametric families evaluate by closed form and may also
    provide `eval_batch` mapping stacked matrices (B, m, m) to stacked
    tangent directions, which the integrators use to amortize stepping.
    """

    group: LieGroupDescriptor
    eval_at: Callable[[GroupElement], TangentVectorG]
    kind: str = "custom"
    eval_batch: Callable[[np.ndarray], np.ndarray] | None = None

    def eval(self, g: GroupElement) -> TangentVectorG:
        return self.eval_at(g)


def zero_field_g(group: LieGroupDescriptor) -> VectorFieldG:
    m = group.matrix_dim
    return VectorFieldG(group, lambda g: TangentVectorG(g, np.zeros((m, m))),
                        kind="zero", eval_batch=lambda Gs: np.zeros_like(Gs))


def left_invariant_field(xi: AlgebraVector) -> VectorFieldG:
    """W(g) = g * xi_matrix: the flow of a fixed body velocity."""
    xi_mat = xi.matrix
    return VectorFieldG(xi.group, lambda g: TangentVectorG(g, g.matrix @ xi_mat),
                        kind="left_invariant", eval_batch=lambda Gs: Gs @ xi_mat)


def inner_derivation_field(D: AlgebraVector) -> VectorFieldG:
    """W(g) = D g - g D: the group-linear field of conjugation by exp(tD)."""
    D_mat = D.matrix
    return VectorFieldG(D.group,
                        lambda g: TangentVectorG(g, D_mat @ g.matrix - g.matrix @ D_mat),
                        kind="group_linear",
                        eval_batch=lambda Gs: D_mat @ Gs - Gs @ D_mat)


def group_affine_field(D: AlgebraVector, U: AlgebraVector) -> VectorFieldG:
    """V(g) = D g - g D + g U: inner-derivation part plus left-invariant drift."""
    _require_same_group(D.group, U.group)
    D_mat, U_mat = D.matrix, U.matrix
    return VectorFieldG(
        D.group,
        lambda g: TangentVectorG(g, D_mat @ g.matrix - g.matrix @ D_mat + g.matrix @ U_mat),
        kind="group_affine",
        eval_batch=lambda Gs: D_mat @ Gs - Gs @ D_mat + Gs @ U_mat)


def trivialized_field(group: LieGroupDescriptor,
                      body_velocity: Callable[[GroupElement], np.ndarray],
                      kind: str = "custom") -> VectorFieldG:
    """Build W(g) = g * matrix(body_velocity(g)) from algebra coordinates."""
    def eval_at(g: GroupElement) -> TangentVectorG:
        return TangentVectorG(g, g.matrix @ group.algebra_matrix(body_velocity(g)))
    return VectorFieldG(group, eval_at, kind=kind)


def left_trivialize(W: VectorFieldG, g: GroupElement) -> AlgebraVector:
    """Body-frame coordinates of W at g: coords of g^{-1} W(g)."""
    _require_same_group(W.group, g.group)
    v = W.eval(g)
    body = inverse(g).matrix @ v.matrix
    try:
        coords = W.group.algebra_coords(body, tolerance=1e-6)
    except AlgebraMembershipError as err:
        raise AlgebraMembershipError(
            f"left trivialization failed; not a vector field on {W.group.name}: {err}"
        ) from err
    return AlgebraVector(W.group, coords)


def check_group_linear(W: VectorFieldG, plan: SamplingPlan,
                       tolerance: float = 1e-8) -> CheckResult:
    """Residual of W(gh) = dL_g W(h) + dR_h W(g) over sampled pairs."""
    residuals = []
    for g, h in plan.group_pairs(W.group):
        lhs = W.eval(compose(g, h)).matrix
        rhs = g.matrix @ W.eval(h).matrix + W.eval(g).matrix @ h.matrix
        residuals.append(np.linalg.norm(lhs - rhs))
    return make_check("group_linear", residuals, tolerance)
