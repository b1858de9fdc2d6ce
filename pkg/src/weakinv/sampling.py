"""Seeded low-discrepancy sample plans over algebra coordinates and manifolds.

Samples come from scrambled Halton sequences so that every check is
deterministic for a given seed, covers the box evenly, and stays inside the
exp injectivity radius (default box halfwidth 1.5 < pi).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy.stats import qmc

if TYPE_CHECKING:  # circular at runtime only
    from .actions import ManifoldDescriptor, ManifoldPoint
    from .groups import GroupElement, LieGroupDescriptor

# fixed salts so distinct sample roles never alias
_SALT_GROUP = 1
_SALT_PAIR_A = 2
_SALT_PAIR_B = 3
_SALT_POINTS = 4


@dataclass(frozen=True)
class SamplingPlan:
    seed: int = 0
    group_count: int = 12
    point_count: int = 10
    pair_count: int = 20
    box: float = 1.5                       # halfwidth of the algebra-coordinate box
    point_center: tuple[float, ...] = ()   # empty -> origin
    point_box: float = 1.5

    def unit_samples(self, dim: int, count: int, salt: int = 0) -> np.ndarray:
        if dim == 0:
            return np.zeros((count, 0))
        engine = qmc.Halton(d=dim, scramble=True, seed=self.seed * 1000003 + salt)
        return engine.random(count)

    def algebra_coords(self, dim: int, count: int, salt: int = 0) -> np.ndarray:
        return self.box * (2.0 * self.unit_samples(dim, count, salt) - 1.0)

    def group_elements(self, group: "LieGroupDescriptor", count: int | None = None,
                       salt: int = _SALT_GROUP) -> list["GroupElement"]:
        from .groups import exp
        n = self.group_count if count is None else count
        coords = self.algebra_coords(group.algebra_dim, n, salt)
        return [exp(group.algebra(c)) for c in coords]

    def group_pairs(self, group: "LieGroupDescriptor",
                    count: int | None = None) -> list[tuple["GroupElement", "GroupElement"]]:
        """Pairs from the grid of two small batches: n pairs reuse O(sqrt(n))
        distinct elements, which keeps solver-backed map checks affordable."""
        n = self.pair_count if count is None else count
        a_count = int(math.ceil(math.sqrt(n)))
        b_count = int(math.ceil(n / a_count))
        gs = self.group_elements(group, a_count, salt=_SALT_PAIR_A)
        hs = self.group_elements(group, b_count, salt=_SALT_PAIR_B)
        return [(g, h) for g in gs for h in hs][:n]

    def manifold_points(self, manifold: "ManifoldDescriptor",
                        count: int | None = None) -> list["ManifoldPoint"]:
        from .actions import ManifoldPoint
        from .groups import exp
        n = self.point_count if count is None else count
        if manifold.kind == "euclidean":
            dim = manifold.shape[0]
            center = np.asarray(self.point_center if self.point_center else np.zeros(dim))
            if center.shape != (dim,):
                raise ValueError(f"point_center has length {center.shape[0]}, manifold dim {dim}")
            u = self.unit_samples(dim, n, _SALT_POINTS)
            values = center + self.point_box * (2.0 * u - 1.0)
            return [ManifoldPoint(manifold, v) for v in values]
        if manifold.kind == "matrix_group":
            coords = self.algebra_coords(manifold.group.algebra_dim, n, _SALT_POINTS)
            return [ManifoldPoint(manifold, exp(manifold.group.algebra(c)).matrix)
                    for c in coords]
        raise ValueError(f"cannot sample points on manifold kind '{manifold.kind}'")

    def reseeded(self, seed: int) -> "SamplingPlan":
        return SamplingPlan(seed, self.group_count, self.point_count, self.pair_count,
                            self.box, self.point_center, self.point_box)

    def record(self) -> dict:
        return {
            "seed": self.seed,
            "group_count": self.group_count,
            "point_count": self.point_count,
            "pair_count": self.pair_count,
            "box": self.box,
            "point_center": list(self.point_center),
            "point_box": self.point_box,
        }
