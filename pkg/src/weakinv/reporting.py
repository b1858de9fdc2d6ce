"""Shared result records and tolerance configuration for all numerical checks."""

from __future__ import annotations

import json
from dataclasses import dataclass, fields, replace
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one residual-based check over a sample set.

    `max_residual` is the quantity compared against `tolerance`; `extra`
    carries check-specific named statistics (e.g. identity residuals).
    """

    name: str
    max_residual: float
    mean_residual: float
    count: int
    tolerance: float
    passed: bool
    extra: tuple[tuple[str, float], ...] = ()

    def to_dict(self) -> dict:
        d = {
            "max_residual": self.max_residual,
            "mean_residual": self.mean_residual,
            "count": self.count,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }
        for key, value in self.extra:
            d[key] = value
        return d


def make_check(name: str, residuals: Iterable[float], tolerance: float,
               extra: Sequence[tuple[str, float]] = ()) -> CheckResult:
    """Summarize residual magnitudes into a CheckResult against `tolerance`."""
    vals = np.asarray(list(residuals), dtype=float)
    if vals.size == 0:
        return CheckResult(name, 0.0, 0.0, 0, tolerance, True, tuple(extra))
    mx = float(np.max(vals))
    return CheckResult(name, mx, float(np.mean(vals)), int(vals.size),
                       tolerance, bool(mx < tolerance), tuple(extra))


@dataclass(frozen=True)
class Tolerances:
    """Default tolerances; all overridable per scenario or via the CLI."""

    membership: float = 1e-9        # group/manifold defining-constraint residual
    roundtrip: float = 1e-10        # exp/log round-trip inside injectivity radius
    axioms: float = 1e-10           # action identity/compatibility laws
    differentials: float = 1e-5     # analytic vs finite-difference agreement
    freeness: float = 1e-8          # min singular value of the generator matrix
    strong: float = 1e-9            # residual field norm, relative to field scale
    weak: float = 1e-8              # stacked least-squares consistency, relative
    orbit: float = 1e-8             # per-point orbit-tangency of the residual
    group_linear: float = 1e-8
    group_affine: float = 1e-8
    automorphism: float = 1e-8
    sigma_match: float = 1e-8       # group-map recovery match residual
    flow_invariance: float = 1e-6
    flow_derivative: float = 1e-4
    sigma_flow: float = 1e-7
    small_time: float = 1e-7
    chart: float = 1e-8             # chart round-trips and forcing-term residual

    def override(self, **kwargs: float) -> "Tolerances":
        names = {f.name for f in fields(self)}
        for key in kwargs:
            if key not in names:
                raise KeyError(f"unknown tolerance '{key}' (known: {sorted(names)})")
        return replace(self, **kwargs)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def canonical_json(obj) -> str:
    """Deterministic JSON used for all emitted reports."""
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"
