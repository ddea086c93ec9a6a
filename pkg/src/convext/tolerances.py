"""Centralized numerical tolerances.

Every comparison against zero in the package goes through one of these
values so that a run can be tightened or loosened consistently
(``--tolerance-scale`` on the command line scales all of them).
"""
from __future__ import annotations

from dataclasses import dataclass, fields, replace


@dataclass(frozen=True)
class ToleranceConfig:
    feasibility: float = 1e-9   # LP primal feasibility / objective agreement
    pivot: float = 1e-12        # smallest admissible simplex pivot
    rank: float = 1e-9          # relative to largest column norm
    membership: float = 1e-8    # hull reconstruction, relative to 1 + |x|
    interior: float = 1e-9      # max-min weight threshold for relative interior
    collinear: float = 1e-9     # point-to-line distance for collinear triples
    convexity: float = 1e-9     # slack allowed in f(x) <= sum lambda_i f(x_i)
    strict: float = 1e-9        # required gap for strict inequalities
    duplicate: float = 1e-12    # minimum pairwise distance in a point cloud

    def scaled(self, factor: float) -> "ToleranceConfig":
        if factor <= 0:
            raise ValueError("tolerance scale must be positive")
        return replace(self, **{f.name: getattr(self, f.name) * factor for f in fields(self)})

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


DEFAULT_TOLERANCES = ToleranceConfig()
