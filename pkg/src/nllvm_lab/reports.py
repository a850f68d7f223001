"""Experiment report types and the shared slope-fitting helper.

``SlopeReport`` captures rate experiments (log-log slope against a
theoretical target), ``CheckReport`` captures bound checks (violation counts
over randomized trials).  Both are plain dataclasses serialized by the CLI;
``passed`` maps to the JSON key ``"pass"``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np


def slope_fit(
    xs: Sequence[float], ys: Sequence[float], *, log: bool = True
) -> tuple[float, float]:
    """Ordinary least squares slope and r^2, optionally on log-log axes.

    Constant ``ys`` give slope 0 with r^2 reported as 0 (no division by the
    vanishing total sum of squares).

    Raises
    ------
    ValueError
        For fewer than 3 points, duplicate xs, or non-positive values in log
        mode (domain error).
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.size < 3 or y.size != x.size:
        raise ValueError(f"need >= 3 paired points, got {x.size} and {y.size}")
    if np.unique(x).size != x.size:
        raise ValueError("xs must be distinct")
    if log:
        if np.any(x <= 0) or np.any(y <= 0):
            raise ValueError("log-log fit needs strictly positive xs and ys")
        x, y = np.log(x), np.log(y)
    sxx = float(np.sum((x - x.mean()) ** 2))
    sxy = float(np.sum((x - x.mean()) * (y - y.mean())))
    syy = float(np.sum((y - y.mean()) ** 2))
    slope = sxy / sxx
    if syy == 0.0:
        return slope, 0.0
    resid = syy - slope * sxy
    r2 = max(0.0, min(1.0, 1.0 - resid / syy))
    return slope, r2


@dataclass
class SlopeReport:
    """A fitted rate: raw (x, y) pairs, log-log slope, fit quality, target."""

    xs: list[float]
    ys: list[float]
    slope: float
    r2: float
    target: float | None
    passed: bool
    seed: int
    note: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "xs": list(map(float, self.xs)),
            "ys": list(map(float, self.ys)),
            "slope": float(self.slope),
            "r2": float(self.r2),
            "target": None if self.target is None else float(self.target),
            "pass": bool(self.passed),
            "seed": int(self.seed),
            "note": self.note,
        }


@dataclass
class CheckReport:
    """Outcome of a randomized bound check.

    ``worst_margin`` is the largest observed (lhs - rhs - slack); any
    positive margin is a violation, so violations == 0 implies
    worst_margin <= 0.
    """

    name: str
    trials: int
    violations: int
    worst_margin: float
    passed: bool
    seed: int
    params: dict[str, Any] = field(default_factory=dict)
    note: str = ""

    def __post_init__(self) -> None:
        if self.violations > self.trials:
            raise ValueError(
                f"violations ({self.violations}) cannot exceed trials ({self.trials})"
            )

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "trials": int(self.trials),
            "violations": int(self.violations),
            "worst_margin": float(self.worst_margin),
            "pass": bool(self.passed),
            "seed": int(self.seed),
            "params": dict(self.params),
            "note": self.note,
        }
