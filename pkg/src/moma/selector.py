"""Cost/score model selection: Pareto frontier, min-max normalization and
TOPSIS closeness, plus the three user preference modes.

Lower cost and higher score are better. The ideal point in normalized
coordinates is (c', s') = (0, 1), the anti-ideal (1, 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

from .catalog import Preference, PreferenceMode
from .errors import BudgetInfeasibleError, ConfigError, EmptyInputError

DEGENERATE = 0.5


@dataclass(frozen=True)
class ParetoPoint:
    model_id: str
    cost: float
    score: float

    def __post_init__(self):
        object.__setattr__(self, "cost", float(self.cost))
        object.__setattr__(self, "score", float(self.score))
        if not (math.isfinite(self.cost) and math.isfinite(self.score)):
            raise ValueError(f"{self.model_id}: cost and score must be finite")

    def dominates(self, other: "ParetoPoint") -> bool:
        return (
            self.cost <= other.cost
            and self.score >= other.score
            and (self.cost < other.cost or self.score > other.score)
        )


@dataclass(frozen=True)
class Weights:
    cost: float = 0.5
    score: float = 0.5

    def __post_init__(self):
        if self.cost < 0 or self.score < 0 or not self.cost + self.score > 0:
            raise ConfigError(f"weights must be >= 0 with positive sum, got ({self.cost}, {self.score})")

    def normalized(self) -> "Weights":
        total = self.cost + self.score
        return Weights(self.cost / total, self.score / total)


@dataclass(frozen=True)
class SelectionResult:
    chosen: str
    closeness: float
    frontier: list
    normalized: list
    closeness_by_model: dict = field(default_factory=dict)
    weights: Weights | None = None

    @property
    def chosen_point(self) -> ParetoPoint:
        return next(p for p in self.frontier if p.model_id == self.chosen)

    def to_dict(self) -> dict:
        return {
            "chosen": self.chosen,
            "closeness": self.closeness,
            "weights": None if self.weights is None else [self.weights.cost, self.weights.score],
            "frontier": [
                {"model": p.model_id, "cost": p.cost, "score": p.score, "cost_norm": c, "score_norm": s,
                 "closeness": self.closeness_by_model.get(p.model_id)}
                for p, (c, s) in zip(self.frontier, self.normalized)
            ],
        }


def _order_key(p: ParetoPoint):
    return (p.cost, -p.score, p.model_id)


def pareto_frontier(points: Sequence[ParetoPoint]) -> list[ParetoPoint]:
    """Non-dominated points sorted by ascending cost.

    Exact duplicates of a non-dominated (cost, score) pair are all kept.
    """
    if not points:
        raise EmptyInputError("no points")
    ordered = sorted(points, key=_order_key)
    frontier: list[ParetoPoint] = []
    best_before = -math.inf  # best score among strictly earlier (cost, score) groups
    group, group_best = None, -math.inf
    for p in ordered:
        if (p.cost, p.score) != group:
            best_before = max(best_before, group_best)
            group, group_best = (p.cost, p.score), p.score
        # everything earlier in this order is no more expensive; it dominates
        # p exactly when it scores at least as well without being a duplicate
        if p.score > best_before:
            frontier.append(p)
    return frontier


def normalize(frontier: Sequence[ParetoPoint]) -> list[tuple[float, float]]:
    """Min-max scale cost and score to [0, 1]; a constant axis maps to 0.5."""
    if not frontier:
        raise EmptyInputError("no points")
    costs = [p.cost for p in frontier]
    scores = [p.score for p in frontier]

    def scale(values):
        lo, hi = min(values), max(values)
        if hi == lo:
            return [DEGENERATE] * len(values)
        return [(v - lo) / (hi - lo) for v in values]

    return list(zip(scale(costs), scale(scores)))


def closeness(c_norm: float, s_norm: float, weights: Weights) -> float:
    w = weights.normalized()
    d_plus = math.hypot(w.cost * c_norm, w.score * (1.0 - s_norm))
    d_minus = math.hypot(w.cost * (1.0 - c_norm), w.score * s_norm)
    if d_plus + d_minus == 0.0:
        return DEGENERATE
    return d_minus / (d_plus + d_minus)


def _tiebreak_key(closeness_value: float, p: ParetoPoint):
    return (-closeness_value, -p.score, p.cost, p.model_id)


def topsis_select(frontier: Sequence[ParetoPoint], weights: Weights = Weights()) -> SelectionResult:
    """Pick the frontier point with the largest relative closeness.

    Ties go to the higher raw score, then the lower raw cost, then the
    lexicographically smaller model id.
    """
    if not frontier:
        raise EmptyInputError("empty frontier")
    frontier = list(frontier)
    norm = normalize(frontier)
    values = [closeness(c, s, weights) for c, s in norm]
    best = min(range(len(frontier)), key=lambda i: _tiebreak_key(values[i], frontier[i]))
    return SelectionResult(
        chosen=frontier[best].model_id,
        closeness=values[best],
        frontier=frontier,
        normalized=norm,
        closeness_by_model={p.model_id: v for p, v in zip(frontier, values)},
        weights=weights,
    )


@dataclass(frozen=True)
class PreferenceWeights:
    """TOPSIS weights used by the cost-priority and auto modes."""

    cost_priority: Weights = Weights(0.8, 0.2)
    auto: Weights = Weights(0.5, 0.5)


def cheapest_quartile(points: Sequence[ParetoPoint]) -> list[ParetoPoint]:
    """The ceil(n/4) cheapest points, plus any that tie the boundary cost."""
    ordered = sorted(points, key=_order_key)
    n = max(1, math.ceil(len(ordered) / 4))
    bound = ordered[n - 1].cost
    return [p for p in ordered if p.cost <= bound]


def select_with_preference(
    points: Sequence[ParetoPoint],
    mode: PreferenceMode = PreferenceMode(),
    weights: PreferenceWeights = PreferenceWeights(),
) -> SelectionResult:
    if not points:
        raise EmptyInputError("no points")
    pref = mode.preference
    if pref is Preference.PERFORMANCE_PRIORITY:
        best = min(points, key=lambda p: (-p.score, p.cost, p.model_id))
        # the best-scoring cheapest point is always on the frontier; with all
        # weight on score its closeness is 1, so the diagnostics agree with it
        result = topsis_select(pareto_frontier(points), Weights(0.0, 1.0))
        return replace(result, chosen=best.model_id, closeness=result.closeness_by_model[best.model_id])
    if pref is Preference.COST_PRIORITY:
        if mode.cost_budget is not None:
            feasible = [p for p in points if p.cost <= mode.cost_budget]
            if not feasible:
                raise BudgetInfeasibleError(f"no model within budget {mode.cost_budget}")
        else:
            feasible = cheapest_quartile(points)
        return topsis_select(pareto_frontier(feasible), weights.cost_priority)
    return topsis_select(pareto_frontier(points), weights.auto)
