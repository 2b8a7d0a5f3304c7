"""
Cost versus quality
===================

Given an estimated cost and a predicted score per model, keep the Pareto
frontier and pick one point with TOPSIS. The three preference modes pull
the pick towards the cheap or the strong end.
"""

from moma.catalog import PreferenceMode
from moma.selector import ParetoPoint, Weights, pareto_frontier, select_with_preference, topsis_select

points = [
    ParetoPoint("tiny", 0.0004, 0.41),
    ParetoPoint("small", 0.0011, 0.55),
    ParetoPoint("medium", 0.0030, 0.71),
    ParetoPoint("wasteful", 0.0065, 0.60),  # dominated by "medium"
    ParetoPoint("large", 0.0090, 0.84),
]

frontier = pareto_frontier(points)
print([p.model_id for p in frontier])

# Weights are (cost, score). Leaning on cost picks a cheaper point.
for w in [Weights(0.8, 0.2), Weights(0.5, 0.5), Weights(0.2, 0.8)]:
    r = topsis_select(frontier, w)
    print(w, r.chosen, round(r.closeness, 3))

for mode in ["cost", "auto", "performance"]:
    print(mode, select_with_preference(points, PreferenceMode(mode)).chosen)

# A budget restricts cost mode to affordable models.
print(select_with_preference(points, PreferenceMode("cost", 0.002)).chosen)
