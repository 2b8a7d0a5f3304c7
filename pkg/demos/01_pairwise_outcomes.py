"""
Five-outcome pairwise model
===========================

Two models answer the same query. The router head predicts a quality
score for each and a tie threshold theta; the outcome model turns that
into probabilities for tie, weak win, weak loss, strong win, strong loss.
"""

import math

import numpy as np

from moma.grk import base_probs, outcome_distribution

# Equal scores and theta = 3: win and loss each get a quarter, ties get half.
print(base_probs(0.7, 0.7, 3.0))

# A one-point lead at theta = e is a coin flip to win outright.
p_win, p_lose, p_tie = base_probs(1.0, 0.0, math.e)
print(f"win={p_win:.4f} lose={p_lose:.4f} tie={p_tie:.4f}")

# kappa sharpens the strong/weak split, margin shifts where it happens.
labels = ["tie", "a>b", "a<b", "a>>b", "a<<b"]
for kappa, margin in [(1.0, 0.0), (5.0, 0.0), (5.0, 1.0)]:
    p = outcome_distribution(2.0, 0.0, 1.5, kappa, margin)
    print(kappa, margin, dict(zip(labels, np.round(p, 3))))

# Growing theta moves mass from decisive outcomes towards a tie.
for theta in [1.01, 1.5, 3.0, 10.0]:
    print(theta, round(outcome_distribution(0.5, 0.0, theta)[0], 4))
