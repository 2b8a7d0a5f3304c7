"""
The synthetic harness
=====================

A planted quality matrix (models x domains) generates labelled pairwise
comparisons. We train the router head and two baselines on them, then
route held-out queries and check who picks the planted best model.
"""

import numpy as np

from moma.harness import HarnessConfig, build_world, run_harness

cfg = HarnessConfig()
world = build_world(cfg)
print(world.domains)
print(np.round(world.quality, 2))
print("best per domain:", [world.catalog.ids[i] for i in world.best])

report = run_harness(cfg)
print("top-1 vs planted best:", report["top1_accuracy"])
print("ranking:", report["router_ranking"])
for mode, row in report["preference_modes"].items():
    print(f"{mode:22} cost={row['mean_cost']:.6f} quality={row['mean_planted_quality']:.3f}")
print("cache:", report["cache"]["hit_rate"], "elo spearman:", report["elo"]["spearman_vs_quality"])
