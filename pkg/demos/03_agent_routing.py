"""
Routing to agents
=================

Agents are grouped into categories (predefined ones, plus k-means
clusters for anything left over). A query first has to look like some
category; then a small state machine narrows the candidates and a masked
decision picks one name from the registry.
"""

from moma.agentroute import AgentRegistry, build_categories
from moma.catalog import AgentDescriptor, Category, CategorySource
from moma.encoder import HashingEncoder
from moma.gateway import Gateway
from moma.grk import zero_params
from moma.harness import HARNESS_AGENTS, HARNESS_CATEGORIES, build_world, HarnessConfig

enc = HashingEncoder(256)
agents = [AgentDescriptor(n, d, few_shot_examples=ex) for n, d, ex in HARNESS_AGENTS]
predefined = [Category(c, n, d, CategorySource.PREDEFINED) for c, n, d in HARNESS_CATEGORIES]
built = build_categories(agents, predefined, k=len(predefined), encoder=enc, seed=0)
registry = AgentRegistry(built.agents, built.categories)
# Clusters only fold into a predefined category when their text is nearly
# identical, so the predefined ones may hold no agents. They still take
# part in first-layer retrieval, and candidates also match by name prefix.
for cat in registry.categories:
    print(cat.id, [a.name for a in registry.agents if cat.id in a.category_ids])

# The LLM side only needs a catalog and router params of matching shape.
world = build_world(HarnessConfig(num_models=4, num_domains=2, queries_per_domain=10))
gw = Gateway(world.catalog, zero_params(enc.dim, len(world.catalog)), enc, registry)

for q in [
    "find flights to shanghai tomorrow",
    "Find  flights to Shanghai TOMORROW",  # same key after normalization
    "current stock quote for a ticker",
    "prove the eigenvalue bound for this matrix",  # no agent category fits
]:
    d = gw.route(q)
    print(f"{q!r:50} -> {d.path:5} {d.chosen:24} hit={d.cache_hit}")

print(gw.cache.stats().to_dict())

# Registering an agent bumps the registry generation and empties the cache.
reg = gw.register_agent(AgentDescriptor("travel.train_tickets", "buy train tickets and rail passes"))
print(reg.assigned, reg.new_category, len(gw.cache))
