import threading
from decimal import Decimal

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from moma.agentroute import AgentRegistry
from moma.cache import PrefetchCache
from moma.catalog import AgentDescriptor, Category, ModelCatalog, ModelProfile, PreferenceMode
from moma.encoder import HashingEncoder
from moma.errors import ConfigError
from moma.gateway import AGENT, LLM, Gateway
from moma.grk import zero_params

ENC = HashingEncoder(64)
CATALOG = ModelCatalog([
    ModelProfile("big", "Big", Decimal("0.004"), Decimal("0.016")),
    ModelProfile("mid", "Mid", Decimal("0.001"), Decimal("0.004")),
    ModelProfile("small", "Small", Decimal("0.0003"), Decimal("0.0012")),
])
AGENTS = (
    AgentDescriptor("travel.flight_search", "search and book airline flight tickets", category_ids=frozenset({"travel"})),
    AgentDescriptor("travel.hotel_booking", "reserve hotel rooms for check-in dates", category_ids=frozenset({"travel"})),
    AgentDescriptor("food.recipe_lookup", "look up cooking recipes and ingredients", category_ids=frozenset({"food"})),
)
CATEGORIES = (
    Category("travel", "Travel", "flight flights hotel airline booking tickets rooms"),
    Category("food", "Food", "recipes cooking ingredients restaurant dish"),
)


def params(scores=(2.0, 1.0, 0.0)):
    p = zero_params(ENC.dim, len(CATALOG))
    p.expert_b[:, : len(scores)] = scores
    return p


def make(**kw):
    return Gateway(CATALOG, params(), ENC, AgentRegistry(AGENTS, CATEGORIES), **kw)


def test_verbatim_description_goes_to_agent_and_caches():
    gw = make()
    q = AGENTS[0].description
    d1 = gw.route(q)
    assert d1.path == AGENT and d1.chosen == "travel.flight_search" and not d1.cache_hit
    assert gw.cache.normalize(q) in gw.cache
    d2 = gw.route(q.upper() + "  ")
    assert d2.cache_hit and d2.chosen == d1.chosen


def test_cache_hit_equals_full_route_on_same_snapshot():
    gw = make()
    queries = [a.description for a in AGENTS] + ["book hotel rooms tonight", "cooking recipes for pasta"]
    agent_queries = [q for q in queries if gw.route(q).path == AGENT]
    assert len(agent_queries) >= 3
    for q in agent_queries:
        hit = gw.route(q)
        fresh = Gateway(CATALOG, gw.params, ENC, gw.registry).route(q)
        assert hit.cache_hit and not fresh.cache_hit
        assert (hit.path, hit.chosen) == (fresh.path, fresh.chosen)


def test_sub_alpha_goes_to_llm():
    d = make().route("eigenvalue of a symmetric matrix", PreferenceMode("performance"))
    assert d.path == LLM and d.chosen == "big"
    assert "alpha" in d.diagnostics["agent_path_skipped"]
    assert d.diagnostics["selection"]["chosen"] == "big"
    assert d.diagnostics["estimated_cost"] > 0


def test_preference_modes_on_llm_path():
    gw = make()
    q = "eigenvalue of a symmetric matrix"
    assert gw.route(q, PreferenceMode("cost")).chosen == "small"
    assert gw.route(q, PreferenceMode("performance")).chosen == "big"
    d = gw.route(q, PreferenceMode("cost", 1e-9))
    assert d.path == LLM and "budget_infeasible" in d.diagnostics


def test_no_candidate_degrades_to_llm():
    inactive = tuple(AgentDescriptor(a.name, a.description, status="inactive", category_ids=a.category_ids) for a in AGENTS)
    gw = Gateway(CATALOG, params(), ENC, AgentRegistry(inactive, CATEGORIES))
    d = gw.route(AGENTS[0].description)
    assert d.path == LLM and "no active agent" in d.diagnostics["agent_path_skipped"]


def test_backend_failure_falls_back_to_ranker():
    class Broken:
        def logits(self, prompt, vocabulary):
            raise RuntimeError("backend offline")

    d = make(backend=Broken()).route("search and book airline flight tickets and hotel rooms")
    assert d.path == AGENT and "backend_error" in d.diagnostics
    assert d.chosen in {a.name for a in AGENTS}


def test_registration_invalidates_cache():
    gw = make()
    gw.route(AGENTS[0].description)
    assert len(gw.cache) == 1
    gw.register_agent(AgentDescriptor("travel.train", "train tickets and rail passes"))
    assert len(gw.cache) == 0 and gw.registry.generation == 1


def test_construction_errors():
    with pytest.raises(ConfigError):
        Gateway(CATALOG, None, ENC)
    with pytest.raises(ConfigError):
        Gateway(CATALOG, zero_params(64, 2), ENC)
    with pytest.raises(ConfigError):
        Gateway(CATALOG, zero_params(32, 3), ENC)


def test_empty_registry_always_llm():
    gw = Gateway(CATALOG, params(), ENC)
    assert gw.route(AGENTS[0].description).path == LLM


@given(st.text(max_size=80), st.sampled_from(["cost", "auto", "performance"]))
def test_never_fails_closed(query, pref):
    gw = make()
    d = gw.route(query, PreferenceMode(pref))
    if d.path == AGENT:
        assert d.chosen in gw.registry.vocabulary
    else:
        assert d.path == LLM and d.chosen in CATALOG.ids
    assert "normalized_query" in d.diagnostics
    assert d.to_dict()["path"] == d.path


def test_concurrent_routing_with_registry_swaps():
    gw = make(cache=PrefetchCache(16))
    errors = []

    def serve(t):
        try:
            for i in range(60):
                gw.route([a.description for a in AGENTS][i % 3] if i % 2 else f"matrix proof {t} {i}")
        except Exception as exc:  # pragma: no cover - failure path
            errors.append(exc)

    threads = [threading.Thread(target=serve, args=(t,)) for t in range(4)]
    for th in threads:
        th.start()
    for i in range(5):
        gw.register_agent(AgentDescriptor(f"misc.a{i}", f"unrelated helper number {i}"))
    for th in threads:
        th.join()
    assert not errors and len(gw.cache) <= 16
