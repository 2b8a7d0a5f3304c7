import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from moma.agentroute import (
    GENERIC_QUERY,
    AgentRegistry,
    AtomicState,
    DecisionPrompt,
    ResolvedState,
    Rule,
    StateMachineConfig,
    build_categories,
    build_mask,
    candidate_agents,
    default_config,
    dump_fsm_config,
    final_decide,
    first_layer_retrieve,
    load_fsm_config,
    masked_decode,
    rank_categories,
    register_agent,
    resolve_state,
)
from moma.catalog import AgentDescriptor, Category, CategorySource
from moma.encoder import cosine_sim
from moma.errors import BackendError, ConfigError, DuplicateIdError, EmptyAvailableError, NoCandidateError

TRAVEL = Category("travel", "Travel", "book flights hotels trips and airline tickets")
FOOD = Category("food", "Food", "restaurants recipes cooking and meal delivery")


def agent(name, desc, **kw):
    return AgentDescriptor(name, desc, **kw)


# --- categories --------------------------------------------------------------


def test_predefined_kept_without_agents(encoder):
    agents = [agent("food.menu", "restaurant menus and meal delivery"), agent("food.cook", "cooking recipes for dinner")]
    built = build_categories(agents, [TRAVEL], k=1, encoder=encoder)
    assert TRAVEL in built.categories
    assert all(a.category_ids for a in built.agents)


def test_redundant_cluster_merged_into_predefined(encoder):
    desc = TRAVEL.description
    agents = [agent("travel.a", desc), agent("travel.b", desc)]
    # the cluster's own text is built from the same words as the predefined category
    cluster_text = " ".join(["book", "flights", "hotels"]) + " " + desc + " " + desc
    assert cosine_sim(encoder.encode(cluster_text), encoder.encode(TRAVEL.text)) >= 0.85
    built = build_categories(agents, [TRAVEL], k=1, encoder=encoder, redundancy_threshold=0.85)
    assert [c.id for c in built.categories] == ["travel"]
    assert all(a.category_ids == {"travel"} for a in built.agents)
    assert list(built.removed.values()) == ["travel"]


def test_k_one_single_cluster(encoder):
    agents = [agent("x.a", "convert currency"), agent("y.b", "weather forecast"), agent("z.c", "translate text")]
    built = build_categories(agents, [], k=1, encoder=encoder)
    assert len(built.categories) == 1 and built.categories[0].source is CategorySource.CLUSTERED
    assert {cid for a in built.agents for cid in a.category_ids} == {built.categories[0].id}


def test_build_categories_validation(encoder):
    with pytest.raises(ConfigError):
        build_categories([], [TRAVEL], 1, encoder)
    with pytest.raises(ConfigError):
        build_categories([agent("a.b", "x")], [], 1, encoder, redundancy_threshold=1.0)


def test_first_layer_self_match(encoder):
    cats = [TRAVEL, FOOD]
    ranked = first_layer_retrieve(FOOD.text, cats, default_config(), encoder)
    assert ranked[0][0] == FOOD and ranked[0][1] == pytest.approx(1.0, abs=1e-12)


def test_first_layer_alpha_one_empty(encoder):
    assert first_layer_retrieve("cheap flights to rome", [TRAVEL, FOOD], default_config(alpha=1.0), encoder) == []


@given(st.text(max_size=40))
def test_first_layer_top_k_matches_brute_force(query):
    from moma.encoder import HashingEncoder

    enc = HashingEncoder(64)
    cats = [Category(f"c{i}", f"cat {i}", d) for i, d in enumerate(["alpha beta", "gamma delta", "beta gamma", "zeta", "eta theta"])]
    cfg = default_config(alpha=0.05, top_k_categories=2)
    sims = {c.id: cosine_sim(enc.encode(query), enc.encode(c.text)) for c in cats}
    brute = sorted(sims.values(), reverse=True)
    ranked = rank_categories(query, cats, enc)
    assert [s for _, s in ranked] == pytest.approx(brute, abs=1e-12)
    for (c, s) in ranked:
        assert s == pytest.approx(sims[c.id], abs=1e-12)
    # ids must agree wherever neighbouring similarities are clearly separated
    expected = [i for i, s in sorted(sims.items(), key=lambda kv: -kv[1]) if s > 0.05 + 1e-9][:2]
    got = [c.id for c, _ in first_layer_retrieve(query, cats, cfg, enc)]
    gaps = np.diff(brute)
    if len(expected) == len(got) and (len(gaps) == 0 or np.all(np.abs(gaps[: len(got)]) > 1e-9)):
        assert got == expected


# --- state machine -----------------------------------------------------------


def test_upload_path_rule(encoder):
    s = resolve_state("upload C:\\file.txt", default_config(), encoder)
    assert "PATH_UPLOAD" in s.atomics and s.provenance in ("rule", "both")


def test_composite_rule_plus_semantic(encoder):
    food_prompt = "restaurant dinner meal cuisine cooking takeout"
    cfg = StateMachineConfig(
        states=[
            AtomicState("TRAVEL_RELATED", "airport itinerary vacation", ("travel",)),
            AtomicState("FOOD_RELATED", food_prompt, ("food",)),
            AtomicState(GENERIC_QUERY, "general chat"),
        ],
        rules=[Rule("keyword", "flight", "TRAVEL_RELATED", 1)],
        tau=0.5,
    )
    query = "flight " + food_prompt
    assert cosine_sim(encoder.encode(query), encoder.encode(food_prompt)) >= 0.5
    s = resolve_state(query, cfg, encoder)
    assert set(s.atomics) == {"TRAVEL_RELATED", "FOOD_RELATED"}
    assert s.composite and s.provenance == "both" and s.name == "TRAVEL_RELATED&FOOD_RELATED"


def test_empty_input_falls_back(encoder):
    s = resolve_state("", default_config(), encoder)
    assert s.atomics == (GENERIC_QUERY,)


def test_events_are_taken_as_states(encoder):
    s = resolve_state("", default_config(), encoder, events=["EVENT_TRIGGERED"])
    assert s.atomics == ("EVENT_TRIGGERED",)
    with pytest.raises(ConfigError):
        resolve_state("", default_config(), encoder, events=["NOPE"])


@given(st.text(max_size=80))
def test_resolve_state_total_and_deterministic(text):
    from moma.encoder import HashingEncoder

    enc = HashingEncoder(64)
    cfg = default_config()
    a, b = resolve_state(text, cfg, enc), resolve_state(text, cfg, enc)
    assert a == b and len(a.atomics) >= 1
    assert set(a.atomics) <= set(cfg.state_names)


def test_config_validation_and_round_trip(tmp_path):
    cfg = default_config()
    path = tmp_path / "fsm.json"
    dump_fsm_config(cfg, path)
    assert load_fsm_config(path) == cfg
    states = [AtomicState(GENERIC_QUERY, "x"), AtomicState("A", "y")]
    with pytest.raises(ConfigError):
        StateMachineConfig([AtomicState("A", "y")])
    with pytest.raises(ConfigError):
        StateMachineConfig(states, [Rule("keyword", "a", "A", 1), Rule("keyword", "b", "A", 1)])
    with pytest.raises(ConfigError):
        StateMachineConfig(states, [Rule("keyword", "a", "B", 1)])
    with pytest.raises(ConfigError):
        StateMachineConfig(states, tau=1.0)
    with pytest.raises(ConfigError):
        Rule("regex", "(", "A", 1)


def _state(*names):
    return ResolvedState(tuple(names), "rule")


def test_all_inactive_no_candidates(encoder):
    agents = [agent("travel.a", "flights", status="inactive"), agent("travel.b", "hotels", status="inactive")]
    with pytest.raises(NoCandidateError):
        candidate_agents(_state("TRAVEL_RELATED"), [], agents, default_config(), encoder, "flight")


def test_single_prefix_match(encoder):
    agents = [agent("travel.a", "flights"), agent("food.b", "menus")]
    out = candidate_agents(_state("TRAVEL_RELATED"), [], agents, default_config(), encoder, "x")
    assert [a.name for a in out] == ["travel.a"]


def test_category_membership_admits_agents(encoder):
    agents = [agent("misc.a", "flights", category_ids=frozenset({"travel"})), agent("misc.b", "menus")]
    out = candidate_agents(_state(GENERIC_QUERY), [(TRAVEL, 0.9)], agents, default_config(), encoder, "x")
    assert [a.name for a in out] == ["misc.a"]


def test_top_k_agents_brute_force(encoder):
    descs = ["book cheap flights", "hotel rooms downtown", "train tickets europe", "car rental airport", "flight status"]
    agents = [agent(f"travel.a{i}", d) for i, d in enumerate(descs)]
    q = "cheap flight tickets"
    cfg = default_config(top_k_agents=2)
    sims = [cosine_sim(encoder.encode(q), encoder.encode(d)) for d in descs]
    expected = [agents[i].name for i in sorted(range(5), key=lambda i: (-sims[i], i))[:2]]
    got = candidate_agents(_state("TRAVEL_RELATED"), [], agents, cfg, encoder, q)
    assert [a.name for a in got] == expected


# --- masking -----------------------------------------------------------------


def test_build_mask_examples():
    assert not build_mask(["a", "b", "c"], {"a", "b", "c"}).values.any()
    m = build_mask(["a", "b", "c"], {"b"})
    assert list(m.values == 0).count(True) == 1 and m.allowed == ["b"]
    with pytest.raises(ValueError):
        build_mask(["a"], {"z"})
    with pytest.raises(EmptyAvailableError):
        build_mask(["a"], set())


def test_masked_decode_example():
    mask = build_mask(["a0", "a1", "a2"], {"a1", "a2"})
    token, p = masked_decode([2.0, 1.0, 0.5], mask)
    assert token == "a1"
    assert p[0] == 0.0
    assert p[1] == pytest.approx(1 / (1 + math.exp(-0.5)), abs=1e-12)
    assert p[1:] == pytest.approx([0.6225, 0.3775], abs=1e-4)


def test_masked_decode_single_and_identity():
    token, p = masked_decode([0.3, 9.0, -2.0], build_mask(["x", "y", "z"], {"z"}))
    assert token == "z" and list(p) == [0.0, 0.0, 1.0]
    logits = np.array([0.1, 0.7, 0.2])
    idx, p = masked_decode(logits, np.zeros(3))
    e = np.exp(logits - logits.max())
    assert idx == 1 and p == pytest.approx(e / e.sum(), abs=1e-15)


@given(st.integers(0, 10**6), st.integers(1, 12))
def test_masking_properties(seed, n):
    rng = np.random.default_rng(seed)
    logits = rng.normal(size=n) * rng.choice([0.01, 1, 100])
    allowed = rng.random(n) < 0.5
    allowed[rng.integers(n)] = True
    mask = np.where(allowed, 0.0, -np.inf)
    idx, p = masked_decode(logits, mask)
    assert allowed[idx]
    assert np.all(p[~allowed] == 0.0)
    assert abs(p[allowed].sum() - 1.0) < 1e-9


# --- final decision ----------------------------------------------------------


class FixedBackend:
    def __init__(self, logits):
        self._logits = logits

    def logits(self, prompt, vocabulary):
        assert isinstance(prompt, DecisionPrompt) and prompt.render()
        return self._logits


class BrokenBackend:
    def logits(self, prompt, vocabulary):
        raise TimeoutError("down")


def test_single_candidate_skips_backend():
    assert final_decide("q", _state(GENERIC_QUERY), [agent("a.x", "d")], BrokenBackend()) == "a.x"


def test_default_backend_highest_similarity(encoder):
    cands = [agent("t.a", "hotel rooms downtown"), agent("t.b", "cheap flight tickets"), agent("t.c", "car rental")]
    q = "cheap flight tickets please"
    best = max(cands, key=lambda a: cosine_sim(encoder.encode(q), encoder.encode(a.description)))
    assert final_decide(q, _state("TRAVEL_RELATED"), cands, encoder=encoder) == best.name


def test_non_candidate_logit_masked():
    cands = [agent("t.a", "x"), agent("t.b", "y")]
    vocab = ["t.a", "evil.z", "t.b"]
    assert final_decide("q", _state(GENERIC_QUERY), cands, FixedBackend([0.0, 100.0, 1.0]), vocabulary=vocab) == "t.b"


def test_backend_failures_raise_backend_error():
    cands = [agent("t.a", "x"), agent("t.b", "y")]
    with pytest.raises(BackendError):
        final_decide("q", _state(GENERIC_QUERY), cands, BrokenBackend())
    with pytest.raises(BackendError):
        final_decide("q", _state(GENERIC_QUERY), cands, FixedBackend([1.0]))
    with pytest.raises(BackendError):
        final_decide("q", _state(GENERIC_QUERY), cands, FixedBackend([1.0, float("nan")]))


# --- registration ------------------------------------------------------------


def test_register_matching_description(encoder):
    reg = AgentRegistry((), (TRAVEL, FOOD))
    r = register_agent(agent("travel.x", TRAVEL.text), reg, encoder)
    assert "travel" in r.assigned and r.new_category is None
    assert r.registry.generation == 1 and reg.agents == ()


def test_register_creates_category(encoder):
    reg = AgentRegistry((), (TRAVEL, FOOD))
    r = register_agent(agent("weather.now", "weather forecast temperature rain"), reg, encoder, threshold=0.99)
    assert r.new_category is not None and r.new_category.source is CategorySource.CLUSTERED
    assert r.assigned == (r.new_category.id,)
    assert r.new_category in r.registry.categories


def test_register_duplicate(encoder):
    reg = register_agent(agent("a.b", "something"), AgentRegistry(), encoder).registry
    with pytest.raises(DuplicateIdError):
        register_agent(agent("a.b", "else"), reg, encoder)


@given(st.lists(st.text(alphabet="abcdefgh ", min_size=3, max_size=30).filter(str.strip), min_size=1, max_size=8))
def test_every_agent_has_a_category(descs):
    from moma.encoder import HashingEncoder

    enc = HashingEncoder(64)
    reg = AgentRegistry((), (TRAVEL,))
    for i, d in enumerate(descs):
        reg = register_agent(agent(f"p.a{i}", d), reg, enc).registry
    ids = {c.id for c in reg.categories}
    assert all(a.category_ids and a.category_ids <= ids for a in reg.agents)
