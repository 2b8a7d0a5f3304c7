"""End-to-end routing: agents first, LLMs as the fallback.

    query -> normalize -> cache?
          -> first-layer categories (best similarity > alpha)?
          -> state machine -> candidate agents -> masked final decision
          -> otherwise: router head scores + token costs -> preference selection
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

from .agentroute import (
    AgentRegistry,
    SimilarityRanker,
    StateMachineConfig,
    candidate_agents,
    default_config,
    final_decide,
    first_layer_retrieve,
    register_agent,
    resolve_state,
)
from .agentroute.fsm import state_vectors
from .agentroute.registry import REGISTRATION_THRESHOLD, Registration
from .cache import PrefetchCache
from .catalog import DEFAULT_OUTPUT_TOKENS, AgentDescriptor, ModelCatalog, Preference, PreferenceMode, estimate_cost, estimate_tokens
from .encoder import Encoder, HashingEncoder
from .errors import BackendError, BudgetInfeasibleError, ConfigError, MomaError, NoCandidateError
from .grk import RouterParams, forward
from .selector import ParetoPoint, PreferenceWeights, select_with_preference

log = logging.getLogger(__name__)

AGENT = "agent"
LLM = "llm"


@dataclass(frozen=True)
class RoutingDecision:
    path: str
    chosen: str
    preference: PreferenceMode
    diagnostics: dict = field(default_factory=dict)

    @property
    def cache_hit(self) -> bool:
        return bool(self.diagnostics.get("cache_hit"))

    def to_dict(self) -> dict:
        return {"path": self.path, "chosen": self.chosen, "preference": self.preference.to_dict(), "diagnostics": self.diagnostics}


class Gateway:
    """Routing engine over immutable snapshots (params, catalog, registry).

    The prefetch cache is the only shared mutable state; swapping the
    registry through :meth:`register_agent` invalidates it.
    """

    def __init__(
        self,
        catalog: ModelCatalog,
        params: RouterParams | None,
        encoder: Encoder | None = None,
        registry: AgentRegistry | None = None,
        fsm: StateMachineConfig | None = None,
        cache: PrefetchCache | None = None,
        *,
        backend=None,
        preference_weights: PreferenceWeights = PreferenceWeights(),
        expected_output_tokens: int = DEFAULT_OUTPUT_TOKENS,
        registration_threshold: float = REGISTRATION_THRESHOLD,
    ):
        if params is None:
            raise ConfigError("router parameters are required (train or load them first)")
        if not isinstance(catalog, ModelCatalog):
            catalog = ModelCatalog(catalog)
        self.encoder = encoder or HashingEncoder()
        if params.n_models != len(catalog):
            raise ConfigError(f"params score {params.n_models} models but the catalog lists {len(catalog)}")
        if params.d != self.encoder.dim:
            raise ConfigError(f"params expect dim {params.d}, encoder produces {self.encoder.dim}")
        self.catalog = catalog
        self.params = params
        self.registry = registry or AgentRegistry()
        self.fsm = fsm or default_config()
        self.cache = cache or PrefetchCache()
        self.cache.sync_generation(self.registry.generation)
        self.backend = backend
        self.preference_weights = preference_weights
        self.expected_output_tokens = expected_output_tokens
        self.registration_threshold = registration_threshold
        self._state_vectors = state_vectors(self.fsm, self.encoder)
        self._ranker = SimilarityRanker(self.encoder)

    # -- registry -------------------------------------------------------------

    def register_agent(self, descriptor: AgentDescriptor) -> Registration:
        reg = register_agent(descriptor, self.registry, self.encoder, self.registration_threshold)
        self.registry = reg.registry
        self.cache.sync_generation(reg.registry.generation)
        return reg

    def swap_registry(self, registry: AgentRegistry) -> None:
        self.registry = registry
        self.cache.sync_generation(registry.generation)

    # -- routing --------------------------------------------------------------

    def route(self, query: str, preference: PreferenceMode = PreferenceMode()) -> RoutingDecision:
        registry = self.registry  # one snapshot for the whole request
        if self.cache.generation != registry.generation:
            self.cache.sync_generation(registry.generation)
        key = self.cache.normalize(query)
        diag: dict = {"normalized_query": key, "cache_hit": False}

        cached = self.cache.lookup(key)
        if cached is not None:
            diag.update(cache_hit=True, candidates=list(cached))
            return RoutingDecision(AGENT, cached[0], preference, diag)

        try:
            agents = self._route_agent(query, registry, diag)
        except MomaError as exc:
            agents = None
            diag["agent_path_error"] = f"{type(exc).__name__}: {exc}"
        if agents:
            self.cache.insert(key, agents)
            return RoutingDecision(AGENT, agents[0], preference, diag)
        return self._route_llm(query, preference, diag)

    def _route_agent(self, query: str, registry: AgentRegistry, diag: dict) -> list[str] | None:
        if not registry.categories or not registry.agents:
            diag["agent_path_skipped"] = "empty agent registry"
            return None
        ranked = first_layer_retrieve(query, registry.categories, self.fsm, self.encoder, registry.category_vectors(self.encoder))
        diag["categories"] = [(c.id, round(s, 6)) for c, s in ranked]
        if not ranked:
            diag["agent_path_skipped"] = f"no category above alpha={self.fsm.alpha}"
            return None
        state = resolve_state(query, self.fsm, self.encoder, vectors=self._state_vectors)
        diag["state"] = state.to_dict()
        try:
            candidates = candidate_agents(
                state, ranked, registry.agents, self.fsm, self.encoder, query, registry.agent_vectors(self.encoder)
            )
        except NoCandidateError as exc:
            diag["agent_path_skipped"] = str(exc)
            return None
        diag["candidates"] = [a.name for a in candidates]
        try:
            chosen = final_decide(query, state, candidates, self.backend or self._ranker, vocabulary=registry.vocabulary)
        except BackendError as exc:
            log.warning("decision backend failed, using similarity ranker: %s", exc)
            diag["backend_error"] = str(exc)
            chosen = final_decide(query, state, candidates, self._ranker, vocabulary=registry.vocabulary)
        return [chosen] + [a.name for a in candidates if a.name != chosen]

    def model_points(self, query: str) -> list[ParetoPoint]:
        """(model, estimated cost, predicted score) for every catalog model."""
        head = forward(self.params, self.encoder.encode(query))
        n_in = estimate_tokens(query)
        return [
            ParetoPoint(p.id, float(estimate_cost(p, n_in, self.expected_output_tokens)), float(s))
            for p, s in zip(self.catalog, head.scores)
        ]

    def _route_llm(self, query: str, preference: PreferenceMode, diag: dict) -> RoutingDecision:
        points = self.model_points(query)
        try:
            result = select_with_preference(points, preference, self.preference_weights)
        except BudgetInfeasibleError as exc:
            # still answer: drop the budget and take the cheapest quartile
            diag["budget_infeasible"] = str(exc)
            result = select_with_preference(points, PreferenceMode(Preference.COST_PRIORITY), self.preference_weights)
        diag["selection"] = result.to_dict()
        diag["estimated_cost"] = result.chosen_point.cost
        return RoutingDecision(LLM, result.chosen, preference, diag)

    def route_many(self, queries: Sequence[str], preference: PreferenceMode = PreferenceMode()) -> list[RoutingDecision]:
        return [self.route(q, preference) for q in queries]
