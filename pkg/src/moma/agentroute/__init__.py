"""Two-layer agent selection: category retrieval, then a context-aware
state machine, masked final decision and agent registration."""

from .categories import CategoryBuild, build_categories, first_layer_retrieve, rank_categories
from .decision import (
    DecisionBackend,
    DecisionPrompt,
    MaskVector,
    SimilarityRanker,
    build_mask,
    final_decide,
    masked_decode,
)
from .fsm import (
    EVENT_TRIGGERED,
    GENERIC_QUERY,
    AtomicState,
    ResolvedState,
    Rule,
    StateMachineConfig,
    candidate_agents,
    default_config,
    dump_fsm_config,
    load_fsm_config,
    resolve_state,
)
from .kmeans import KMeansResult, kmeans
from .registry import AgentRegistry, Registration, register_agent

__all__ = [
    "AgentRegistry",
    "AtomicState",
    "CategoryBuild",
    "DecisionBackend",
    "DecisionPrompt",
    "EVENT_TRIGGERED",
    "GENERIC_QUERY",
    "KMeansResult",
    "MaskVector",
    "Registration",
    "ResolvedState",
    "Rule",
    "SimilarityRanker",
    "StateMachineConfig",
    "build_categories",
    "build_mask",
    "candidate_agents",
    "default_config",
    "dump_fsm_config",
    "final_decide",
    "first_layer_retrieve",
    "kmeans",
    "load_fsm_config",
    "masked_decode",
    "rank_categories",
    "register_agent",
    "resolve_state",
]
