"""Cost-aware routing of queries to LLMs and agents.

The LLM side scores every candidate model with a mixture-of-experts head
trained on pairwise comparisons (ties and strong wins included), then
picks a model on the cost/score Pareto frontier. The agent side narrows
the agent pool by category retrieval and a context-aware state machine
before a masked final decision.
"""

from .catalog import (
    AgentDescriptor,
    Category,
    ComparisonRecord,
    ModelCatalog,
    ModelProfile,
    Preference,
    PreferenceMode,
    estimate_cost,
    load_agent_registry,
    load_comparisons,
    load_model_catalog,
)
from .elo import compute_elo
from .encoder import HashingEncoder, cosine_sim, encode_hashing
from .errors import MomaError
from .gateway import Gateway, RoutingDecision
from .grk import RouterParams, forward, init_params, load_params, loss_grk, outcome_distribution, save_params, train
from .selector import ParetoPoint, Weights, pareto_frontier, select_with_preference, topsis_select

__version__ = "0.1.0"

__all__ = [
    "AgentDescriptor",
    "Category",
    "ComparisonRecord",
    "Gateway",
    "HashingEncoder",
    "ModelCatalog",
    "ModelProfile",
    "MomaError",
    "ParetoPoint",
    "Preference",
    "PreferenceMode",
    "RouterParams",
    "RoutingDecision",
    "Weights",
    "compute_elo",
    "cosine_sim",
    "encode_hashing",
    "estimate_cost",
    "forward",
    "init_params",
    "load_agent_registry",
    "load_comparisons",
    "load_model_catalog",
    "load_params",
    "loss_grk",
    "outcome_distribution",
    "pareto_frontier",
    "save_params",
    "select_with_preference",
    "topsis_select",
    "train",
]
