"""Immutable agent/category snapshots and new-agent registration."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ..catalog import AgentDescriptor, Category, CategorySource
from ..encoder import Encoder, cosine_matrix, encode_many
from ..errors import DuplicateIdError
from .text import top_keywords

REGISTRATION_THRESHOLD = 0.4


@dataclass(frozen=True)
class AgentRegistry:
    """One snapshot of the agent pool and category system.

    Registration returns a new snapshot with ``generation`` bumped; the
    old one stays valid for readers still holding it.
    """

    agents: tuple = ()
    categories: tuple = ()
    generation: int = 0
    _vectors: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        object.__setattr__(self, "categories", tuple(self.categories))
        names = [a.name for a in self.agents]
        if len(set(names)) != len(names):
            raise DuplicateIdError("agent names must be unique")
        ids = [c.id for c in self.categories]
        if len(set(ids)) != len(ids):
            raise DuplicateIdError("category ids must be unique")

    def agent(self, name: str) -> AgentDescriptor:
        for a in self.agents:
            if a.name == name:
                return a
        raise KeyError(name)

    @property
    def vocabulary(self) -> list[str]:
        return [a.name for a in self.agents]

    def agent_vectors(self, encoder: Encoder) -> dict[str, np.ndarray]:
        """Description embeddings, memoized per encoder for this snapshot."""
        key = ("agents", id(encoder))
        if key not in self._vectors:
            V = encode_many(encoder, [a.description for a in self.agents])
            self._vectors[key] = {a.name: v for a, v in zip(self.agents, V)}
        return self._vectors[key]

    def category_vectors(self, encoder: Encoder) -> np.ndarray:
        key = ("categories", id(encoder))
        if key not in self._vectors:
            self._vectors[key] = encode_many(encoder, [c.text for c in self.categories])
        return self._vectors[key]


@dataclass(frozen=True)
class Registration:
    registry: AgentRegistry
    assigned: tuple  # category ids the new agent joined
    new_category: Category | None = None


def _new_category_id(registry: AgentRegistry) -> str:
    taken = {c.id for c in registry.categories}
    n = len(taken)
    while f"auto-{n}" in taken:
        n += 1
    return f"auto-{n}"


def register_agent(
    descriptor: AgentDescriptor,
    registry: AgentRegistry,
    encoder: Encoder,
    threshold: float = REGISTRATION_THRESHOLD,
) -> Registration:
    """Add an agent, assigning it to every category at least ``threshold`` similar.

    When no category qualifies, a clustered category named from the
    descriptor's top keywords is created for it.
    """
    if any(a.name == descriptor.name for a in registry.agents):
        raise DuplicateIdError(f"agent {descriptor.name!r} already registered")
    categories = list(registry.categories)
    assigned: list[str] = []
    if categories:
        sims = cosine_matrix(encoder.encode(descriptor.description)[None, :], registry.category_vectors(encoder))[0]
        order = np.argsort(-sims, kind="stable")
        assigned = [categories[i].id for i in order if sims[i] >= threshold]
    new_category = None
    if not assigned:
        name = " ".join(top_keywords([descriptor.description], 3)) or descriptor.prefix
        new_category = Category(_new_category_id(registry), name, descriptor.description, CategorySource.CLUSTERED)
        categories.append(new_category)
        assigned = [new_category.id]
    agent = replace(descriptor, category_ids=frozenset(assigned))
    snapshot = AgentRegistry(registry.agents + (agent,), tuple(categories), registry.generation + 1)
    return Registration(snapshot, tuple(assigned), new_category)


def registry_from(agents: Sequence[AgentDescriptor], categories: Sequence[Category]) -> AgentRegistry:
    return AgentRegistry(tuple(agents), tuple(categories))
