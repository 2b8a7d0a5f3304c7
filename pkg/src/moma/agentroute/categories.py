"""First routing layer: building the category system and retrieving the
categories most relevant to a query."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from ..catalog import AgentDescriptor, Category, CategorySource
from ..encoder import Encoder, cosine_matrix, encode_many
from ..errors import ConfigError
from .kmeans import kmeans
from .text import top_keywords

REDUNDANCY_THRESHOLD = 0.85


@dataclass(frozen=True)
class CategoryBuild:
    categories: list  # predefined first, then surviving clustered ones
    agents: list  # agents with category_ids filled in
    removed: dict  # redundant clustered Category -> predefined id it duplicated

    @property
    def assignments(self) -> dict:
        return {a.name: a.category_ids for a in self.agents}


def cluster_category(cid: str, descriptions: Sequence[str]) -> Category:
    name = " ".join(top_keywords(descriptions, 3)) or cid
    return Category(id=cid, name=name, description=" ".join(descriptions), source=CategorySource.CLUSTERED)


def build_categories(
    agents: Sequence[AgentDescriptor],
    predefined: Sequence[Category],
    k: int,
    encoder: Encoder,
    redundancy_threshold: float = REDUNDANCY_THRESHOLD,
    seed: int = 0,
) -> CategoryBuild:
    """Merge predefined categories with k-means clusters of agent descriptions.

    A clustered category whose text is at least ``redundancy_threshold``
    similar to a predefined one is dropped and its agents move to that
    predefined category. Predefined categories are never dropped.
    """
    if not agents:
        raise ConfigError("build_categories needs at least one agent")
    if not 0 < redundancy_threshold < 1:
        raise ConfigError("redundancy_threshold must be in (0, 1)")
    E = encode_many(encoder, [a.description for a in agents])
    km = kmeans(E, k, seed=seed)
    taken = {c.id for c in predefined}
    clustered = []
    for j in range(k):
        members = [a.description for a, lab in zip(agents, km.labels) if lab == j]
        cid, n = f"cluster-{j}", 0
        while cid in taken:
            n += 1
            cid = f"cluster-{j}-{n}"
        taken.add(cid)
        clustered.append(cluster_category(cid, members))

    target: dict[int, str] = {}  # cluster index -> category id that receives its agents
    removed = {}
    if predefined:
        sims = cosine_matrix(encode_many(encoder, [c.text for c in clustered]), encode_many(encoder, [c.text for c in predefined]))
    for j, cat in enumerate(clustered):
        if predefined:
            best = int(np.argmax(sims[j]))
            if sims[j, best] >= redundancy_threshold:
                removed[cat] = predefined[best].id
                target[j] = predefined[best].id
                continue
        target[j] = cat.id

    survivors = [c for c in clustered if c not in removed]
    final_ids = {c.id for c in predefined} | {c.id for c in survivors}
    updated = [
        replace(a, category_ids=frozenset(a.category_ids & final_ids) | {target[int(lab)]})
        for a, lab in zip(agents, km.labels)
    ]
    return CategoryBuild(list(predefined) + survivors, updated, removed)


def category_vectors(categories: Sequence[Category], encoder: Encoder) -> np.ndarray:
    return encode_many(encoder, [c.text for c in categories])


def rank_categories(query: str, categories: Sequence[Category], encoder: Encoder, vectors: np.ndarray | None = None):
    """All categories with their similarity to ``query``, best first (stable)."""
    if vectors is None:
        vectors = category_vectors(categories, encoder)
    sims = cosine_matrix(encoder.encode(query)[None, :], vectors)[0]
    order = np.argsort(-sims, kind="stable")
    return [(categories[i], float(sims[i])) for i in order]


def first_layer_retrieve(query: str, categories: Sequence[Category], cfg, encoder: Encoder, vectors: np.ndarray | None = None):
    """Top ``cfg.top_k_categories`` categories with similarity above ``cfg.alpha``."""
    if not categories:
        raise ConfigError("no categories to retrieve from")
    ranked = rank_categories(query, categories, encoder, vectors)
    return [(c, s) for c, s in ranked if s > cfg.alpha][: cfg.top_k_categories]
