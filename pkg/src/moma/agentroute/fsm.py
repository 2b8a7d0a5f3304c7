"""Second routing layer: a context-aware state machine.

Input is resolved to a set of atomic intent states by keyword/regex rules
first and embedding similarity second; the resolved state then decides
which agents are callable (the action function).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from ..catalog import AgentDescriptor
from ..encoder import Encoder, cosine_matrix, encode_many
from ..errors import ConfigError, DataFormatError, NoCandidateError

GENERIC_QUERY = "GENERIC_QUERY"
EVENT_TRIGGERED = "EVENT_TRIGGERED"

# defaults; none of them come from measured data
TAU = 0.5
ALPHA = 0.3
TOP_K_CATEGORIES = 3
TOP_K_AGENTS = 5


@dataclass(frozen=True)
class AtomicState:
    name: str
    prompt: str
    prefixes: tuple = ()  # agent-name prefixes this state makes callable


@dataclass(frozen=True)
class Rule:
    kind: str  # "keyword" (case-insensitive substring) or "regex"
    pattern: str
    target: str
    priority: int

    def __post_init__(self):
        if self.kind not in ("keyword", "regex"):
            raise ConfigError(f"rule kind must be 'keyword' or 'regex', got {self.kind!r}")
        if self.kind == "regex":
            try:
                re.compile(self.pattern)
            except re.error as exc:
                raise ConfigError(f"bad regex {self.pattern!r}: {exc}") from None

    def matches(self, text: str) -> bool:
        if self.kind == "keyword":
            return self.pattern.lower() in text.lower()
        return re.search(self.pattern, text) is not None


@dataclass(frozen=True)
class StateMachineConfig:
    states: tuple
    rules: tuple = ()
    tau: float = TAU
    alpha: float = ALPHA
    top_k_categories: int = TOP_K_CATEGORIES
    top_k_agents: int = TOP_K_AGENTS

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "rules", tuple(sorted(self.rules, key=lambda r: r.priority)))
        names = [s.name for s in self.states]
        if len(set(names)) != len(names):
            raise ConfigError("state names must be unique")
        if GENERIC_QUERY not in names:
            raise ConfigError(f"state set must include {GENERIC_QUERY}")
        priorities = [r.priority for r in self.rules]
        if len(set(priorities)) != len(priorities):
            raise ConfigError("rule priorities must be unique")
        for r in self.rules:
            if r.target not in names:
                raise ConfigError(f"rule targets unknown state {r.target!r}")
        if not 0 < self.tau < 1:
            raise ConfigError("tau must be in (0, 1)")
        # alpha = 1 is allowed: it switches the first layer off entirely
        if not 0 < self.alpha <= 1:
            raise ConfigError("alpha must be in (0, 1]")
        if self.top_k_categories < 1 or self.top_k_agents < 1:
            raise ConfigError("top-k values must be >= 1")

    def state(self, name: str) -> AtomicState:
        for s in self.states:
            if s.name == name:
                return s
        raise KeyError(name)

    @property
    def state_names(self) -> list[str]:
        return [s.name for s in self.states]

    def to_dict(self) -> dict:
        return {
            "states": [{"name": s.name, "prompt": s.prompt, "prefixes": list(s.prefixes)} for s in self.states],
            "rules": [{"kind": r.kind, "pattern": r.pattern, "target": r.target, "priority": r.priority} for r in self.rules],
            "tau": self.tau,
            "alpha": self.alpha,
            "top_k_categories": self.top_k_categories,
            "top_k_agents": self.top_k_agents,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "StateMachineConfig":
        try:
            states = [AtomicState(s["name"], s["prompt"], tuple(s.get("prefixes", ()))) for s in doc["states"]]
            rules = [Rule(r["kind"], r["pattern"], r["target"], int(r["priority"])) for r in doc.get("rules", ())]
        except (KeyError, TypeError) as exc:
            raise DataFormatError(f"bad state machine config: {exc}") from None
        kw = {k: doc[k] for k in ("tau", "alpha", "top_k_categories", "top_k_agents") if k in doc}
        return cls(states, rules, **kw)


def default_config(**overrides) -> StateMachineConfig:
    states = [
        AtomicState("PATH_UPLOAD", "upload a file, attach a document, send a local file path or folder", ("file", "upload")),
        AtomicState("TRAVEL_RELATED", "travel trip flight hotel booking itinerary airport train ticket vacation", ("travel",)),
        AtomicState("FINANCE_RELATED", "finance money bank account payment stock invest budget loan tax", ("finance",)),
        AtomicState("FOOD_RELATED", "food restaurant recipe meal dinner cooking order takeout cuisine", ("food",)),
        AtomicState(GENERIC_QUERY, "general question chat explain help", ()),
        AtomicState(EVENT_TRIGGERED, "system event notification trigger reminder alarm", ("event",)),
    ]
    rules = [
        Rule("keyword", "upload", "PATH_UPLOAD", 1),
        Rule("keyword", "C:\\", "PATH_UPLOAD", 2),
        Rule("keyword", "/", "PATH_UPLOAD", 3),
        Rule("regex", r"(?i)\b(flight|hotel|itinerary|airport)s?\b", "TRAVEL_RELATED", 10),
        Rule("regex", r"(?i)\b(restaurant|recipe|takeout)s?\b", "FOOD_RELATED", 20),
        Rule("regex", r"(?i)\b(invoice|stock|loan|bank)s?\b", "FINANCE_RELATED", 30),
    ]
    return StateMachineConfig(states, rules, **overrides)


def load_fsm_config(path) -> StateMachineConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: {exc}") from None
    return StateMachineConfig.from_dict(doc)


def dump_fsm_config(cfg: StateMachineConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class ResolvedState:
    atomics: tuple  # state names, rule-derived first
    provenance: str  # "rule", "semantic", "both" or "fallback"
    similarities: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.atomics:
            raise ValueError("resolved state needs at least one atomic state")

    @property
    def composite(self) -> bool:
        return len(self.atomics) > 1

    @property
    def name(self) -> str:
        """Composite states read like TRAVEL_RELATED&FOOD_RELATED."""
        return "&".join(self.atomics)

    def to_dict(self) -> dict:
        return {"atomics": list(self.atomics), "provenance": self.provenance, "composite": self.composite}


def state_vectors(cfg: StateMachineConfig, encoder: Encoder) -> np.ndarray:
    return encode_many(encoder, [s.prompt for s in cfg.states])


def resolve_state(
    text: str,
    cfg: StateMachineConfig,
    encoder: Encoder,
    events: Iterable[str] = (),
    vectors: np.ndarray | None = None,
) -> ResolvedState:
    """Combine rule hits and semantic matches into the current state.

    Rule hits are always kept. The semantic stage adds every state with
    similarity >= tau; when no rule fired it also adds the single most
    similar state (if its similarity is positive). Named ``events`` are
    taken as already-resolved atomic states. With nothing from either
    stage the result is GENERIC_QUERY.
    """
    rule_states: list[str] = []
    for name in events:
        if name not in cfg.state_names:
            raise ConfigError(f"unknown event state {name!r}")
        if name not in rule_states:
            rule_states.append(name)
    for rule in cfg.rules:
        if rule.target not in rule_states and rule.matches(text):
            rule_states.append(rule.target)

    if vectors is None:
        vectors = state_vectors(cfg, encoder)
    sims = cosine_matrix(encoder.encode(text)[None, :], vectors)[0]
    order = np.argsort(-sims, kind="stable")
    semantic: list[str] = []
    if not rule_states and sims[order[0]] > 0:
        semantic.append(cfg.states[order[0]].name)
    for i in order:
        name = cfg.states[i].name
        if sims[i] >= cfg.tau and name not in semantic:
            semantic.append(name)

    atomics = list(rule_states)
    atomics += [s for s in semantic if s not in atomics]
    if len(atomics) > 1 and GENERIC_QUERY in atomics:
        atomics.remove(GENERIC_QUERY)
    sim_map = {s.name: float(v) for s, v in zip(cfg.states, sims)}
    if not atomics:
        return ResolvedState((GENERIC_QUERY,), "fallback", sim_map)
    from_rules = any(a in rule_states for a in atomics)
    from_semantic = any(a in semantic and a not in rule_states for a in atomics)
    provenance = "both" if from_rules and from_semantic else ("rule" if from_rules else "semantic")
    return ResolvedState(tuple(atomics), provenance, sim_map)


def state_prefixes(state: ResolvedState, cfg: StateMachineConfig) -> set[str]:
    out: set[str] = set()
    for name in state.atomics:
        out.update(cfg.state(name).prefixes)
    return out


def candidate_agents(
    state: ResolvedState,
    categories: Sequence,
    agents: Sequence[AgentDescriptor],
    cfg: StateMachineConfig,
    encoder: Encoder,
    query: str,
    agent_vectors: Mapping[str, np.ndarray] | None = None,
) -> list[AgentDescriptor]:
    """Action function: filter callable agents, then keep the top-k by similarity.

    An active agent passes the filter when its name prefix belongs to the
    resolved state or it sits in one of the retrieved ``categories``
    (Category objects or (Category, similarity) pairs).
    """
    if not agents:
        raise NoCandidateError("agent registry is empty")
    cat_ids = {(c[0] if isinstance(c, tuple) else c).id for c in categories}
    prefixes = state_prefixes(state, cfg)
    filtered = [a for a in agents if a.active and (a.prefix in prefixes or a.category_ids & cat_ids)]
    if not filtered:
        raise NoCandidateError(f"no active agent for state {state.name} and categories {sorted(cat_ids)}")
    if agent_vectors is None:
        V = encode_many(encoder, [a.description for a in filtered])
    else:
        V = np.vstack([agent_vectors[a.name] for a in filtered])
    sims = cosine_matrix(encoder.encode(query)[None, :], V)[0]
    order = np.argsort(-sims, kind="stable")[: cfg.top_k_agents]
    return [filtered[i] for i in order]
