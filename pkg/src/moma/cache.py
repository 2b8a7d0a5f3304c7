"""Prefetch cache from normalized queries to final agent lists.

A hit skips both agent-routing layers. Keys are matched exactly after
normalization; an optional embedding lookup (off by default) can also
match near-identical phrasings.
"""

from __future__ import annotations

import re
import threading
import time
from collections import OrderedDict
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .encoder import Encoder, cosine_sim
from .errors import CapacityError, ConfigError

DEFAULT_CAPACITY = 10_000
SEMANTIC_THRESHOLD = 0.95

DEFAULT_ABBREVIATIONS = {
    "pls": "please",
    "plz": "please",
    "thx": "thanks",
    "asap": "as soon as possible",
    "info": "information",
    "appt": "appointment",
    "msg": "message",
    "tmrw": "tomorrow",
}

_WS = re.compile(r"\s+")
_WORD = re.compile(r"\b\w+\b")


def normalize_query(text: str, abbreviations: Mapping[str, str] = DEFAULT_ABBREVIATIONS) -> str:
    """Lowercase, collapse whitespace, trim, expand whole-word abbreviations.

    Idempotent as long as no expansion contains an abbreviation key.
    """
    out = _WS.sub(" ", text.lower()).strip()
    if abbreviations:
        table = {k.lower(): _WS.sub(" ", v.lower()).strip() for k, v in abbreviations.items()}
        out = _WORD.sub(lambda m: table.get(m.group(0), m.group(0)), out)
        out = _WS.sub(" ", out).strip()
    return out


def check_abbreviations(abbreviations: Mapping[str, str]) -> None:
    keys = {k.lower() for k in abbreviations}
    for k, v in abbreviations.items():
        clash = keys.intersection(_WORD.findall(v.lower()))
        if clash:
            raise ConfigError(f"expansion of {k!r} contains abbreviation(s) {sorted(clash)}")


@dataclass
class CacheEntry:
    key: str
    value: tuple
    created_at: float
    hit_count: int = 0
    generation: int = 0


@dataclass(frozen=True)
class CacheStats:
    entries: int
    hits: int
    misses: int
    evictions: int
    capacity: int

    @property
    def hit_rate(self) -> float:
        total = self.hits + self.misses
        return self.hits / total if total else 0.0

    def to_dict(self) -> dict:
        return {
            "entries": self.entries,
            "hits": self.hits,
            "misses": self.misses,
            "hit_rate": round(self.hit_rate, 6),
            "evictions": self.evictions,
            "capacity": self.capacity,
        }


class PrefetchCache:
    """Thread-safe LRU cache of agent lists.

    ``generation`` tags every entry with the registry snapshot it was
    computed against; :meth:`sync_generation` drops everything when the
    registry changes.
    """

    def __init__(
        self,
        capacity: int = DEFAULT_CAPACITY,
        abbreviations: Mapping[str, str] = DEFAULT_ABBREVIATIONS,
        *,
        semantic_encoder: Encoder | None = None,
        semantic_threshold: float = SEMANTIC_THRESHOLD,
        clock=time.time,
    ):
        if capacity <= 0:
            raise CapacityError(f"cache capacity must be positive, got {capacity}")
        check_abbreviations(abbreviations)
        self.capacity = capacity
        self.abbreviations = dict(abbreviations)
        self.semantic_encoder = semantic_encoder
        self.semantic_threshold = semantic_threshold
        self._clock = clock
        self._entries: OrderedDict[str, CacheEntry] = OrderedDict()
        self._vectors: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()
        self.generation = 0
        self.hits = self.misses = self.evictions = 0

    def normalize(self, text: str) -> str:
        return normalize_query(text, self.abbreviations)

    def __len__(self):
        return len(self._entries)

    def __contains__(self, key: str) -> bool:
        return key in self._entries

    def lookup(self, key: str) -> tuple | None:
        """Agent list stored under an already-normalized key, or None."""
        with self._lock:
            entry = self._entries.get(key)
            if entry is None and self.semantic_encoder is not None:
                entry = self._nearest(key)
            if entry is None:
                self.misses += 1
                return None
            self._entries.move_to_end(entry.key)
            entry.hit_count += 1
            self.hits += 1
            return entry.value

    def get(self, text: str) -> tuple | None:
        return self.lookup(self.normalize(text))

    def insert(self, key: str, agents: Sequence[str]) -> None:
        if not agents:
            raise ValueError("cached agent list must be non-empty")
        with self._lock:
            if key in self._entries:
                self._entries.move_to_end(key)
            elif len(self._entries) >= self.capacity:
                old, _ = self._entries.popitem(last=False)
                self._vectors.pop(old, None)
                self.evictions += 1
            self._entries[key] = CacheEntry(key, tuple(agents), self._clock(), 0, self.generation)
            if self.semantic_encoder is not None:
                self._vectors[key] = self.semantic_encoder.encode(key)

    def put(self, text: str, agents: Sequence[str]) -> str:
        key = self.normalize(text)
        self.insert(key, agents)
        return key

    def _nearest(self, key: str) -> CacheEntry | None:
        if not self._vectors:
            return None
        v = self.semantic_encoder.encode(key)
        best_key, best_sim = None, -1.0
        for k, u in self._vectors.items():
            sim = cosine_sim(v, u)
            if sim > best_sim:
                best_key, best_sim = k, sim
        if best_sim >= self.semantic_threshold:
            return self._entries[best_key]
        return None

    def entry(self, key: str) -> CacheEntry | None:
        return self._entries.get(key)

    def keys(self) -> list[str]:
        """Keys from least to most recently used."""
        return list(self._entries)

    def clear(self) -> None:
        with self._lock:
            self._entries.clear()
            self._vectors.clear()

    def sync_generation(self, generation: int) -> bool:
        """Invalidate all entries if the registry generation moved on."""
        with self._lock:
            if generation == self.generation:
                return False
            self._entries.clear()
            self._vectors.clear()
            self.generation = generation
            return True

    def stats(self) -> CacheStats:
        return CacheStats(len(self._entries), self.hits, self.misses, self.evictions, self.capacity)
