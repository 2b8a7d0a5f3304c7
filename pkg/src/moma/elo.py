"""Sequential Elo ratings from comparison logs.

Strong and weak outcomes score the same (win 1, tie 0.5, loss 0); record
order matters because updates are applied one battle at a time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable

from .catalog import ComparisonRecord
from .errors import ConfigError

K_FACTOR = 32.0
INITIAL_RATING = 1000.0
SCALE = 400.0

_SCORE_A = {0: 0.5, 1: 1.0, 3: 1.0, 2: 0.0, 4: 0.0}


@dataclass(frozen=True)
class EloTable:
    ratings: dict
    k_factor: float = K_FACTOR
    initial_rating: float = INITIAL_RATING

    def __getitem__(self, model_id: str) -> float:
        return self.ratings[model_id]

    def leaderboard(self) -> list[tuple[str, float]]:
        """(model id, rating) rows, best first; equal ratings by id."""
        return sorted(self.ratings.items(), key=lambda kv: (-kv[1], kv[0]))

    def to_json(self, ndigits: int = 4) -> str:
        rows = [{"model": m, "rating": round(r, ndigits)} for m, r in self.leaderboard()]
        return json.dumps(rows, indent=2)


def expected_score(r_a: float, r_b: float) -> float:
    return 1.0 / (1.0 + 10.0 ** ((r_b - r_a) / SCALE))


def compute_elo(
    records: Iterable[ComparisonRecord],
    k_factor: float = K_FACTOR,
    initial: float = INITIAL_RATING,
) -> EloTable:
    if not k_factor > 0:
        raise ConfigError(f"k_factor must be > 0, got {k_factor}")
    ratings: dict[str, float] = {}
    for rec in records:
        r_a = ratings.setdefault(rec.model_a, initial)
        r_b = ratings.setdefault(rec.model_b, initial)
        e_a = expected_score(r_a, r_b)
        s_a = _SCORE_A[rec.label]
        delta = k_factor * (s_a - e_a)
        # E_b = 1 - E_a and S_b = 1 - S_a, so b moves by exactly -delta
        ratings[rec.model_a] = r_a + delta
        ratings[rec.model_b] = r_b - delta
    return EloTable(ratings, k_factor, initial)
