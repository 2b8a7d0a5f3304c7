"""Token-logit masking and the final agent decision.

Each agent name is one token of the decoding vocabulary. Unavailable
agents get an additive -inf so softmax gives them exactly zero mass.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from ..catalog import AgentDescriptor
from ..encoder import Encoder, cosine_matrix, encode_many
from ..errors import BackendError, DimensionError, DomainError, EmptyAvailableError
from .fsm import ResolvedState


@dataclass(frozen=True)
class MaskVector:
    vocabulary: tuple
    values: np.ndarray  # 0.0 allowed, -inf blocked

    def __len__(self):
        return len(self.values)

    @property
    def allowed(self) -> list:
        return [t for t, v in zip(self.vocabulary, self.values) if v == 0.0]


def build_mask(vocabulary: Sequence[str], available) -> MaskVector:
    available = set(available)
    if not available:
        raise EmptyAvailableError("at least one token must stay available")
    unknown = available.difference(vocabulary)
    if unknown:
        raise ValueError(f"available tokens not in vocabulary: {sorted(unknown)}")
    values = np.array([0.0 if t in available else -np.inf for t in vocabulary])
    return MaskVector(tuple(vocabulary), values)


def masked_softmax(logits, mask) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64) + np.asarray(mask, dtype=np.float64)
    e = np.exp(z - z.max())
    return e / e.sum()


def masked_decode(logits, mask: MaskVector | np.ndarray):
    """Return (chosen token, probabilities) after masking.

    With a plain array mask the chosen token is its integer index. Ties
    go to the lower index.
    """
    logits = np.asarray(logits, dtype=np.float64)
    values = mask.values if isinstance(mask, MaskVector) else np.asarray(mask, dtype=np.float64)
    if logits.shape != values.shape:
        raise DimensionError(f"logits length {logits.shape} does not match mask length {values.shape}")
    if not np.all(np.isfinite(logits)):
        raise DomainError("logits must be finite")
    if not np.any(values == 0.0):
        raise EmptyAvailableError("mask blocks every token")
    z = logits + values
    idx = int(np.argmax(z))
    probs = masked_softmax(logits, values)
    token = mask.vocabulary[idx] if isinstance(mask, MaskVector) else idx
    return token, probs


@dataclass(frozen=True)
class DecisionPrompt:
    query: str
    state: ResolvedState
    candidates: tuple

    def render(self) -> str:
        doc = {
            "instruction": "Choose exactly one agent whose input parameters fit the query "
            "and respect the current state. Answer with the agent name only.",
            "query": self.query,
            "state": self.state.to_dict(),
            "candidates": [
                {
                    "name": a.name,
                    "description": a.description,
                    "input_params": [list(p) for p in a.input_params],
                    "examples": list(a.few_shot_examples),
                }
                for a in self.candidates
            ],
        }
        return json.dumps(doc, ensure_ascii=False, indent=2)


class DecisionBackend(Protocol):
    def logits(self, prompt: DecisionPrompt, vocabulary: Sequence[str]) -> Sequence[float]: ...


class SimilarityRanker:
    """Default backend: logits are scaled query/description cosine similarities."""

    def __init__(self, encoder: Encoder, scale: float = 10.0):
        self.encoder = encoder
        self.scale = scale

    def logits(self, prompt: DecisionPrompt, vocabulary: Sequence[str]) -> np.ndarray:
        desc = {a.name: a.description for a in prompt.candidates}
        q = self.encoder.encode(prompt.query)[None, :]
        V = encode_many(self.encoder, [desc.get(t, t) for t in vocabulary])
        return self.scale * cosine_matrix(q, V)[0]


def final_decide(
    query: str,
    state: ResolvedState,
    candidates: Sequence[AgentDescriptor],
    backend: DecisionBackend | None = None,
    *,
    encoder: Encoder | None = None,
    vocabulary: Sequence[str] | None = None,
) -> str:
    """Let the backend rank candidates; masking keeps the answer inside them."""
    if not candidates:
        raise EmptyAvailableError("no candidates to decide between")
    names = [a.name for a in candidates]
    if len(names) == 1:
        return names[0]
    if backend is None:
        if encoder is None:
            raise ValueError("the default backend needs an encoder")
        backend = SimilarityRanker(encoder)
    vocab = list(vocabulary) if vocabulary is not None else names
    mask = build_mask(vocab, names)
    prompt = DecisionPrompt(query, state, tuple(candidates))
    try:
        logits = np.asarray(backend.logits(prompt, vocab), dtype=np.float64)
    except Exception as exc:
        raise BackendError(f"decision backend failed: {exc}") from exc
    if logits.shape != (len(vocab),) or not np.all(np.isfinite(logits)):
        raise BackendError(f"backend returned unusable logits of shape {logits.shape}")
    token, _ = masked_decode(logits, mask)
    return token
