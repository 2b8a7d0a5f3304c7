"""Comparison routers over the same encoder: a softmax classifier trained
on best-model labels, and a pairwise (contrastive) scorer trained on
binary preferences. Both are a single affine map d -> M.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.special import expit, log_expit, log_softmax, softmax

from . import persist
from .encoder import Encoder, encode_many
from .errors import ConfigError, DataFormatError, DimensionError
from .grk import TrainConfig

CLASSIFIER_MAGIC = b"MOMC"
PAIRWISE_MAGIC = b"MOMP"
FORMAT_VERSION = 1

BASELINE_TRAIN = TrainConfig(epochs=30, learning_rate=0.5, batch_size=32, seed=0)


@dataclass(eq=False)
class AffineParams:
    W: np.ndarray  # (M, d)
    b: np.ndarray  # (M,)
    version: int = FORMAT_VERSION

    MAGIC = b"AFFN"

    def __post_init__(self):
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise DimensionError("inconsistent affine weight shapes")
        if not (np.all(np.isfinite(self.W)) and np.all(np.isfinite(self.b))):
            raise ValueError("weights must be finite")

    @property
    def d(self) -> int:
        return self.W.shape[1]

    @property
    def n_models(self) -> int:
        return self.W.shape[0]

    @classmethod
    def zeros(cls, d: int, n_models: int):
        return cls(np.zeros((n_models, d)), np.zeros(n_models))

    def logits(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.d:
            raise DimensionError(f"features have dim {X.shape[1]}, params expect {self.d}")
        return X @ self.W.T + self.b

    def copy(self):
        return replace(self, W=self.W.copy(), b=self.b.copy())

    def __eq__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        return (
            self.version == other.version
            and self.W.shape == other.W.shape
            and self.W.tobytes() == other.W.tobytes()
            and self.b.tobytes() == other.b.tobytes()
        )

    def to_bytes(self) -> bytes:
        return persist.pack(self.MAGIC, self.version, "II", (self.d, self.n_models), (self.W, self.b))

    @classmethod
    def from_bytes(cls, blob: bytes):
        (d, M), (W, b) = persist.unpack(blob, cls.MAGIC, FORMAT_VERSION, "II", lambda h: [(h[1], h[0]), (h[1],)])
        try:
            return cls(W, b)
        except ValueError as exc:
            raise DataFormatError(str(exc)) from None

    def save(self, path) -> None:
        persist.write(path, self.to_bytes())

    @classmethod
    def load(cls, path):
        return cls.from_bytes(persist.read(path))


class ClassifierParams(AffineParams):
    MAGIC = CLASSIFIER_MAGIC


class PairwiseParams(AffineParams):
    MAGIC = PAIRWISE_MAGIC


def _sgd(params: AffineParams, n: int, grad_fn, config: TrainConfig) -> AffineParams:
    params = params.copy()
    rng = np.random.default_rng(config.seed)
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            gW, gb = grad_fn(params, order[start : start + config.batch_size])
            params.W -= config.learning_rate * gW
            params.b -= config.learning_rate * gb
    return params


# --- SFT classification router ---------------------------------------------


def sft_loss(params: ClassifierParams, X: np.ndarray, labels: np.ndarray) -> float:
    logp = log_softmax(params.logits(X), axis=1)
    return float(-np.mean(logp[np.arange(len(labels)), labels]))


def _sft_grad(params, X, labels):
    P = softmax(params.logits(X), axis=1)
    P[np.arange(len(labels)), labels] -= 1.0
    P /= len(labels)
    return P.T @ X, P.sum(axis=0)


def sft_train(
    dataset: Sequence[tuple[str, int]],
    encoder: Encoder,
    n_models: int,
    config: TrainConfig = BASELINE_TRAIN,
    init: ClassifierParams | None = None,
) -> ClassifierParams:
    """Cross-entropy training on (query, best model index) pairs."""
    if not dataset:
        raise ConfigError("dataset must be non-empty")
    labels = np.array([m for _, m in dataset])
    if labels.min() < 0 or labels.max() >= n_models:
        raise ConfigError("label out of range")
    X = encode_many(encoder, [q for q, _ in dataset])
    params = init or ClassifierParams.zeros(encoder.dim, n_models)
    return _sgd(params, len(labels), lambda p, idx: _sft_grad(p, X[idx], labels[idx]), config)


def sft_predict(params: ClassifierParams, query: str, encoder: Encoder) -> np.ndarray:
    """Probability distribution over the M candidate models."""
    return softmax(params.logits(encoder.encode(query))[0])


# --- contrastive pairwise router -----------------------------------------


def preference_probability(params: PairwiseParams, features: np.ndarray, i: int, j: int) -> float:
    """P(model i preferred over model j | query)."""
    f = params.logits(features)[0]
    return float(expit(f[i] - f[j]))


def contrastive_loss(params: PairwiseParams, X, ii, jj, y) -> float:
    f = params.logits(X)
    rows = np.arange(len(y))
    z = f[rows, ii] - f[rows, jj]
    return float(-np.mean(y * log_expit(z) + (1 - y) * log_expit(-z)))


def _contrastive_grad(params, X, ii, jj, y):
    f = params.logits(X)
    rows = np.arange(len(y))
    g = (expit(f[rows, ii] - f[rows, jj]) - y) / len(y)
    G = np.zeros_like(f)
    np.add.at(G, (rows, ii), g)
    np.add.at(G, (rows, jj), -g)
    return G.T @ X, G.sum(axis=0)


def contrastive_train(
    dataset: Sequence[tuple[str, int, int, int]],
    encoder: Encoder,
    n_models: int,
    config: TrainConfig = BASELINE_TRAIN,
    init: PairwiseParams | None = None,
) -> PairwiseParams:
    """Binary cross-entropy on sigma(f(x, i) - f(x, j)) against y_ij in {0, 1}."""
    if not dataset:
        raise ConfigError("dataset must be non-empty")
    ii = np.array([i for _, i, _, _ in dataset])
    jj = np.array([j for _, _, j, _ in dataset])
    y = np.array([float(v) for _, _, _, v in dataset])
    if np.any(ii == jj):
        raise ConfigError("pairs must compare two different models")
    if min(ii.min(), jj.min()) < 0 or max(ii.max(), jj.max()) >= n_models:
        raise ConfigError("model index out of range")
    if not np.all((y == 0) | (y == 1)):
        raise ConfigError("preference labels must be 0 or 1")
    queries = {}
    for q, *_ in dataset:
        queries.setdefault(q, len(queries))
    U = encode_many(encoder, list(queries))
    row = np.array([queries[q] for q, *_ in dataset])
    params = init or PairwiseParams.zeros(encoder.dim, n_models)
    return _sgd(params, len(y), lambda p, idx: _contrastive_grad(p, U[row[idx]], ii[idx], jj[idx], y[idx]), config)


def win_counts(scores: np.ndarray) -> np.ndarray:
    """wins[i] = number of j with scores[i] > scores[j]."""
    scores = np.asarray(scores, dtype=np.float64)
    return (scores[:, None] > scores[None, :]).sum(axis=1)


def contrastive_rank(params: PairwiseParams, query: str, encoder: Encoder) -> tuple[int, list[int]]:
    """Aggregate pairwise wins; ties by raw score, then lower index."""
    if params.n_models < 2:
        raise DimensionError("ranking needs at least two models")
    scores = params.logits(encoder.encode(query))[0]
    wins = win_counts(scores)
    ranking = sorted(range(len(scores)), key=lambda i: (-wins[i], -scores[i], i))
    return ranking[0], ranking
