"""Generalized rating kernel: a mixture-of-experts scoring head trained on
five-way pairwise outcomes (tie, weak win/loss, strong win/loss).

For a query with features ``x`` the head emits one score per candidate
model and a tie threshold ``theta > 1``. For a pair (a, b) with scores
``beta_a``, ``beta_b``::

    p_win  = e^beta_a / (e^beta_a + theta e^beta_b)
    p_lose = e^beta_b / (e^beta_b + theta e^beta_a)
    p_tie  = 1 - p_win - p_lose

    delta  = beta_a - ln(theta) - beta_b
    s_win  = sigmoid(kappa (delta - margin))
    s_lose = sigmoid(kappa (-delta - margin))

and the five classes are ``[p_tie, p_win (1 - s_win), p_lose (1 - s_lose),
p_win s_win, p_lose s_lose]``. Note ``p_win = sigmoid(delta)`` and
``p_lose = sigmoid(-delta - 2 ln theta)``, which is how everything below
is evaluated in log space.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from scipy.special import expit, log_expit

from . import persist
from .catalog import ComparisonRecord
from .encoder import Encoder, encode_many
from .errors import ConfigError, DataFormatError, DimensionError, DomainError, UnknownModelError

N_OUTCOMES = 5
TIE, WIN, LOSE, STRONG_WIN, STRONG_LOSE = range(N_OUTCOMES)
PROB_FLOOR = 1e-12
THETA_FLOOR = 1e-9  # smallest theta - 1
_LOG_FLOOR = np.log(PROB_FLOOR)

MAGIC = b"MOMA"
FORMAT_VERSION = 1
_HEADER = "IIIIdd"  # d, E, M, top_k, kappa, margin


@dataclass(eq=False)
class RouterParams:
    gate_w: np.ndarray  # (E, d)
    gate_b: np.ndarray  # (E,)
    expert_w: np.ndarray  # (E, M + 1, d); last output row is the theta pre-activation
    expert_b: np.ndarray  # (E, M + 1)
    top_k: int = 2
    kappa: float = 1.0
    margin: float = 0.0
    version: int = FORMAT_VERSION

    def __post_init__(self):
        E, d = self.gate_w.shape
        if self.gate_b.shape != (E,) or self.expert_w.shape[0] != E or self.expert_w.shape[2] != d:
            raise DimensionError("inconsistent router weight shapes")
        if self.expert_b.shape != self.expert_w.shape[:2] or self.expert_w.shape[1] < 2:
            raise DimensionError("inconsistent expert output shapes")
        if not 1 <= self.top_k <= E:
            raise ConfigError(f"top_k must be in [1, {E}], got {self.top_k}")
        if not self.kappa > 0:
            raise ConfigError(f"kappa must be > 0, got {self.kappa}")
        if not self.margin >= 0:
            raise ConfigError(f"margin must be >= 0, got {self.margin}")
        for arr in self.arrays():
            if not np.all(np.isfinite(arr)):
                raise DomainError("router weights must be finite")

    @property
    def d(self) -> int:
        return self.gate_w.shape[1]

    @property
    def n_experts(self) -> int:
        return self.gate_w.shape[0]

    @property
    def n_models(self) -> int:
        return self.expert_w.shape[1] - 1

    def arrays(self) -> tuple[np.ndarray, ...]:
        return (self.gate_w, self.gate_b, self.expert_w, self.expert_b)

    def copy(self) -> "RouterParams":
        return replace(self, **{k: getattr(self, k).copy() for k in ("gate_w", "gate_b", "expert_w", "expert_b")})

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_flat(self, flat: np.ndarray) -> "RouterParams":
        out, pos = {}, 0
        for name in ("gate_w", "gate_b", "expert_w", "expert_b"):
            arr = getattr(self, name)
            out[name] = np.asarray(flat[pos : pos + arr.size], dtype=np.float64).reshape(arr.shape).copy()
            pos += arr.size
        return replace(self, **out)

    def __eq__(self, other):
        if not isinstance(other, RouterParams):
            return NotImplemented
        scalars = (self.top_k, self.kappa, self.margin, self.version)
        if scalars != (other.top_k, other.kappa, other.margin, other.version):
            return False
        return all(
            a.shape == b.shape and a.astype("<f8").tobytes() == b.astype("<f8").tobytes()
            for a, b in zip(self.arrays(), other.arrays())
        )


def init_params(
    d: int,
    n_models: int,
    n_experts: int = 4,
    top_k: int = 2,
    kappa: float = 1.0,
    margin: float = 0.0,
    seed: int = 0,
    scale: float = 0.05,
) -> RouterParams:
    """Uniform(-scale, scale) weights drawn from ``seed``."""
    if d < 1 or n_models < 1 or n_experts < 1:
        raise ConfigError("d, n_models and n_experts must be positive")
    rng = np.random.default_rng(seed)
    u = lambda *shape: rng.uniform(-scale, scale, size=shape)
    return RouterParams(
        gate_w=u(n_experts, d),
        gate_b=u(n_experts),
        expert_w=u(n_experts, n_models + 1, d),
        expert_b=u(n_experts, n_models + 1),
        top_k=top_k,
        kappa=kappa,
        margin=margin,
    )


def zero_params(d: int, n_models: int, n_experts: int = 4, top_k: int = 2, **kw) -> RouterParams:
    return RouterParams(
        gate_w=np.zeros((n_experts, d)),
        gate_b=np.zeros(n_experts),
        expert_w=np.zeros((n_experts, n_models + 1, d)),
        expert_b=np.zeros((n_experts, n_models + 1)),
        top_k=top_k,
        **kw,
    )


# --- forward pass ------------------------------------------------------------


@dataclass(frozen=True)
class HeadOutput:
    scores: np.ndarray
    theta: float


@dataclass
class _Trace:
    """Intermediates of a batched forward pass, kept for backprop."""

    X: np.ndarray
    gate_probs: np.ndarray  # (N, E) full softmax
    weights: np.ndarray  # (N, E) renormalized over the selected experts, 0 elsewhere
    selected: np.ndarray  # (N, top_k) expert indices
    expert_out: np.ndarray  # (N, E, M + 1)
    out: np.ndarray  # (N, M + 1)

    @property
    def scores(self) -> np.ndarray:
        return self.out[:, :-1]

    @property
    def raw_theta(self) -> np.ndarray:
        return self.out[:, -1]

    @property
    def softplus(self) -> np.ndarray:
        return np.logaddexp(0.0, self.raw_theta)

    @property
    def theta(self) -> np.ndarray:
        # floored so that theta > 1 survives float rounding
        return 1.0 + np.maximum(self.softplus, THETA_FLOOR)


def gate(params: RouterParams, X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (softmax gate probs, top-k indices, renormalized weights).

    Ties among gate probabilities go to the lower expert index.
    """
    logits = X @ params.gate_w.T + params.gate_b
    logits = logits - logits.max(axis=1, keepdims=True)
    probs = np.exp(logits)
    probs /= probs.sum(axis=1, keepdims=True)
    selected = np.argsort(-probs, axis=1, kind="stable")[:, : params.top_k]
    weights = np.zeros_like(probs)
    rows = np.arange(len(X))[:, None]
    weights[rows, selected] = probs[rows, selected]
    weights /= weights.sum(axis=1, keepdims=True)
    return probs, selected, weights


def _forward_batch(params: RouterParams, X: np.ndarray) -> _Trace:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != params.d:
        raise DimensionError(f"features have dim {X.shape[1]}, router expects {params.d}")
    probs, selected, weights = gate(params, X)
    expert_out = np.einsum("nd,emd->nem", X, params.expert_w) + params.expert_b
    out = np.einsum("ne,nem->nm", weights, expert_out)
    return _Trace(X, probs, weights, selected, expert_out, out)


def forward(params: RouterParams, features: np.ndarray) -> HeadOutput:
    """Scores and tie threshold for a single query."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 1:
        raise DimensionError("forward expects a single feature vector")
    tr = _forward_batch(params, features[None, :])
    return HeadOutput(scores=tr.scores[0].copy(), theta=float(tr.theta[0]))


def forward_many(params: RouterParams, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched forward: (N, M) scores and (N,) thetas."""
    tr = _forward_batch(params, X)
    return tr.scores.copy(), tr.theta


# --- outcome model ---------------------------------------------------------


def _check_theta(theta) -> None:
    if not np.all(np.asarray(theta) > 1.0):
        raise DomainError("theta must be > 1")


def base_probs(beta_a: float, beta_b: float, theta: float) -> tuple[float, float, float]:
    """(p_win, p_lose, p_tie) for model a against model b."""
    _check_theta(theta)
    t = np.log(theta)
    delta = beta_a - t - beta_b
    p_win = float(expit(delta))
    p_lose = float(expit(-delta - 2.0 * t))
    return p_win, p_lose, 1.0 - p_win - p_lose


def strong_split(delta: float, kappa: float, margin: float) -> tuple[float, float]:
    """(s_win, s_lose): share of a win (loss) that counts as strong."""
    if not kappa > 0:
        raise DomainError("kappa must be > 0")
    return float(expit(kappa * (delta - margin))), float(expit(kappa * (-delta - margin)))


def log_outcome_probs(beta_a, beta_b, theta, kappa: float, margin: float) -> np.ndarray:
    """Log-probabilities of all five outcomes, shape ``(..., 5)``.

    Stable for |beta| in the hundreds: every term is a log-sigmoid.
    """
    _check_theta(theta)
    if not kappa > 0:
        raise DomainError("kappa must be > 0")
    beta_a, beta_b, theta = np.broadcast_arrays(
        np.asarray(beta_a, dtype=np.float64), np.asarray(beta_b, dtype=np.float64), np.asarray(theta, dtype=np.float64)
    )
    t = np.log(theta)
    delta = beta_a - t - beta_b
    u = -delta - 2.0 * t  # log-odds of p_lose
    log_win = log_expit(delta)
    log_lose = log_expit(u)
    a = kappa * (delta - margin)
    b = kappa * (-delta - margin)
    # p_tie = sigmoid(-delta) - sigmoid(u) = sigmoid(-delta) sigmoid(-u) (1 - e^{-2t})
    log_tie = log_expit(-delta) + log_expit(-u) + np.log(-np.expm1(-2.0 * t))
    return np.stack(
        [
            log_tie,
            log_win + log_expit(-a),
            log_lose + log_expit(-b),
            log_win + log_expit(a),
            log_lose + log_expit(b),
        ],
        axis=-1,
    )


def outcome_distribution(beta_a: float, beta_b: float, theta: float, kappa: float = 1.0, margin: float = 0.0) -> np.ndarray:
    """Five-class probabilities ordered [tie, a>b, a<b, a>>b, a<<b]."""
    return np.exp(log_outcome_probs(beta_a, beta_b, theta, kappa, margin))


def _label_logp_and_grads(beta_a, beta_b, theta, labels, kappa, margin):
    """log p[label] and its derivatives w.r.t. (beta_a - beta_b) and ln(theta)."""
    t = np.log(theta)
    d1 = beta_a - beta_b
    delta = d1 - t
    u = -d1 - t
    a = kappa * (delta - margin)
    b = kappa * (-delta - margin)
    logp = np.take_along_axis(log_outcome_probs(beta_a, beta_b, theta, kappa, margin), labels[:, None], axis=1)[:, 0]

    s = expit
    g_d1 = np.empty_like(d1)
    g_t = np.empty_like(d1)
    for y, (gd, gt) in {
        TIE: (-s(delta) + s(u), s(delta) + s(u) + 2.0 / np.expm1(2.0 * t)),
        WIN: (s(-delta) - kappa * s(a), -(s(-delta) - kappa * s(a))),
        STRONG_WIN: (s(-delta) + kappa * s(-a), -(s(-delta) + kappa * s(-a))),
        LOSE: (-s(-u) + kappa * s(b), -s(-u) - kappa * s(b)),
        STRONG_LOSE: (-s(-u) - kappa * s(-b), -s(-u) + kappa * s(-b)),
    }.items():
        sel = labels == y
        g_d1[sel] = gd[sel]
        g_t[sel] = gt[sel]
    return logp, g_d1, g_t


# --- loss and gradient -------------------------------------------------------


def _as_batch(params: RouterParams, batch) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    if len(batch) == 0:
        raise ValueError("batch must be non-empty")
    X = np.vstack([np.asarray(f, dtype=np.float64) for f, _, _, _ in batch])
    ia = np.array([int(a) for _, a, _, _ in batch])
    ib = np.array([int(b) for _, _, b, _ in batch])
    y = np.array([int(l) for _, _, _, l in batch])
    return X, ia, ib, y


def _check_indices(params: RouterParams, ia, ib, y) -> None:
    M = params.n_models
    if ia.min() < 0 or ib.min() < 0 or ia.max() >= M or ib.max() >= M:
        raise IndexError(f"model index out of range for {M} models")
    if y.min() < 0 or y.max() >= N_OUTCOMES:
        raise IndexError("label out of range 0..4")


def loss_and_grad(params: RouterParams, X, ia, ib, y, *, with_grad: bool = True):
    """Mean categorical cross-entropy over a batch and its gradient.

    Returns ``(loss, grads)`` where ``grads`` matches ``params.arrays()``
    (or is None when ``with_grad`` is false). Probabilities are floored at
    1e-12 inside the log; floored samples contribute no gradient.
    """
    ia, ib, y = np.asarray(ia), np.asarray(ib), np.asarray(y)
    _check_indices(params, ia, ib, y)
    tr = _forward_batch(params, X)
    N = len(y)
    rows = np.arange(N)
    beta_a = tr.scores[rows, ia]
    beta_b = tr.scores[rows, ib]
    theta = tr.theta
    logp, g_d1, g_t = _label_logp_and_grads(beta_a, beta_b, theta, y, params.kappa, params.margin)
    floored = logp < _LOG_FLOOR
    loss = float(-np.mean(np.maximum(logp, _LOG_FLOOR)))
    if not np.isfinite(loss):
        raise DomainError("non-finite loss")
    if not with_grad:
        return loss, None

    live = (~floored).astype(np.float64) / N
    d_out = np.zeros_like(tr.out)
    np.add.at(d_out, (rows, ia), -g_d1 * live)
    np.add.at(d_out, (rows, ib), g_d1 * live)
    # theta = 1 + softplus(raw): d theta / d raw = sigmoid(raw); d ln theta / d theta = 1 / theta
    d_out[:, -1] = -g_t * live * expit(tr.raw_theta) / theta * (tr.softplus > THETA_FLOOR)

    w = tr.weights
    d_expert_out = w[:, :, None] * d_out[:, None, :]
    g_expert_w = np.einsum("nem,nd->emd", d_expert_out, tr.X)
    g_expert_b = d_expert_out.sum(axis=0)
    d_w = np.einsum("nm,nem->ne", d_out, tr.expert_out)
    # renormalized top-k weights are a softmax restricted to the selected set
    d_logits = w * (d_w - np.sum(w * d_w, axis=1, keepdims=True))
    g_gate_w = d_logits.T @ tr.X
    g_gate_b = d_logits.sum(axis=0)
    return loss, (g_gate_w, g_gate_b, g_expert_w, g_expert_b)


def loss_grk(params: RouterParams, batch: Sequence) -> float:
    """Loss over ``[(features, model_a_index, model_b_index, label), ...]``."""
    X, ia, ib, y = _as_batch(params, batch)
    return loss_and_grad(params, X, ia, ib, y, with_grad=False)[0]


# --- training ----------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    learning_rate: float = 0.05
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class ComparisonMatrix:
    """Comparison records resolved to feature rows and model indices."""

    X: np.ndarray  # (U, d) one row per distinct query
    query_row: np.ndarray  # (N,)
    ia: np.ndarray
    ib: np.ndarray
    y: np.ndarray
    queries: list = field(default_factory=list)

    def __len__(self):
        return len(self.y)


def encode_comparisons(
    records: Sequence[ComparisonRecord], encoder: Encoder, model_ids: Mapping[str, int]
) -> ComparisonMatrix:
    if not records:
        raise ValueError("dataset must be non-empty")
    rows: dict[str, int] = {}
    for r in records:
        rows.setdefault(r.query_text, len(rows))
    try:
        ia = np.array([model_ids[r.model_a] for r in records])
        ib = np.array([model_ids[r.model_b] for r in records])
    except KeyError as exc:
        raise UnknownModelError(f"model {exc.args[0]!r} has no index") from None
    queries = list(rows)
    return ComparisonMatrix(
        X=encode_many(encoder, queries),
        query_row=np.array([rows[r.query_text] for r in records]),
        ia=ia,
        ib=ib,
        y=np.array([r.label for r in records]),
        queries=queries,
    )


def dataset_loss(params: RouterParams, data: ComparisonMatrix) -> float:
    return loss_and_grad(params, data.X[data.query_row], data.ia, data.ib, data.y, with_grad=False)[0]


def train(
    params: RouterParams,
    data: ComparisonMatrix | Sequence[ComparisonRecord],
    config: TrainConfig = TrainConfig(),
    *,
    encoder: Encoder | None = None,
    model_ids: Mapping[str, int] | None = None,
    history: list | None = None,
) -> RouterParams:
    """Mini-batch gradient descent on the mean cross-entropy.

    Shuffle order comes from ``config.seed`` alone, so a fixed seed and
    dataset give bit-identical results. ``params`` is not modified.
    When ``history`` is given, the full-data loss after each epoch is
    appended to it.
    """
    if not isinstance(data, ComparisonMatrix):
        if encoder is None or model_ids is None:
            raise ConfigError("raw records need an encoder and a model index")
        data = encode_comparisons(data, encoder, model_ids)
    if len(data) == 0:
        raise ValueError("dataset must be non-empty")
    _check_indices(params, data.ia, data.ib, data.y)
    params = params.copy()
    rng = np.random.default_rng(config.seed)
    n = len(data)
    arrays = list(params.arrays())
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            _, grads = loss_and_grad(params, data.X[data.query_row[idx]], data.ia[idx], data.ib[idx], data.y[idx])
            for arr, g in zip(arrays, grads):
                arr -= config.learning_rate * g
        if history is not None:
            history.append(dataset_loss(params, data))
    return params


# --- persistence -----------------------------------------------------------


def params_to_bytes(params: RouterParams) -> bytes:
    header = (params.d, params.n_experts, params.n_models, params.top_k, float(params.kappa), float(params.margin))
    return persist.pack(MAGIC, params.version, _HEADER, header, params.arrays())


def params_from_bytes(blob: bytes) -> RouterParams:
    def shapes(h):
        d, E, M, _, _, _ = h
        return [(E, d), (E,), (E, M + 1, d), (E, M + 1)]

    header, arrays = persist.unpack(blob, MAGIC, FORMAT_VERSION, _HEADER, shapes)
    _, _, _, top_k, kappa, margin = header
    try:
        return RouterParams(*arrays, top_k=top_k, kappa=kappa, margin=margin, version=FORMAT_VERSION)
    except (ConfigError, DimensionError, DomainError) as exc:
        raise DataFormatError(f"invalid parameters in file: {exc}") from None


def save_params(params: RouterParams, path) -> None:
    persist.write(path, params_to_bytes(params))


def load_params(path) -> RouterParams:
    return params_from_bytes(persist.read(path))

