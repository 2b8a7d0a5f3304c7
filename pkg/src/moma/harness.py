"""Synthetic evaluation harness with a planted quality matrix.

Queries are bags of domain words. Each (model, domain) pair has a hidden
quality; pairwise outcomes are sampled from the quality gap. The GRK head
and both baselines are trained on the same comparisons and scored on
held-out queries against the planted best model per domain.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import expit
from scipy.stats import spearmanr

from .agentroute import AgentRegistry, build_categories, default_config
from .baselines import BASELINE_TRAIN, contrastive_rank, contrastive_train, sft_predict, sft_train
from .cache import PrefetchCache
from .catalog import (
    AgentDescriptor,
    Category,
    CategorySource,
    ComparisonRecord,
    ModelCatalog,
    Preference,
    PreferenceMode,
    default_catalog_path,
    load_model_catalog,
)
from .elo import compute_elo
from .encoder import HashingEncoder, encode_many
from .errors import ConfigError, DataFormatError
from .gateway import AGENT, LLM, Gateway
from .grk import TrainConfig, encode_comparisons, forward_many, init_params, train

DEFAULT_MODELS = (
    "qwen3-235b-a22b",
    "deepseek-r1",
    "deepseek-v3",
    "qwen2.5-code-32b",
    "jiutian-math-8b",
    "jiutian-code-8b",
    "jiutian-1b",
    "jiutian-3b",
    "qwen3-32b",
    "jiutian-8b",
    "jiutian-lan-13b",
    "jiutian-lan-comv3",
)

DOMAIN_WORDS = {
    "math": "integral derivative polynomial theorem prime matrix eigenvalue proof lemma calculus algebra geometry "
    "topology vector limit series logarithm factorial",
    "code": "python function compile debug stacktrace recursion array pointer refactor unittest javascript class "
    "variable loop exception parser thread",
    "physics": "quantum momentum velocity gravity photon electron relativity thermodynamics entropy wavelength "
    "friction inertia magnetism oscillation voltage particle",
    "biology": "protein enzyme genome mitosis cell organism evolution mutation ribosome membrane neuron bacteria "
    "photosynthesis chromosome tissue species",
    "history": "empire dynasty revolution medieval treaty monarchy colonial pharaoh crusade renaissance archive "
    "chronicle emperor republic battle ancient",
    "law": "contract statute plaintiff defendant liability tort jurisdiction appeal verdict clause litigation "
    "testimony attorney precedent lawsuit warranty",
    "literature": "novel poem sonnet metaphor narrator protagonist stanza tragedy allegory prose fiction author "
    "chapter rhyme satire epic",
    "chemistry": "molecule reaction catalyst oxidation isotope compound acid solvent polymer titration bond "
    "valence electrolysis crystal alkane ester",
}

FILLER_WORDS = "please explain how what why describe the for about with question help".split()

# agent workload for the cache measurement
HARNESS_AGENTS = (
    ("travel.flight_search", "search and book airline flight tickets between two cities on a date",
     ("find flights to shanghai tomorrow", "book a flight ticket to paris")),
    ("travel.hotel_booking", "reserve hotel rooms near a destination for given check-in dates",
     ("book a hotel near the airport for two nights", "reserve a hotel room in tokyo")),
    ("food.restaurant_finder", "find restaurants nearby by cuisine rating and opening hours",
     ("find a sushi restaurant near me", "restaurants open late tonight")),
    ("food.recipe_lookup", "look up cooking recipes and ingredients for a dish",
     ("recipe for tomato egg noodles", "how to cook a beef stew recipe")),
    ("finance.stock_quote", "get real time stock quotes and price history for a ticker symbol",
     ("stock price of the ticker aapl", "show stock quote history for tsla")),
    ("finance.invoice_tool", "create and send invoices and track bank payment status",
     ("create an invoice for the client", "check bank payment status of my invoice")),
)

HARNESS_CATEGORIES = (
    ("travel", "Travel", "book flight flights ticket airline airport hotel hotels reserve room nights trip tomorrow"),
    ("food", "Food", "restaurant restaurants recipe recipes cook cooking sushi beef noodles dish open tonight"),
    ("finance", "Finance", "stock stocks quote price ticker history invoice invoices bank payment status client"),
)


@dataclass(frozen=True)
class HarnessConfig:
    num_models: int = 8
    num_domains: int = 6
    queries_per_domain: int = 200
    words_per_query: int = 8
    held_out_fraction: float = 0.2
    pairs_per_query: int = 6
    quality_spread: float = 0.15
    min_best_gap: float = 0.1
    tie_gap: float = 0.05
    g_strong: float = 0.25
    win_sharpness: float = 20.0
    strong_sharpness: float = 20.0
    seed: int = 42
    epochs: int = 20
    learning_rate: float = 0.5
    batch_size: int = 32
    n_experts: int = 4
    top_k: int = 2
    encoder_dim: int = 256
    baseline_epochs: int = BASELINE_TRAIN.epochs
    baseline_learning_rate: float = BASELINE_TRAIN.learning_rate
    cache_repeats: int = 3
    quality_matrix: tuple | None = None  # optional explicit (num_models, num_domains)

    def __post_init__(self):
        for name in ("num_models", "num_domains", "queries_per_domain", "words_per_query", "pairs_per_query",
                     "batch_size", "n_experts", "top_k", "cache_repeats"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.num_models < 2:
            raise ConfigError("the harness needs at least two models")
        if self.num_models > len(DEFAULT_MODELS):
            raise ConfigError(f"at most {len(DEFAULT_MODELS)} models are available")
        if self.num_domains > len(DOMAIN_WORDS):
            raise ConfigError(f"at most {len(DOMAIN_WORDS)} domains are available")
        if self.top_k > self.n_experts:
            raise ConfigError("top_k cannot exceed n_experts")
        if not 0 < self.held_out_fraction < 1:
            raise ConfigError("held_out_fraction must be in (0, 1)")
        if self.epochs < 0 or self.baseline_epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.queries_per_domain * self.held_out_fraction < 1:
            raise ConfigError("no held-out queries with this split")
        if self.quality_matrix is not None:
            q = np.asarray(self.quality_matrix, dtype=np.float64)
            if q.shape != (self.num_models, self.num_domains) or not np.all(np.isfinite(q)):
                raise ConfigError(f"quality_matrix must be finite with shape ({self.num_models}, {self.num_domains})")
            object.__setattr__(self, "quality_matrix", tuple(tuple(float(v) for v in row) for row in q))

    @classmethod
    def from_dict(cls, doc: dict) -> "HarnessConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown harness keys: {sorted(unknown)}")
        doc = dict(doc)
        if doc.get("quality_matrix") is not None:
            doc["quality_matrix"] = tuple(tuple(r) for r in doc["quality_matrix"])
        return cls(**doc)


def load_harness_config(path) -> HarnessConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("harness config must be a JSON object")
    return HarnessConfig.from_dict(doc.get("harness", doc))


# --- synthetic world -------------------------------------------------------


@dataclass
class World:
    catalog: ModelCatalog
    domains: list
    quality: np.ndarray  # (M, D)
    train: list  # (query, domain index)
    held_out: list
    comparisons: list

    @property
    def best(self) -> np.ndarray:
        return np.argmax(self.quality, axis=0)


def _quality_matrix(cfg: HarnessConfig, catalog: ModelCatalog, rng: np.random.Generator) -> np.ndarray:
    """Pricier models start from a higher prior; noise adds domain specialties.

    The best model in each domain is pushed to lead the runner-up by at
    least ``min_best_gap`` so the planted answer is unambiguous.
    """
    if cfg.quality_matrix is not None:
        return np.array(cfg.quality_matrix, dtype=np.float64)
    price = np.array([float(p.input_price + p.output_price) for p in catalog])
    rank = np.argsort(np.argsort(price, kind="stable"), kind="stable") / max(len(price) - 1, 1)
    prior = 0.35 + 0.3 * rank
    q = np.clip(prior[:, None] + rng.normal(0.0, cfg.quality_spread, (len(price), cfg.num_domains)), 0.02, 0.98)
    for d in range(cfg.num_domains):
        order = np.argsort(-q[:, d], kind="stable")
        shortfall = cfg.min_best_gap - (q[order[0], d] - q[order[1], d])
        if shortfall > 0:
            q[order[0], d] += shortfall
    return q


def _make_query(words: Sequence[str], n: int, rng: np.random.Generator) -> str:
    picked = list(rng.choice(words, size=n, replace=False))
    picked += list(rng.choice(FILLER_WORDS, size=int(rng.integers(0, 3)), replace=False))
    rng.shuffle(picked)
    return " ".join(picked)


def sample_outcome(gap: float, cfg: HarnessConfig, rng: np.random.Generator) -> int:
    """Label for a comparison where ``gap`` = q(a) - q(b)."""
    if abs(gap) < cfg.tie_gap:
        return 0
    better_wins = rng.random() < expit(cfg.win_sharpness * abs(gap))
    a_wins = better_wins == (gap > 0)
    strong = better_wins and rng.random() < expit(cfg.strong_sharpness * (abs(gap) - cfg.g_strong))
    if a_wins:
        return 3 if strong else 1
    return 4 if strong else 2


def build_world(cfg: HarnessConfig) -> World:
    rng = np.random.default_rng(cfg.seed)
    by_id = {p.id: p for p in load_model_catalog(default_catalog_path())}
    catalog = ModelCatalog([by_id[m] for m in DEFAULT_MODELS[: cfg.num_models]])
    domains = list(DOMAIN_WORDS)[: cfg.num_domains]
    quality = _quality_matrix(cfg, catalog, rng)

    n_held = max(1, int(round(cfg.queries_per_domain * cfg.held_out_fraction)))
    train_q, held_q = [], []
    for d, name in enumerate(domains):
        words = DOMAIN_WORDS[name].split()
        n = min(cfg.words_per_query, len(words))
        qs = [_make_query(words, n, rng) for _ in range(cfg.queries_per_domain)]
        held_q += [(q, d) for q in qs[:n_held]]
        train_q += [(q, d) for q in qs[n_held:]]

    ids = catalog.ids
    records = []
    for q, d in train_q:
        for _ in range(cfg.pairs_per_query):
            a, b = rng.choice(len(ids), size=2, replace=False)
            label = sample_outcome(quality[a, d] - quality[b, d], cfg, rng)
            records.append(ComparisonRecord(q, ids[a], ids[b], label))
    return World(catalog, domains, quality, train_q, held_q, records)


# --- evaluation ------------------------------------------------------------


def _agent_registry(encoder) -> AgentRegistry:
    agents = [AgentDescriptor(n, desc, few_shot_examples=ex) for n, desc, ex in HARNESS_AGENTS]
    predefined = [Category(cid, name, desc, CategorySource.PREDEFINED) for cid, name, desc in HARNESS_CATEGORIES]
    built = build_categories(agents, predefined, k=len(predefined), encoder=encoder, seed=0)
    return AgentRegistry(built.agents, built.categories)


def _noisy(text: str, i: int) -> str:
    """Surface variants that normalize to the same cache key."""
    return [text, text.upper(), "  " + text.replace(" ", "   ") + " "][i % 3]


def _round(x, nd: int = 6):
    if isinstance(x, float):
        return round(x, nd)
    if isinstance(x, dict):
        return {k: _round(v, nd) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_round(v, nd) for v in x]
    return x


def run_harness(cfg: HarnessConfig = HarnessConfig()) -> dict:
    world = build_world(cfg)
    encoder = HashingEncoder(cfg.encoder_dim, seed=0)
    ids = world.catalog.ids
    M = len(ids)
    best = world.best

    data = encode_comparisons(world.comparisons, encoder, world.catalog.index())
    params = init_params(encoder.dim, M, cfg.n_experts, cfg.top_k, seed=cfg.seed)
    history: list = []
    params = train(params, data, TrainConfig(cfg.epochs, cfg.learning_rate, cfg.batch_size, cfg.seed), history=history)

    base_cfg = TrainConfig(cfg.baseline_epochs, cfg.baseline_learning_rate, cfg.batch_size, cfg.seed)
    sft = sft_train([(q, int(best[d])) for q, d in world.train], encoder, M, base_cfg)
    pairs = [
        (r.query_text, world.catalog.index()[r.model_a], world.catalog.index()[r.model_b], int(r.label in (1, 3)))
        for r in world.comparisons
        if r.label != 0
    ]
    pairwise = contrastive_train(pairs, encoder, M, base_cfg)

    gateway = Gateway(world.catalog, params, encoder, _agent_registry(encoder), default_config(), PrefetchCache())
    held = world.held_out
    truth = np.array([best[d] for _, d in held])

    # routers on held-out queries
    Xh = encode_many(encoder, [q for q, _ in held])
    grk_scores, _ = forward_many(params, Xh)
    modes = {
        "cost_priority": PreferenceMode(Preference.COST_PRIORITY),
        "auto": PreferenceMode(Preference.AUTO),
        "performance_priority": PreferenceMode(Preference.PERFORMANCE_PRIORITY),
    }
    picks = {m: [] for m in modes}
    costs = {m: [] for m in modes}
    paths = {m: [] for m in modes}
    for q, _ in held:
        for m, mode in modes.items():
            dec = gateway.route(q, mode)
            paths[m].append(dec.path)
            picks[m].append(world.catalog.index()[dec.chosen] if dec.path == LLM else -1)
            costs[m].append(dec.diagnostics.get("estimated_cost", 0.0))
    grk_top1 = np.array(picks["performance_priority"])
    sft_top1 = np.array([int(np.argmax(sft_predict(sft, q, encoder))) for q, _ in held])
    con_top1 = np.array([contrastive_rank(pairwise, q, encoder)[0] for q, _ in held])

    accuracy = {
        "grk": float(np.mean(grk_top1 == truth)),
        "sft": float(np.mean(sft_top1 == truth)),
        "contrastive": float(np.mean(con_top1 == truth)),
    }
    ranking = sorted(accuracy, key=lambda k: (-accuracy[k], k))
    head_argmax = float(np.mean(np.argmax(grk_scores, axis=1) == truth))

    preference = {}
    dom = np.array([d for _, d in held])
    for m in modes:
        chosen = np.array(picks[m])
        valid = chosen >= 0
        preference[m] = {
            "mean_cost": float(np.mean(costs[m])),
            "mean_planted_quality": float(np.mean(world.quality[chosen[valid], dom[valid]])) if valid.any() else 0.0,
            "llm_path_rate": float(np.mean([p == LLM for p in paths[m]])),
        }

    # cache: every agent example is issued several times with surface noise
    gateway.cache = PrefetchCache()
    stream = [(name, ex) for name, _, exs in HARNESS_AGENTS for ex in exs]
    agent_paths = agent_correct = 0
    first: dict = {}
    consistent = True
    for rep in range(cfg.cache_repeats):
        for name, ex in stream:
            dec = gateway.route(_noisy(ex, rep))
            agent_paths += dec.path == AGENT
            agent_correct += dec.path == AGENT and dec.chosen == name
            consistent &= first.setdefault(ex, (dec.path, dec.chosen)) == (dec.path, dec.chosen)
    stats = gateway.cache.stats()
    n_agent = len(stream) * cfg.cache_repeats

    elo = compute_elo(world.comparisons)
    ratings = [elo.ratings.get(m, elo.initial_rating) for m in ids]
    rho = spearmanr(ratings, world.quality.mean(axis=1))[0]

    report = {
        "config": asdict(cfg),
        "models": ids,
        "domains": world.domains,
        "planted_best": {name: ids[int(best[d])] for d, name in enumerate(world.domains)},
        "n_train_queries": len(world.train),
        "n_held_out_queries": len(held),
        "n_comparisons": len(world.comparisons),
        "grk_train_loss": history,
        "top1_accuracy": accuracy,
        "grk_head_argmax_accuracy": head_argmax,
        "router_ranking": ranking,
        "preference_modes": preference,
        "cost_ordering_holds": preference["cost_priority"]["mean_cost"] <= preference["auto"]["mean_cost"]
        <= preference["performance_priority"]["mean_cost"],
        "cache": {
            **stats.to_dict(),
            "agent_queries": n_agent,
            "agent_path_rate": agent_paths / n_agent,
            "agent_top1_accuracy": agent_correct / n_agent,
            "hit_decisions_consistent": bool(consistent),
        },
        "elo": {"ratings": {m: r for m, r in zip(ids, ratings)}, "spearman_vs_quality": float(rho)},
    }
    return _round(report)


def report_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"
