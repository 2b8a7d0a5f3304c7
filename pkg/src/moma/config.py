"""Engine configuration: one JSON document, every section optional.

    {
      "encoder":   {"dim": 256, "seed": 0},
      "grk":       {"n_experts": 4, "top_k": 2, "kappa": 1.0, "margin": 0.0,
                    "epochs": 10, "learning_rate": 0.05, "batch_size": 32, "seed": 0},
      "fsm":       {"tau": 0.5, "alpha": 0.3, "top_k_categories": 3, "top_k_agents": 5, "path": null},
      "cache":     {"capacity": 10000, "semantic": false, "semantic_threshold": 0.95},
      "selection": {"expected_output_tokens": 512, "cost_priority": [0.8, 0.2], "auto": [0.5, 0.5]},
      "paths":     {"catalog": null, "params": "params.bin", "agents": "agents.json"}
    }

Relative paths resolve against the config file's directory. The
MOMA_CONFIG environment variable names the file when none is passed.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .agentroute import StateMachineConfig, default_config, load_fsm_config
from .cache import DEFAULT_CAPACITY, SEMANTIC_THRESHOLD, PrefetchCache
from .catalog import DEFAULT_OUTPUT_TOKENS, default_catalog_path
from .encoder import DEFAULT_DIM, DEFAULT_SEED, HashingEncoder
from .errors import ConfigError, DataFormatError
from .grk import TrainConfig
from .selector import PreferenceWeights, Weights

ENV_VAR = "MOMA_CONFIG"


@dataclass(frozen=True)
class EncoderSection:
    dim: int = DEFAULT_DIM
    seed: int = DEFAULT_SEED


@dataclass(frozen=True)
class GrkSection:
    n_experts: int = 4
    top_k: int = 2
    kappa: float = 1.0
    margin: float = 0.0
    epochs: int = 10
    learning_rate: float = 0.05
    batch_size: int = 32
    seed: int = 0

    def train_config(self, **overrides) -> TrainConfig:
        kw = dict(epochs=self.epochs, learning_rate=self.learning_rate, batch_size=self.batch_size, seed=self.seed)
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return TrainConfig(**kw)


@dataclass(frozen=True)
class FsmSection:
    tau: float | None = None
    alpha: float | None = None
    top_k_categories: int | None = None
    top_k_agents: int | None = None
    path: str | None = None


@dataclass(frozen=True)
class CacheSection:
    capacity: int = DEFAULT_CAPACITY
    semantic: bool = False
    semantic_threshold: float = SEMANTIC_THRESHOLD


@dataclass(frozen=True)
class SelectionSection:
    expected_output_tokens: int = DEFAULT_OUTPUT_TOKENS
    cost_priority: tuple = (0.8, 0.2)
    auto: tuple = (0.5, 0.5)


@dataclass(frozen=True)
class PathsSection:
    catalog: str | None = None
    params: str = "params.bin"
    agents: str = "agents.json"


_SECTIONS = {
    "encoder": EncoderSection,
    "grk": GrkSection,
    "fsm": FsmSection,
    "cache": CacheSection,
    "selection": SelectionSection,
    "paths": PathsSection,
}


def _section(cls, doc, name: str):
    if doc is None:
        return cls()
    if not isinstance(doc, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {sorted(unknown)}")
    doc = {k: tuple(v) if isinstance(v, list) else v for k, v in doc.items()}
    return cls(**doc)


@dataclass(frozen=True)
class MomaConfig:
    encoder: EncoderSection = field(default_factory=EncoderSection)
    grk: GrkSection = field(default_factory=GrkSection)
    fsm: FsmSection = field(default_factory=FsmSection)
    cache: CacheSection = field(default_factory=CacheSection)
    selection: SelectionSection = field(default_factory=SelectionSection)
    paths: PathsSection = field(default_factory=PathsSection)
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def from_dict(cls, doc: dict, base_dir: Path | None = None) -> "MomaConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(doc) - set(_SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        kw = {name: _section(cls_, doc.get(name), name) for name, cls_ in _SECTIONS.items()}
        return cls(**kw, base_dir=base_dir or Path.cwd())

    def resolve(self, path: str | os.PathLike | None) -> Path | None:
        if path is None:
            return None
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def catalog_path(self) -> Path:
        return self.resolve(self.paths.catalog) or default_catalog_path()

    @property
    def params_path(self) -> Path:
        return self.resolve(self.paths.params)

    @property
    def agents_path(self) -> Path:
        return self.resolve(self.paths.agents)

    def make_encoder(self) -> HashingEncoder:
        return HashingEncoder(self.encoder.dim, self.encoder.seed)

    def make_fsm(self) -> StateMachineConfig:
        base = load_fsm_config(self.resolve(self.fsm.path)) if self.fsm.path else default_config()
        overrides = {k: getattr(self.fsm, k) for k in ("tau", "alpha", "top_k_categories", "top_k_agents")}
        overrides = {k: v for k, v in overrides.items() if v is not None}
        return replace(base, **overrides) if overrides else base

    def make_cache(self, encoder=None) -> PrefetchCache:
        sem = (encoder or self.make_encoder()) if self.cache.semantic else None
        return PrefetchCache(self.cache.capacity, semantic_encoder=sem, semantic_threshold=self.cache.semantic_threshold)

    def preference_weights(self) -> PreferenceWeights:
        try:
            return PreferenceWeights(Weights(*self.selection.cost_priority), Weights(*self.selection.auto))
        except TypeError:
            raise ConfigError("selection weights must be [cost, score] pairs") from None


def load_config(path: str | os.PathLike | None = None) -> MomaConfig:
    """Read ``path``, else $MOMA_CONFIG, else built-in defaults."""
    path = path or os.environ.get(ENV_VAR)
    if not path:
        return MomaConfig()
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: {exc}") from None
    return MomaConfig.from_dict(doc, base_dir=path.resolve().parent)
