"""Registries and data ingestion: models with token prices, agents,
categories and pairwise comparison logs.

Everything here is an immutable value object. Files are JSON (catalogs,
agent registries) or JSON lines (comparison logs).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal, InvalidOperation
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import ConfigError, DataFormatError, DuplicateIdError, UnknownModelError

CURRENCY_QUANTUM = Decimal("0.000001")
DEFAULT_OUTPUT_TOKENS = 512

# label -> meaning, from model a's point of view
OUTCOME_LABELS = {
    0: "tie",
    1: "a>b",
    2: "a<b",
    3: "a>>b",
    4: "a<<b",
}


def to_currency(value) -> Decimal:
    """Quantize to 6 fractional digits with banker's rounding."""
    if isinstance(value, float):
        value = repr(value)
    return Decimal(value).quantize(CURRENCY_QUANTUM, rounding=ROUND_HALF_EVEN)


@dataclass(frozen=True)
class ModelProfile:
    id: str
    display_name: str
    input_price: Decimal
    output_price: Decimal
    tags: frozenset = frozenset()

    def __post_init__(self):
        if not self.id:
            raise DataFormatError("model id must be non-empty")
        if self.input_price < 0 or self.output_price < 0:
            raise DataFormatError(f"model {self.id!r}: prices must be >= 0")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "display_name": self.display_name,
            "input_price_per_1k": str(self.input_price),
            "output_price_per_1k": str(self.output_price),
            "tags": sorted(self.tags),
        }


@dataclass(frozen=True)
class ComparisonRecord:
    """One judged battle: which of two models answered ``query_text`` better."""

    query_text: str
    model_a: str
    model_b: str
    label: int

    def __post_init__(self):
        if not isinstance(self.query_text, str) or not self.query_text:
            raise DataFormatError("query_text must be a non-empty string")
        if self.model_a == self.model_b:
            raise DataFormatError(f"model_a and model_b are both {self.model_a!r}")
        if isinstance(self.label, bool) or not isinstance(self.label, int) or self.label not in OUTCOME_LABELS:
            raise DataFormatError(f"label must be an integer in 0..4, got {self.label!r}")

    def to_dict(self) -> dict:
        return {"query": self.query_text, "model_a": self.model_a, "model_b": self.model_b, "label": self.label}


class AgentStatus(str, Enum):
    ACTIVE = "active"
    INACTIVE = "inactive"


@dataclass(frozen=True)
class AgentDescriptor:
    name: str
    description: str
    input_params: tuple = ()
    output_params: tuple = ()
    few_shot_examples: tuple = ()
    status: AgentStatus = AgentStatus.ACTIVE
    category_ids: frozenset = frozenset()

    def __post_init__(self):
        if not self.name:
            raise DataFormatError("agent name must be non-empty")
        if not self.description or not self.description.strip():
            raise DataFormatError(f"agent {self.name!r}: description must be non-empty")
        if not isinstance(self.status, AgentStatus):
            try:
                object.__setattr__(self, "status", AgentStatus(self.status))
            except ValueError:
                raise DataFormatError(f"agent {self.name!r}: unknown status {self.status!r}") from None

    @property
    def prefix(self) -> str:
        """First dot-separated segment of the name, used by the action filter."""
        return self.name.split(".", 1)[0]

    @property
    def active(self) -> bool:
        return self.status is AgentStatus.ACTIVE

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "input_params": [{"name": n, "type": t} for n, t in self.input_params],
            "output_params": [{"name": n, "type": t} for n, t in self.output_params],
            "few_shot_examples": list(self.few_shot_examples),
            "status": self.status.value,
            "category_ids": sorted(self.category_ids),
        }


class CategorySource(str, Enum):
    PREDEFINED = "predefined"
    CLUSTERED = "clustered"


@dataclass(frozen=True)
class Category:
    id: str
    name: str
    description: str = ""
    source: CategorySource = CategorySource.PREDEFINED

    def __post_init__(self):
        if not self.id:
            raise DataFormatError("category id must be non-empty")
        if not self.name or not self.name.strip():
            raise DataFormatError(f"category {self.id!r}: name must be non-empty")
        if not isinstance(self.source, CategorySource):
            try:
                object.__setattr__(self, "source", CategorySource(self.source))
            except ValueError:
                raise DataFormatError(f"category {self.id!r}: unknown source {self.source!r}") from None

    @property
    def text(self) -> str:
        """Text embedded for retrieval: name followed by description."""
        return f"{self.name} {self.description}".strip()

    def to_dict(self) -> dict:
        return {"id": self.id, "name": self.name, "description": self.description, "source": self.source.value}


class Preference(str, Enum):
    COST_PRIORITY = "cost_priority"
    AUTO = "auto"
    PERFORMANCE_PRIORITY = "performance_priority"


_PREFERENCE_ALIASES = {
    "cost": Preference.COST_PRIORITY,
    "cost_priority": Preference.COST_PRIORITY,
    "auto": Preference.AUTO,
    "performance": Preference.PERFORMANCE_PRIORITY,
    "performance_priority": Preference.PERFORMANCE_PRIORITY,
}


@dataclass(frozen=True)
class PreferenceMode:
    preference: Preference = Preference.AUTO
    cost_budget: float | None = None

    def __post_init__(self):
        if not isinstance(self.preference, Preference):
            object.__setattr__(self, "preference", self.parse_preference(self.preference))
        if self.cost_budget is not None and not float(self.cost_budget) > 0:
            raise ConfigError(f"cost_budget must be > 0, got {self.cost_budget}")

    @staticmethod
    def parse_preference(name: str) -> Preference:
        try:
            return _PREFERENCE_ALIASES[str(name).lower()]
        except KeyError:
            raise ConfigError(f"unknown preference {name!r}") from None

    def to_dict(self) -> dict:
        return {"mode": self.preference.value, "cost_budget": self.cost_budget}


# --- cost -----------------------------------------------------------------


def estimate_cost(
    profile: ModelProfile,
    input_tokens: int,
    expected_output_tokens: int = DEFAULT_OUTPUT_TOKENS,
) -> Decimal:
    """Token-priced cost of one call; prices are per 1K tokens.

    The result is exact (Decimal arithmetic on integer token counts), so
    it stays linear in both arguments; round with :func:`to_currency`
    when reporting.
    """
    if input_tokens < 0 or expected_output_tokens < 0:
        raise ValueError("token counts must be >= 0")
    cost = Decimal(input_tokens) * profile.input_price + Decimal(expected_output_tokens) * profile.output_price
    return cost / 1000


def estimate_tokens(text: str) -> int:
    """Rough token count: four characters per token."""
    return math.ceil(len(text) / 4)


# --- model catalog ---------------------------------------------------------


def _price(raw, where: str) -> Decimal:
    try:
        value = to_currency(raw)
    except (InvalidOperation, TypeError, ValueError):
        raise DataFormatError(f"{where}: price {raw!r} is not a number") from None
    return value


def parse_model_catalog(items: Sequence[Mapping]) -> list[ModelProfile]:
    if not isinstance(items, list):
        raise DataFormatError("model catalog must be a JSON array")
    profiles: list[ModelProfile] = []
    seen: set[str] = set()
    for i, item in enumerate(items):
        where = f"model record {i}"
        if not isinstance(item, Mapping) or "id" not in item:
            raise DataFormatError(f"{where}: expected an object with an 'id' field")
        try:
            profile = ModelProfile(
                id=str(item["id"]),
                display_name=str(item.get("display_name", item["id"])),
                input_price=_price(item["input_price_per_1k"], where),
                output_price=_price(item["output_price_per_1k"], where),
                tags=frozenset(item.get("tags", ())),
            )
        except KeyError as exc:
            raise DataFormatError(f"{where}: missing field {exc.args[0]!r}") from None
        if profile.id in seen:
            raise DuplicateIdError(f"duplicate model id {profile.id!r}")
        seen.add(profile.id)
        profiles.append(profile)
    return profiles


def load_model_catalog(path) -> list[ModelProfile]:
    text = Path(path).read_text(encoding="utf-8")
    if not text.strip():
        return []
    try:
        items = json.loads(text, parse_float=Decimal)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: {exc}") from None
    return parse_model_catalog(items)


def dump_model_catalog(profiles: Iterable[ModelProfile], path) -> None:
    Path(path).write_text(json.dumps([p.to_dict() for p in profiles], indent=2) + "\n", encoding="utf-8")


def model_index(profiles: Sequence[ModelProfile]) -> dict[str, int]:
    return {p.id: i for i, p in enumerate(profiles)}


def default_catalog_path() -> Path:
    return Path(__file__).with_name("data") / "models.json"


# --- comparisons -----------------------------------------------------------


def parse_comparison(obj, lineno: int | None = None) -> ComparisonRecord:
    where = f"line {lineno}" if lineno is not None else "record"
    if not isinstance(obj, Mapping):
        raise DataFormatError(f"{where}: expected a JSON object")
    try:
        query = obj["query"] if "query" in obj else obj["query_text"]
        a = obj["model_a"] if "model_a" in obj else obj["a"]
        b = obj["model_b"] if "model_b" in obj else obj["b"]
        label = obj["label"]
    except KeyError as exc:
        raise DataFormatError(f"{where}: missing field {exc.args[0]!r}") from None
    try:
        return ComparisonRecord(query, str(a), str(b), label)
    except DataFormatError as exc:
        raise DataFormatError(f"{where}: {exc}") from None


def load_comparisons(path, catalog: Sequence[ModelProfile] | None = None) -> list[ComparisonRecord]:
    """Read a JSON-lines comparison log. Blank lines are skipped."""
    known = {p.id for p in catalog} if catalog is not None else None
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"line {lineno}: {exc.msg}") from None
            rec = parse_comparison(obj, lineno)
            if known is not None:
                for mid in (rec.model_a, rec.model_b):
                    if mid not in known:
                        raise UnknownModelError(f"line {lineno}: unknown model {mid!r}")
            records.append(rec)
    return records


def dump_comparisons(records: Iterable[ComparisonRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), ensure_ascii=False) + "\n")


# --- agents and categories -------------------------------------------------


def _params(raw, where: str) -> tuple:
    out = []
    for p in raw or ():
        if isinstance(p, Mapping):
            out.append((str(p["name"]), str(p.get("type", "any"))))
        elif isinstance(p, (list, tuple)) and len(p) == 2:
            out.append((str(p[0]), str(p[1])))
        else:
            raise DataFormatError(f"{where}: bad parameter spec {p!r}")
    return tuple(out)


def parse_agent(obj: Mapping, where: str = "agent") -> AgentDescriptor:
    if not isinstance(obj, Mapping):
        raise DataFormatError(f"{where}: expected an object")
    try:
        return AgentDescriptor(
            name=str(obj["name"]),
            description=str(obj["description"]),
            input_params=_params(obj.get("input_params"), where),
            output_params=_params(obj.get("output_params"), where),
            few_shot_examples=tuple(obj.get("few_shot_examples", ())),
            status=obj.get("status", "active"),
            category_ids=frozenset(obj.get("category_ids", ())),
        )
    except KeyError as exc:
        raise DataFormatError(f"{where}: missing field {exc.args[0]!r}") from None


def parse_category(obj: Mapping, where: str = "category") -> Category:
    if not isinstance(obj, Mapping):
        raise DataFormatError(f"{where}: expected an object")
    try:
        return Category(
            id=str(obj["id"]),
            name=str(obj["name"]),
            description=str(obj.get("description", "")),
            source=obj.get("source", "predefined"),
        )
    except KeyError as exc:
        raise DataFormatError(f"{where}: missing field {exc.args[0]!r}") from None


def _unique(items, kind: str, key):
    seen = set()
    for item in items:
        k = key(item)
        if k in seen:
            raise DuplicateIdError(f"duplicate {kind} {k!r}")
        seen.add(k)
    return items


def load_agent_registry(path) -> tuple[list[AgentDescriptor], list[Category]]:
    """Load agents (and categories, when present) from a registry file.

    The file is either a JSON array of agent records or an object with
    ``agents`` and optional ``categories`` arrays.
    """
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8") or "[]")
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: {exc}") from None
    if isinstance(doc, list):
        raw_agents, raw_categories = doc, []
    elif isinstance(doc, Mapping):
        raw_agents, raw_categories = doc.get("agents", []), doc.get("categories", [])
    else:
        raise DataFormatError(f"{path}: expected an array or object")
    agents = [parse_agent(a, f"agent record {i}") for i, a in enumerate(raw_agents)]
    categories = [parse_category(c, f"category record {i}") for i, c in enumerate(raw_categories)]
    _unique(agents, "agent name", lambda a: a.name)
    _unique(categories, "category id", lambda c: c.id)
    return agents, categories


def dump_agent_registry(agents: Iterable[AgentDescriptor], categories: Iterable[Category], path) -> None:
    doc = {"categories": [c.to_dict() for c in categories], "agents": [a.to_dict() for a in agents]}
    Path(path).write_text(json.dumps(doc, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class ModelCatalog:
    """Snapshot of the model list with id lookup."""

    profiles: tuple
    _by_id: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "profiles", tuple(self.profiles))
        _unique(self.profiles, "model id", lambda p: p.id)
        object.__setattr__(self, "_by_id", {p.id: p for p in self.profiles})

    def __len__(self):
        return len(self.profiles)

    def __iter__(self):
        return iter(self.profiles)

    def __getitem__(self, model_id: str) -> ModelProfile:
        try:
            return self._by_id[model_id]
        except KeyError:
            raise UnknownModelError(model_id) from None

    @property
    def ids(self) -> list[str]:
        return [p.id for p in self.profiles]

    def index(self) -> dict[str, int]:
        return model_index(self.profiles)
