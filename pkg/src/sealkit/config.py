"""Job configuration: one YAML (or JSON) file plus ``section.key=value`` overrides.

Example::

    backend:
      endpoint_url: https://api.example.com/v1/chat/completions
      model_name: gpt-3.5-turbo
      api_key_env: LLM_API_KEY
    paths:
      out_dir: runs/demo
    retriever: {kind: bm25, k: 5}
    generation: {stall_limit: 3, candidate_count: 14, rng_seed: 0}

Secrets never live in the file; only the name of the environment variable does.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

import yaml

from .backend import BackendConfig
from .errors import ConfigError
from .retrieval import DEFAULT_MASK, EmbeddingConfig


@dataclass
class PathsConfig:
    out_dir: str = "."
    fields: str = "fields.json"
    tools: str = "tools.jsonl"
    instances: str = "instances.jsonl"
    single_instances: str = "instances_single.jsonl"
    multi_instances: str = "instances_multi.jsonl"
    predictions: str = "predictions.jsonl"
    candidates: str = "candidates.jsonl"
    index: str = "index.json"
    report_dir: str = "report"
    prompts_dir: str | None = None

    def resolve(self, name: str) -> Path:
        value = getattr(self, name)
        p = Path(value)
        return p if p.is_absolute() else Path(self.out_dir) / p


@dataclass
class RetrieverConfig:
    kind: str = "bm25"
    k: int = 5
    field_mask: list[str] = field(default_factory=lambda: list(DEFAULT_MASK))
    k1: float = 1.2
    b: float = 0.75
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)

    def __post_init__(self) -> None:
        if self.kind not in ("bm25", "dense"):
            raise ConfigError(f"retriever.kind must be bm25 or dense, not {self.kind!r}")
        if self.k < 1:
            raise ConfigError("retriever.k must be >= 1")


@dataclass
class GenerationConfig:
    stall_limit: int = 3
    max_rounds: int = 20
    candidate_count: int = 14
    rng_seed: int = 0
    seed_fields: list[str] = field(default_factory=lambda: ["Science", "Healthcare"])
    single_limit: int | None = None
    multi_count: int = 10
    backfill_passes: int = 2
    allow_empty_responses: bool = False

    def __post_init__(self) -> None:
        if not isinstance(self.rng_seed, int):
            raise ConfigError("generation.rng_seed must be an integer")
        if self.stall_limit < 1:
            raise ConfigError("generation.stall_limit must be >= 1")


@dataclass
class EvaluationConfig:
    strict_format: bool = True
    subject_temperature: float = 0.0
    add_gold_to_candidates: bool = False
    figures: bool = True


@dataclass
class JobConfig:
    backend: BackendConfig = field(default_factory=lambda: BackendConfig(temperature=0.7))
    paths: PathsConfig = field(default_factory=PathsConfig)
    retriever: RetrieverConfig = field(default_factory=RetrieverConfig)
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)

    def snapshot(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


def _build(cls: type, data: Any, where: str) -> Any:
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be a mapping")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        sub = known[name].type
        nested = {"BackendConfig": BackendConfig, "PathsConfig": PathsConfig, "RetrieverConfig": RetrieverConfig,
                  "GenerationConfig": GenerationConfig, "EvaluationConfig": EvaluationConfig,
                  "EmbeddingConfig": EmbeddingConfig}.get(str(sub))
        kwargs[name] = _build(nested, value, f"{where}.{name}") if nested else value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _set_override(data: dict, dotted: str, raw: str) -> None:
    keys = dotted.split(".")
    node = data
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot override {dotted}")
    node[keys[-1]] = yaml.safe_load(raw)


def load_config(path: str | Path | None = None, overrides: Iterable[str] = ()) -> JobConfig:
    data: dict[str, Any] = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file {p} not found")
        try:
            data = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {p}: {exc}") from None
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        _set_override(data, key.strip(), value)
    return _build(JobConfig, data, "config")
