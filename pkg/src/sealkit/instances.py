"""The benchmark instance record and its JSONL shape."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from .calling import CallSequence, is_nested, parse_call_sequence, serialize_call_sequence
from .errors import SchemaError

SINGLE = "single"
MULTIPLE = "multiple"


@dataclass
class Instance:
    id: str
    query: str
    calling: CallSequence
    category: str
    nested: bool
    provenance: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.category not in (SINGLE, MULTIPLE):
            raise SchemaError(f"unknown category {self.category!r}", path=self.id)

    @classmethod
    def create(cls, id: str, query: str, calling: CallSequence, provenance: dict | None = None) -> "Instance":
        """Derive category and nested flag from the calling itself."""
        category = SINGLE if len(calling) == 1 else MULTIPLE
        return cls(id, query, calling, category, is_nested(calling), dict(provenance or {}))

    @property
    def gold_tools(self) -> list[str]:
        return self.calling.api_names

    def to_json(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "query": self.query,
            "calling": serialize_call_sequence(self.calling),
            "category": self.category,
            "nested": self.nested,
            "provenance": self.provenance,
        }

    @classmethod
    def from_json(cls, raw: Any) -> "Instance":
        if not isinstance(raw, dict):
            raise SchemaError("instance must be an object")
        ident = str(raw.get("id", ""))
        for key in ("id", "query", "calling"):
            if key not in raw:
                raise SchemaError(f"missing {key!r}", path=ident)
        calling = parse_call_sequence(raw["calling"])
        category = raw.get("category") or (SINGLE if len(calling) == 1 else MULTIPLE)
        nested = raw.get("nested")
        return cls(
            id=ident,
            query=str(raw["query"]),
            calling=calling,
            category=category,
            nested=is_nested(calling) if nested is None else bool(nested),
            provenance=dict(raw.get("provenance") or {}),
        )
