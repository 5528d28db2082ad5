"""Tool template, field tree and the deduplicating tool pool."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator

from .errors import SchemaError

TOOL_KEYS = ("api_name", "api_description", "field", "parameters", "required", "responses")


class ParamType(str, enum.Enum):
    STRING = "str"
    INTEGER = "int"
    FLOAT = "float"
    BOOLEAN = "bool"

    @classmethod
    def parse(cls, token: Any) -> "ParamType":
        try:
            return cls(token)
        except ValueError:
            raise SchemaError(f"unknown parameter type {token!r}") from None


@dataclass
class ParameterSpec:
    name: str
    kind: ParamType
    description: str
    example_values: list[str] = field(default_factory=list)

    @classmethod
    def build(cls, name: str, kind: ParamType, description: str) -> "ParameterSpec":
        return cls(name, kind, description, extract_value_examples(description))


@dataclass
class ResponseSpec:
    kind: ParamType
    description: str


@dataclass
class ToolSpec:
    name: str
    description: str
    field_path: str
    parameters: dict[str, ParameterSpec]
    required: list[str]
    responses: dict[str, ResponseSpec]
    # Unknown keys from the source JSON, carried through untouched.
    extra: dict[str, Any] = field(default_factory=dict)

    @property
    def key(self) -> str:
        return canonical_key(self.name)


@dataclass(frozen=True)
class Violation:
    code: str
    detail: str = ""


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def codes(self) -> list[str]:
        return [v.code for v in self.violations]

    def add(self, code: str, detail: str = "") -> None:
        self.violations.append(Violation(code, detail))

    def extend(self, other: "ValidationReport") -> None:
        self.violations.extend(other.violations)


# --- example clause -----------------------------------------------------------------

_EXAMPLE_CLAUSE = re.compile(r"\(\s*e\.g\.\s*,([^()]*)\)\s*\.?\s*$", re.IGNORECASE)
_QUOTES = ("\"", "'", "“”", "‘’")


def _unquote(value: str) -> str:
    if len(value) >= 2:
        for pair in _QUOTES:
            opening, closing = (pair, pair) if len(pair) == 1 else (pair[0], pair[1])
            if value.startswith(opening) and value.endswith(closing):
                return value[1:-1].strip()
    return value


def extract_value_examples(description: str) -> list[str]:
    """Return the values listed in a trailing ``(e.g., a, b, ...)`` clause.

    Descriptions without such a clause yield an empty list. Ellipsis tokens are
    dropped.
    """
    m = _EXAMPLE_CLAUSE.search(description or "")
    if not m:
        return []
    values = []
    for raw in m.group(1).split(","):
        item = raw.strip()
        for ellipsis in ("...", "…"):
            if item.endswith(ellipsis):
                item = item[: -len(ellipsis)].rstrip()
        item = _unquote(item)
        if not item or "..." in item or "…" in item:
            continue
        values.append(item)
    return values


def append_value_examples(description: str, values: Iterable[str]) -> str:
    """Append an example clause to a description that lacks one."""
    cleaned = []
    for v in values:
        v = re.sub(r"[(),]", " ", str(v))
        v = " ".join(v.split()).strip(". ")
        if v and v not in cleaned:
            cleaned.append(v)
    if not cleaned:
        return description
    return f"{description.rstrip()} (e.g., {', '.join(cleaned)})"


# --- validation / (de)serialisation -------------------------------------------------


def canonical_key(tool: "ToolSpec | str") -> str:
    name = tool if isinstance(tool, str) else tool.name
    return "".join(c for c in name.lower() if c.isalnum())


def _check_typed_map(
    raw: Any, label: str, report: ValidationReport, unknown_code: str
) -> None:
    if not isinstance(raw, dict):
        report.add(f"BAD_{label.upper()}", f"{label} must be an object")
        return
    for name, entry in raw.items():
        if not isinstance(name, str) or not name.strip():
            report.add(f"EMPTY_{label.upper()[:-1]}_NAME", repr(name))
        if not isinstance(entry, dict):
            report.add(f"BAD_{label.upper()[:-1]}_ENTRY", str(name))
            continue
        kind = entry.get("type")
        if kind not in {t.value for t in ParamType}:
            report.add(unknown_code, f"{name}: {kind!r}")
        if not isinstance(entry.get("description", ""), str):
            report.add(f"BAD_{label.upper()[:-1]}_ENTRY", f"{name}: description")


def validate_tool(raw: Any, *, allow_empty_responses: bool = False) -> ValidationReport:
    """Check a parsed tool object against every template rule.

    All failed rules are reported, not only the first one.
    """
    report = ValidationReport()
    if not isinstance(raw, dict):
        report.add("NOT_AN_OBJECT", type(raw).__name__)
        return report
    for key in TOOL_KEYS:
        if key not in raw:
            report.add("MISSING_KEY", key)

    name = raw.get("api_name")
    if "api_name" in raw and (not isinstance(name, str) or not name.strip()):
        report.add("EMPTY_NAME")
    elif isinstance(name, str) and name.strip() and not canonical_key(name):
        report.add("EMPTY_NAME", "no alphanumeric characters")
    if "api_description" in raw and not isinstance(raw["api_description"], str):
        report.add("BAD_DESCRIPTION")

    if "field" in raw:
        path = raw["field"]
        parts = path.split("/") if isinstance(path, str) else []
        if len(parts) != 2 or not all(p.strip() for p in parts):
            report.add("BAD_FIELD_PATH", repr(path))

    params = raw.get("parameters", {})
    if "parameters" in raw:
        _check_typed_map(params, "parameters", report, "UNKNOWN_PARAM_TYPE")

    if "required" in raw:
        required = raw["required"]
        if not isinstance(required, list) or not all(isinstance(r, str) for r in required):
            report.add("BAD_REQUIRED", "required must be a list of names")
        else:
            known = params if isinstance(params, dict) else {}
            for r in required:
                if r not in known:
                    report.add("REQUIRED_PARAM_MISSING", r)
            if len(set(required)) != len(required):
                report.add("DUPLICATE_REQUIRED")

    if "responses" in raw:
        responses = raw["responses"]
        _check_typed_map(responses, "responses", report, "UNKNOWN_RESPONSE_TYPE")
        if isinstance(responses, dict) and not responses and not allow_empty_responses:
            report.add("EMPTY_RESPONSES")
    return report


def tool_from_json(raw: Any, *, allow_empty_responses: bool = False) -> ToolSpec:
    report = validate_tool(raw, allow_empty_responses=allow_empty_responses)
    if not report.ok:
        raise SchemaError("invalid tool: " + ", ".join(report.codes), path=str(raw.get("api_name", "")) if isinstance(raw, dict) else "")
    params = {
        n: ParameterSpec.build(n, ParamType(e["type"]), e.get("description", ""))
        for n, e in raw["parameters"].items()
    }
    responses = {
        n: ResponseSpec(ParamType(e["type"]), e.get("description", ""))
        for n, e in raw["responses"].items()
    }
    return ToolSpec(
        name=raw["api_name"],
        description=raw["api_description"],
        field_path=raw["field"],
        parameters=params,
        required=list(raw["required"]),
        responses=responses,
        extra={k: v for k, v in raw.items() if k not in TOOL_KEYS},
    )


def tool_to_json(tool: ToolSpec, *, include_field: bool = True) -> dict[str, Any]:
    out: dict[str, Any] = {"api_name": tool.name, "api_description": tool.description}
    if include_field:
        out["field"] = tool.field_path
    out["parameters"] = {
        n: {"type": p.kind.value, "description": p.description} for n, p in tool.parameters.items()
    }
    out["required"] = list(tool.required)
    out["responses"] = {
        n: {"type": r.kind.value, "description": r.description} for n, r in tool.responses.items()
    }
    if include_field:
        out.update(tool.extra)
    return out


# --- field tree ---------------------------------------------------------------------


@dataclass
class Field:
    name: str
    subfields: list[str] = field(default_factory=list)


@dataclass
class FieldTree:
    fields: list[Field] = field(default_factory=list)

    def __post_init__(self) -> None:
        seen = set()
        for f in self.fields:
            if f.name in seen:
                raise SchemaError(f"duplicate field {f.name!r}")
            seen.add(f.name)
            if len(set(f.subfields)) != len(f.subfields):
                raise SchemaError(f"duplicate subfield in {f.name!r}")

    def __len__(self) -> int:
        return len(self.fields)

    @property
    def subfield_count(self) -> int:
        return sum(len(f.subfields) for f in self.fields)

    def paths(self) -> Iterator[tuple[str, str]]:
        for f in self.fields:
            for s in f.subfields:
                yield f.name, s

    def to_json(self) -> dict[str, Any]:
        return {"fields": [{"name": f.name, "subfields": list(f.subfields)} for f in self.fields]}

    @classmethod
    def from_json(cls, raw: Any) -> "FieldTree":
        if not isinstance(raw, dict) or not isinstance(raw.get("fields"), list):
            raise SchemaError("fields.json must hold an object with a 'fields' list")
        fields = []
        for i, entry in enumerate(raw["fields"]):
            if not isinstance(entry, dict) or not isinstance(entry.get("name"), str):
                raise SchemaError("field entry needs a 'name'", path=f"fields[{i}]")
            subs = entry.get("subfields", [])
            if not isinstance(subs, list) or not all(isinstance(s, str) for s in subs):
                raise SchemaError("subfields must be a list of strings", path=f"fields[{i}]")
            fields.append(Field(entry["name"], list(subs)))
        return cls(fields)


# --- tool pool ----------------------------------------------------------------------


class InsertOutcome(enum.Enum):
    ADDED = "added"
    DUPLICATE = "duplicate"


class ToolPool:
    """Insertion-ordered tool collection, deduplicated by :func:`canonical_key`.

    Mutation is single-writer; concurrent reads are fine once writes stop.
    """

    def __init__(self, tools: Iterable[ToolSpec] = ()):
        self._tools: list[ToolSpec] = []
        self._index: dict[str, int] = {}
        for t in tools:
            self.insert(t)

    def insert(self, tool: ToolSpec) -> InsertOutcome:
        key = canonical_key(tool)
        if key in self._index:
            return InsertOutcome.DUPLICATE
        self._index[key] = len(self._tools)
        self._tools.append(tool)
        return InsertOutcome.ADDED

    def replace(self, tool: ToolSpec) -> None:
        """Swap in an updated version of a tool already in the pool."""
        self._tools[self._index[canonical_key(tool)]] = tool

    def get(self, name: str) -> ToolSpec | None:
        pos = self._index.get(canonical_key(name))
        return None if pos is None else self._tools[pos]

    def lookup(self, name: str) -> ToolSpec | None:
        """Exact-name lookup (the key lookup in :meth:`get` is looser)."""
        tool = self.get(name)
        return tool if tool is not None and tool.name == name else None

    def position(self, name: str) -> int | None:
        return self._index.get(canonical_key(name))

    def names(self) -> list[str]:
        return [t.name for t in self._tools]

    def __contains__(self, name: object) -> bool:
        return isinstance(name, str) and canonical_key(name) in self._index

    def __len__(self) -> int:
        return len(self._tools)

    def __iter__(self) -> Iterator[ToolSpec]:
        return iter(list(self._tools))

    def __getitem__(self, i: int) -> ToolSpec:
        return self._tools[i]


def insert_tool(pool: ToolPool, tool: ToolSpec) -> InsertOutcome:
    return pool.insert(tool)
