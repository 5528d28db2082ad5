"""Tool-calling sequences, blank templates and ``API_call_k`` reference checks."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any, Iterator, Sequence, Union

from .errors import DanglingRefError, EmptySelectionError, PlaceholderSyntaxError, SchemaError
from .schema import ToolPool, ToolSpec, ValidationReport

BLANK_MARKER = "___"
PLACEHOLDER_RE = re.compile(r"^API_call_(\d+)$")


class _Blank:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "BLANK"

    def __reduce__(self):
        return (_Blank, ())


BLANK = _Blank()


@dataclass(frozen=True)
class Ref:
    index: int

    @property
    def label(self) -> str:
        return placeholder(self.index)


@dataclass(frozen=True)
class Literal:
    value: Any


ParamValue = Union[Literal, Ref, _Blank]


def placeholder(k: int) -> str:
    return f"API_call_{k}"


def parse_placeholder(label: Any) -> int:
    m = PLACEHOLDER_RE.match(label) if isinstance(label, str) else None
    if not m:
        raise PlaceholderSyntaxError(f"malformed placeholder {label!r}")
    return int(m.group(1))


def parse_value(raw: Any) -> ParamValue:
    if isinstance(raw, str):
        if raw == BLANK_MARKER:
            return BLANK
        m = PLACEHOLDER_RE.match(raw)
        if m:
            return Ref(int(m.group(1)))
    return Literal(raw)


def serialize_value(value: ParamValue) -> Any:
    if value is BLANK:
        return BLANK_MARKER
    if isinstance(value, Ref):
        return value.label
    return value.value


@dataclass(frozen=True)
class ToolCall:
    api: str
    parameters: dict[str, ParamValue] = field(default_factory=dict)
    responses: tuple[int, ...] = ()

    @property
    def response_labels(self) -> list[str]:
        return [placeholder(k) for k in self.responses]

    def refs(self) -> Iterator[Ref]:
        return (v for v in self.parameters.values() if isinstance(v, Ref))


@dataclass(frozen=True)
class CallSequence:
    calls: tuple[ToolCall, ...] = ()

    def __len__(self) -> int:
        return len(self.calls)

    def __iter__(self) -> Iterator[ToolCall]:
        return iter(self.calls)

    @property
    def api_names(self) -> list[str]:
        return [c.api for c in self.calls]


def build_template(tools: Sequence[ToolSpec]) -> CallSequence:
    """Blank calling template: required parameters as blanks, responses numbered."""
    if not tools:
        raise EmptySelectionError("no tools selected")
    calls = []
    counter = 0
    for tool in tools:
        n = len(tool.responses)
        calls.append(
            ToolCall(
                api=tool.name,
                parameters={p: BLANK for p in tool.required},
                responses=tuple(range(counter, counter + n)),
            )
        )
        counter += n
    return CallSequence(tuple(calls))


def parse_call_sequence(raw: Any) -> CallSequence:
    if not isinstance(raw, list):
        raise SchemaError("calling must be a JSON array", path="$")
    calls = []
    for i, item in enumerate(raw):
        path = f"[{i}]"
        if not isinstance(item, dict):
            raise SchemaError("call must be an object", path=path)
        api = item.get("api")
        if not isinstance(api, str) or not api:
            raise SchemaError("missing or empty 'api'", path=f"{path}.api")
        params = item.get("parameters")
        if not isinstance(params, dict):
            raise SchemaError("missing or non-object 'parameters'", path=f"{path}.parameters")
        responses = item.get("responses", [])
        if not isinstance(responses, list):
            raise SchemaError("'responses' must be an array", path=f"{path}.responses")
        try:
            labels = tuple(parse_placeholder(r) for r in responses)
        except PlaceholderSyntaxError as exc:
            raise PlaceholderSyntaxError(f"{path}.responses: {exc}") from None
        calls.append(
            ToolCall(api=api, parameters={k: parse_value(v) for k, v in params.items()}, responses=labels)
        )
    return CallSequence(tuple(calls))


def serialize_call_sequence(seq: CallSequence) -> list[dict[str, Any]]:
    return [
        {
            "api": c.api,
            "parameters": {k: serialize_value(v) for k, v in c.parameters.items()},
            "responses": c.response_labels,
        }
        for c in seq.calls
    ]


def validate_sequence(
    seq: CallSequence, pool: ToolPool, *, template_mode: bool = False
) -> ValidationReport:
    """Check a sequence against the pool and the placeholder/DAG invariants.

    In template mode blanks are legal values; in instance mode they are not.
    """
    report = ValidationReport()
    for i, call in enumerate(seq.calls):
        tool = pool.lookup(call.api)
        if tool is None:
            report.add("UNKNOWN_TOOL", f"[{i}] {call.api}")
            continue
        for name in call.parameters:
            if name not in tool.parameters:
                report.add("UNKNOWN_PARAMETER", f"[{i}] {call.api}.{name}")
        for name in tool.required:
            if name not in call.parameters:
                report.add("MISSING_REQUIRED", f"[{i}] {call.api}.{name}")
        if not template_mode:
            for name, value in call.parameters.items():
                if value is BLANK:
                    report.add("UNFILLED_BLANK", f"[{i}] {call.api}.{name}")

    labels = [k for c in seq.calls for k in c.responses]
    if labels != list(range(len(labels))):
        report.add("PLACEHOLDER_NUMBERING", f"labels {labels}")

    declared_before: set[int] = set()
    for i, call in enumerate(seq.calls):
        own = set(call.responses)
        for ref in call.refs():
            if ref.index in own and ref.index not in declared_before:
                report.add("SELF_REFERENCE", f"[{i}] {ref.label}")
            elif ref.index not in declared_before:
                report.add("FORWARD_REF_ONLY", f"[{i}] {ref.label}")
        declared_before |= own
    return report


def is_nested(seq: CallSequence) -> bool:
    return any(True for c in seq.calls for _ in c.refs())


def canonical_renumber(seq: CallSequence) -> CallSequence:
    """Relabel placeholders to 0..m-1 in declaration order and rewrite refs.

    A label declared more than once gets a fresh index per declaration; a ref
    resolves to the latest declaration before its call, or failing that the
    first declaration after it.
    """
    declarations: dict[int, list[tuple[int, int]]] = {}
    new_responses = []
    counter = 0
    for i, call in enumerate(seq.calls):
        relabeled = []
        for old in call.responses:
            declarations.setdefault(old, []).append((i, counter))
            relabeled.append(counter)
            counter += 1
        new_responses.append(tuple(relabeled))

    def resolve(i: int, old: int) -> int:
        decls = declarations.get(old)
        if not decls:
            raise DanglingRefError(f"reference to undeclared {placeholder(old)}")
        earlier = [new for pos, new in decls if pos < i]
        return earlier[-1] if earlier else decls[0][1]

    calls = []
    for i, call in enumerate(seq.calls):
        params = {
            k: Ref(resolve(i, v.index)) if isinstance(v, Ref) else v
            for k, v in call.parameters.items()
        }
        calls.append(ToolCall(call.api, params, new_responses[i]))
    return CallSequence(tuple(calls))


def topological_order(seq: CallSequence) -> list[int]:
    """Kahn ordering of the call reference graph (ties by position).

    Raises ``DanglingRefError`` for unresolvable refs and ``SchemaError`` when
    the references form a cycle.
    """
    owner = {k: i for i, c in enumerate(seq.calls) for k in c.responses}
    deps: list[set[int]] = []
    for i, call in enumerate(seq.calls):
        d = set()
        for ref in call.refs():
            if ref.index not in owner:
                raise DanglingRefError(f"reference to undeclared {ref.label}")
            d.add(owner[ref.index])
        deps.append(d)
    remaining = dict(enumerate(deps))
    order: list[int] = []
    done: set[int] = set()
    while remaining:
        ready = [i for i, d in sorted(remaining.items()) if d <= done]
        if not ready:
            raise SchemaError("reference cycle among calls")
        order.append(ready[0])
        done.add(ready[0])
        del remaining[ready[0]]
    return order
