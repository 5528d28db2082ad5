"""Self-instruct generation of fields, tools and calling instances.

Every stage talks to a :class:`~sealkit.backend.Backend`, parses the reply,
runs the quality gate and records counters in a :class:`RunManifest`.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import random
import re
import string
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping, Sequence

from .backend import Backend
from .calling import (
    BLANK,
    CallSequence,
    Literal,
    ToolCall,
    build_template,
    is_nested,
    parse_call_sequence,
    serialize_call_sequence,
    validate_sequence,
)
from .errors import (
    BackfillIncompleteError,
    EmptyTreeError,
    NoJsonFoundError,
    PlaceholderSyntaxError,
    PreconditionError,
    QCRejected,
    SchemaError,
)
from .extract import extract_after, extract_bracketed, extract_first_json, parse_list_literal
from .instances import MULTIPLE, SINGLE, Instance
from .prompts import PromptTemplate, load_templates, seed_tool_json
from .schema import (
    FieldTree,
    Field,
    InsertOutcome,
    ParamType,
    ParameterSpec,
    ToolPool,
    ToolSpec,
    ValidationReport,
    append_value_examples,
    tool_from_json,
    tool_to_json,
    validate_tool,
)

log = logging.getLogger(__name__)

__all__ = [
    "BatchCounters",
    "RunManifest",
    "backfill_examples",
    "combine_tools",
    "extract_first_json",
    "fill_template",
    "generate_field_tree",
    "generate_multi_instances",
    "generate_single_instance",
    "generate_single_instances",
    "generate_tools",
    "parse_list_literal",
    "qc_instance",
]


# --- manifest -----------------------------------------------------------------------


@dataclass
class BatchCounters:
    label: str
    calls: int = 0
    attempted: int = 0
    parsed: int = 0
    deduped: int = 0
    rejected: int = 0
    accepted: int = 0

    def check(self) -> None:
        assert self.accepted <= self.parsed <= self.attempted, self


@dataclass
class RunManifest:
    stage: str
    config: dict[str, Any] = field(default_factory=dict)
    batches: list[BatchCounters] = field(default_factory=list)
    stalls: dict[str, dict[str, Any]] = field(default_factory=dict)
    qc_reasons: Counter = field(default_factory=Counter)
    notes: dict[str, Any] = field(default_factory=dict)
    # The only non-reproducible part of a manifest.
    timestamps: dict[str, str] = field(default_factory=dict)

    def batch(self, label: str) -> BatchCounters:
        b = BatchCounters(label)
        self.batches.append(b)
        return b

    def totals(self) -> dict[str, int]:
        keys = ("calls", "attempted", "parsed", "deduped", "rejected", "accepted")
        return {k: sum(getattr(b, k) for b in self.batches) for k in keys}

    def cumulative_accepted(self) -> list[int]:
        out, running = [], 0
        for b in self.batches:
            running += b.accepted
            out.append(running)
        return out

    def to_json(self) -> dict[str, Any]:
        return {
            "stage": self.stage,
            "totals": self.totals(),
            "batches": [dataclasses.asdict(b) for b in self.batches],
            "stalls": self.stalls,
            "qc_reasons": dict(sorted(self.qc_reasons.items())),
            "notes": self.notes,
            "config": self.config,
            "timestamps": self.timestamps,
        }


# --- quality control ----------------------------------------------------------------


def _collapse(text: str) -> str:
    return " ".join(text.split()).lower()


def _float_renderings(x: float) -> list[str]:
    out = [repr(x), f"{x:g}"]
    if x.is_integer():
        out.append(str(int(x)))
    return out


def _mentioned(value: Any, query: str) -> bool:
    if value is None or isinstance(value, bool):
        return True
    if isinstance(value, int):
        return str(value) in query
    if isinstance(value, float):
        return any(r in query for r in _float_renderings(value))
    if isinstance(value, str):
        text = _collapse(value)
        return not text or text in query
    if isinstance(value, list):
        return all(_mentioned(v, query) for v in value)
    if isinstance(value, dict):
        return all(_mentioned(v, query) for v in value.values())
    return _collapse(str(value)) in query


def qc_instance(instance: Instance, pool: ToolPool) -> ValidationReport:
    """Structural and lexical gate every accepted instance must pass."""
    report = validate_sequence(instance.calling, pool)
    query = _collapse(instance.query)
    if not query:
        report.add("EMPTY_QUERY")
    for i, call in enumerate(instance.calling):
        for name, value in call.parameters.items():
            if isinstance(value, Literal) and not _mentioned(value.value, query):
                report.add("VALUE_NOT_MENTIONED", f"[{i}] {call.api}.{name}={value.value!r}")
    for api in dict.fromkeys(instance.calling.api_names):
        if re.search(rf"(?<![A-Za-z0-9_]){re.escape(api)}(?![A-Za-z0-9_])", instance.query):
            report.add("API_NAME_LEAK", api)
    n = len(instance.calling)
    if (instance.category == SINGLE) != (n == 1) or (instance.category == MULTIPLE and n < 2):
        report.add("CATEGORY_MISMATCH", f"{instance.category} with {n} calls")
    if instance.nested != is_nested(instance.calling):
        report.add("NESTED_FLAG_MISMATCH")
    return report


# --- helpers ------------------------------------------------------------------------


def _dedupe_ci(items: Iterable[str]) -> tuple[list[str], int]:
    seen, out, dropped = set(), [], 0
    for item in items:
        k = item.casefold()
        if k in seen:
            dropped += 1
            continue
        seen.add(k)
        out.append(item)
    return out, dropped


def _request(backend: Backend, prompt: str, counters: BatchCounters | None, parse: Callable[[str], Any]) -> Any:
    """Ask once, retry once on a parse failure, then give up with ``None``."""
    for attempt in range(2):
        reply = backend.complete(prompt).response
        if counters is not None:
            counters.calls += 1
        try:
            return parse(reply)
        except (NoJsonFoundError, SchemaError, PlaceholderSyntaxError, ValueError) as exc:
            log.info("unparseable reply (attempt %d): %s", attempt + 1, exc)
    return None


def _nonempty_list(text: str, name: str | None = None) -> list[str]:
    items = parse_list_literal(text, name) if name else []
    items = items or parse_list_literal(text)
    if not items:
        raise ValueError("no list literal in reply")
    return items


def _path_part(name: str) -> str:
    # "/" separates field from subfield in a tool's field path.
    return " ".join(name.replace("/", " - ").split())


# --- fields -------------------------------------------------------------------------


def generate_field_tree(
    backend: Backend,
    seed_fields: Sequence[str] = ("Science", "Healthcare"),
    *,
    templates: Mapping[str, PromptTemplate] | None = None,
    manifest: RunManifest | None = None,
) -> FieldTree:
    templates = templates or load_templates()
    manifest = manifest or RunManifest("fields")
    if isinstance(seed_fields, str):
        seed_fields = [seed_fields]
    tpl = templates["field"]
    seeds = list(seed_fields) + [""] * (tpl.slot_count - len(seed_fields))
    counters = manifest.batch("fields")
    names = _request(backend, tpl.fill(*seeds[: tpl.slot_count]), counters, lambda t: _nonempty_list(t, "field_list")) or []
    fields, dropped = _dedupe_ci(n for n in names if n.strip())
    counters.attempted = max(len(names), 1)
    counters.parsed = len(names)
    counters.deduped = dropped
    counters.accepted = len(fields)
    if not fields:
        raise EmptyTreeError("no fields parsed from the field-list reply")

    tree = []
    for name in fields:
        c = manifest.batch(f"subfields:{name}")
        subs = _request(backend, templates["subfield"].fill(name), c, _nonempty_list) or []
        unique, dropped = _dedupe_ci(s for s in subs if s.strip())
        c.attempted, c.parsed, c.deduped, c.accepted = max(len(subs), 1), len(subs), dropped, len(unique)
        tree.append(Field(name, unique))
    return FieldTree(tree)


# --- tools --------------------------------------------------------------------------


def _tool_list(text: str) -> list[Any]:
    value = extract_first_json(text)
    if isinstance(value, dict):
        return [value]
    if isinstance(value, list):
        return value
    raise ValueError("reply JSON is neither an object nor an array")


def generate_tools(
    backend: Backend,
    pool: ToolPool,
    tree: FieldTree,
    stall_limit: int = 3,
    *,
    max_rounds: int = 20,
    example_tool: str | None = None,
    allow_empty_responses: bool = False,
    templates: Mapping[str, PromptTemplate] | None = None,
    manifest: RunManifest | None = None,
) -> tuple[ToolPool, RunManifest]:
    """Grow ``pool`` subfield by subfield until the model stops adding tools.

    A round that adds nothing counts as a stall; ``stall_limit`` consecutive
    stalls (or ``max_rounds`` rounds) move on to the next subfield.
    """
    if len(tree) == 0 or tree.subfield_count == 0:
        raise PreconditionError("field tree has no subfields", code="EMPTY_TREE")
    templates = templates or load_templates()
    manifest = manifest or RunManifest("tools")
    example = example_tool or seed_tool_json()
    ex_field, _, ex_sub = json.loads(example).get("field", "/").partition("/")
    tpl = templates["tool"]

    for field_name, sub in tree.paths():
        path = f"{_path_part(field_name)}/{_path_part(sub)}"
        prompt = tpl.fill(ex_field, ex_sub, example, field_name, sub)
        stalls = rounds = 0
        while stalls < stall_limit and rounds < max_rounds:
            rounds += 1
            c = manifest.batch(f"{path}#{rounds}")
            items = _request(backend, prompt, c, _tool_list)
            if items is None:
                c.attempted = 1
                items = []
            for raw in items:
                c.attempted += 1
                if not isinstance(raw, dict):
                    continue
                c.parsed += 1
                raw = dict(raw)
                raw["field"] = path
                report = validate_tool(raw, allow_empty_responses=allow_empty_responses)
                if not report.ok:
                    c.rejected += 1
                    manifest.qc_reasons.update(report.codes)
                    log.info("rejected tool %r: %s", raw.get("api_name"), report.codes)
                    continue
                tool = tool_from_json(raw, allow_empty_responses=allow_empty_responses)
                if pool.insert(tool) is InsertOutcome.DUPLICATE:
                    c.deduped += 1
                else:
                    c.accepted += 1
            stalls = stalls + 1 if c.accepted == 0 else 0
        manifest.stalls[path] = {"rounds": rounds, "stalls": stalls, "abandoned": stalls >= stall_limit}
    return pool, manifest


# --- example backfill ---------------------------------------------------------------


def _name_tokens(name: str) -> list[str]:
    return [t.lower() for t in re.findall(r"[A-Z]+(?![a-z])|[A-Z]?[a-z]+|\d+", name)]


def _email(rng: random.Random) -> str:
    user = "".join(rng.choice(string.ascii_lowercase) for _ in range(rng.randint(5, 8)))
    user += "".join(rng.choice(string.digits) for _ in range(rng.randint(0, 3)))
    return f"{user}@example.{rng.choice(('com', 'org', 'net'))}"


def _phone(rng: random.Random) -> str:
    d = lambda n: "".join(rng.choice(string.digits) for _ in range(n))  # noqa: E731
    return f"+1-{d(3)}-{d(3)}-{d(4)}"


SENSITIVE_RULES: dict[str, tuple[frozenset[str], Callable[[random.Random], str]]] = {
    "email": (frozenset({"email", "mail"}), _email),
    "phone": (frozenset({"phone", "mobile", "telephone", "tel", "cell", "cellphone"}), _phone),
}


def sensitive_category(param_name: str) -> str | None:
    tokens = set(_name_tokens(param_name))
    for category, (keywords, _) in SENSITIVE_RULES.items():
        if tokens & keywords:
            return category
    return None


def rule_values(category: str, seed: Any, n: int = 3) -> list[str]:
    rng = random.Random(f"{seed}:{category}")
    gen = SENSITIVE_RULES[category][1]
    return [gen(rng) for _ in range(n)]


def _batch_key(param_name: str) -> str:
    return "_".join(_name_tokens(param_name)) or param_name.lower()


def _missing_examples(pool: ToolPool) -> list[tuple[str, str]]:
    return [
        (t.name, p)
        for t in pool
        for p in t.required
        if not t.parameters[p].example_values
    ]


def _set_examples(pool: ToolPool, tool_name: str, param: str, values: Sequence[str]) -> None:
    tool = pool.lookup(tool_name)
    spec = tool.parameters[param]
    desc = append_value_examples(spec.description, values)
    params = dict(tool.parameters)
    params[param] = ParameterSpec.build(param, spec.kind, desc)
    pool.replace(dataclasses.replace(tool, parameters=params))


def backfill_examples(
    backend: Backend,
    pool: ToolPool,
    *,
    rng_seed: int = 0,
    max_passes: int = 2,
    values_per_batch: int = 5,
    templates: Mapping[str, PromptTemplate] | None = None,
    manifest: RunManifest | None = None,
) -> ToolPool:
    """Give every required parameter at least one example value.

    Contact details come from rule generators; everything else is grouped by
    parameter-name category and filled with one model call per group.
    """
    templates = templates or load_templates()
    manifest = manifest or RunManifest("backfill")
    for pass_no in range(1, max_passes + 1):
        missing = _missing_examples(pool)
        if not missing:
            break
        groups: dict[str, list[tuple[str, str]]] = {}
        for tool_name, param in missing:
            category = sensitive_category(param)
            if category:
                _set_examples(pool, tool_name, param, rule_values(category, f"{rng_seed}:{tool_name}:{param}"))
                continue
            groups.setdefault(_batch_key(param), []).append((tool_name, param))
        for key, members in groups.items():
            c = manifest.batch(f"backfill:{key}#{pass_no}")
            descriptions = list(dict.fromkeys(pool.lookup(t).parameters[p].description for t, p in members))[:5]
            prompt = templates["backfill"].fill(values_per_batch, members[0][1], json.dumps(descriptions, ensure_ascii=False))
            values = _request(backend, prompt, c, lambda t: _nonempty_list(t, "values")) or []
            c.attempted = len(members)
            c.parsed = len(members) if values else 0
            if values:
                for tool_name, param in members:
                    _set_examples(pool, tool_name, param, values)
                c.accepted = sum(1 for t, p in members if pool.lookup(t).parameters[p].example_values)
    still = _missing_examples(pool)
    if still:
        raise BackfillIncompleteError(still)
    return pool


# --- instances ----------------------------------------------------------------------


def coerce_example(value: str, kind: ParamType) -> Any:
    """Typed literal for an example string, left as text when it does not parse."""
    text = value.strip()
    try:
        if kind is ParamType.INTEGER and re.fullmatch(r"[+-]?\d+", text):
            return int(text)
        if kind is ParamType.FLOAT and re.fullmatch(r"[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?", text):
            return float(text)
    except ValueError:
        pass
    if kind is ParamType.BOOLEAN and text.lower() in ("true", "false"):
        return text.lower() == "true"
    return value


def sample_values(tool: ToolSpec, rng: random.Random) -> dict[str, Any] | None:
    """One uniformly drawn example per required parameter, or ``None`` if any lacks examples."""
    out = {}
    for name in tool.required:
        examples = tool.parameters[name].example_values
        if not examples:
            return None
        out[name] = coerce_example(rng.choice(examples), tool.parameters[name].kind)
    return out


def _gate(instance: Instance, pool: ToolPool, extra: Sequence[str] = ()) -> Instance:
    report = qc_instance(instance, pool)
    reasons = list(extra) + report.codes
    if reasons:
        raise QCRejected(sorted(set(reasons), key=reasons.index), "; ".join(v.detail for v in report.violations))
    return instance


def generate_single_instance(
    backend: Backend,
    tool: ToolSpec,
    chosen_values: Mapping[str, Any],
    *,
    instance_id: str = "single-00000",
    pool: ToolPool | None = None,
    templates: Mapping[str, PromptTemplate] | None = None,
    provenance: dict[str, Any] | None = None,
) -> Instance:
    missing = [p for p in tool.required if p not in chosen_values]
    if missing:
        raise PreconditionError(f"no value for required parameters {missing}")
    templates = templates or load_templates()
    calling_json = json.dumps({"api": tool.name, "parameters": dict(chosen_values)}, ensure_ascii=False)
    reply = backend.complete(templates["single_instance"].fill(calling_json)).response
    query = extract_bracketed(extract_after(reply, "Task description ="))
    call = ToolCall(
        tool.name,
        {k: Literal(v) for k, v in chosen_values.items()},
        tuple(range(len(tool.responses))),
    )
    prov = {"subfield": tool.field_path, "template": "single_instance", "backend": backend.backend_id}
    prov.update(provenance or {})
    inst = Instance.create(instance_id, query, CallSequence((call,)), prov)
    return _gate(inst, pool if pool is not None else ToolPool([tool]))


def combine_tools(
    backend: Backend,
    pool: ToolPool,
    candidate_count: int = 14,
    rng_seed: int | random.Random = 0,
    *,
    templates: Mapping[str, PromptTemplate] | None = None,
) -> tuple[list[str], str, list[str]]:
    """Let the model pick associated tools from a random candidate list.

    Returns ``(selected names, task sketch, candidate names)``.
    """
    if len(pool) < candidate_count:
        raise PreconditionError(f"pool has {len(pool)} tools, need {candidate_count} candidates")
    rng = rng_seed if isinstance(rng_seed, random.Random) else random.Random(rng_seed)
    templates = templates or load_templates()
    candidates = [pool[i] for i in rng.sample(range(len(pool)), candidate_count)]
    given = repr([{t.name: t.description} for t in candidates])
    reply = backend.complete(templates["combine"].fill(given)).response
    selected = list(dict.fromkeys(parse_list_literal(reply, "selected_apis")))
    sketch = extract_bracketed(reply, "task_description")
    names = [t.name for t in candidates]
    reasons = []
    if any(n not in names for n in selected):
        reasons.append("UNKNOWN_SELECTION")
    if len(selected) < 2:
        reasons.append("TOO_FEW_SELECTED")
    if reasons:
        raise QCRejected(reasons, f"selected {selected}")
    return selected, sketch, names


def render_template(template: CallSequence) -> str:
    """Calling template as shown to the model: blanks appear as bare ``___``."""
    return json.dumps(serialize_call_sequence(template), ensure_ascii=False).replace('"___"', "___")


def _improved_calling(text: str) -> CallSequence:
    raw = extract_first_json(extract_after(text, "improved_api_calling"))
    return parse_call_sequence(raw)


def fill_template(
    backend: Backend,
    tools: Sequence[ToolSpec],
    template: CallSequence,
    *,
    instance_id: str = "multi-00000",
    pool: ToolPool | None = None,
    templates: Mapping[str, PromptTemplate] | None = None,
    provenance: dict[str, Any] | None = None,
    counters: BatchCounters | None = None,
) -> Instance:
    templates = templates or load_templates()
    api_list = json.dumps([tool_to_json(t, include_field=False) for t in tools], ensure_ascii=False)
    prompt = templates["fill"].fill(api_list, render_template(template))
    replies: list[str] = []

    def parse(text: str) -> CallSequence:
        replies.append(text)
        return _improved_calling(text)

    calling = _request(backend, prompt, counters, parse)
    if calling is None:
        raise QCRejected(["PARSE_FAILED"])
    query = extract_bracketed(replies[-1], "task_description")
    extra = []
    if calling.api_names != template.api_names or [c.responses for c in calling] != [c.responses for c in template]:
        extra.append("TEMPLATE_MISMATCH")
    if any(v is BLANK for c in calling for v in c.parameters.values()):
        extra.append("UNFILLED_BLANK")
    prov = {
        "subfields": list(dict.fromkeys(t.field_path for t in tools)),
        "template": "fill",
        "backend": backend.backend_id,
    }
    prov.update(provenance or {})
    inst = Instance.create(instance_id, query, calling, prov)
    return _gate(inst, pool if pool is not None else ToolPool(tools), extra)


def generate_single_instances(
    backend: Backend,
    pool: ToolPool,
    *,
    rng_seed: int = 0,
    limit: int | None = None,
    templates: Mapping[str, PromptTemplate] | None = None,
    manifest: RunManifest | None = None,
) -> list[Instance]:
    """One single-tool instance per pool tool, in pool order."""
    templates = templates or load_templates()
    manifest = manifest or RunManifest("single")
    rng = random.Random(rng_seed)
    accepted = []
    for i, tool in enumerate(pool):
        if limit is not None and i >= limit:
            break
        c = manifest.batch(f"single:{tool.name}")
        c.attempted = 1
        values = sample_values(tool, rng)
        if values is None:
            manifest.qc_reasons["NO_EXAMPLE_VALUES"] += 1
            continue
        c.calls = 1
        try:
            inst = generate_single_instance(
                backend, tool, values, instance_id=f"single-{i:05d}", pool=pool, templates=templates
            )
        except QCRejected as exc:
            c.parsed = int("EMPTY_QUERY" not in exc.reasons)
            manifest.qc_reasons.update(exc.reasons)
            continue
        c.parsed = c.accepted = 1
        accepted.append(inst)
    return accepted


def generate_multi_instances(
    backend: Backend,
    pool: ToolPool,
    count: int,
    *,
    candidate_count: int = 14,
    rng_seed: int = 0,
    max_attempts: int | None = None,
    templates: Mapping[str, PromptTemplate] | None = None,
    manifest: RunManifest | None = None,
) -> list[Instance]:
    """Two-step multi-tool generation: combine tools, then fill the blank template."""
    templates = templates or load_templates()
    manifest = manifest or RunManifest("multi")
    rng = random.Random(rng_seed)
    max_attempts = max_attempts if max_attempts is not None else 3 * count
    accepted: list[Instance] = []
    attempt = 0
    while len(accepted) < count and attempt < max_attempts:
        c = manifest.batch(f"multi:{attempt}")
        c.attempted = 1
        ident = f"multi-{attempt:05d}"
        attempt += 1
        try:
            c.calls += 1
            selected, sketch, candidates = combine_tools(backend, pool, candidate_count, rng, templates=templates)
            tools = [pool.lookup(n) for n in selected]
            inst = fill_template(
                backend,
                tools,
                build_template(tools),
                instance_id=ident,
                pool=pool,
                templates=templates,
                provenance={"sketch": sketch, "candidates": candidates},
                counters=c,
            )
        except QCRejected as exc:
            c.parsed = int("PARSE_FAILED" not in exc.reasons and "UNKNOWN_SELECTION" not in exc.reasons)
            manifest.qc_reasons.update(exc.reasons)
            continue
        c.parsed = c.accepted = 1
        accepted.append(inst)
    return accepted
