"""Scoring model outputs: Format ACC, Tool P/R/F1, Parameter P/R/F1 and error categories."""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Mapping, Sequence

from .calling import BLANK, CallSequence, Literal, Ref, canonical_renumber, parse_call_sequence
from .errors import (
    DanglingRefError,
    IdMismatchError,
    NoJsonFoundError,
    PlaceholderSyntaxError,
    SchemaError,
    SealError,
)
from .extract import extract_first_json
from .instances import MULTIPLE, SINGLE, Instance

SPLITS = ("overall", "single", "multiple", "nested")
ERROR_CATEGORIES = (
    "FORMAT_ERROR",
    "MISSED_RETRIEVED",
    "MISSED_NOT_RETRIEVED",
    "HALLUCINATED",
    "WRONG_SELECTION",
    "OMITTED_REQUIRED",
    "OMITTED_OPTIONAL",
    "WRONG_VALUE",
    "OVERFILLED_UNMENTIONED",
)


class FormatError(SealError):
    code = "FORMAT_ERROR"

    def __init__(self, kind: str, message: str = ""):
        super().__init__(f"{kind}: {message}" if message else kind)
        self.kind = kind


@dataclass(frozen=True)
class Prediction:
    id: str
    raw_output: str


def parse_prediction(raw_output: str) -> CallSequence:
    """Model text to a canonically numbered sequence; raises :class:`FormatError`."""
    try:
        value = extract_first_json(raw_output or "")
    except NoJsonFoundError as exc:
        raise FormatError("NO_JSON", str(exc)) from None
    try:
        seq = parse_call_sequence(value)
    except SchemaError as exc:
        raise FormatError("SCHEMA", str(exc)) from None
    except PlaceholderSyntaxError as exc:
        raise FormatError("PLACEHOLDER", str(exc)) from None
    try:
        return canonical_renumber(seq)
    except DanglingRefError as exc:
        raise FormatError("PLACEHOLDER", str(exc)) from None


# --- matching -----------------------------------------------------------------------

_NUMBER = re.compile(r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?")


def normalize_value(value: Any) -> tuple:
    """Comparison key: numbers compare numerically, booleans case-insensitively,
    refs by index, everything else as exact (outer-trimmed) text."""
    if isinstance(value, Ref):
        return ("ref", value.index)
    if value is BLANK:
        return ("blank",)
    if isinstance(value, Literal):
        value = value.value
    if isinstance(value, bool):
        return ("bool", value)
    if isinstance(value, int):
        return ("num", Fraction(value))
    if isinstance(value, float):
        return ("num", Fraction(repr(value))) if value == value and abs(value) != float("inf") else ("str", repr(value))
    if isinstance(value, str):
        text = value.strip()
        if _NUMBER.fullmatch(text):
            return ("num", Fraction(text))
        if text.lower() in ("true", "false"):
            return ("bool", text.lower() == "true")
        return ("str", text)
    if value is None:
        return ("null",)
    return ("json", json.dumps(value, sort_keys=True, ensure_ascii=False))


def _triples(seq: CallSequence) -> Counter:
    return Counter(
        (call.api, name, normalize_value(value))
        for call in seq.calls
        for name, value in call.parameters.items()
    )


@dataclass
class MatchCounts:
    correct_tools: int = 0
    predicted_tools: int = 0
    gold_tools: int = 0
    correct_params: int = 0
    predicted_params: int = 0
    gold_params: int = 0

    def __add__(self, other: "MatchCounts") -> "MatchCounts":
        return MatchCounts(*(a + b for a, b in zip(asdict(self).values(), asdict(other).values())))


def match_instance(pred: CallSequence, gold: CallSequence) -> MatchCounts:
    """Multiset matching of tool names and of (tool, parameter, value) triples."""
    pt, gt = Counter(pred.api_names), Counter(gold.api_names)
    pp, gp = _triples(pred), _triples(gold)
    return MatchCounts(
        correct_tools=sum((pt & gt).values()),
        predicted_tools=sum(pt.values()),
        gold_tools=sum(gt.values()),
        correct_params=sum((pp & gp).values()),
        predicted_params=sum(pp.values()),
        gold_params=sum(gp.values()),
    )


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


@dataclass
class MetricBlock:
    count: int = 0
    format_correct: int = 0
    counts: MatchCounts = field(default_factory=MatchCounts)

    @property
    def format_acc(self) -> float:
        return _ratio(self.format_correct, self.count)

    @property
    def tool_p(self) -> float:
        return _ratio(self.counts.correct_tools, self.counts.predicted_tools)

    @property
    def tool_r(self) -> float:
        return _ratio(self.counts.correct_tools, self.counts.gold_tools)

    @property
    def tool_f1(self) -> float:
        return f1(self.tool_p, self.tool_r)

    @property
    def param_p(self) -> float:
        return _ratio(self.counts.correct_params, self.counts.predicted_params)

    @property
    def param_r(self) -> float:
        return _ratio(self.counts.correct_params, self.counts.gold_params)

    @property
    def param_f1(self) -> float:
        return f1(self.param_p, self.param_r)

    def add(self, format_ok: bool, counts: MatchCounts) -> None:
        self.count += 1
        self.format_correct += int(format_ok)
        self.counts = self.counts + counts

    def to_json(self) -> dict[str, Any]:
        return {
            "count": self.count,
            "format_acc": self.format_acc,
            "tool_p": self.tool_p,
            "tool_r": self.tool_r,
            "tool_f1": self.tool_f1,
            "param_p": self.param_p,
            "param_r": self.param_r,
            "param_f1": self.param_f1,
            "counts": asdict(self.counts),
        }


@dataclass
class InstanceResult:
    id: str
    format_ok: bool
    format_error: str | None
    counts: MatchCounts
    errors: Counter = field(default_factory=Counter)


@dataclass
class EvalReport:
    splits: dict[str, MetricBlock]
    error_breakdown: Counter = field(default_factory=Counter)
    per_instance: list[InstanceResult] = field(default_factory=list)
    meta: dict[str, Any] = field(default_factory=dict)

    def __getattr__(self, name: str) -> Any:
        # format_acc, tool_p, ... read through to the overall block.
        if name in ("format_acc", "tool_p", "tool_r", "tool_f1", "param_p", "param_r", "param_f1"):
            return getattr(self.splits["overall"], name)
        raise AttributeError(name)

    def to_json(self) -> dict[str, Any]:
        overall = self.splits["overall"].to_json()
        return {
            **{k: overall[k] for k in ("format_acc", "tool_p", "tool_r", "tool_f1", "param_p", "param_r", "param_f1")},
            "splits": {k: v.to_json() for k, v in self.splits.items()},
            "error_breakdown": dict(sorted(self.error_breakdown.items())),
            "per_instance": [
                {
                    "id": r.id,
                    "format_ok": r.format_ok,
                    "format_error": r.format_error,
                    "counts": asdict(r.counts),
                    "errors": dict(sorted(r.errors.items())),
                }
                for r in self.per_instance
            ],
            "meta": self.meta,
        }

    def to_markdown(self) -> str:
        lines = [
            "| Split | N | Format ACC | Tool P | Tool R | Tool F1 | Parameter P | Parameter R | Parameter F1 |",
            "|---|---:|---:|---:|---:|---:|---:|---:|---:|",
        ]
        for name, b in self.splits.items():
            cells = [b.format_acc, b.tool_p, b.tool_r, b.tool_f1, b.param_p, b.param_r, b.param_f1]
            lines.append(f"| {name} | {b.count} | " + " | ".join(f"{100 * c:.2f}" for c in cells) + " |")
        if self.error_breakdown:
            lines += ["", "| Error | Count |", "|---|---:|"]
            lines += [f"| {k} | {v} |" for k, v in sorted(self.error_breakdown.items())]
        return "\n".join(lines) + "\n"


def _splits_for(inst: Instance) -> list[str]:
    out = ["overall", SINGLE if inst.category == SINGLE else MULTIPLE]
    if inst.nested:
        out.append("nested")
    return out


def _as_prediction_map(predictions: Mapping[str, str] | Iterable[Prediction]) -> dict[str, str]:
    if isinstance(predictions, Mapping):
        return dict(predictions)
    out: dict[str, str] = {}
    for p in predictions:
        if p.id in out:
            raise IdMismatchError(f"duplicate prediction id {p.id!r}")
        out[p.id] = p.raw_output
    return out


def evaluate_corpus(
    predictions: Mapping[str, str] | Iterable[Prediction],
    gold_instances: Sequence[Instance],
    *,
    candidates: Mapping[str, Sequence[str]] | None = None,
    required: Mapping[str, Sequence[str]] | None = None,
) -> EvalReport:
    """Micro-averaged corpus metrics with single/multiple/nested splits.

    Missing or unparseable predictions count as format failures: zero predicted,
    full gold counts. When ``candidates`` (retrieved tool names per id) is given
    the error taxonomy is filled in too.
    """
    preds = _as_prediction_map(predictions)
    gold_ids = {g.id for g in gold_instances}
    unknown = sorted(set(preds) - gold_ids)
    if unknown:
        raise IdMismatchError(f"predictions for unknown ids: {unknown[:5]}")

    splits = {name: MetricBlock() for name in SPLITS}
    report = EvalReport(splits)
    if candidates is not None:
        # Every category is listed so reports keep one shape whatever the predictions.
        report.error_breakdown.update(dict.fromkeys(ERROR_CATEGORIES, 0))
    for inst in gold_instances:
        gold = canonical_renumber(inst.calling)
        raw = preds.get(inst.id)
        error = None
        if raw is None:
            error = "MISSING"
            pred = CallSequence()
        else:
            try:
                pred = parse_prediction(raw)
            except FormatError as exc:
                error = exc.kind
                pred = CallSequence()
        counts = match_instance(pred, gold)
        result = InstanceResult(inst.id, error is None, error, counts)
        if candidates is not None:
            result.errors = classify_errors(pred, gold, candidates.get(inst.id, ()), required=required)
            if error:
                result.errors["FORMAT_ERROR"] += 1
            report.error_breakdown.update(result.errors)
        for name in _splits_for(inst):
            splits[name].add(error is None, counts)
        report.per_instance.append(result)
    return report


def classify_errors(
    pred: CallSequence,
    gold: CallSequence,
    candidates: Iterable[str],
    *,
    required: Mapping[str, Sequence[str]] | None = None,
) -> Counter:
    """Tool-side and parameter-side error categories for one instance.

    ``required`` maps tool name to its required parameters; without it every
    gold parameter is treated as required.
    """
    cands = set(candidates)
    pred_names, gold_names = set(pred.api_names), set(gold.api_names)
    out: Counter = Counter()
    for g in sorted(gold_names - pred_names):
        out["MISSED_RETRIEVED" if g in cands else "MISSED_NOT_RETRIEVED"] += 1
    for p in sorted(pred_names):
        if p not in cands:
            out["HALLUCINATED"] += 1
        elif p not in gold_names:
            out["WRONG_SELECTION"] += 1

    # Pair same-named calls in order of appearance.
    pred_by_name: dict[str, list] = {}
    for c in pred.calls:
        pred_by_name.setdefault(c.api, []).append(c)
    seen: Counter = Counter()
    for g in gold.calls:
        matches = pred_by_name.get(g.api, [])
        if seen[g.api] >= len(matches):
            continue
        p = matches[seen[g.api]]
        seen[g.api] += 1
        req = set(required[g.api]) if required is not None and g.api in required else set(g.parameters)
        for name, value in g.parameters.items():
            if name not in p.parameters:
                out["OMITTED_REQUIRED" if name in req else "OMITTED_OPTIONAL"] += 1
            elif normalize_value(p.parameters[name]) != normalize_value(value):
                out["WRONG_VALUE"] += 1
        for name in p.parameters:
            if name not in g.parameters:
                out["OVERFILLED_UNMENTIONED"] += 1
    return out
