"""Corpus statistics: tool counts, required-parameter distribution, instance splits."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

from .calling import is_nested, parse_call_sequence
from .dataset import iter_records
from .errors import EmptyPoolError, PlaceholderSyntaxError, SchemaError
from .instances import Instance
from .schema import ToolSpec


@dataclass
class StatsReport:
    tool_count: int
    avg_required: float
    required_histogram: dict[int, int]
    zero_required_fraction: float
    max_parameters: int
    instance_total: int | None = None
    single: int | None = None
    multiple: int | None = None
    nested: int | None = None
    unparsed_instances: int = 0
    sources: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> dict[str, Any]:
        out = dict(self.__dict__)
        out["required_histogram"] = {str(k): v for k, v in sorted(self.required_histogram.items())}
        return out

    def to_text(self) -> str:
        rows = [
            ("tools", f"{self.tool_count:,}"),
            ("avg required params", f"{self.avg_required:.3f}"),
            ("zero-required fraction", f"{100 * self.zero_required_fraction:.2f}%"),
        ]
        if self.instance_total is not None:
            rows += [
                ("instances", f"{self.instance_total:,}"),
                ("single-tool", f"{self.single:,}"),
                ("multiple-tool", f"{self.multiple:,}"),
                ("nested", f"{self.nested:,}"),
            ]
            if self.unparsed_instances:
                rows.append(("unparsed instances", f"{self.unparsed_instances:,}"))
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows) + "\n"


def _tool_stats(required_counts: Sequence[int], param_counts: Sequence[int]) -> dict[str, Any]:
    if not required_counts:
        raise EmptyPoolError("no tools to summarise")
    n = len(required_counts)
    hist = Counter(required_counts)
    return {
        "tool_count": n,
        "avg_required": sum(required_counts) / n,
        "required_histogram": dict(sorted(hist.items())),
        "zero_required_fraction": hist.get(0, 0) / n,
        "max_parameters": max(param_counts) if param_counts else 0,
    }


def _instance_stats(instances: Iterable[Instance]) -> dict[str, int]:
    total = single = nested = 0
    for inst in instances:
        total += 1
        single += len(inst.calling) == 1
        nested += is_nested(inst.calling)
    return {"instance_total": total, "single": single, "multiple": total - single, "nested": nested}


def pool_stats(pool: Iterable[ToolSpec], instances: Iterable[Instance] | None = None) -> StatsReport:
    tools = list(pool)
    report = StatsReport(**_tool_stats([len(t.required) for t in tools], [len(t.parameters) for t in tools]))
    if instances is not None:
        report.__dict__.update(_instance_stats(instances))
    return report


def stats_from_files(tools_path: str | Path, instance_paths: Sequence[str | Path] = ()) -> StatsReport:
    """Statistics straight from raw files, without enforcing the tool schema.

    Released corpora may carry parameter types outside the generator's
    vocabulary, so only the keys needed for counting are read here.
    """
    required, params = [], []
    for raw in iter_records(tools_path):
        req = raw.get("required") or [] if isinstance(raw, dict) else []
        required.append(len(req))
        p = raw.get("parameters") if isinstance(raw, dict) else None
        params.append(len(p) if isinstance(p, dict) else 0)
    report = StatsReport(**_tool_stats(required, params))
    report.sources["tools"] = str(tools_path)
    if instance_paths:
        total = single = nested = bad = 0
        for path in instance_paths:
            for raw in iter_records(path):
                try:
                    seq = parse_call_sequence(raw.get("calling") if isinstance(raw, dict) else None)
                except (SchemaError, PlaceholderSyntaxError):
                    bad += 1
                    continue
                total += 1
                single += len(seq) == 1
                nested += is_nested(seq)
        report.instance_total, report.single, report.multiple, report.nested = total, single, total - single, nested
        report.unparsed_instances = bad
        report.sources["instances"] = [str(p) for p in instance_paths]
    return report
