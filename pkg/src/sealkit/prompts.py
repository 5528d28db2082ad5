"""Prompt templates with positional ``{}`` slots, loaded from ``prompts/``."""

from __future__ import annotations

import string
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import ConfigError

TEMPLATE_NAMES = ("field", "subfield", "tool", "single_instance", "combine", "fill", "backfill", "infer")


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    body: str

    @property
    def slot_count(self) -> int:
        count = 0
        for _, field_name, _, _ in string.Formatter().parse(self.body):
            if field_name is None:
                continue
            if field_name != "":
                raise ConfigError(f"template {self.name!r} uses a named slot {{{field_name}}}")
            count += 1
        return count

    def fill(self, *args: object) -> str:
        if len(args) != self.slot_count:
            raise ConfigError(f"template {self.name!r} takes {self.slot_count} values, got {len(args)}")
        return self.body.format(*args)


def load_template(name: str, directory: str | Path | None = None) -> PromptTemplate:
    if directory is not None:
        path = Path(directory) / f"{name}.txt"
        if not path.exists():
            raise ConfigError(f"prompt file {path} not found")
        body = path.read_text(encoding="utf-8")
    else:
        body = resources.files("sealkit").joinpath("prompts", f"{name}.txt").read_text(encoding="utf-8")
    return PromptTemplate(name, body)


def load_templates(directory: str | Path | None = None) -> dict[str, PromptTemplate]:
    """All templates; files in ``directory`` override the shipped ones."""
    out = {}
    for name in TEMPLATE_NAMES:
        override = Path(directory) / f"{name}.txt" if directory else None
        out[name] = load_template(name, directory if override and override.exists() else None)
    return out


def seed_tool_json() -> str:
    return resources.files("sealkit").joinpath("prompts", "seed_tool.json").read_text(encoding="utf-8").strip()
