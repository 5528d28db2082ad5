import json
from pathlib import Path

import pytest

from sealkit.schema import ToolPool, tool_from_json

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN_SCRIPT = FIXTURES / "golden_script.json"
GOLDEN_CONFIG = FIXTURES / "golden_config.yaml"


def tool_json(name, params=None, required=(), responses=None, field="Testing/Unit", description=None):
    """Raw tool dict; ``params`` maps name -> description (type str) or (type, description)."""
    params = params or {}
    responses = responses if responses is not None else {"result": "The result"}

    def typed(spec):
        return {"type": spec[0], "description": spec[1]} if isinstance(spec, tuple) else {"type": "str", "description": spec}

    return {
        "api_name": name,
        "api_description": description or f"Does {name}",
        "field": field,
        "parameters": {k: typed(v) for k, v in params.items()},
        "required": list(required),
        "responses": {k: typed(v) for k, v in responses.items()},
    }


def make_tool(*args, **kwargs):
    return tool_from_json(tool_json(*args, **kwargs))


def golden_tools():
    """The six valid tools scripted in the golden fixture, field paths stamped."""
    script = json.loads(GOLDEN_SCRIPT.read_text())
    replies = script["stages"]["tools"]["responses"]
    paths = ["Food/Restaurants", "Transportation/Traffic", "Transportation/Taxi"]
    out = []
    for reply, path in zip([replies[0], replies[2], replies[4]], paths):
        for raw in json.loads(reply)[:2]:
            out.append(dict(raw, field=path))
    return out


@pytest.fixture
def appendix_pool():
    return ToolPool(tool_from_json(t) for t in golden_tools())


FIXED_CLOCK = lambda: "2026-01-01T00:00:00Z"  # noqa: E731
GOLDEN_OUTPUTS = ("fields.json", "tools.jsonl", "instances_single.jsonl", "instances_multi.jsonl", "instances.jsonl",
                  "manifest_fields.json", "manifest_tools.json", "manifest_single.json", "manifest_multi.json")


def golden_config(out_dir, *overrides):
    from sealkit.config import load_config

    return load_config(GOLDEN_CONFIG, [f"paths.out_dir={out_dir}", f"backend.script={GOLDEN_SCRIPT}", *overrides])


def run_golden(out_dir, *overrides):
    """Every generation stage of the scripted fixture, with a fixed clock."""
    from sealkit.jobs import STAGES, run_generation_job

    config = golden_config(out_dir, *overrides)
    return config, {stage: run_generation_job(config, stage, clock=FIXED_CLOCK) for stage in STAGES}


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
