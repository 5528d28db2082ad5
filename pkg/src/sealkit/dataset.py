"""JSONL/JSON persistence with atomic writes."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Iterator

from .errors import IdMismatchError, MissingPrereqError, SchemaError
from .evaluation import Prediction
from .instances import Instance
from .schema import FieldTree, ToolPool, tool_from_json, tool_to_json


def _dumps(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False)


def write_text_atomic(path: str | Path, text: str) -> None:
    """Write via a temp file in the same directory, then rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_jsonl_atomic(path: str | Path, rows: Iterable[Any]) -> None:
    write_text_atomic(path, "".join(_dumps(r) + "\n" for r in rows))


def write_json_atomic(path: str | Path, obj: Any) -> None:
    write_text_atomic(path, json.dumps(obj, ensure_ascii=False, indent=2) + "\n")


def _require(path: str | Path) -> Path:
    path = Path(path)
    if not path.exists():
        raise MissingPrereqError(f"{path} does not exist")
    return path


def iter_records(path: str | Path) -> Iterator[Any]:
    """Records from a ``.jsonl`` file, or the elements of a JSON array file."""
    path = _require(path)
    text = path.read_text(encoding="utf-8")
    stripped = text.lstrip()
    if stripped.startswith("["):
        yield from json.loads(stripped)
        return
    for lineno, line in enumerate(text.splitlines(), 1):
        if line.strip():
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"bad JSON: {exc.msg}", path=f"{path}:{lineno}") from None


def load_pool(path: str | Path, *, allow_empty_responses: bool = False) -> ToolPool:
    pool = ToolPool()
    for i, raw in enumerate(iter_records(path)):
        try:
            pool.insert(tool_from_json(raw, allow_empty_responses=allow_empty_responses))
        except SchemaError as exc:
            raise SchemaError(str(exc), path=f"{path}[{i}]") from None
    return pool


def save_pool(path: str | Path, pool: ToolPool) -> None:
    write_jsonl_atomic(path, (tool_to_json(t) for t in pool))


def load_fields(path: str | Path) -> FieldTree:
    return FieldTree.from_json(json.loads(_require(path).read_text(encoding="utf-8")))


def save_fields(path: str | Path, tree: FieldTree) -> None:
    write_json_atomic(path, tree.to_json())


def load_instances(path: str | Path) -> list[Instance]:
    out = []
    for i, raw in enumerate(iter_records(path)):
        try:
            out.append(Instance.from_json(raw))
        except SchemaError as exc:
            raise SchemaError(str(exc), path=f"{path}[{i}]") from None
    return out


def save_instances(path: str | Path, instances: Iterable[Instance]) -> None:
    write_jsonl_atomic(path, (inst.to_json() for inst in instances))


def load_predictions(path: str | Path) -> list[Prediction]:
    preds, seen = [], set()
    for i, raw in enumerate(iter_records(path)):
        if not isinstance(raw, dict) or "id" not in raw:
            raise SchemaError("prediction needs an 'id'", path=f"{path}[{i}]")
        ident = str(raw["id"])
        if ident in seen:
            raise IdMismatchError(f"duplicate prediction id {ident!r}")
        seen.add(ident)
        output = raw.get("output", "")
        preds.append(Prediction(ident, output if isinstance(output, str) else _dumps(output)))
    return preds


def save_predictions(path: str | Path, predictions: Iterable[Prediction]) -> None:
    write_jsonl_atomic(path, ({"id": p.id, "output": p.raw_output} for p in predictions))
