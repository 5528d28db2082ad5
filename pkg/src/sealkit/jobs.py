"""Job orchestration: one generation stage, inference, evaluation, stats or QC per call."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Sequence

from .backend import AuditLog, Backend, make_backend
from .dataset import (
    load_fields,
    load_instances,
    load_pool,
    load_predictions,
    save_fields,
    save_instances,
    save_pool,
    save_predictions,
    write_json_atomic,
    write_jsonl_atomic,
    write_text_atomic,
)
from .config import JobConfig
from .errors import MissingPrereqError, PreconditionError
from .evaluation import EvalReport, Prediction, evaluate_corpus
from .generation import (
    RunManifest,
    backfill_examples,
    generate_field_tree,
    generate_multi_instances,
    generate_single_instances,
    generate_tools,
    qc_instance,
)
from .instances import Instance
from .prompts import load_templates
from .retrieval import BM25Retriever, DenseRetriever, EmbeddingClient, Retriever, ToolIndex, build_index
from .schema import ToolPool, tool_to_json
from .stats import StatsReport, stats_from_files

log = logging.getLogger(__name__)

STAGES = ("fields", "tools", "single", "multi")

Clock = Callable[[], str]


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _need(path: Path, what: str) -> Path:
    if not path.exists():
        raise MissingPrereqError(f"{what} needs {path}; run the earlier stage first", code="MISSING_PREREQ")
    return path


def _backend(config: JobConfig, stage: str, backend: Backend | None) -> Backend:
    if backend is not None:
        return backend
    out = Path(config.paths.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return make_backend(config.backend, stage, audit=AuditLog(out / "completions.jsonl"))


def _write_manifest(config: JobConfig, manifest: RunManifest, clock: Clock) -> Path:
    manifest.config = config.snapshot()
    manifest.timestamps["finished"] = clock()
    path = Path(config.paths.out_dir) / f"manifest_{manifest.stage}.json"
    if config.evaluation.figures and manifest.batches:
        from .plotting import plot_generation_curve

        fig = config.paths.resolve("report_dir") / f"generation_{manifest.stage}.png"
        plot_generation_curve(manifest.cumulative_accepted(), fig)
        manifest.notes["figure"] = str(fig)
    write_json_atomic(path, manifest.to_json())
    return path


def _merge_instances(config: JobConfig) -> list[Instance]:
    merged: list[Instance] = []
    for name in ("single_instances", "multi_instances"):
        p = config.paths.resolve(name)
        if p.exists():
            merged.extend(load_instances(p))
    save_instances(config.paths.resolve("instances"), merged)
    return merged


def run_generation_job(
    config: JobConfig,
    stage: str,
    *,
    backend: Backend | None = None,
    clock: Clock = utc_now,
) -> RunManifest:
    """Run one pipeline stage end to end and write its outputs plus a manifest."""
    if stage not in STAGES:
        raise PreconditionError(f"unknown stage {stage!r}; expected one of {STAGES}")
    paths, gen = config.paths, config.generation
    if stage == "tools":
        _need(paths.resolve("fields"), "gen tools")
    elif stage in ("single", "multi"):
        _need(paths.resolve("tools"), f"gen {stage}")

    manifest = RunManifest(stage)
    manifest.timestamps["started"] = clock()
    templates = load_templates(paths.prompts_dir)
    backend = _backend(config, stage, backend)

    if stage == "fields":
        tree = generate_field_tree(backend, gen.seed_fields, templates=templates, manifest=manifest)
        save_fields(paths.resolve("fields"), tree)
        manifest.notes.update(fields=len(tree), subfields=tree.subfield_count)
    elif stage == "tools":
        tree = load_fields(paths.resolve("fields"))
        pool, _ = generate_tools(
            backend,
            ToolPool(),
            tree,
            gen.stall_limit,
            max_rounds=gen.max_rounds,
            allow_empty_responses=gen.allow_empty_responses,
            templates=templates,
            manifest=manifest,
        )
        # Backfill counts parameters, not tools, so it keeps its own counters.
        filled = RunManifest("backfill")
        backfill_examples(
            backend, pool, rng_seed=gen.rng_seed, max_passes=gen.backfill_passes, templates=templates, manifest=filled
        )
        save_pool(paths.resolve("tools"), pool)
        manifest.notes.update(tools=len(pool), backfill={"totals": filled.totals(), "batches": len(filled.batches)})
    else:
        pool = load_pool(paths.resolve("tools"), allow_empty_responses=gen.allow_empty_responses)
        if stage == "single":
            made = generate_single_instances(
                backend, pool, rng_seed=gen.rng_seed, limit=gen.single_limit, templates=templates, manifest=manifest
            )
            save_instances(paths.resolve("single_instances"), made)
        else:
            made = generate_multi_instances(
                backend,
                pool,
                gen.multi_count,
                candidate_count=gen.candidate_count,
                rng_seed=gen.rng_seed,
                templates=templates,
                manifest=manifest,
            )
            save_instances(paths.resolve("multi_instances"), made)
        merged = _merge_instances(config)
        manifest.notes.update(instances=len(made), corpus_instances=len(merged))

    for b in manifest.batches:
        b.check()
    _write_manifest(config, manifest, clock)
    return manifest


# --- retrieval and inference --------------------------------------------------------


def make_retriever(config: JobConfig, pool: ToolPool) -> Retriever:
    rc = config.retriever
    if rc.kind == "dense":
        return DenseRetriever(EmbeddingClient(rc.embedding), pool, rc.field_mask)
    index_path = config.paths.resolve("index")
    if index_path.exists():
        index = ToolIndex.load(index_path)
        same = (index.k1, index.b, list(index.field_mask)) == (rc.k1, rc.b, list(rc.field_mask))
        if same and sorted(d.tool_name for d in index.documents) == sorted(pool.names()):
            return BM25Retriever(index)
        log.warning("index at %s is stale; rebuilding in memory", index_path)
    return BM25Retriever(build_index(pool, rc.field_mask, k1=rc.k1, b=rc.b))


def run_index_job(config: JobConfig) -> Path:
    pool = load_pool(_need(config.paths.resolve("tools"), "index"))
    rc = config.retriever
    path = config.paths.resolve("index")
    build_index(pool, rc.field_mask, k1=rc.k1, b=rc.b).save(path)
    return path


def retrieve_candidates(config: JobConfig, pool: ToolPool, instances: Sequence[Instance]) -> dict[str, list[str]]:
    """Top-k tool names per instance id, in rank order."""
    retriever = make_retriever(config, pool)
    return {inst.id: [name for name, _ in retriever.search(inst.query, config.retriever.k)] for inst in instances}


def _template_digest(body: str) -> str:
    return hashlib.sha256(body.encode("utf-8")).hexdigest()


def run_inference_job(config: JobConfig, *, backend: Backend | None = None) -> list[Prediction]:
    """Prompt the subject model with the top-k retrieved tools and the query."""
    paths = config.paths
    pool = load_pool(_need(paths.resolve("tools"), "infer"))
    gold = load_instances(_need(paths.resolve("instances"), "infer"))
    if backend is None:
        subject = dataclasses.replace(config.backend, temperature=config.evaluation.subject_temperature)
        backend = make_backend(subject, "infer", audit=AuditLog(Path(paths.out_dir) / "completions.jsonl"))
    template = load_templates(paths.prompts_dir)["infer"]
    candidates = retrieve_candidates(config, pool, gold)
    preds = []
    for inst in gold:
        tools = [tool_to_json(pool.lookup(n), include_field=False) for n in candidates[inst.id]]
        prompt = template.fill(json.dumps(tools, ensure_ascii=False), inst.query)
        preds.append(Prediction(inst.id, backend.complete(prompt).response))
    save_predictions(paths.resolve("predictions"), preds)
    return preds


# --- evaluation ---------------------------------------------------------------------


def run_evaluation_job(
    config: JobConfig, *, infer: bool = False, backend: Backend | None = None, clock: Clock = utc_now
) -> EvalReport:
    """Score predictions against gold and write report.json, report.md and figures."""
    paths = config.paths
    pool = load_pool(_need(paths.resolve("tools"), "eval"))
    gold = load_instances(_need(paths.resolve("instances"), "eval"))
    if infer:
        predictions = run_inference_job(config, backend=backend)
    else:
        predictions = load_predictions(_need(paths.resolve("predictions"), "eval"))
    if not config.evaluation.strict_format:
        have = {p.id for p in predictions}
        gold = [g for g in gold if g.id in have]

    candidates = retrieve_candidates(config, pool, gold)
    export = []
    for inst in gold:
        row = {"id": inst.id, "candidates": candidates[inst.id]}
        if config.evaluation.add_gold_to_candidates:
            row["candidates_with_gold"] = list(dict.fromkeys(candidates[inst.id] + inst.gold_tools))
        export.append(row)
    write_jsonl_atomic(paths.resolve("candidates"), export)

    required = {t.name: list(t.required) for t in pool}
    report = evaluate_corpus(predictions, gold, candidates=candidates, required=required)
    infer_body = load_templates(paths.prompts_dir)["infer"].body
    report.meta.update(
        instances=len(gold),
        predictions=len(predictions),
        retriever={"kind": config.retriever.kind, "k": config.retriever.k, "field_mask": list(config.retriever.field_mask)},
        infer_template_sha256=_template_digest(infer_body),
        strict_format=config.evaluation.strict_format,
        generated_at=clock(),
    )

    out = paths.resolve("report_dir")
    if config.evaluation.figures:
        from .plotting import plot_error_breakdown, plot_metric_bars

        report.meta["figures"] = [
            str(plot_metric_bars({k: v.to_json() for k, v in report.splits.items()}, out / "metrics.png")),
            str(plot_error_breakdown(report.error_breakdown, out / "errors.png")),
        ]
    write_json_atomic(out / "report.json", report.to_json())
    write_text_atomic(out / "report.md", report.to_markdown())
    return report


# --- stats and qc -------------------------------------------------------------------


def run_stats_job(
    tools_path: str | Path, instance_paths: Sequence[str | Path] = (), *, report_dir: str | Path | None = None
) -> StatsReport:
    report = stats_from_files(tools_path, instance_paths)
    if report_dir is not None:
        from .plotting import plot_required_histogram

        report.sources["figure"] = str(plot_required_histogram(report.required_histogram, Path(report_dir) / "required_hist.png"))
        write_json_atomic(Path(report_dir) / "stats.json", report.to_json())
    return report


def run_qc_job(config: JobConfig, instances_path: str | Path | None = None) -> dict[str, list[str]]:
    """Violation codes per instance id; empty lists mean the instance passes."""
    pool = load_pool(_need(config.paths.resolve("tools"), "qc"), allow_empty_responses=config.generation.allow_empty_responses)
    path = Path(instances_path) if instances_path else config.paths.resolve("instances")
    return {inst.id: qc_instance(inst, pool).codes for inst in load_instances(_need(path, "qc"))}

