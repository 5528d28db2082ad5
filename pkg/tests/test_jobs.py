import json

import pytest

from sealkit.backend import ScriptedBackend
from sealkit.calling import serialize_call_sequence
from sealkit.dataset import load_instances, load_pool, save_predictions
from sealkit.errors import MissingPrereqError, PreconditionError
from sealkit.evaluation import Prediction
from sealkit.jobs import make_retriever, run_evaluation_job, run_generation_job, run_index_job, run_qc_job, run_stats_job
from sealkit.retrieval import BM25Retriever

from conftest import FIXED_CLOCK, GOLDEN_OUTPUTS, golden_config, run_golden


@pytest.fixture(scope="module")
def golden(tmp_path_factory):
    out = tmp_path_factory.mktemp("golden")
    config, manifests = run_golden(out)
    return out, config, manifests


def test_golden_counts(golden):
    out, config, manifests = golden
    pool = load_pool(out / "tools.jsonl")
    insts = load_instances(out / "instances.jsonl")
    assert len(pool) == 6 and len(insts) == 3
    assert sum(i.nested for i in insts) == 1
    assert manifests["tools"].totals()["accepted"] == 6
    notes = manifests["multi"].notes
    assert (notes["instances"], notes["corpus_instances"]) == (1, 3)
    assert (out / "report" / "generation_multi.png").exists()
    assert not list(out.rglob("*.tmp*"))


def test_golden_is_byte_identical(golden, tmp_path):
    out, _, _ = golden
    run_golden(tmp_path)
    for name in GOLDEN_OUTPUTS:
        first, second = (out / name).read_bytes(), (tmp_path / name).read_bytes()
        if name.startswith("manifest_"):
            # Manifests snapshot the config, which names the output directory.
            first = first.replace(str(out).encode(), b"OUT")
            second = second.replace(str(tmp_path).encode(), b"OUT")
        assert first == second, name


def test_golden_passes_qc(golden):
    _, config, _ = golden
    result = run_qc_job(config)
    assert len(result) == 3 and all(codes == [] for codes in result.values())


def test_eval_with_gold_predictions(golden):
    out, config, _ = golden
    gold = load_instances(out / "instances.jsonl")
    save_predictions(out / "predictions.jsonl",
                     [Prediction(g.id, json.dumps(serialize_call_sequence(g.calling))) for g in gold])
    report = run_evaluation_job(config, clock=FIXED_CLOCK)
    assert report.format_acc == report.tool_f1 == report.param_f1 == 1.0
    assert report.splits["nested"].count == 1
    for name in ("report.json", "report.md", "metrics.png", "errors.png"):
        assert (out / "report" / name).stat().st_size > 0
    assert json.loads((out / "report" / "report.json").read_text())["meta"]["generated_at"] == FIXED_CLOCK()
    rows = [json.loads(line) for line in (out / "candidates.jsonl").read_text().splitlines()]
    assert [r["id"] for r in rows] == [g.id for g in gold]


def test_eval_with_scripted_inference(golden, tmp_path):
    out, _, _ = golden
    config = golden_config(tmp_path, f"paths.tools={out / 'tools.jsonl'}", f"paths.instances={out / 'instances.jsonl'}",
                           "evaluation.figures=false")
    n = len(load_instances(out / "instances.jsonl"))
    backend = ScriptedBackend(["not json"] * n, key_mode="sequence")
    report = run_evaluation_job(config, infer=True, backend=backend)
    assert report.format_acc == 0.0 and report.tool_f1 == 0.0
    assert len((tmp_path / "predictions.jsonl").read_text().splitlines()) == n
    assert report.error_breakdown["FORMAT_ERROR"] == n


def test_non_strict_restricts_gold(golden, tmp_path):
    out, _, _ = golden
    gold = load_instances(out / "instances.jsonl")
    config = golden_config(tmp_path, f"paths.tools={out / 'tools.jsonl'}", f"paths.instances={out / 'instances.jsonl'}",
                           "evaluation.figures=false", "evaluation.strict_format=false")
    save_predictions(tmp_path / "predictions.jsonl", [Prediction(gold[0].id, "[]")])
    report = run_evaluation_job(config)
    assert report.meta["instances"] == 1 and report.format_acc == 1.0


def test_stats_job(golden, tmp_path):
    out, _, _ = golden
    report = run_stats_job(out / "tools.jsonl", [out / "instances.jsonl"], report_dir=tmp_path)
    assert (report.tool_count, report.instance_total, report.nested) == (6, 3, 1)
    assert (tmp_path / "required_hist.png").exists()
    assert json.loads((tmp_path / "stats.json").read_text())["tool_count"] == 6


def test_stale_index_is_rebuilt(golden, tmp_path):
    out, _, _ = golden
    config = golden_config(tmp_path, f"paths.tools={out / 'tools.jsonl'}")
    run_index_job(config)
    pool = load_pool(out / "tools.jsonl")
    fresh = make_retriever(config, pool)
    stale = make_retriever(golden_config(tmp_path, f"paths.tools={out / 'tools.jsonl'}", "retriever.k1=2.0"), pool)
    assert isinstance(fresh, BM25Retriever) and fresh.index.k1 == 1.2
    assert stale.index.k1 == 2.0


def test_missing_prereqs(tmp_path):
    config = golden_config(tmp_path)
    for stage in ("tools", "single", "multi"):
        with pytest.raises(MissingPrereqError):
            run_generation_job(config, stage)
    with pytest.raises(MissingPrereqError):
        run_evaluation_job(config)
    with pytest.raises(PreconditionError):
        run_generation_job(config, "everything")
