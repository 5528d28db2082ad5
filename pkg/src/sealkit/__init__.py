"""Tool-calling corpus synthesis, retrieval and evaluation."""

from .backend import BackendConfig, HTTPBackend, ScriptedBackend, load_script, make_backend
from .calling import (
    BLANK,
    CallSequence,
    Literal,
    Ref,
    ToolCall,
    build_template,
    canonical_renumber,
    is_nested,
    parse_call_sequence,
    serialize_call_sequence,
    validate_sequence,
)
from .config import JobConfig, load_config
from .errors import SealError
from .evaluation import ERROR_CATEGORIES, EvalReport, Prediction, classify_errors, evaluate_corpus, match_instance, parse_prediction
from .generation import (
    RunManifest,
    backfill_examples,
    combine_tools,
    fill_template,
    generate_field_tree,
    generate_multi_instances,
    generate_single_instance,
    generate_tools,
    qc_instance,
)
from .instances import Instance
from .retrieval import BM25Retriever, DenseRetriever, EmbeddingClient, ToolIndex, build_index, recall_at_k, search
from .schema import FieldTree, ToolPool, ToolSpec, tool_from_json, tool_to_json, validate_tool
from .stats import pool_stats, stats_from_files

__version__ = "0.1.0"

__all__ = [
    "BLANK",
    "BM25Retriever",
    "BackendConfig",
    "CallSequence",
    "DenseRetriever",
    "EmbeddingClient",
    "ERROR_CATEGORIES",
    "EvalReport",
    "FieldTree",
    "HTTPBackend",
    "Instance",
    "JobConfig",
    "Literal",
    "Prediction",
    "Ref",
    "RunManifest",
    "ScriptedBackend",
    "SealError",
    "ToolCall",
    "ToolIndex",
    "ToolPool",
    "ToolSpec",
    "backfill_examples",
    "build_index",
    "build_template",
    "canonical_renumber",
    "classify_errors",
    "combine_tools",
    "evaluate_corpus",
    "fill_template",
    "generate_field_tree",
    "generate_multi_instances",
    "generate_single_instance",
    "generate_tools",
    "is_nested",
    "load_config",
    "load_script",
    "make_backend",
    "match_instance",
    "parse_call_sequence",
    "parse_prediction",
    "pool_stats",
    "qc_instance",
    "recall_at_k",
    "search",
    "serialize_call_sequence",
    "stats_from_files",
    "tool_from_json",
    "tool_to_json",
    "validate_sequence",
    "validate_tool",
]
