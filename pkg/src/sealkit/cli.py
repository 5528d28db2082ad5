"""``sealkit`` command line.

Errors leave as one JSON line on stderr, ``{"error": CODE, "message": ...}``,
with exit status 2 (config), 3 (missing input), 4 (backend) or 5 (validation).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Sequence

from .config import JobConfig, load_config
from .errors import SealError

log = logging.getLogger("sealkit")


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=2, ensure_ascii=False))


def cmd_gen(cfg: JobConfig, args: argparse.Namespace) -> int:
    from .jobs import run_generation_job

    manifest = run_generation_job(cfg, args.stage)
    _print_json({"stage": args.stage, "totals": manifest.totals(), "notes": manifest.notes})
    return 0


def cmd_qc(cfg: JobConfig, args: argparse.Namespace) -> int:
    from .jobs import run_qc_job

    results = run_qc_job(cfg, args.instances)
    bad = {k: v for k, v in results.items() if v}
    _print_json({"checked": len(results), "failed": len(bad), "violations": bad})
    return 5 if bad else 0


def cmd_stats(cfg: JobConfig, args: argparse.Namespace) -> int:
    from .jobs import run_stats_job

    tools = args.tools or cfg.paths.resolve("tools")
    instances = args.instances
    if instances is None:
        default = cfg.paths.resolve("instances")
        instances = [default] if default.exists() else []
    report = run_stats_job(tools, instances, report_dir=args.report_dir)
    if args.json:
        _print_json(report.to_json())
    else:
        sys.stdout.write(report.to_text())
    return 0


def cmd_index(cfg: JobConfig, args: argparse.Namespace) -> int:
    from .jobs import run_index_job

    _print_json({"index": str(run_index_job(cfg))})
    return 0


def cmd_retrieve(cfg: JobConfig, args: argparse.Namespace) -> int:
    from .dataset import load_pool
    from .jobs import _need, make_retriever

    pool = load_pool(_need(cfg.paths.resolve("tools"), "retrieve"))
    hits = make_retriever(cfg, pool).search(args.query, args.k or cfg.retriever.k)
    for name, score in hits:
        print(f"{score:.6f}\t{name}")
    return 0


def cmd_infer(cfg: JobConfig, args: argparse.Namespace) -> int:
    from .jobs import run_inference_job

    preds = run_inference_job(cfg)
    _print_json({"predictions": len(preds), "path": str(cfg.paths.resolve("predictions"))})
    return 0


def cmd_eval(cfg: JobConfig, args: argparse.Namespace) -> int:
    from .jobs import run_evaluation_job

    report = run_evaluation_job(cfg, infer=args.infer)
    sys.stdout.write(report.to_markdown())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sealkit", description="Tool-calling corpus synthesis and evaluation.")
    parser.add_argument("--config", "-c", help="YAML or JSON job config")
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
        help="override a config value, e.g. retriever.k=10 (repeatable)",
    )
    parser.add_argument("--verbose", "-v", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="run one generation stage")
    p.add_argument("stage", choices=("fields", "tools", "single", "multi"))
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("qc", help="re-run the quality gate over an instance file")
    p.add_argument("--instances", help="instance file (default: paths.instances)")
    p.set_defaults(func=cmd_qc)

    p = sub.add_parser("stats", help="tool and instance statistics")
    p.add_argument("--tools", help="tool file, JSONL or JSON array (default: paths.tools)")
    p.add_argument("--instances", nargs="*", help="one or more instance files")
    p.add_argument("--report-dir", help="also write stats.json and a histogram here")
    p.add_argument("--json", action="store_true", help="print JSON instead of a table")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("index", help="build and save the BM25 index")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("retrieve", help="top-k tools for a query")
    p.add_argument("query")
    p.add_argument("-k", type=int, default=None)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("infer", help="produce predictions with the subject model")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="score predictions and write the report")
    p.add_argument("--infer", action="store_true", help="run inference first")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.overrides)
        return args.func(cfg, args)
    except SealError as exc:
        print(json.dumps(exc.to_json(), ensure_ascii=False), file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(json.dumps({"error": "IO_ERROR", "message": str(exc)}), file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
