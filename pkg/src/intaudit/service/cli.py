"""Command-line interface.

Subcommands: check, eval, flatten, stats, induce, serve. Exit codes: 0 on
success, 1 on diagnostics or IO failures, 2 on usage errors (argparse).
"""

from __future__ import annotations

import argparse
import itertools
import json
import sys
from pathlib import Path

from ..compiler import (
    ERROR,
    FlattenTooLargeError,
    compile_kb,
    flatten,
    kb_stats,
    validate,
)
from ..engine import EvaluationError, evaluate
from ..induction import InductionError, induce_tree, load_cases_csv, tree_to_ruleblock
from ..kbdl import ParseFailure, format_rule_block, parse_kb, parse_overlay
from ..metalayer import OverlayBindError, bind_overlay
from ..model import merge_overlays
from .platform import BundleError, PlatformService, load_bundle_dir


def _load_kb(path: str):
    try:
        source = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        raise SystemExit(1)
    try:
        return parse_kb(source)
    except ParseFailure as exc:
        for err in exc.errors:
            print(f"{path}:{err}", file=sys.stderr)
        raise SystemExit(1)


def _compile(path: str):
    kb = _load_kb(path)
    diags = validate(kb)
    errors = [d for d in diags if d.severity == ERROR]
    if errors:
        for d in errors:
            print(f"{path}: {d}", file=sys.stderr)
        raise SystemExit(1)
    return kb, compile_kb(kb)


def cmd_check(args: argparse.Namespace) -> int:
    """Parse, validate and (when possible) bind everything given."""
    failed = False
    kbs = {}
    specs = []
    for path in args.files:
        try:
            source = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            failed = True
            continue
        suffix = Path(path).suffix
        try:
            if suffix == ".overlay":
                specs.append((path, parse_overlay(source)))
            else:
                kb = parse_kb(source)
                for diag in validate(kb):
                    print(f"{path}: {diag}")
                    if diag.severity == ERROR:
                        failed = True
                kbs[kb.id] = kb
        except ParseFailure as exc:
            for err in exc.errors:
                print(f"{path}:{err}")
            failed = True

    if specs and not failed:
        graphs = {kb_id: compile_kb(kb) for kb_id, kb in kbs.items()}
        try:
            bind_overlay(merge_overlays([spec for _, spec in specs]), graphs)
        except OverlayBindError as exc:
            for diag in exc.diagnostics:
                print(f"overlay: {diag}")
            failed = True
    return 1 if failed else 0


def cmd_eval(args: argparse.Namespace) -> int:
    _, graph = _compile(args.kb)
    try:
        answers = json.loads(Path(args.answers).read_text(encoding="utf-8"))
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except json.JSONDecodeError as exc:
        print(f"error: {args.answers}: {exc}", file=sys.stderr)
        return 1
    try:
        result = evaluate(graph, answers)
    except EvaluationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    doc = {
        "kb": result.kb_id,
        "values": result.values,
        "unknowns": list(result.unknowns),
        "trace": {
            name: {
                "row": fr.row_index,
                "pattern": fr.row_text,
                "output": fr.output,
                "children": {child: level for child, level in fr.children},
            }
            for name, fr in result.trace.items()
        },
    }
    print(json.dumps(doc, indent=2))
    return 0


def cmd_flatten(args: argparse.Namespace) -> int:
    _, graph = _compile(args.kb)
    try:
        flat = flatten(graph)
    except FlattenTooLargeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(",".join(flat.inputs + (flat.goal,)))
    for combo in itertools.product(*flat.input_levels):
        print(",".join(combo + (flat.rows[combo],)))
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    kb, _ = _compile(args.kb)
    print(json.dumps(kb_stats(kb).to_dict(), indent=2))
    return 0


def cmd_induce(args: argparse.Namespace) -> int:
    try:
        cases = load_cases_csv(Path(args.cases).read_text(encoding="utf-8"))
        tree = induce_tree(cases)
        block = tree_to_ruleblock(tree, cases)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except InductionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(format_rule_block(block))
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    try:
        state = load_bundle_dir(args.bundle)
    except BundleError as exc:
        for problem in exc.problems:
            print(problem, file=sys.stderr)
        return 1
    for warning in state.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    service = PlatformService(state, data_dir=args.data)

    import uvicorn

    from .api import create_app

    print(f"loaded {len(state.graphs)} knowledge base(s); listening on :{args.port}")
    uvicorn.run(create_app(service), host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="intaudit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="validate kb and overlay files")
    p.add_argument("files", nargs="+", help=".kb and .overlay files")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("eval", help="evaluate a kb under answers from a JSON file")
    p.add_argument("kb", help=".kb file")
    p.add_argument("--answers", required=True, help="JSON file {attr: level}")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("flatten", help="print the flat rule table as CSV")
    p.add_argument("kb", help=".kb file")
    p.set_defaults(func=cmd_flatten)

    p = sub.add_parser("stats", help="print knowledge-base size statistics as JSON")
    p.add_argument("kb", help=".kb file")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("induce", help="induce a rule block from a case CSV")
    p.add_argument("--cases", required=True, help="case CSV file")
    p.set_defaults(func=cmd_induce)

    p = sub.add_parser("serve", help="run the HTTP assessment service")
    p.add_argument("--bundle", required=True, help="directory of .kb/.overlay files")
    p.add_argument("--data", default=None, help="session storage directory")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1


if __name__ == "__main__":
    sys.exit(main())
