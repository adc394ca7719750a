"""Command-line interface.

Subcommands cover the full pipeline: corpus ingestion and statistics,
splitting, agreement, prompt previews, parse and filter debugging, offline
evaluation of prediction files, experiment runs, and report re-rendering.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import runner
from .corpus import (
    CorpusError,
    cohen_kappa,
    corpus_stats,
    load_brat,
    load_canonical,
    save_canonical,
    split_random,
)
from .evaluation import EvaluationError, evaluate
from .grounding import MatchPolicy, filter_impact_prediction, filter_location_prediction, occurrence_count
from .parsing import ParseFailure, parse_all_locations_response, parse_impact_response
from .prompts import FAMILIES, SHOT_COUNTS, TASKS, PromptError, PromptSpec, build_prompt


def _add_policy_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--case-sensitive", action="store_true", help="match case-sensitively")
    p.add_argument("--keep-markers", action="store_true", help="treat # and @ as token content")
    p.add_argument("--no-nfc", action="store_true", help="skip unicode NFC normalization")
    p.add_argument("--substring", action="store_true", help="substring matching instead of word boundaries")
    p.add_argument("--partial-hashtag", action="store_true",
                   help="let combined hashtags support their parts (e.g. #Keralafloods -> Kerala)")


def _policy_from_args(args: argparse.Namespace) -> MatchPolicy:
    return MatchPolicy(
        case_insensitive=not args.case_sensitive,
        strip_hash_and_at=not args.keep_markers,
        unicode_nfc=not args.no_nfc,
        word_boundary=not args.substring,
        whole_hashtag_only=not args.partial_hashtag,
    )


def _load_dataset(path: str):
    p = Path(path)
    if p.is_dir():
        return load_brat(p)
    return load_canonical(p)


def cmd_ingest(args: argparse.Namespace) -> int:
    dataset = load_brat(args.brat, name=args.name) if args.brat else load_canonical(args.jsonl, name=args.name)
    save_canonical(dataset, args.out)
    print(f"wrote {len(dataset)} posts to {args.out}")
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    dataset = _load_dataset(args.dataset)
    report = corpus_stats(dataset)
    countries = sorted({p.country for p in dataset.posts if p.country})
    if args.json:
        payload = {
            "name": report.name,
            "overall": report.overall.__dict__,
            "events": {e: r.__dict__ for e, r in report.per_event.items()},
            "event_count": report.event_count(),
            "countries": countries,
        }
        print(json.dumps(payload, indent=2, sort_keys=True))
        return 0
    o = report.overall
    print(f"dataset {report.name}: {o.posts} posts, {report.event_count()} events, {len(countries)} countries")
    print(f"spans: {o.impacts} impacts, {o.impacted_locations} impacted locations, {o.all_locations} all locations")
    print(f"{'event':<28} {'posts':>6} {'impacts':>8} {'imp.loc':>8} {'all.loc':>8} {'imp/all':>8}")
    for event, r in sorted(report.per_event.items()):
        ratio = f"{100 * r.impacted_to_all_ratio:.1f}%" if r.impacted_to_all_ratio is not None else "-"
        print(f"{event:<28} {r.posts:>6} {r.impacts:>8} {r.impacted_locations:>8} {r.all_locations:>8} {ratio:>8}")
    return 0


def cmd_split(args: argparse.Namespace) -> int:
    dataset = _load_dataset(args.dataset)
    train, test = split_random(dataset, args.train_frac, args.test_frac, args.seed)
    save_canonical(train, args.out_train)
    save_canonical(test, args.out_test)
    print(f"train: {len(train)} posts -> {args.out_train}")
    print(f"test:  {len(test)} posts -> {args.out_test}")
    return 0


def cmd_kappa(args: argparse.Namespace) -> int:
    a = _load_dataset(args.annotator_a)
    b = _load_dataset(args.annotator_b)
    value = cohen_kappa(a, b, args.layer)
    print(f"cohen_kappa[{args.layer}] = {value:.4f}")
    return 0


def cmd_prompt_preview(args: argparse.Namespace) -> int:
    spec = PromptSpec.for_task(args.task, args.family, args.shots)
    if args.text is not None:
        text = args.text
    else:
        dataset = _load_dataset(args.dataset)
        post = dataset.by_id().get(args.post_id)
        if post is None:
            print(f"error: post_id {args.post_id!r} not in {args.dataset}", file=sys.stderr)
            return 1
        text = post.text
    print(build_prompt(spec, text))
    return 0


def _read_response(args: argparse.Namespace) -> str:
    if args.response is not None:
        return args.response
    if args.response_file:
        return Path(args.response_file).read_text(encoding="utf-8")
    return sys.stdin.read()


def cmd_parse_debug(args: argparse.Namespace) -> int:
    text = _read_response(args)
    try:
        if args.task == "all_locations":
            pred = parse_all_locations_response(text)
            print("parsed: all_locations")
            for e in pred.entries:
                print(f"  entry: {e.surface!r} (count {e.count})")
            if not pred.entries:
                print("  (no entries)")
        else:
            pred = parse_impact_response(text)
            print("parsed: impact_and_impacted")
            print(f"  impacts ({len(pred.impacts)}):")
            for s in pred.impacts:
                print(f"    {s!r}")
            print(f"  impacted_locations ({len(pred.impacted_locations)}):")
            for s in pred.impacted_locations:
                print(f"    {s!r}")
    except ParseFailure as exc:
        print(f"malformed: missing {', '.join(exc.missing)}")
        return 1
    return 0


def cmd_filter_debug(args: argparse.Namespace) -> int:
    policy = _policy_from_args(args)
    text = args.text
    response = _read_response(args)
    try:
        if args.task == "all_locations":
            pred = parse_all_locations_response(response)
            filtered = filter_location_prediction(pred, text, policy)
            kept = {e.surface: e.count for e in filtered.entries}
            for e in pred.entries:
                occ = occurrence_count(text, e.surface, policy)
                verdict = f"kept (count {kept[e.surface]})" if e.surface in kept else "dropped"
                print(f"{e.surface!r}: claimed {e.count}, found {occ} -> {verdict}")
        else:
            pred = parse_impact_response(response)
            filtered = filter_impact_prediction(pred, text, policy)
            for label, before, after in (
                ("impact", pred.impacts, filtered.impacts),
                ("impacted_location", pred.impacted_locations, filtered.impacted_locations),
            ):
                for s in before:
                    occ = occurrence_count(text, s, policy)
                    verdict = "kept" if s in after else "dropped"
                    print(f"{label} {s!r}: found {occ} -> {verdict}")
    except ParseFailure as exc:
        print(f"malformed: missing {', '.join(exc.missing)}")
        return 1
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    dataset = _load_dataset(args.dataset)
    predictions: dict[str, list[str]] = {}
    malformed: set[str] = set()
    with open(args.predictions, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            pid = row["post_id"]
            if row.get("malformed"):
                malformed.add(pid)
            if "entries" in row:
                predictions[pid] = [e["surface"] for e in row["entries"]]
            else:
                predictions[pid] = list(row.get(args.layer, []))
    report = evaluate(dataset, predictions, args.layer, malformed=malformed, compute_macro=args.macro)
    o = report.overall
    print(f"layer {args.layer}: {o.n_posts} posts, {o.malformed} malformed")
    print(f"micro: P={o.precision:.4f} R={o.recall:.4f} F1={o.f1:.4f} (tp={o.tally.tp} fp={o.tally.fp} fn={o.tally.fn})")
    if args.macro:
        print(f"macro: P={report.macro_precision:.4f} R={report.macro_recall:.4f} F1={report.macro_f1:.4f}")
    if args.per_event:
        for event, s in sorted(report.per_event.items()):
            print(f"  {event}: P={s.precision:.4f} R={s.recall:.4f} F1={s.f1:.4f} ({s.n_posts} posts)")
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    cfg = runner.load_config(
        args.config,
        dataset_path=args.dataset,
        out_dir=args.out,
        seed=args.seed,
        endpoint_url=args.endpoint,
        model_id=args.model,
        no_filter=args.no_filter,
    )
    result = runner.run(cfg, dry_run=args.dry_run)
    if args.dry_run:
        print(f"dry run complete: prompts under {result.out_dir}/cells/")
    else:
        print((result.out_dir / "report.txt").read_text(encoding="utf-8"))
        print(f"artifacts: {result.out_dir}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    run_dir = Path(args.run_dir)
    manifest = json.loads((run_dir / "manifest.json").read_text(encoding="utf-8"))
    rows = [
        json.loads(line)
        for line in (run_dir / "report.jsonl").read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    print(runner.render_report(manifest, rows), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="impactloc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="convert a corpus to canonical JSONL")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--brat", help="directory of BRAT .txt/.ann pairs")
    src.add_argument("--jsonl", help="canonical JSONL file (re-validate and rewrite)")
    p.add_argument("--out", required=True)
    p.add_argument("--name", default=None)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("stats", help="corpus statistics, overall and per event")
    p.add_argument("--dataset", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("split", help="seeded random train/test split")
    p.add_argument("--dataset", required=True)
    p.add_argument("--train-frac", type=float, default=0.68)
    p.add_argument("--test-frac", type=float, default=0.20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-train", required=True)
    p.add_argument("--out-test", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("kappa", help="token-level Cohen's kappa between two annotations")
    p.add_argument("--annotator-a", required=True, help="dataset path (first annotator)")
    p.add_argument("--annotator-b", required=True, help="dataset path (second annotator)")
    p.add_argument("--layer", choices=("impact", "impacted_location"), required=True)
    p.set_defaults(func=cmd_kappa)

    p = sub.add_parser("prompt-preview", help="render a prompt for a post")
    p.add_argument("--task", choices=TASKS, required=True)
    p.add_argument("--family", choices=FAMILIES, required=True)
    p.add_argument("--shots", type=int, choices=SHOT_COUNTS, default=0)
    p.add_argument("--dataset")
    p.add_argument("--post-id")
    p.add_argument("--text", help="raw post text instead of --dataset/--post-id")
    p.set_defaults(func=cmd_prompt_preview)

    p = sub.add_parser("parse-debug", help="show how a raw response parses")
    p.add_argument("--task", choices=TASKS, required=True)
    p.add_argument("--response", help="response text (default: stdin)")
    p.add_argument("--response-file")
    p.set_defaults(func=cmd_parse_debug)

    p = sub.add_parser("filter-debug", help="per-entity grounding verdicts for a response")
    p.add_argument("--task", choices=TASKS, required=True)
    p.add_argument("--text", required=True, help="the source post text")
    p.add_argument("--response", help="response text (default: stdin)")
    p.add_argument("--response-file")
    _add_policy_flags(p)
    p.set_defaults(func=cmd_filter_debug)

    p = sub.add_parser("evaluate", help="score a predictions.jsonl file against gold")
    p.add_argument("--dataset", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--layer", choices=("all_locations", "impacted_locations", "impacts"), required=True)
    p.add_argument("--macro", action="store_true")
    p.add_argument("--per-event", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run", help="run an experiment config")
    p.add_argument("--config", required=True)
    p.add_argument("--dataset", help="override dataset path")
    p.add_argument("--out", help="override output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--dry-run", action="store_true", help="write prompts only, no requests")
    p.add_argument("--no-filter", action="store_true", help="skip the grounding-filter variant")
    p.add_argument("--endpoint", help="override endpoint URL (stub://noisy for offline runs)")
    p.add_argument("--model", help="override model id")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="re-render report.txt from a run directory")
    p.add_argument("--run-dir", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CorpusError, EvaluationError, ParseFailure, PromptError, runner.RunnerError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
