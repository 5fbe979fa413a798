"""Command-line entry point: ingest, query, evaluate, ablate, report.

Exit codes: 0 success, 2 configuration or usage error, 3 pipeline error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from .config import AppConfig, load_config
from .errors import ConfigError, MediaToolError, OemVqaError, SchemaError
from .harness import (
    MemoryCache,
    emit_report,
    evaluate,
    load_dataset,
    load_results,
    run_ablation_grid,
    write_result,
)
from .memory import LABELS, QueryTask, memory_footprint, ms_to_s, to_ms
from .pipeline import jsonl_events, run_ingestion
from .reasoner import answer_query
from .segmenter import StreamCursor
from .store import MemoryStore, read_memory

EXIT_OK, EXIT_CONFIG, EXIT_PIPELINE = 0, 2, 3

QUERY_USAGE = ("enter: question | option A | option B | option C | option D [| gold letter]"
               "   (quit to exit)")


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="TOML run config")
    parser.add_argument("--clip-length", type=float, dest="clip_length_s")
    parser.add_argument("--context", action=argparse.BooleanOptionalAction,
                        dest="include_context")
    parser.add_argument("--templates", action=argparse.BooleanOptionalAction,
                        dest="include_templates")
    parser.add_argument("--descriptor", dest="descriptor_backend")
    parser.add_argument("--reasoner", dest="reasoner_backend")
    parser.add_argument("--stride", type=float, dest="query_stride_s")
    parser.add_argument("--timestamps", action=argparse.BooleanOptionalAction,
                        dest="timestamps_in_prompt")
    parser.add_argument("-v", "--verbose", action="store_true")


def _app(args) -> AppConfig:
    app = load_config(args.config)
    fields = ("clip_length_s", "include_context", "include_templates", "descriptor_backend",
              "reasoner_backend", "query_stride_s", "timestamps_in_prompt")
    overrides = {}
    for f in fields:
        value = getattr(args, f, None)
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        overrides[f] = value
    return app.with_overrides(**overrides)


def cmd_ingest(args) -> int:
    app = _app(args)
    source_id = args.source_id or Path(args.video).stem
    memory_path = app.path("memory", args.memory)
    if memory_path is None:
        raise ConfigError("no memory path: pass --memory or set [paths] memory")
    if memory_path.is_dir() or not memory_path.suffix:
        memory_path = memory_path / f"{source_id}.jsonl"
    media = app.media_adapter()
    if "://" not in args.video and not Path(args.video).exists():
        raise MediaToolError(f"media not found: {args.video}")
    duration = args.duration if args.duration is not None else media.probe_duration(args.video)
    descriptor = app.backend(app.run.descriptor_backend)
    total = math.ceil(to_ms(duration) / app.run.clip_length_ms)

    events_fh = open(args.events, "a", encoding="utf-8") if args.events else None
    write_event = jsonl_events(events_fh) if events_fh else None

    def on_event(event):
        if write_event:
            write_event({"source_id": source_id, **event})
        if event["event"] == "resume":
            print(f"resuming at clip {event['k']}/{total}", file=sys.stderr)
        elif event["event"] == "clip":
            flag = "  [placeholder]" if event["placeholder"] else ""
            print(f"clip {event['k'] + 1}/{total} [{event['start_s']}-{event['end_s']}s] "
                  f"{event['bytes']} B {event['latency_ms']:.0f} ms{flag}", file=sys.stderr)

    try:
        cursor = StreamCursor.for_file(source_id, args.video, duration)
        with MemoryStore(memory_path, source_id) as store:
            run_ingestion(cursor, app.run, store, descriptor, media,
                          prompts=app.prompt_set(), clip_retries=app.clip_retries,
                          workers=app.workers, min_tail_s=app.min_tail_s, on_event=on_event)
            memory = store.memory
    finally:
        if events_fh:
            events_fh.close()
    kb = memory_footprint(memory, ms_to_s(memory.covered_ms)) if len(memory) else 0.0
    print(f"{memory_path}: {len(memory)} entries, {kb:.2f} KB/min")
    return EXIT_OK


def _parse_query_line(line: str, source_id: str) -> QueryTask | None:
    parts = [p.strip() for p in line.split("|")]
    if len(parts) not in (5, 6) or not all(parts[:5]):
        return None
    gold = parts[5].upper() if len(parts) == 6 else None
    if gold is not None and gold not in LABELS:
        return None
    return QueryTask(parts[0], tuple(parts[1:5]), gold, source_id)


def cmd_query(args) -> int:
    app = _app(args)
    memory_path = app.path("memory", args.memory)
    if memory_path is None or not memory_path.is_file():
        raise ConfigError(f"memory file not found: {memory_path}")
    source_id = args.source_id or memory_path.stem
    reasoner = app.backend(app.run.reasoner_backend)
    prompts = app.prompt_set()
    interactive = sys.stdin.isatty()
    if interactive:
        print(QUERY_USAGE)
    while True:
        if interactive:
            print("> ", end="", flush=True)
        line = sys.stdin.readline()
        if not line:
            break
        line = line.strip()
        if not line:
            continue
        if line.lower() in ("quit", "exit"):
            break
        task = _parse_query_line(line, source_id)
        if task is None:
            print(f"malformed input; {QUERY_USAGE}", file=sys.stderr)
            continue
        memory = read_memory(memory_path, source_id)
        try:
            record = answer_query(memory, task, app.run, reasoner, prompts=prompts)
        except OemVqaError as exc:
            print(f"error: {exc}", file=sys.stderr)
            continue
        verdict = "" if record.correct is None else (" (correct)" if record.correct
                                                     else " (wrong)")
        print(f"{record.predicted}{verdict}  [{record.view_entry_count} entries]", flush=True)
        if args.show_raw:
            print(record.raw_completion, flush=True)
    return EXIT_OK


def _load_memories(memory_dir: Path, source_ids) -> dict:
    memories = {}
    for source_id in sorted(source_ids):
        path = memory_dir / f"{source_id}.jsonl"
        if path.is_file():
            memories[source_id] = read_memory(path, source_id)
    return memories


def cmd_evaluate(args) -> int:
    app = _app(args)
    dataset_path = app.path("dataset", args.dataset)
    memory_dir = app.path("memory", args.memory)
    out_dir = app.path("out", args.out)
    if dataset_path is None or memory_dir is None or out_dir is None:
        raise ConfigError("evaluate needs --dataset, --memory (directory) and --out")
    dataset = load_dataset(dataset_path)
    if args.dry_run:
        print(f"would evaluate {len(dataset)} questions with {app.run}")
        return EXIT_OK
    memories = _load_memories(memory_dir, {r.source_id for r in dataset})
    reasoner = app.backend(app.run.reasoner_backend)
    result = evaluate(dataset, app.run, memories, reasoner, pooled=app.pooled_footprint,
                      prompts=app.prompt_set(), workers=app.workers)
    run_dir = write_result(result, out_dir, include_raw=args.show_raw)
    kb = result.mean_memory_kb_per_min
    print(f"accuracy {result.accuracy_display}% ({result.n_correct}/{result.n_questions}, "
          f"{result.n_parse_fail} unparsed), memory "
          f"{'-' if kb is None else f'{kb:.2f}'} KB/min -> {run_dir}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    app = _app(args)
    dataset_path = app.path("dataset", args.dataset)
    out_dir = app.path("out", args.out)
    if dataset_path is None or out_dir is None:
        raise ConfigError("ablate needs --dataset and --out")
    grid = app.grid()
    points = grid.points()
    if args.dry_run:
        for i, c in enumerate(points, 1):
            print(f"{i}. descriptor={c.descriptor_backend} clip={c.clip_length_s}s "
                  f"context={c.include_context} templates={c.include_templates} "
                  f"reasoner={c.reasoner_backend} stride={c.query_stride_s}s")
        print(f"{len(points)} planned points")
        return EXIT_OK
    dataset = load_dataset(dataset_path)
    names = {c.descriptor_backend for c in points} | {c.reasoner_backend for c in points}
    backends = {name: app.backend(name) for name in sorted(names)}
    cache_dir = app.path("cache", args.cache) or out_dir / "memories"
    results = run_ablation_grid(
        dataset, grid, videos=app.video_sources({r.source_id for r in dataset}), backends=backends,
        media=app.media_adapter(), cache=MemoryCache(cache_dir), prompts=app.prompt_set(),
        workers=app.workers, pooled=app.pooled_footprint)
    for result in results:
        write_result(result, out_dir / "runs", include_raw=args.show_raw)
    for path in emit_report(results, out_dir):
        print(path)
    failed = [r for r in results if r.failed]
    for r in failed:
        print(f"failed: {r.config.config_hash()}: {r.error}", file=sys.stderr)
    return EXIT_PIPELINE if failed else EXIT_OK


def cmd_report(args) -> int:
    results = load_results(args.results)
    out_dir = Path(args.out) if args.out else Path(args.results)
    for path in emit_report(results, out_dir):
        print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oemvqa", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="describe a video into a memory file")
    _common(p)
    p.add_argument("video")
    p.add_argument("--source-id")
    p.add_argument("--duration", type=float, help="video length in seconds (skips probing)")
    p.add_argument("--memory", help="memory file or directory")
    p.add_argument("--events", help="append JSON-Lines progress events to this file")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("query", help="ask questions about a memory file")
    _common(p)
    p.add_argument("--memory", help="memory file")
    p.add_argument("--source-id")
    p.add_argument("--show-raw", action="store_true", help="print the raw completion")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("evaluate", help="score a dataset against prebuilt memories")
    _common(p)
    p.add_argument("--dataset")
    p.add_argument("--memory", help="directory of <video_id>.jsonl memories")
    p.add_argument("--out")
    p.add_argument("--dry-run", action="store_true")
    p.add_argument("--show-raw", action="store_true", help="keep raw completions in answers")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="run the [ablation] grid from the config")
    _common(p)
    p.add_argument("--dataset")
    p.add_argument("--out")
    p.add_argument("--cache", help="memory cache directory (default <out>/memories)")
    p.add_argument("--dry-run", action="store_true")
    p.add_argument("--show-raw", action="store_true")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("report", help="render tables from a results directory")
    p.add_argument("results")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False)
                        else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, SchemaError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OemVqaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
