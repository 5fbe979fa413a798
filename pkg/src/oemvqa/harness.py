"""Dataset loading, accuracy, ablation grids and report tables."""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .backends import Backend
from .errors import EmptyResultsError, MissingMemoryError, SchemaError
from .memory import (
    LABELS,
    QueryTask,
    RunConfig,
    TextualMemory,
    footprint_bytes,
    memory_footprint,
    ms_to_s,
)
from .pipeline import run_ingestion
from .prompting import PromptSet
from .reasoner import PARSE_FAIL, AnswerRecord, answer_query
from .segmenter import MediaAdapter, StreamCursor
from .store import MemoryStore, read_memory

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DatasetRecord:
    qid: str
    source_id: str
    question: str
    options: tuple[str, str, str, str]
    gold_label: str

    def to_task(self) -> QueryTask:
        return QueryTask(self.question, self.options, self.gold_label, self.source_id)


def _check(cond: bool, index: int, field_: str, message: str):
    if not cond:
        raise SchemaError(index, field_, message)


def parse_record(obj, index: int) -> DatasetRecord:
    _check(isinstance(obj, dict), index, "<record>", "must be a JSON object")
    for key in ("qid", "video_id", "question", "options", "answer"):
        _check(key in obj, index, key, "missing")
    qid = obj["qid"]
    _check(isinstance(qid, (str, int)) and not isinstance(qid, bool) and str(qid) != "",
           index, "qid", "must be a non-empty string or integer")
    _check(isinstance(obj["video_id"], str) and obj["video_id"] != "",
           index, "video_id", "must be a non-empty string")
    _check(isinstance(obj["question"], str) and obj["question"].strip() != "",
           index, "question", "must be a non-empty string")
    options = obj["options"]
    _check(isinstance(options, list) and len(options) == 4,
           index, "options", "must be a list of exactly 4 options")
    _check(all(isinstance(o, str) and o.strip() for o in options),
           index, "options", "options must be non-empty strings")
    _check(obj["answer"] in LABELS, index, "answer", f"must be one of {', '.join(LABELS)}")
    return DatasetRecord(str(qid), obj["video_id"], obj["question"],
                         tuple(options), obj["answer"])


def load_dataset(path: str | os.PathLike) -> list[DatasetRecord]:
    """Read and validate a JSON-Lines question file."""
    records, seen = [], set()
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    index = -1
    for line in lines:
        if not line.strip():
            continue
        index += 1
        try:
            obj = json.loads(line)
        except ValueError as exc:
            raise SchemaError(index, "<record>", f"invalid JSON: {exc}") from exc
        record = parse_record(obj, index)
        _check(record.qid not in seen, index, "qid", f"duplicate qid {record.qid!r}")
        seen.add(record.qid)
        records.append(record)
    return records


def format_accuracy(correct: int, total: int) -> str:
    """Percentage with two decimals, rounded half-up."""
    if total == 0:
        return "0.00"
    value = Decimal(100 * correct) / Decimal(total)
    return str(value.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def memory_fingerprint(memory: TextualMemory) -> str:
    blob = "".join(e.to_json() + "\n" for e in memory).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class RunResult:
    config: RunConfig
    n_questions: int = 0
    n_correct: int = 0
    n_parse_fail: int = 0
    mean_memory_kb_per_min: float | None = None
    answers: list[AnswerRecord] = field(default_factory=list)
    memory_fingerprints: dict[str, str] = field(default_factory=dict)
    error: str | None = None

    @property
    def accuracy(self) -> float:
        """Percentage of correct answers, unrounded."""
        if not self.n_questions:
            return 0.0
        return float(Fraction(100 * self.n_correct, self.n_questions))

    @property
    def accuracy_display(self) -> str:
        return format_accuracy(self.n_correct, self.n_questions)

    @property
    def failed(self) -> bool:
        return self.error is not None

    def summary(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "config_hash": self.config.config_hash(),
            "accuracy": self.accuracy_display,
            "n_questions": self.n_questions,
            "n_correct": self.n_correct,
            "n_parse_fail": self.n_parse_fail,
            "mean_memory_kb_per_min": self.mean_memory_kb_per_min,
            "memory_fingerprints": dict(sorted(self.memory_fingerprints.items())),
            "error": self.error,
        }


def mean_footprint(memories: Iterable[TextualMemory], pooled: bool = False) -> float | None:
    """KB/min across videos; unweighted per-video mean unless ``pooled``.

    Each memory is charged against the span of video it covers; empty
    memories are skipped.
    """
    memories = [m for m in memories if m.covered_ms > 0]
    if not memories:
        return None
    if pooled:
        total_bytes = sum(footprint_bytes(m) for m in memories)
        total_ms = sum(m.covered_ms for m in memories)
        return float(Fraction(total_bytes, 1000) / Fraction(total_ms, 60_000))
    values = [Fraction(memory_footprint(m, ms_to_s(m.covered_ms))) for m in memories]
    return float(sum(values) / len(values))


def evaluate(dataset: Sequence[DatasetRecord], config: RunConfig,
             memories: Mapping[str, TextualMemory], reasoner: Backend, *,
             pooled: bool = False, prompts: PromptSet | None = None,
             workers: int = 1) -> RunResult:
    """Answer every question and aggregate accuracy and footprint.

    ``PARSE_FAIL`` answers count as incorrect.
    """
    missing = {r.source_id for r in dataset} - set(memories)
    if missing:
        raise MissingMemoryError(missing)

    def one(record: DatasetRecord) -> AnswerRecord:
        return answer_query(memories[record.source_id], record.to_task(), config,
                            reasoner, prompts=prompts, qid=record.qid)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            answers = list(pool.map(one, dataset))
    else:
        answers = [one(r) for r in dataset]

    used = sorted({r.source_id for r in dataset})
    return RunResult(
        config=config,
        n_questions=len(answers),
        n_correct=sum(1 for a in answers if a.correct),
        n_parse_fail=sum(1 for a in answers if a.predicted == PARSE_FAIL),
        mean_memory_kb_per_min=mean_footprint((memories[s] for s in used), pooled),
        answers=answers,
        memory_fingerprints={s: memory_fingerprint(memories[s]) for s in used},
    )


# -- persistence of results --

def write_result(result: RunResult, out_dir: str | os.PathLike,
                 include_raw: bool = False) -> Path:
    """Write ``run-<config hash>/{result.json,answers.jsonl,answers.csv}``."""
    run_dir = Path(out_dir) / f"run-{result.config.config_hash()}"
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "result.json").write_text(
        json.dumps(result.summary(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    with open(run_dir / "answers.jsonl", "w", encoding="utf-8") as fh:
        for a in result.answers:
            fh.write(json.dumps(a.to_record(include_raw), ensure_ascii=False) + "\n")
    with open(run_dir / "answers.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["qid", "predicted", "gold", "correct", "view_entries", "prompt_chars"])
        for a in result.answers:
            writer.writerow([a.qid, a.predicted, a.gold, a.correct,
                             a.view_entry_count, a.prompt_chars])
    return run_dir


def load_results(results_dir: str | os.PathLike) -> list[RunResult]:
    """Read every ``result.json`` below ``results_dir`` (answers omitted)."""
    out = []
    for path in sorted(Path(results_dir).glob("**/result.json")):
        data = json.loads(path.read_text(encoding="utf-8"))
        out.append(RunResult(
            config=RunConfig(**data["config"]),
            n_questions=data["n_questions"],
            n_correct=data["n_correct"],
            n_parse_fail=data["n_parse_fail"],
            mean_memory_kb_per_min=data["mean_memory_kb_per_min"],
            memory_fingerprints=data.get("memory_fingerprints", {}),
            error=data.get("error"),
        ))
    return out


# -- ablation grid --

MEMORY_AXES = ("descriptor_backend", "clip_length_s", "include_context", "include_templates")


@dataclass
class GridAxes:
    clip_length_s: Sequence[float] = (30,)
    include_context: Sequence[bool] = (False,)
    include_templates: Sequence[bool] = (True,)
    descriptor: Sequence[str] = ("descriptor",)
    reasoner: Sequence[str] = ("reasoner",)
    timestamps_in_prompt: bool = True
    query_stride_s: float | None = None
    where: Callable[[RunConfig], bool] | None = None

    def points(self) -> list[RunConfig]:
        configs = []
        for desc, clip, ctx, tmpl, reas in itertools.product(
                self.descriptor, self.clip_length_s, self.include_context,
                self.include_templates, self.reasoner):
            stride = self.query_stride_s
            if stride is not None and stride < clip:
                stride = None
            config = RunConfig(clip, ctx, tmpl, desc, reas, stride, self.timestamps_in_prompt)
            if self.where is None or self.where(config):
                configs.append(config)
        return configs


@dataclass(frozen=True)
class VideoSource:
    source_id: str
    media_locator: str
    duration_s: float | None = None


class MemoryCache:
    """Memories keyed by everything that can change description text.

    The key is (descriptor, clip length, context, templates, prompt
    version, source id); the reasoner is deliberately not part of it. With
    ``directory`` set, memories persist as JSON-Lines files and partially
    built ones resume.
    """

    def __init__(self, directory: str | os.PathLike | None = None):
        self.directory = Path(directory) if directory else None
        self._memories: dict[tuple, TextualMemory] = {}
        self.hits = 0
        self.misses = 0

    @staticmethod
    def key(config: RunConfig, prompt_version: str, source_id: str) -> tuple:
        return (config.descriptor_backend, config.clip_length_ms, config.include_context,
                config.include_templates, prompt_version, source_id)

    def path_for(self, key: tuple) -> Path:
        digest = hashlib.sha256(json.dumps(list(key)).encode()).hexdigest()[:12]
        return self.directory / f"{key[-1]}__{digest}.jsonl"

    def __len__(self):
        return len(self._memories)

    def get(self, key: tuple, build: Callable[[MemoryStore | TextualMemory], None]
            ) -> TextualMemory:
        if key in self._memories:
            self.hits += 1
            return self._memories[key]
        self.misses += 1
        source_id = key[-1]
        if self.directory is None:
            memory = TextualMemory(source_id)
            build(memory)
        else:
            self.directory.mkdir(parents=True, exist_ok=True)
            with MemoryStore(self.path_for(key), source_id) as store:
                build(store)
            memory = read_memory(self.path_for(key), source_id)
        self._memories[key] = memory
        return memory


def run_ablation_grid(dataset: Sequence[DatasetRecord], axes: GridAxes, *,
                      videos: Mapping[str, VideoSource], backends: Mapping[str, Backend],
                      media: MediaAdapter | None = None, cache: MemoryCache | None = None,
                      prompts: PromptSet | None = None, workers: int = 1,
                      pooled: bool = False) -> list[RunResult]:
    """One :class:`RunResult` per grid point, failed points included.

    A failing point is returned with ``error`` set and does not stop the
    grid.
    """
    cache = cache if cache is not None else MemoryCache()
    media = media or MediaAdapter.passthrough()
    prompt_version = (prompts or PromptSet.load()).version
    needed = sorted({r.source_id for r in dataset})
    results = []
    for config in axes.points():
        try:
            missing = [s for s in needed if s not in videos]
            if missing:
                raise MissingMemoryError(missing)
            descriptor = backends[config.descriptor_backend]
            reasoner = backends[config.reasoner_backend]
            memories = {}
            for source_id in needed:
                video = videos[source_id]
                duration = video.duration_s
                if duration is None:
                    duration = media.probe_duration(video.media_locator)

                def build(sink, video=video, duration=duration):
                    cursor = StreamCursor.for_file(video.source_id, video.media_locator,
                                                   duration)
                    run_ingestion(cursor, config, sink, descriptor, media,
                                  prompts=prompts, workers=workers)

                memories[source_id] = cache.get(
                    MemoryCache.key(config, prompt_version, source_id), build)
            result = evaluate(dataset, config, memories, reasoner, pooled=pooled,
                              prompts=prompts, workers=workers)
        except Exception as exc:  # noqa: BLE001 - isolate grid points
            log.error("grid point %s failed: %s", config.config_hash(), exc)
            result = RunResult(config=config, error=f"{type(exc).__name__}: {exc}")
        results.append(result)
    return results


# -- reports --

COLUMNS = ("Descriptor", "Clip Length", "Context", "Template", "Reasoner",
           "Accuracy(%)", "Memory (KB/min)")
AXIS_TITLES = {
    "descriptor_backend": "Descriptor",
    "clip_length_s": "Clip Length",
    "include_context": "Context",
    "include_templates": "Template",
    "reasoner_backend": "Reasoner",
}


def _yes(flag: bool) -> str:
    return "Yes" if flag else "No"


def _row(result: RunResult, best: bool) -> list[str]:
    c = result.config
    if result.failed:
        acc = "FAILED"
    else:
        acc = result.accuracy_display + ("*" if best else "")
    mem = ("-" if result.mean_memory_kb_per_min is None
           else f"{result.mean_memory_kb_per_min:.2f}")
    return [c.descriptor_backend, f"{c.clip_length_s}s", _yes(c.include_context),
            _yes(c.include_templates), c.reasoner_backend, acc, mem]


def report_tables(results: Sequence[RunResult]) -> list[tuple[str, list[list[RunResult]]]]:
    """Group results into ``(title, groups)`` tables.

    The first table holds every result. Then, for each axis, results that
    agree on all other axes form a group whenever the axis takes at least
    two values in it.
    """
    tables = [("All runs", [list(results)])]
    ok = [r for r in results if not r.failed]
    for axis, title in AXIS_TITLES.items():
        others = [a for a in AXIS_TITLES if a != axis]
        groups: dict[tuple, list[RunResult]] = {}
        for r in ok:
            d = r.config.to_dict()
            groups.setdefault(tuple(d[a] for a in others), []).append(r)
        kept = [g for g in groups.values()
                if len({getattr(r.config, axis) for r in g}) > 1]
        if kept:
            tables.append((title, kept))
    return tables


def _best(group: Sequence[RunResult]) -> set[int]:
    ok = [r for r in group if not r.failed]
    if not ok:
        return set()
    top = max(Fraction(r.n_correct, r.n_questions or 1) for r in ok)
    return {id(r) for r in ok if Fraction(r.n_correct, r.n_questions or 1) == top}


def render_text(results: Sequence[RunResult]) -> str:
    if not results:
        raise EmptyResultsError("no results to report")
    out = io.StringIO()
    for title, groups in report_tables(results):
        rows = []
        for group in groups:
            best = _best(group)
            rows.extend(_row(r, id(r) in best) for r in group)
            rows.append(None)
        rows.pop()
        widths = [max(len(COLUMNS[i]), *(len(r[i]) for r in rows if r))
                  for i in range(len(COLUMNS))]

        def line(cells):
            return "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()

        rule = "-" * len(line(COLUMNS))
        out.write(f"{title}\n{rule}\n{line(COLUMNS)}\n{rule}\n")
        for r in rows:
            out.write((line(r) if r else rule) + "\n")
        out.write(f"{rule}\n\n")
    out.write("* best accuracy within its group\n")
    return out.getvalue()


def render_csv(results: Sequence[RunResult]) -> str:
    if not results:
        raise EmptyResultsError("no results to report")
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["table", "group", "descriptor", "clip_length_s", "context", "template",
                     "reasoner", "accuracy", "memory_kb_per_min", "n_questions",
                     "n_parse_fail", "best", "error"])
    for title, groups in report_tables(results):
        for gi, group in enumerate(groups):
            best = _best(group)
            for r in group:
                c = r.config
                writer.writerow([
                    title, gi, c.descriptor_backend, c.clip_length_s,
                    _yes(c.include_context), _yes(c.include_templates), c.reasoner_backend,
                    "" if r.failed else r.accuracy_display,
                    "" if r.mean_memory_kb_per_min is None else f"{r.mean_memory_kb_per_min:.4f}",
                    r.n_questions, r.n_parse_fail, id(r) in best, r.error or "",
                ])
    return out.getvalue()


def emit_report(results: Sequence[RunResult], out_dir: str | os.PathLike,
                formats: Sequence[str] = ("txt", "csv")) -> list[Path]:
    """Write ``report.txt`` and/or ``report.csv`` into ``out_dir``."""
    if not results:
        raise EmptyResultsError("no results to report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    renderers = {"txt": render_text, "csv": render_csv}
    paths = []
    for fmt in formats:
        path = out_dir / f"report.{fmt}"
        path.write_text(renderers[fmt](results), encoding="utf-8")
        paths.append(path)
    return paths
