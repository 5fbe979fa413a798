"""Online ingestion: clips in, descriptions appended to memory."""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from typing import Callable, TextIO

from .backends import Backend
from .errors import BackendError, SourceMismatchError
from .memory import ClipRef, DescriptionEntry, RunConfig, TextualMemory
from .prompting import PromptSet, build_descriptor_prompt
from .segmenter import MediaAdapter, StreamCursor, segment_stream
from .store import MemoryStore

log = logging.getLogger(__name__)

PLACEHOLDER_TEXT = "[description unavailable]"


def is_placeholder(entry: DescriptionEntry) -> bool:
    return entry.text == PLACEHOLDER_TEXT


class _Ingestor:
    def __init__(self, config, descriptor, media, prompts, clip_retries, emit):
        self.config = config
        self.descriptor = descriptor
        self.media = media
        self.prompts = prompts
        self.clip_retries = clip_retries
        self.emit = emit

    def describe(self, clip: ClipRef, index: int,
                 prev: DescriptionEntry | None) -> DescriptionEntry:
        if prev is not None and is_placeholder(prev):
            prev = None
        prompt = build_descriptor_prompt(self.config, prev, self.prompts)
        text = None
        locator = self.media.materialize(clip)
        try:
            for attempt in range(self.clip_retries + 1):
                try:
                    text = self.descriptor.complete(prompt.text, locator).raw_text.strip()
                except BackendError as exc:
                    log.warning("clip %d: attempt %d failed: %s", index, attempt + 1, exc)
                    continue
                if text:
                    break
                log.warning("clip %d: attempt %d returned empty text", index, attempt + 1)
        finally:
            self.media.release(locator)
        return DescriptionEntry.for_clip(
            clip, index, text or PLACEHOLDER_TEXT,
            self.descriptor.name, prompt.fingerprint)

    def event(self, entry: DescriptionEntry, latency_ms: float):
        if self.emit is None:
            return
        self.emit({
            "event": "clip",
            "k": entry.clip_index,
            "start_s": entry.start_s,
            "end_s": entry.end_s,
            "latency_ms": round(latency_ms, 1),
            "bytes": len(entry.text.encode("utf-8")) + 1,
            "placeholder": is_placeholder(entry),
        })


def run_ingestion(cursor: StreamCursor, config: RunConfig,
                  memory: TextualMemory | MemoryStore, descriptor: Backend,
                  media: MediaAdapter | None = None, *,
                  prompts: PromptSet | None = None, clip_retries: int = 2,
                  workers: int = 1, min_tail_s: float = 0,
                  on_event: Callable[[dict], None] | None = None) -> TextualMemory:
    """Describe every clip the cursor has completed and append it.

    ``memory`` may be an in-process :class:`TextualMemory` or an open
    :class:`MemoryStore`; entries already present are skipped, which makes
    ingestion resumable. Call again after ``cursor.observe`` to continue a
    live stream.

    A clip whose description still fails after ``clip_retries`` retries is
    stored as :data:`PLACEHOLDER_TEXT`. With context chaining the calls are
    sequential; otherwise up to ``workers`` run at once and are committed in
    clip order.
    """
    media = media or MediaAdapter.passthrough()
    if isinstance(memory, MemoryStore):
        sink, mem = memory.append, memory.memory
    else:
        sink, mem = memory.append, memory
    if mem.source_id != cursor.source_id:
        raise SourceMismatchError(
            f"memory is for {mem.source_id!r}, stream is {cursor.source_id!r}")

    new_clips = segment_stream(cursor, config.clip_length_s, min_tail_s)
    first_index = cursor.emitted_count - len(new_clips)
    pending = []
    for offset, clip in enumerate(new_clips):
        index = first_index + offset
        if index < len(mem):
            done = mem[index]
            if (done.start_ms, done.end_ms) != (clip.start_ms, clip.end_ms):
                raise SourceMismatchError(
                    f"clip {index} span differs from stored entry; was the memory "
                    "built with another clip length?")
            continue
        pending.append((index, clip))
    if pending and pending[0][0] != len(mem):
        raise SourceMismatchError(
            f"memory has {len(mem)} entries but the stream resumes at clip {pending[0][0]}")
    if on_event and len(mem) and pending:
        on_event({"event": "resume", "k": len(mem)})

    ing = _Ingestor(config, descriptor, media, prompts, clip_retries, on_event)

    def run_one(index, clip, prev):
        started = time.perf_counter()
        entry = ing.describe(clip, index, prev)
        return entry, (time.perf_counter() - started) * 1000

    if config.include_context or workers <= 1:
        for index, clip in pending:
            prev = mem[-1] if len(mem) else None
            entry, latency = run_one(index, clip, prev if config.include_context else None)
            sink(entry)
            ing.event(entry, latency)
        return mem

    buffer: dict[int, tuple] = {}
    next_commit = pending[0][0] if pending else 0
    queue = list(pending)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        running = {}
        while queue or running:
            while queue and len(running) < workers:
                index, clip = queue.pop(0)
                running[pool.submit(run_one, index, clip, None)] = index
            finished, _ = wait(running, return_when=FIRST_COMPLETED)
            for fut in finished:
                index = running.pop(fut)
                buffer[index] = fut.result()
            while next_commit in buffer:
                entry, latency = buffer.pop(next_commit)
                sink(entry)
                ing.event(entry, latency)
                next_commit += 1
    return mem


def jsonl_events(stream: TextIO) -> Callable[[dict], None]:
    """Event sink writing one JSON object per line."""
    def emit(event: dict) -> None:
        stream.write(json.dumps(event) + "\n")
        stream.flush()
    return emit
