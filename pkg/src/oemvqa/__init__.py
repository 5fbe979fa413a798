"""Textual episodic memory for streaming egocentric video QA.

A multimodal *descriptor* turns fixed-length clips into text descriptions
that form an append-only memory; a text-only *reasoner* answers
four-option questions over it.
"""

from .backends import (
    BackendIdentity,
    CallableBackend,
    CompletionRecord,
    HttpBackend,
    ScriptedBackend,
    request_fingerprint,
    scripted_backend,
)
from .harness import (
    DatasetRecord,
    GridAxes,
    MemoryCache,
    RunResult,
    VideoSource,
    emit_report,
    evaluate,
    load_dataset,
    run_ablation_grid,
)
from .memory import (
    ClipRef,
    DescriptionEntry,
    QueryTask,
    RunConfig,
    TextualMemory,
    append,
    memory_footprint,
    select_for_query,
)
from .pipeline import PLACEHOLDER_TEXT, run_ingestion
from .prompting import PromptSet, build_descriptor_prompt, build_reasoner_prompt
from .reasoner import PARSE_FAIL, AnswerRecord, answer_query, parse_answer
from .segmenter import MediaAdapter, StreamCursor, materialize_clip, segment_stream
from .store import MemoryStore, read_memory, write_memory

__version__ = "0.1.0"

__all__ = [
    "AnswerRecord", "BackendIdentity", "CallableBackend", "ClipRef", "CompletionRecord",
    "DatasetRecord", "DescriptionEntry", "GridAxes", "HttpBackend", "MediaAdapter",
    "MemoryCache", "MemoryStore", "PARSE_FAIL", "PLACEHOLDER_TEXT", "PromptSet",
    "QueryTask", "RunConfig", "RunResult", "ScriptedBackend", "StreamCursor",
    "TextualMemory", "VideoSource", "answer_query", "append", "build_descriptor_prompt",
    "build_reasoner_prompt", "emit_report", "evaluate", "load_dataset",
    "materialize_clip", "memory_footprint", "parse_answer", "read_memory",
    "request_fingerprint", "run_ablation_grid", "run_ingestion", "scripted_backend",
    "segment_stream", "select_for_query", "write_memory",
]
