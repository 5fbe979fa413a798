"""Answering multiple-choice questions over a textual memory."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Sequence

from .backends import Backend
from .errors import ContextOverflowError, SourceMismatchError
from .memory import QueryTask, RunConfig, TextualMemory, ms_to_s, select_for_query
from .prompting import PromptSet, build_reasoner_prompt

log = logging.getLogger(__name__)

PARSE_FAIL = "PARSE_FAIL"
DEFAULT_THINK_MARKERS = (("<think>", "</think>"), ("<thinking>", "</thinking>"))

# A letter that is not part of a word.
_UPPER = r"(?<![A-Za-z0-9])([A-D])(?![A-Za-z0-9])"
# "answer is a" only counts for a lower-case letter that ends its line.
_LETTER = r"([A-D](?![A-Za-z0-9])|[a-d](?=[\s.)\]*\"'!]*(?:$|\n)))"
_NOT_A_LIST = r"(?![)\]*\"']*\s*(?:or|and|/|,|&)\s*[(\[*]*[A-Da-d](?![A-Za-z0-9]))"
_ANSWER_IS = re.compile(
    r"(?i:\b(?:answer|choice|option))\s*(?:(?i:is)|:|=)?\s*[:\-]?\s*"
    r"(?i:option\s+)?[(\[*\"']*" + _LETTER + _NOT_A_LIST,
    re.MULTILINE,
)
_PAREN = re.compile(r"(?<![A-Za-z0-9])\(?([A-D])\)")
_LONE = re.compile(r"^[\W_]*([A-Da-d])[\W_]*$")
_ANY = re.compile(_UPPER)


def strip_thinking(raw: str, markers: Sequence[tuple[str, str]] = DEFAULT_THINK_MARKERS) -> str:
    """Remove chain-of-thought blocks.

    An unmatched closing marker drops everything before it; an unmatched
    opening marker drops everything after it.
    """
    text = raw
    for open_, close in markers:
        text = re.sub(re.escape(open_) + r".*?" + re.escape(close), "", text, flags=re.S)
        if close in text:
            text = text.rsplit(close, 1)[1]
        if open_ in text:
            text = text.split(open_, 1)[0]
    return text


def parse_answer(raw: str, think_markers: Sequence[tuple[str, str]] = DEFAULT_THINK_MARKERS) -> str:
    """Extract one of A-D from a completion, or :data:`PARSE_FAIL`.

    Rules, first match wins: a lone letter on the first non-empty line;
    the last "answer is X" phrase; "X)" markers if they all agree; the only
    option letter in the text.
    """
    text = strip_thinking(raw, think_markers)
    first = next((line for line in text.splitlines() if line.strip()), "")
    m = _LONE.match(first)
    if m:
        return m.group(1).upper()

    hits = list(_ANSWER_IS.finditer(text))
    if hits:
        return hits[-1].group(1).upper()
    paren = {m.group(1) for m in _PAREN.finditer(text)}
    if len(paren) == 1:
        return paren.pop()

    letters = {m.group(1) for m in _ANY.finditer(text)}
    if len(letters) == 1:
        return letters.pop()
    return PARSE_FAIL


@dataclass(frozen=True)
class AnswerRecord:
    predicted: str
    raw_completion: str
    view_entry_count: int
    prompt_chars: int
    stride_s: float
    correct: bool | None = None
    gold: str | None = None
    qid: str | None = None

    def to_record(self, include_raw: bool = False) -> dict:
        out = {
            "qid": self.qid,
            "predicted": self.predicted,
            "gold": self.gold,
            "correct": self.correct,
            "view_entries": self.view_entry_count,
            "prompt_chars": self.prompt_chars,
        }
        if include_raw:
            out["raw"] = self.raw_completion
        return out


def answer_query(memory: TextualMemory, task: QueryTask, config: RunConfig,
                 backend: Backend, *, prompts: PromptSet | None = None,
                 think_markers: Sequence[tuple[str, str]] = DEFAULT_THINK_MARKERS,
                 qid: str | None = None) -> AnswerRecord:
    """Ask ``backend`` the question over a stride-thinned view of ``memory``.

    If the prompt is longer than the backend accepts, the stride is doubled
    until it fits; a single-entry view that still overflows raises
    :class:`ContextOverflowError`. The memory itself is only read.
    """
    if task.source_id and task.source_id != memory.source_id:
        raise SourceMismatchError(
            f"question targets {task.source_id!r}, memory is {memory.source_id!r}")
    snapshot = memory.snapshot()
    limit = backend.identity.max_context_chars
    stride_ms = config.query_stride_ms
    while True:
        view = select_for_query(snapshot, ms_to_s(stride_ms))
        prompt = build_reasoner_prompt(view, task, config, prompts)
        overflow = len(prompt.text) > limit
        if not overflow:
            try:
                completion = backend.complete(prompt.text)
                break
            except ContextOverflowError:
                overflow = True
        if len(view) <= 1:
            raise ContextOverflowError(
                f"prompt of {len(prompt.text)} chars does not fit {backend.name} "
                f"even with a single memory entry")
        log.info("reasoner prompt too long (%d chars, %d entries); stride %s -> %s s",
                 len(prompt.text), len(view), ms_to_s(stride_ms), ms_to_s(2 * stride_ms))
        stride_ms *= 2

    predicted = parse_answer(completion.raw_text, think_markers)
    correct = None if task.gold_label is None else predicted == task.gold_label
    return AnswerRecord(
        predicted=predicted,
        raw_completion=completion.raw_text,
        view_entry_count=len(view),
        prompt_chars=len(prompt.text),
        stride_s=ms_to_s(stride_ms),
        correct=correct,
        gold=task.gold_label,
        qid=qid,
    )
