"""Deterministic construction of descriptor and reasoner prompts.

Wording lives in versioned fixture files (``prompts/*_v1.txt``); this
module only decides which sections appear and in what order.
"""

from __future__ import annotations

import functools
import hashlib
import os
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

from .memory import LABELS, DescriptionEntry, QueryTask, RunConfig, fmt_clock

DESCRIPTOR_SECTIONS = (
    "task_description",
    "detailed_instructions",
    "question_templates",
    "in_context_example",
    "previous_description",
)
REASONER_SECTIONS = (
    "intro", "memory", "empty_memory", "question", "options", "answer_instruction",
)
SECTION_SEPARATOR = "\n\n"

_MARKER = re.compile(r"^\[\[(\w+)\]\]\s*$")


def fingerprint(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def parse_sections(text: str) -> dict[str, str]:
    """Split a fixture file on ``[[name]]`` marker lines."""
    sections: dict[str, list[str]] = {}
    current = None
    for line in text.splitlines():
        match = _MARKER.match(line)
        if match:
            current = match.group(1)
            if current in sections:
                raise ValueError(f"duplicate section [[{current}]]")
            sections[current] = []
        elif current is not None:
            sections[current].append(line)
        elif line.strip() and not line.startswith("#"):
            raise ValueError(f"text before first section marker: {line!r}")
    return {name: "\n".join(lines).strip("\n") for name, lines in sections.items()}


def parse_templates(text: str) -> tuple[str, ...]:
    return tuple(line.strip() for line in text.splitlines()
                 if line.strip() and not line.lstrip().startswith("#"))


@dataclass(frozen=True)
class PromptSet:
    """Prompt wording for one fixture version."""

    version: str
    descriptor: dict
    reasoner: dict
    templates: tuple[str, ...]

    @classmethod
    def load(cls, directory: str | os.PathLike | None = None,
             version: str = "v1") -> PromptSet:
        if directory is None:
            return _packaged(version)
        root = Path(directory)
        return cls._from_texts(
            version,
            (root / f"descriptor_{version}.txt").read_text(encoding="utf-8"),
            (root / f"reasoner_{version}.txt").read_text(encoding="utf-8"),
            (root / "nlq_templates.txt").read_text(encoding="utf-8"),
        )

    @classmethod
    def _from_texts(cls, version, descriptor, reasoner, templates) -> PromptSet:
        d = parse_sections(descriptor)
        r = parse_sections(reasoner)
        missing = [s for s in DESCRIPTOR_SECTIONS if s not in d]
        missing += [s for s in REASONER_SECTIONS if s not in r]
        if missing:
            raise ValueError(f"prompt fixtures {version}: missing sections {missing}")
        return cls(version, d, r, parse_templates(templates))


@functools.lru_cache(maxsize=None)
def _packaged(version: str) -> PromptSet:
    pkg = resources.files("oemvqa.prompts")
    return PromptSet._from_texts(
        version,
        (pkg / f"descriptor_{version}.txt").read_text(encoding="utf-8"),
        (pkg / f"reasoner_{version}.txt").read_text(encoding="utf-8"),
        (pkg / "nlq_templates.txt").read_text(encoding="utf-8"),
    )


@dataclass(frozen=True)
class Prompt:
    text: str
    fingerprint: str
    sections: tuple[str, ...]


def descriptor_sections(config: RunConfig, prev: DescriptionEntry | None = None,
                        prompts: PromptSet | None = None) -> list[tuple[str, str]]:
    """The ``(name, rendered text)`` pairs that make up a descriptor prompt."""
    prompts = prompts or PromptSet.load()
    out = []
    for name in DESCRIPTOR_SECTIONS:
        body = prompts.descriptor[name]
        if name == "question_templates":
            if not config.include_templates:
                continue
            body = body.replace("{templates}",
                                "\n".join(f"- {t}" for t in prompts.templates))
        elif name == "previous_description":
            if not (config.include_context and prev is not None):
                continue
            body = body.replace("{previous}", prev.text.strip())
        out.append((name, body))
    return out


def build_descriptor_prompt(config: RunConfig, prev: DescriptionEntry | None = None,
                            prompts: PromptSet | None = None) -> Prompt:
    sections = descriptor_sections(config, prev, prompts)
    text = SECTION_SEPARATOR.join(body for _, body in sections)
    return Prompt(text, fingerprint(text), tuple(name for name, _ in sections))


def render_entry(entry: DescriptionEntry, timestamps: bool = True) -> str:
    text = " ".join(entry.text.split())
    if not timestamps:
        return text
    return f"[{fmt_clock(entry.start_ms)}-{fmt_clock(entry.end_ms)}] {text}"


def build_reasoner_prompt(view: Sequence[DescriptionEntry], task: QueryTask,
                          config: RunConfig, prompts: PromptSet | None = None) -> Prompt:
    """Intro, memory view in temporal order, question, options A-D, instruction."""
    prompts = prompts or PromptSet.load()
    r = prompts.reasoner
    if view:
        memory = r["memory"].replace("{memory}", "\n".join(
            render_entry(e, config.timestamps_in_prompt) for e in view))
        memory_name = "memory"
    else:
        memory, memory_name = r["empty_memory"], "empty_memory"
    options = "\n".join(f"{label}) {opt}" for label, opt in zip(LABELS, task.options))
    parts = [
        ("intro", r["intro"]),
        (memory_name, memory),
        ("question", r["question"].replace("{question}", task.question.strip())),
        ("options", r["options"].replace("{options}", options)),
        ("answer_instruction", r["answer_instruction"]),
    ]
    text = SECTION_SEPARATOR.join(body for _, body in parts)
    return Prompt(text, fingerprint(text), tuple(name for name, _ in parts))
