"""Domain types, the append-only textual memory and its two derived views.

Times are held as integer milliseconds so that contiguity checks never
suffer from float drift; the ``*_s`` accessors exist for display and I/O.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import asdict, dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal
from fractions import Fraction
from typing import Iterable, Iterator, Sequence, Union

from .errors import (
    ConfigError,
    EmptyTextError,
    GapError,
    OverlapError,
    ZeroDurationError,
)

LABELS = ("A", "B", "C", "D")

#: SI kilobyte; footprints are reported in KB = 1000 bytes.
BYTES_PER_KB = 1000
#: One newline separator is charged per stored description.
SEPARATOR_BYTES = 1

#: Reasoner view thinning used when clips are shorter than this.
DEFAULT_QUERY_STRIDE_S = 30

Seconds = Union[int, float, str, Decimal]


def to_ms(seconds: Seconds) -> int:
    """Convert seconds to integer milliseconds, rounding half-even."""
    value = Decimal(str(seconds)) * 1000
    return int(value.to_integral_value(rounding=ROUND_HALF_EVEN))


def ms_to_s(ms: int) -> int | float:
    """Inverse of :func:`to_ms`; whole seconds come back as ``int``."""
    return ms // 1000 if ms % 1000 == 0 else ms / 1000


def fmt_clock(ms: int) -> str:
    total = ms // 1000
    return f"{total // 60:02d}:{total % 60:02d}"


@dataclass(frozen=True)
class ClipRef:
    """A half-open span ``[start, end)`` of one source video."""

    source_id: str
    start_ms: int
    end_ms: int
    media_locator: str

    def __post_init__(self):
        if not 0 <= self.start_ms < self.end_ms:
            raise ValueError(f"invalid clip span [{self.start_ms}, {self.end_ms}) ms")

    @property
    def start_s(self):
        return ms_to_s(self.start_ms)

    @property
    def end_s(self):
        return ms_to_s(self.end_ms)

    @property
    def duration_ms(self) -> int:
        return self.end_ms - self.start_ms


@dataclass(frozen=True)
class DescriptionEntry:
    """Description ``text`` of clip number ``clip_index``."""

    clip_index: int
    start_ms: int
    end_ms: int
    text: str
    descriptor_id: str
    prompt_fingerprint: str

    def __post_init__(self):
        if not self.text.strip():
            raise EmptyTextError(f"clip {self.clip_index}: description text is empty")
        if self.clip_index < 0:
            raise GapError(f"negative clip index {self.clip_index}")
        if not 0 <= self.start_ms < self.end_ms:
            raise OverlapError(f"clip {self.clip_index}: invalid span")

    @classmethod
    def for_clip(cls, clip: ClipRef, clip_index: int, text: str,
                 descriptor_id: str, prompt_fingerprint: str) -> DescriptionEntry:
        return cls(clip_index, clip.start_ms, clip.end_ms, text,
                   descriptor_id, prompt_fingerprint)

    @property
    def start_s(self):
        return ms_to_s(self.start_ms)

    @property
    def end_s(self):
        return ms_to_s(self.end_ms)

    def to_record(self) -> dict:
        """JSON-Lines wire object; key order is part of the file format."""
        return {
            "k": self.clip_index,
            "start_s": ms_to_s(self.start_ms),
            "end_s": ms_to_s(self.end_ms),
            "text": self.text,
            "descriptor": self.descriptor_id,
            "prompt_fp": self.prompt_fingerprint,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record(), ensure_ascii=False)

    @classmethod
    def from_record(cls, record: dict) -> DescriptionEntry:
        return cls(
            clip_index=int(record["k"]),
            start_ms=to_ms(record["start_s"]),
            end_ms=to_ms(record["end_s"]),
            text=record["text"],
            descriptor_id=record["descriptor"],
            prompt_fingerprint=record["prompt_fp"],
        )


class TextualMemory:
    """Ordered, contiguous, append-only sequence of clip descriptions.

    One writer may call :meth:`append` while any number of readers take
    :meth:`snapshot` copies; a reader always sees a prefix made of whole
    entries.
    """

    def __init__(self, source_id: str, entries: Iterable[DescriptionEntry] = ()):
        self.source_id = source_id
        self._entries: list[DescriptionEntry] = []
        self._lock = threading.Lock()
        for entry in entries:
            self.append(entry)

    def append(self, entry: DescriptionEntry) -> TextualMemory:
        with self._lock:
            count = len(self._entries)
            if entry.clip_index != count:
                raise GapError(
                    f"expected clip index {count}, got {entry.clip_index}")
            expected_start = self._entries[-1].end_ms if self._entries else 0
            if entry.start_ms != expected_start:
                raise OverlapError(
                    f"clip {entry.clip_index} starts at {entry.start_ms} ms, "
                    f"expected {expected_start} ms")
            self._entries.append(entry)
        return self

    @property
    def entries(self) -> tuple[DescriptionEntry, ...]:
        return tuple(self._entries)

    def snapshot(self) -> TextualMemory:
        """Independent copy of the current prefix."""
        copy = TextualMemory(self.source_id)
        copy._entries = list(self._entries)
        return copy

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[DescriptionEntry]:
        return iter(tuple(self._entries))

    def __getitem__(self, index):
        return self._entries[index]

    def __eq__(self, other):
        if not isinstance(other, TextualMemory):
            return NotImplemented
        return self.source_id == other.source_id and self._entries == other._entries

    def __repr__(self):
        return f"TextualMemory({self.source_id!r}, {len(self)} entries)"

    @property
    def covered_ms(self) -> int:
        """Length of video described so far."""
        return self._entries[-1].end_ms if self._entries else 0

    def as_text(self) -> str:
        return "".join(e.text + "\n" for e in self._entries)


def append(memory: TextualMemory, entry: DescriptionEntry) -> TextualMemory:
    return memory.append(entry)


def footprint_bytes(memory: TextualMemory | Iterable[DescriptionEntry]) -> int:
    """UTF-8 bytes of description text plus one separator per entry."""
    return sum(len(e.text.encode("utf-8")) + SEPARATOR_BYTES for e in memory)


def memory_footprint(memory: TextualMemory | Iterable[DescriptionEntry],
                     video_duration_s: Seconds) -> float:
    """Stored description size in KB per minute of video."""
    duration = Fraction(Decimal(str(video_duration_s)))
    if duration <= 0:
        raise ZeroDurationError(f"video duration must be positive, got {video_duration_s}")
    kb = Fraction(footprint_bytes(memory), BYTES_PER_KB)
    return float(kb / (duration / 60))


def select_for_query(memory: TextualMemory | Sequence[DescriptionEntry],
                     stride_s: Seconds) -> list[DescriptionEntry]:
    """Keep the first description of every ``stride_s`` bucket."""
    stride_ms = to_ms(stride_s)
    if stride_ms <= 0:
        raise ConfigError(f"stride must be positive, got {stride_s}")
    return [e for e in memory if e.start_ms % stride_ms == 0]


@dataclass(frozen=True)
class QueryTask:
    question: str
    options: tuple[str, str, str, str]
    gold_label: str | None = None
    source_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "options", tuple(self.options))
        if len(self.options) != 4:
            raise ValueError(f"expected 4 options, got {len(self.options)}")
        if any(not str(o).strip() for o in self.options):
            raise ValueError("options must be non-empty")
        if self.gold_label is not None and self.gold_label not in LABELS:
            raise ValueError(f"gold label must be one of {LABELS}, got {self.gold_label!r}")


def default_query_stride(clip_length_s: Seconds) -> int | float:
    """Smallest multiple of the clip length that is at least 30 s."""
    clip_ms = to_ms(clip_length_s)
    target = to_ms(DEFAULT_QUERY_STRIDE_S)
    return ms_to_s(clip_ms * max(1, -(-target // clip_ms)))


@dataclass(frozen=True)
class RunConfig:
    """One point of the ablation space."""

    clip_length_s: int | float = 30
    include_context: bool = False
    include_templates: bool = True
    descriptor_backend: str = "descriptor"
    reasoner_backend: str = "reasoner"
    query_stride_s: int | float | None = None
    timestamps_in_prompt: bool = True
    extra: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        clip_ms = to_ms(self.clip_length_s)
        if clip_ms <= 0:
            raise ConfigError(f"clip_length_s must be positive, got {self.clip_length_s}")
        if self.query_stride_s is None:
            object.__setattr__(self, "query_stride_s",
                               default_query_stride(self.clip_length_s))
        stride_ms = to_ms(self.query_stride_s)
        if stride_ms < clip_ms:
            raise ConfigError("query_stride_s must be >= clip_length_s")
        if stride_ms % clip_ms:
            raise ConfigError("query_stride_s must be an integer multiple of clip_length_s")

    @property
    def clip_length_ms(self) -> int:
        return to_ms(self.clip_length_s)

    @property
    def query_stride_ms(self) -> int:
        return to_ms(self.query_stride_s)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("extra")
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]
