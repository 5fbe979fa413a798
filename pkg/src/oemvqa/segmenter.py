"""Fixed-length online segmentation and external clip cutting."""

from __future__ import annotations

import os
import shlex
import subprocess
import tempfile
import threading
from dataclasses import dataclass
from pathlib import Path

from .errors import MediaToolError, NonMonotonicStreamError
from .memory import ClipRef, Seconds, ms_to_s, to_ms

DEFAULT_CUT_COMMAND = (
    "ffmpeg -nostdin -v error -y -ss {start} -to {end} -i {input} -c copy {output}"
)
DEFAULT_PROBE_COMMAND = (
    "ffprobe -v error -show_entries format=duration -of csv=p=0 {input}"
)
#: Locator handed to the descriptor when clips are not cut locally.
DEFAULT_CLIP_LOCATOR = "{input}#t={start},{end}"


@dataclass
class StreamCursor:
    """Progress of segmentation over one (possibly growing) video.

    ``available_ms`` is how much of the stream has been observed;
    ``duration_known_ms`` is set once the stream is finished.
    """

    source_id: str
    media_locator: str = ""
    duration_known_ms: int | None = None
    available_ms: int = 0
    emitted_until_ms: int = 0
    emitted_count: int = 0

    @classmethod
    def for_file(cls, source_id: str, media_locator: str, duration_s: Seconds) -> StreamCursor:
        cursor = cls(source_id, media_locator)
        cursor.finish(duration_s)
        return cursor

    def observe(self, available_s: Seconds) -> None:
        """Record that the stream now extends to ``available_s``."""
        ms = to_ms(available_s)
        if ms < self.emitted_until_ms or ms < self.available_ms:
            raise NonMonotonicStreamError(
                f"stream {self.source_id}: reported {ms} ms, already at "
                f"{max(self.available_ms, self.emitted_until_ms)} ms")
        if self.duration_known_ms is not None and ms > self.duration_known_ms:
            raise NonMonotonicStreamError(f"stream {self.source_id} already finished")
        self.available_ms = ms

    def finish(self, duration_s: Seconds) -> None:
        """Declare the stream complete at ``duration_s``."""
        self.observe(duration_s)
        self.duration_known_ms = self.available_ms

    @property
    def exhausted(self) -> bool:
        return (self.duration_known_ms is not None
                and self.emitted_until_ms >= self.duration_known_ms)

    @property
    def duration_known_s(self):
        return None if self.duration_known_ms is None else ms_to_s(self.duration_known_ms)

    @property
    def emitted_until_s(self):
        return ms_to_s(self.emitted_until_ms)


def segment_stream(cursor: StreamCursor, clip_length_s: Seconds,
                   min_tail_s: Seconds = 0) -> list[ClipRef]:
    """Emit every clip that has become complete since the last call.

    Clips are ``[0, s), [s, 2s), ...``. Once the stream is finished, a
    remainder shorter than ``s`` is emitted as a final partial clip. With
    ``min_tail_s > 0`` a remainder shorter than that is folded into the
    preceding clip, provided that clip has not been emitted yet.
    """
    clip_ms = to_ms(clip_length_s)
    if clip_ms <= 0:
        raise ValueError(f"clip length must be positive, got {clip_length_s}")
    min_tail_ms = to_ms(min_tail_s)
    total = cursor.duration_known_ms
    clips = []
    while True:
        start = cursor.emitted_until_ms
        end = start + clip_ms
        if total is not None:
            if start >= total:
                break
            if end > total:
                end = total
            elif 0 < total - end < min_tail_ms:
                end = total
        elif end > cursor.available_ms:
            break
        clips.append(ClipRef(cursor.source_id, start, end, cursor.media_locator))
        cursor.emitted_until_ms = end
        cursor.emitted_count += 1
    return clips


def iter_clips(source_id: str, media_locator: str, duration_s: Seconds,
               clip_length_s: Seconds, min_tail_s: Seconds = 0) -> list[ClipRef]:
    """Segment a complete video of known duration."""
    cursor = StreamCursor.for_file(source_id, media_locator, duration_s)
    return segment_stream(cursor, clip_length_s, min_tail_s)


def _run(argv: list[str], what: str) -> str:
    try:
        proc = subprocess.run(argv, capture_output=True, text=True)
    except OSError as exc:
        raise MediaToolError(f"{what}: cannot run {argv[0]!r}", str(exc)) from exc
    if proc.returncode != 0:
        raise MediaToolError(
            f"{what}: {argv[0]} exited with status {proc.returncode}",
            (proc.stderr or proc.stdout).strip())
    return proc.stdout


class MediaAdapter:
    """Resolves clips to media the descriptor can consume.

    With ``cut_command`` set, each clip is cut by the external decoder into
    ``work_dir`` and the cut is deleted on :meth:`release`. Without it the
    adapter is a pass-through that formats ``clip_locator``.

    Command templates take ``{input} {start} {end} {output}`` placeholders
    and are split with :func:`shlex.split` before substitution, so paths
    containing spaces are safe.
    """

    def __init__(self, cut_command: str | None = DEFAULT_CUT_COMMAND,
                 probe_command: str | None = DEFAULT_PROBE_COMMAND,
                 work_dir: str | os.PathLike | None = None,
                 clip_locator: str = DEFAULT_CLIP_LOCATOR,
                 suffix: str = ".mp4"):
        self.cut_command = cut_command
        self.probe_command = probe_command
        self.work_dir = Path(work_dir) if work_dir else None
        self.clip_locator = clip_locator
        self.suffix = suffix
        self._lock = threading.Lock()
        self._live: set[str] = set()
        self.peak_live = 0

    @classmethod
    def passthrough(cls, clip_locator: str = DEFAULT_CLIP_LOCATOR) -> MediaAdapter:
        return cls(cut_command=None, probe_command=None, clip_locator=clip_locator)

    @staticmethod
    def _fill(template: str, **values) -> list[str]:
        return [part.format(**values) for part in shlex.split(template)]

    def probe_duration(self, media_locator: str) -> float:
        if self.probe_command is None:
            raise MediaToolError("no probe command configured; pass the duration explicitly")
        if "://" not in media_locator and not Path(media_locator).exists():
            raise MediaToolError(f"media not found: {media_locator}")
        out = _run(self._fill(self.probe_command, input=media_locator), "probe")
        try:
            return float(out.strip().splitlines()[-1])
        except (ValueError, IndexError) as exc:
            raise MediaToolError("probe: unparsable duration", out) from exc

    def materialize(self, clip: ClipRef) -> str:
        """Return a locator for exactly ``[clip.start, clip.end)``."""
        values = dict(input=clip.media_locator, start=f"{clip.start_ms / 1000:.3f}",
                      end=f"{clip.end_ms / 1000:.3f}")
        if self.cut_command is None:
            locator = self.clip_locator.format(
                input=clip.media_locator, start=clip.start_s, end=clip.end_s)
        else:
            work_dir = self.work_dir or Path(tempfile.gettempdir())
            work_dir.mkdir(parents=True, exist_ok=True)
            locator = str(work_dir / (
                f"{clip.source_id}_{clip.start_ms:09d}_{clip.end_ms:09d}{self.suffix}"))
            _run(self._fill(self.cut_command, output=locator, **values), "cut")
        with self._lock:
            self._live.add(locator)
            self.peak_live = max(self.peak_live, len(self._live))
        return locator

    def release(self, locator: str) -> None:
        """Drop a materialized clip; cut files are deleted."""
        with self._lock:
            self._live.discard(locator)
        if self.cut_command is not None:
            Path(locator).unlink(missing_ok=True)

    @property
    def live_count(self) -> int:
        with self._lock:
            return len(self._live)


def materialize_clip(clip: ClipRef, adapter: MediaAdapter | None = None) -> str:
    return (adapter or MediaAdapter()).materialize(clip)
