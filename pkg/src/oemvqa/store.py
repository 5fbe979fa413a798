"""JSON-Lines persistence for :class:`TextualMemory`.

One object per line, written in clip order and fsynced after every append,
so a crash leaves a readable prefix. A trailing line without its newline is
a torn write: readers skip it and the writer truncates it on open.
"""

from __future__ import annotations

import contextlib
import fcntl
import json
import os
from pathlib import Path

from .errors import MemoryLockedError
from .memory import DescriptionEntry, TextualMemory


def _read_prefix(data: bytes) -> tuple[list[DescriptionEntry], int]:
    entries = []
    offset = 0
    for line in data.splitlines(keepends=True):
        if not line.endswith(b"\n"):
            break
        stripped = line.strip()
        if stripped:
            try:
                entries.append(DescriptionEntry.from_record(json.loads(stripped)))
            except (ValueError, KeyError, TypeError):
                break
        offset += len(line)
    return entries, offset


def read_memory(path: str | os.PathLike, source_id: str | None = None) -> TextualMemory:
    """Read the longest valid prefix without modifying the file."""
    path = Path(path)
    source_id = source_id if source_id is not None else path.stem
    if not path.exists():
        return TextualMemory(source_id)
    entries, _ = _read_prefix(path.read_bytes())
    return TextualMemory(source_id, entries)


def write_memory(memory: TextualMemory, path: str | os.PathLike) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(e.to_json() + "\n" for e in memory), encoding="utf-8")


class MemoryStore:
    """Single-writer handle on a memory file.

    Use as a context manager: entering takes an exclusive advisory lock on
    ``<path>.lock`` and repairs a torn tail; :meth:`append` validates the
    entry against the in-memory copy before writing it.
    """

    def __init__(self, path: str | os.PathLike, source_id: str | None = None):
        self.path = Path(path)
        self.source_id = source_id if source_id is not None else self.path.stem
        self.memory = TextualMemory(self.source_id)
        self._lock_fh = None
        self._fh = None

    def __enter__(self) -> MemoryStore:
        self.open()
        return self

    def __exit__(self, *exc):
        self.close()

    def open(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        lock_fh = open(self.path.with_name(self.path.name + ".lock"), "a")
        try:
            fcntl.flock(lock_fh, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except BlockingIOError:
            lock_fh.close()
            raise MemoryLockedError(f"{self.path} is being written by another process")
        self._lock_fh = lock_fh
        data = self.path.read_bytes() if self.path.exists() else b""
        entries, offset = _read_prefix(data)
        if offset != len(data):
            with open(self.path, "rb+") as fh:
                fh.truncate(offset)
        self.memory = TextualMemory(self.source_id, entries)
        self._fh = open(self.path, "ab")

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None
        if self._lock_fh is not None:
            with contextlib.suppress(OSError):
                fcntl.flock(self._lock_fh, fcntl.LOCK_UN)
            self._lock_fh.close()
            self._lock_fh = None

    def append(self, entry: DescriptionEntry) -> None:
        if self._fh is None:
            raise RuntimeError("store is not open")
        self.memory.append(entry)
        self._fh.write((entry.to_json() + "\n").encode("utf-8"))
        self._fh.flush()
        os.fsync(self._fh.fileno())
