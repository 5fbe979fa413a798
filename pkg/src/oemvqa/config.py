"""TOML run-config files.

A config carries the run point (``[run]``), backend tables
(``[backends.<name>]``), media tooling (``[media]``), default paths
(``[paths]``), video locations (``[videos]``) and an optional ablation grid
(``[ablation]``). Relative paths resolve against the config file's folder.
"""

from __future__ import annotations

import hashlib
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .backends import Backend, build_backend
from .errors import ConfigError
from .harness import GridAxes, VideoSource
from .memory import RunConfig
from .prompting import PromptSet
from .segmenter import (
    DEFAULT_CLIP_LOCATOR,
    DEFAULT_CUT_COMMAND,
    DEFAULT_PROBE_COMMAND,
    MediaAdapter,
)

_RUN_KEYS = {
    "clip_length_s", "include_context", "include_templates", "descriptor", "reasoner",
    "query_stride_s", "timestamps_in_prompt", "clip_retries", "workers", "min_tail_s",
    "pooled_footprint",
}


@dataclass
class AppConfig:
    run: RunConfig = field(default_factory=RunConfig)
    backends: dict = field(default_factory=dict)
    media: dict = field(default_factory=dict)
    paths: dict = field(default_factory=dict)
    videos: dict = field(default_factory=dict)
    ablation: dict = field(default_factory=dict)
    prompts: dict = field(default_factory=dict)
    clip_retries: int = 2
    workers: int = 1
    min_tail_s: float = 0
    pooled_footprint: bool = False
    base_dir: Path = field(default_factory=Path.cwd)
    digest: str = ""

    def path(self, key: str, override: str | None = None) -> Path | None:
        value = override if override is not None else self.paths.get(key)
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() or override is not None else self.base_dir / p

    def backend(self, name: str) -> Backend:
        if name not in self.backends:
            raise ConfigError(f"backend {name!r} is not defined under [backends]")
        return build_backend({"name": name, **self.backends[name]}, self.base_dir)

    def media_adapter(self) -> MediaAdapter:
        m = self.media
        cut = m.get("cut_command", DEFAULT_CUT_COMMAND) or None
        probe = m.get("probe_command", DEFAULT_PROBE_COMMAND) or None
        work_dir = m.get("work_dir")
        if work_dir:
            work_dir = self.base_dir / work_dir
        return MediaAdapter(cut, probe, work_dir,
                            m.get("clip_locator", DEFAULT_CLIP_LOCATOR),
                            m.get("suffix", ".mp4"))

    def prompt_set(self) -> PromptSet:
        directory = self.prompts.get("dir")
        version = self.prompts.get("version", "v1")
        if directory:
            return PromptSet.load(self.base_dir / directory, version)
        return PromptSet.load(None, version)

    def video_sources(self, source_ids=()) -> dict[str, VideoSource]:
        """Listed ``[videos]`` plus ``<video_dir>/<id><video_suffix>`` for other ids."""
        out = {}
        video_dir = self.path("video_dir")
        if video_dir is not None:
            suffix = self.media.get("video_suffix", ".mp4")
            for source_id in source_ids:
                out[source_id] = VideoSource(source_id, str(video_dir / f"{source_id}{suffix}"))
        for source_id, spec in self.videos.items():
            if isinstance(spec, str):
                spec = {"path": spec}
            path = spec["path"]
            if "://" not in path and not Path(path).is_absolute():
                path = str(self.base_dir / path)
            out[source_id] = VideoSource(source_id, path, spec.get("duration_s"))
        return out

    def grid(self) -> GridAxes:
        a, r = self.ablation, self.run
        return GridAxes(
            clip_length_s=a.get("clip_length_s", [r.clip_length_s]),
            include_context=a.get("include_context", [r.include_context]),
            include_templates=a.get("include_templates", [r.include_templates]),
            descriptor=a.get("descriptor", [r.descriptor_backend]),
            reasoner=a.get("reasoner", [r.reasoner_backend]),
            timestamps_in_prompt=r.timestamps_in_prompt,
            query_stride_s=a.get("query_stride_s"),
        )

    def with_overrides(self, **overrides) -> AppConfig:
        """Replace :class:`RunConfig` fields; ``None`` values are ignored."""
        changes = {k: v for k, v in overrides.items() if v is not None}
        if not changes:
            return self
        run = self.run.to_dict()
        if "clip_length_s" in changes and "query_stride_s" not in changes:
            run["query_stride_s"] = None
        run.update(changes)
        return replace(self, run=RunConfig(**run))


def load_config(path: str | os.PathLike | None) -> AppConfig:
    if path is None:
        return AppConfig()
    path = Path(path)
    try:
        raw = path.read_bytes()
        data = tomllib.loads(raw.decode("utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    run = dict(data.get("run", {}))
    unknown = set(run) - _RUN_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown [run] keys {sorted(unknown)}")
    try:
        run_config = RunConfig(
            clip_length_s=run.get("clip_length_s", 30),
            include_context=run.get("include_context", False),
            include_templates=run.get("include_templates", True),
            descriptor_backend=run.get("descriptor", "descriptor"),
            reasoner_backend=run.get("reasoner", "reasoner"),
            query_stride_s=run.get("query_stride_s"),
            timestamps_in_prompt=run.get("timestamps_in_prompt", True),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return AppConfig(
        run=run_config,
        backends=data.get("backends", {}),
        media=data.get("media", {}),
        paths=data.get("paths", {}),
        videos=data.get("videos", {}),
        ablation=data.get("ablation", {}),
        prompts=data.get("prompts", {}),
        clip_retries=run.get("clip_retries", 2),
        workers=run.get("workers", 1),
        min_tail_s=run.get("min_tail_s", 0),
        pooled_footprint=run.get("pooled_footprint", False),
        base_dir=path.resolve().parent,
        digest=hashlib.sha256(raw).hexdigest()[:12],
    )
