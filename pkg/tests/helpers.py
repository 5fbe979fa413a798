"""Builders for scripted-backend fixtures over the synthetic corpus."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import corpus

from oemvqa import (
    DescriptionEntry,
    QueryTask,
    RunConfig,
    TextualMemory,
    build_descriptor_prompt,
    build_reasoner_prompt,
    request_fingerprint,
    select_for_query,
)

FAKE_MEDIA = Path(__file__).parent / "tools" / "fake_media.py"


def fake_media_commands() -> dict:
    exe = sys.executable
    return {
        "cut_command": f'"{exe}" "{FAKE_MEDIA}" cut {{input}} {{start}} {{end}} {{output}}',
        "probe_command": f'"{exe}" "{FAKE_MEDIA}" probe {{input}}',
        "suffix": ".json",
    }


def write_videos(directory: Path) -> dict[str, Path]:
    directory.mkdir(parents=True, exist_ok=True)
    paths = {}
    for video, duration in corpus.VIDEOS.items():
        path = directory / f"{video}.json"
        path.write_text(json.dumps({"duration_s": duration}))
        paths[video] = path
    return paths


def clip_spans(duration_s: int, clip_s: int):
    return [(start, min(start + clip_s, duration_s)) for start in range(0, duration_s, clip_s)]


def passthrough_locator(video_locator: str):
    return lambda start, end: f"{video_locator}#t={start},{end}"


def cut_locator(work_dir: Path, video: str, suffix: str = ".json"):
    return lambda start, end: str(
        work_dir / f"{video}_{start * 1000:09d}_{end * 1000:09d}{suffix}")


def descriptor_responses(captions, config: RunConfig, name: str, locators) -> dict:
    """Fixture replies so that clip k of each video is described by its caption.

    ``locators`` maps video -> fn(start_s, end_s) giving the media locator
    the pipeline will send.
    """
    responses = {}
    for video, duration in corpus.VIDEOS.items():
        prev = None
        for k, (start, end) in enumerate(clip_spans(duration, corpus.CLIP_S)):
            prompt = build_descriptor_prompt(config, prev if config.include_context else None)
            fp = request_fingerprint(name, prompt.text, locators[video](start, end))
            text = captions[(video, k)]
            responses[fp] = text
            prev = DescriptionEntry(k, start * 1000, end * 1000, text, name, prompt.fingerprint)
    return responses


def expected_memories(captions, config: RunConfig, name: str) -> dict[str, TextualMemory]:
    out = {}
    for video, duration in corpus.VIDEOS.items():
        mem = TextualMemory(video)
        prev = None
        for k, (start, end) in enumerate(clip_spans(duration, corpus.CLIP_S)):
            prompt = build_descriptor_prompt(config, prev if config.include_context else None)
            prev = DescriptionEntry(k, start * 1000, end * 1000, captions[(video, k)],
                                    name, prompt.fingerprint)
            mem.append(prev)
        out[video] = mem
    return out


def reasoner_responses(memories, config: RunConfig, name: str) -> dict:
    responses = {}
    for r in corpus.dataset_records():
        task = QueryTask(r["question"], r["options"], r["answer"], r["video_id"])
        view = select_for_query(memories[r["video_id"]], config.query_stride_s)
        prompt = build_reasoner_prompt(view, task, config)
        responses[request_fingerprint(name, prompt.text)] = corpus.fact_reasoner(prompt.text)
    return responses
