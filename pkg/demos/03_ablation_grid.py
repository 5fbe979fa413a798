"""
A small ablation grid
=====================

Clip length and previous-clip context are varied over two videos. Memories
are cached per descriptor setting, so the two reasoners below share them.
The descriptor is simulated: with context on it sometimes repeats the
previous caption instead of the new fact, a crude model of errors that
propagate from one clip to the next.
"""

import tempfile
from pathlib import Path

from oemvqa import BackendIdentity, CallableBackend
from oemvqa.harness import (
    DatasetRecord,
    GridAxes,
    MemoryCache,
    VideoSource,
    emit_report,
    run_ablation_grid,
)

FACTS = {  # (video, second) -> fact
    ("desk", 0): "I put the stapler in the drawer.",
    ("desk", 45): "I put the notebook in the backpack.",
    ("desk", 90): "I put the blue pen in the cup.",
    ("hall", 30): "I put the keys in the bowl.",
    ("hall", 75): "I put the umbrella in the stand.",
}


def describe(prompt, media):
    video = media.split(".mp4")[0]
    start, end = (float(x) for x in media.split("#t=")[1].split(","))
    facts = [f for (v, s), f in FACTS.items() if v == video and start <= s < end]
    if "PREVIOUS CLIP" in prompt and int(start) % 60 == 30:
        return "I keep doing the same thing as before."
    return " ".join(["I am at home."] + facts)


def reason(prompt, media=None):
    obj = prompt.split("Where did I put the ", 1)[1].split("?", 1)[0]
    memory_part = prompt.split("QUESTION", 1)[0]
    for line in prompt.splitlines():
        if line[1:3] == ") " and f"{obj} in the {line[3:]}" in memory_part:
            return f"The answer is {line[0]}."
    return "D"


QUESTIONS = [
    ("q1", "desk", "stapler", ("drawer", "bin", "cup", "shelf"), "A"),
    ("q2", "desk", "notebook", ("desk", "backpack", "bin", "box"), "B"),
    ("q3", "desk", "blue pen", ("box", "bag", "cup", "drawer"), "C"),
    ("q4", "hall", "keys", ("bowl", "coat", "bag", "shelf"), "A"),
    ("q5", "hall", "umbrella", ("car", "stand", "bin", "box"), "B"),
]
dataset = [DatasetRecord(qid, video, f"Where did I put the {obj}?", options, gold)
           for qid, video, obj, options, gold in QUESTIONS]
videos = {"desk": VideoSource("desk", "desk.mp4", 120), "hall": VideoSource("hall", "hall.mp4", 90)}
backends = {
    "sim-descriptor": CallableBackend(BackendIdentity("sim-descriptor", kind="multimodal"),
                                      describe),
    "keyword": CallableBackend(BackendIdentity("keyword"), reason),
    "always-d": CallableBackend(BackendIdentity("always-d"), lambda p, m=None: "D"),
}
axes = GridAxes(clip_length_s=(30, 15), include_context=(False, True),
                descriptor=("sim-descriptor",), reasoner=("keyword", "always-d"))

cache = MemoryCache()
results = run_ablation_grid(dataset, axes, videos=videos, backends=backends, cache=cache)
print(f"{len(results)} grid points, {cache.misses} memories built, {cache.hits} reused\n")

out = Path(tempfile.mkdtemp(prefix="oemvqa-grid-"))
txt, csv_path = emit_report(results, out)
print(txt.read_text())
print(f"csv report: {csv_path}")
