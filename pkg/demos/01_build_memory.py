"""
Building a textual memory from a live stream
============================================

A video arrives a few seconds at a time. Every completed clip is described
once and appended to a JSON-Lines memory file; the video itself is never
kept. The descriptor here is a plain Python function, so the demo runs
offline. Swap in an ``HttpBackend`` to talk to a real multimodal model.
"""

import tempfile
from pathlib import Path

from oemvqa import (
    BackendIdentity,
    CallableBackend,
    RunConfig,
    StreamCursor,
    run_ingestion,
)
from oemvqa.memory import memory_footprint, ms_to_s
from oemvqa.store import MemoryStore, read_memory

# %% A stand-in descriptor
# The locator tells us which span of the video we are looking at.

SCENES = [
    "I am in the kitchen. I open the fridge and take out a carton of milk.",
    "I pour milk into a blue mug and put the carton back in the fridge.",
    "I put the knife in the drawer next to the sink.",
    "I walk to the living room and sit on the grey sofa.",
    "I pick up my phone from the coffee table and check the time.",
]


def describe(prompt, media):
    start = float(media.split("#t=")[1].split(",")[0])
    return SCENES[int(start // 30) % len(SCENES)]


descriptor = CallableBackend(BackendIdentity("demo-descriptor", kind="multimodal"), describe)
config = RunConfig(clip_length_s=30, include_context=False, include_templates=True,
                   descriptor_backend="demo-descriptor")

# %% Feed the stream in uneven chunks
# A clip is only described once its end has been observed.

workdir = Path(tempfile.mkdtemp(prefix="oemvqa-demo-"))
memory_path = workdir / "home.jsonl"
cursor = StreamCursor("home", "home.mp4")

with MemoryStore(memory_path, "home") as store:
    for seen_s in (12, 41, 75, 118):
        cursor.observe(seen_s)
        run_ingestion(cursor, config, store, descriptor)
        print(f"observed {seen_s:>3} s -> {len(store.memory)} entries")
    cursor.finish(140)
    run_ingestion(cursor, config, store, descriptor)
    print(f"stream ended at 140 s -> {len(store.memory)} entries")

# %% What ended up on disk

memory = read_memory(memory_path)
print()
print(memory.as_text())
print()
print(f"footprint: {memory_footprint(memory, ms_to_s(memory.covered_ms)):.2f} KB/min")
print(f"memory file: {memory_path}")
