"""
Answering questions over a memory
=================================

The reasoner never sees video. It gets one caption per 30 s of memory plus a
multiple-choice question, and its free-text reply is reduced to a letter.
The reasoner below is a keyword matcher that mimics a chain-of-thought model.
"""

import re

from oemvqa import (
    BackendIdentity,
    CallableBackend,
    DescriptionEntry,
    QueryTask,
    RunConfig,
    TextualMemory,
    answer_query,
    parse_answer,
)
from oemvqa.memory import select_for_query

# %% A memory built from 15 s clips

captions = [
    "I enter the garage and switch on the light.",
    "I look at the shelves full of paint cans.",
    "I put the hammer in the toolbox on the workbench.",
    "I put the flashlight in the drawer under the bench.",
    "I sweep sawdust off the floor.",
    "I close the garage door and leave.",
]
memory = TextualMemory("garage")
for k, text in enumerate(captions):
    memory.append(DescriptionEntry(k, k * 15_000, (k + 1) * 15_000, text, "demo", "-"))

config = RunConfig(clip_length_s=15)  # query stride defaults to 30 s
view = select_for_query(memory, config.query_stride_s)
print(f"{len(memory)} entries in memory, {len(view)} shown to the reasoner:")
for entry in view:
    print(f"  [{entry.start_s:>3}-{entry.end_s:>3}s] {entry.text}")

# %% A reasoner that thinks out loud


def reason(prompt, media=None):
    obj = re.search(r"put the (\w+)\?", prompt).group(1)
    options = {text: label for label, text in re.findall(r"^([A-D])\) (.+)$", prompt, re.M)}
    memory_part = prompt.split("QUESTION", 1)[0]
    for place, label in options.items():
        if f"{obj} in the {place}" in memory_part:
            thought = f"The memory says the {obj} went in the {place}."
            return f"<think>{thought}</think>\nAnswer: {label}"
    return "<think>Nothing about it in the memory.</think>\nI cannot tell."


reasoner = CallableBackend(BackendIdentity("demo-reasoner"), reason)

# %% Two questions; the second fact sits in a clip the stride skips

for question, options, gold in [
    ("Where did I put the hammer?", ["shelf", "toolbox", "bucket", "car"], "B"),
    ("Where did I put the flashlight?", ["drawer", "toolbox", "car", "bin"], "A"),
]:
    record = answer_query(memory, QueryTask(question, options, gold, "garage"), config, reasoner)
    print()
    print(question)
    print(f"  raw:       {record.raw_completion!r}")
    print(f"  predicted: {record.predicted}  correct: {record.correct}")

# %% The answer parser on its own

for raw in ["B", "After some thought, the answer is (C).", "Could be A or D.", "**d**"]:
    print(f"{raw!r:45} -> {parse_answer(raw)}")
