import re
import shutil
from importlib import resources
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from oemvqa import (
    DescriptionEntry,
    PromptSet,
    QueryTask,
    RunConfig,
    build_descriptor_prompt,
    build_reasoner_prompt,
)
from oemvqa.prompting import descriptor_sections, parse_sections, parse_templates

GOLDEN = Path(__file__).parent / "golden"
PREV = DescriptionEntry(0, 0, 30_000, "I open the fridge and take out a carton of milk.", "d", "fp")
TASK = QueryTask("Where did I put the knife?", ["sink", "drawer", "table", "bag"], "B", "v")
VIEW = [
    DescriptionEntry(0, 0, 30_000, "I am in the kitchen. I put the knife in the drawer.", "d", "f"),
    DescriptionEntry(1, 30_000, 60_000, "I walk to the living room and sit on the sofa.", "d", "f"),
]


def cfg(ctx, tmpl, **kw):
    return RunConfig(include_context=bool(ctx), include_templates=bool(tmpl), **kw)


@pytest.mark.parametrize("ctx", [0, 1])
@pytest.mark.parametrize("tmpl", [0, 1])
def test_descriptor_golden(ctx, tmpl):
    prompt = build_descriptor_prompt(cfg(ctx, tmpl), PREV)
    assert prompt.text == (GOLDEN / f"descriptor_ctx{ctx}_tmpl{tmpl}.txt").read_text()


def test_all_five_sections_in_order():
    prompt = build_descriptor_prompt(cfg(1, 1), PREV)
    assert prompt.sections == ("task_description", "detailed_instructions",
                               "question_templates", "in_context_example",
                               "previous_description")
    positions = [prompt.text.index(h) for h in
                 ("TASK", "INSTRUCTIONS", "QUESTIONS THE MEMORY", "EXAMPLE OUTPUT",
                  "PREVIOUS CLIP")]
    assert positions == sorted(positions)


def test_both_toggles_off_leaves_three_sections():
    assert build_descriptor_prompt(cfg(0, 0), PREV).sections == (
        "task_description", "detailed_instructions", "in_context_example")


def test_first_clip_has_no_previous_section():
    prompt = build_descriptor_prompt(cfg(1, 1), None)
    assert len(prompt.sections) == 4 and "previous_description" not in prompt.sections
    assert prompt.text == build_descriptor_prompt(cfg(0, 1), PREV).text


def test_templates_come_from_data_file():
    prompts = PromptSet.load()
    assert len(prompts.templates) == 13
    text = build_descriptor_prompt(cfg(0, 1)).text
    assert all(f"- {t}" in text for t in prompts.templates)


def test_fingerprint_is_stable_and_content_based():
    a = build_descriptor_prompt(cfg(1, 1), PREV)
    b = build_descriptor_prompt(cfg(1, 1), PREV)
    assert a == b and len(a.fingerprint) == 16
    other = DescriptionEntry(0, 0, 30_000, "Something else.", "d", "fp")
    assert build_descriptor_prompt(cfg(1, 1), other).fingerprint != a.fingerprint


def test_reasoner_golden():
    assert build_reasoner_prompt(VIEW, TASK, RunConfig()).text == \
        (GOLDEN / "reasoner_ts1.txt").read_text()


def test_reasoner_without_timestamps():
    with_ts = build_reasoner_prompt(VIEW, TASK, RunConfig()).text
    without = build_reasoner_prompt(VIEW, TASK, RunConfig(timestamps_in_prompt=False)).text
    assert without == (GOLDEN / "reasoner_ts0.txt").read_text()
    assert without == re.sub(r"^\[\d\d:\d\d-\d\d:\d\d\] ", "", with_ts, flags=re.M)


def test_reasoner_empty_view():
    text = build_reasoner_prompt([], TASK, RunConfig()).text
    assert text == (GOLDEN / "reasoner_empty.txt").read_text()
    assert "The memory is empty" in text


def test_reasoner_keeps_option_order():
    text = build_reasoner_prompt(VIEW, TASK, RunConfig()).text
    assert "A) sink\nB) drawer\nC) table\nD) bag" in text


@given(st.integers(1, 30))
def test_reasoner_length_strictly_increases_with_view(n):
    # the empty view renders a fixed notice instead, see test_reasoner_empty_view
    entries = [DescriptionEntry(k, k * 30_000, (k + 1) * 30_000, f"c{k}", "d", "f")
               for k in range(n + 1)]
    shorter = build_reasoner_prompt(entries[:n], TASK, RunConfig()).text
    longer = build_reasoner_prompt(entries, TASK, RunConfig()).text
    assert len(longer) > len(shorter)


def test_wording_can_be_swapped_without_code(tmp_path):
    pkg = resources.files("oemvqa.prompts")
    for name in ("descriptor_v1.txt", "reasoner_v1.txt", "nlq_templates.txt"):
        (tmp_path / name).write_text((pkg / name).read_text())
    text = (tmp_path / "descriptor_v1.txt").read_text().replace("TASK\n", "MISSION\n", 1)
    (tmp_path / "descriptor_v2.txt").write_text(text)
    shutil.copy(tmp_path / "reasoner_v1.txt", tmp_path / "reasoner_v2.txt")
    prompts = PromptSet.load(tmp_path, "v2")
    assert prompts.version == "v2"
    assert build_descriptor_prompt(cfg(0, 1), prompts=prompts).text.startswith("MISSION")


def test_section_parser():
    assert parse_sections("# c\n[[a]]\nx\n\n[[b]]\ny\n") == {"a": "x", "b": "y"}
    with pytest.raises(ValueError):
        parse_sections("stray\n[[a]]\nx")
    with pytest.raises(ValueError):
        parse_sections("[[a]]\nx\n[[a]]\ny")
    assert parse_templates("# c\nA?\n\n B? \n") == ("A?", "B?")


def test_descriptor_sections_pairs():
    names = [n for n, _ in descriptor_sections(cfg(1, 0), PREV)]
    assert names == ["task_description", "detailed_instructions", "in_context_example",
                     "previous_description"]
