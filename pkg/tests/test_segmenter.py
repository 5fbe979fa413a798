import json
import math

import pytest
from helpers import fake_media_commands
from hypothesis import given
from hypothesis import strategies as st

from oemvqa import ClipRef, MediaAdapter, StreamCursor, segment_stream
from oemvqa.errors import MediaToolError, NonMonotonicStreamError
from oemvqa.segmenter import iter_clips


def spans(clips):
    return [(c.start_s, c.end_s) for c in clips]


@pytest.mark.parametrize("duration, clip, expected", [
    (492, 30, [(i * 30, (i + 1) * 30) for i in range(16)] + [(480, 492)]),
    (10, 30, [(0, 10)]),
    (60, 15, [(0, 15), (15, 30), (30, 45), (45, 60)]),
])
def test_partition_examples(duration, clip, expected):
    assert spans(iter_clips("v", "v.mp4", duration, clip)) == expected


@given(st.integers(1, 7_200_000), st.integers(1, 3600))
def test_partition_property(duration_ms, clip_s):
    clips = iter_clips("v", "v.mp4", duration_ms / 1000, clip_s)
    assert len(clips) == math.ceil(duration_ms / (clip_s * 1000))
    assert clips[0].start_ms == 0 and clips[-1].end_ms == duration_ms
    for a, b in zip(clips, clips[1:]):
        assert a.end_ms == b.start_ms
    assert all(c.duration_ms == clip_s * 1000 for c in clips[:-1])
    assert 0 < clips[-1].duration_ms <= clip_s * 1000


@given(st.lists(st.integers(0, 400_000), min_size=1, max_size=12), st.integers(1, 120))
def test_growing_stream_matches_one_shot(checkpoints, clip_s):
    checkpoints = sorted(checkpoints)
    final = checkpoints[-1] + 1
    cursor = StreamCursor("v", "v.mp4")
    emitted = []
    for ms in checkpoints:
        before = list(emitted)
        cursor.observe(ms / 1000)
        emitted += segment_stream(cursor, clip_s)
        assert emitted[:len(before)] == before
        assert all(c.end_ms <= ms for c in emitted)
    cursor.finish(final / 1000)
    emitted += segment_stream(cursor, clip_s)
    assert emitted == iter_clips("v", "v.mp4", final / 1000, clip_s)
    assert cursor.exhausted


def test_clip_waits_for_its_end():
    cursor = StreamCursor("v", "v.mp4")
    cursor.observe(29.999)
    assert segment_stream(cursor, 30) == []
    cursor.observe(30)
    assert spans(segment_stream(cursor, 30)) == [(0, 30)]
    assert segment_stream(cursor, 30) == []


def test_shrinking_stream_is_rejected():
    cursor = StreamCursor("v", "v.mp4")
    cursor.observe(60)
    segment_stream(cursor, 30)
    with pytest.raises(NonMonotonicStreamError):
        cursor.observe(45)
    with pytest.raises(NonMonotonicStreamError):
        cursor.finish(31)


def test_short_tail_folds_into_previous_clip_when_requested():
    assert spans(iter_clips("v", "v", 60.4, 30)) == [(0, 30), (30, 60), (60, 60.4)]
    assert spans(iter_clips("v", "v", 60.4, 30, min_tail_s=1)) == [(0, 30), (30, 60.4)]
    assert spans(iter_clips("v", "v", 61, 30, min_tail_s=1)) == [(0, 30), (30, 60), (60, 61)]


def test_cursor_reports_progress():
    cursor = StreamCursor.for_file("v", "v.mp4", 45)
    segment_stream(cursor, 30)
    assert cursor.emitted_until_s == 45 and cursor.duration_known_s == 45


class TestMaterialize:
    @pytest.fixture
    def adapter(self, tmp_path):
        cmds = fake_media_commands()
        return MediaAdapter(cmds["cut_command"], cmds["probe_command"],
                            work_dir=tmp_path / "clips", suffix=".json")

    @pytest.fixture
    def video(self, tmp_path):
        path = tmp_path / "my video.json"
        path.write_text(json.dumps({"duration_s": 60}))
        return str(path)

    @pytest.mark.parametrize("start, end", [(0, 30), (30, 60)])
    def test_cut(self, adapter, video, start, end):
        locator = adapter.materialize(ClipRef("v", start * 1000, end * 1000, video))
        assert json.loads(open(locator).read()) == {
            "source": "my video.json", "start": start, "end": end}
        adapter.release(locator)
        assert not (adapter.work_dir / locator).exists()
        assert adapter.live_count == 0

    def test_beyond_end(self, adapter, video):
        with pytest.raises(MediaToolError) as info:
            adapter.materialize(ClipRef("v", 60_000, 90_000, video))
        assert "outside" in info.value.diagnostics

    def test_missing_tool(self, tmp_path, video):
        adapter = MediaAdapter("no-such-decoder-xyz {input} {output}", None, tmp_path)
        with pytest.raises(MediaToolError):
            adapter.materialize(ClipRef("v", 0, 1000, video))

    def test_probe(self, adapter, video, tmp_path):
        assert adapter.probe_duration(video) == 60
        with pytest.raises(MediaToolError):
            adapter.probe_duration(str(tmp_path / "missing.json"))

    def test_passthrough(self):
        adapter = MediaAdapter.passthrough()
        assert adapter.materialize(ClipRef("v", 30_000, 45_500, "clip.mp4")) == \
            "clip.mp4#t=30,45.5"
        custom = MediaAdapter.passthrough("clips/{input}_{start}.mp4")
        assert custom.materialize(ClipRef("v", 0, 30_000, "v")) == "clips/v_0.mp4"
