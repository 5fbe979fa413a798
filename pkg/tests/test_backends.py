import json

import httpx
import pytest

from oemvqa import (
    BackendIdentity,
    CallableBackend,
    HttpBackend,
    MediaAdapter,
    QueryTask,
    RunConfig,
    ScriptedBackend,
    StreamCursor,
    TextualMemory,
    answer_query,
    request_fingerprint,
    run_ingestion,
    scripted_backend,
)
from oemvqa.backends import build_backend, load_fixture, write_fixture
from oemvqa.errors import (
    AuthError,
    BackendError,
    BackendTimeoutError,
    ConfigError,
    ContextOverflowError,
    FixtureParseError,
    MissingFixtureError,
    TransientExhaustedError,
)
from oemvqa.harness import DatasetRecord, evaluate, write_result
from oemvqa.store import MemoryStore


def write_lines(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records))
    return path


class TestScripted:
    def test_replays_exactly_the_fixture(self, tmp_path):
        prompts = ["p1", "p2", "p3"]
        path = write_lines(tmp_path / "f.jsonl", [
            {"fp": request_fingerprint("r", p), "text": f"answer {p}"} for p in prompts])
        backend = scripted_backend(path, name="r")
        for p in prompts:
            record = backend.complete(p)
            assert record.raw_text == f"answer {p}"
            assert record.request_fingerprint == request_fingerprint("r", p)
        with pytest.raises(MissingFixtureError):
            backend.complete("p4")

    def test_empty_fixture_fails_every_call(self, tmp_path):
        (tmp_path / "f.jsonl").write_text("")
        backend = scripted_backend(tmp_path / "f.jsonl")
        with pytest.raises(MissingFixtureError):
            backend.complete("anything")

    def test_duplicate_key(self, tmp_path):
        path = write_lines(tmp_path / "f.jsonl", [{"fp": "x", "text": "a"},
                                                  {"fp": "x", "text": "b"}])
        with pytest.raises(FixtureParseError):
            scripted_backend(path)

    @pytest.mark.parametrize("line", ["not json", '{"fp": "x"}', '{"fp": 1, "text": "a"}'])
    def test_malformed(self, tmp_path, line):
        (tmp_path / "f.jsonl").write_text(line + "\n")
        with pytest.raises(FixtureParseError):
            load_fixture(tmp_path / "f.jsonl")

    def test_missing_file(self, tmp_path):
        with pytest.raises(FixtureParseError):
            load_fixture(tmp_path / "nope.jsonl")

    def test_write_then_load(self, tmp_path):
        write_fixture(tmp_path / "f.jsonl", {"b": "2", "a": "1"})
        assert load_fixture(tmp_path / "f.jsonl") == {"a": "1", "b": "2"}

    def test_fingerprint_covers_media(self):
        clip0, clip1 = (request_fingerprint("d", "p", f"clip{i}.mp4") for i in (0, 1))
        assert clip0 != clip1
        assert request_fingerprint("d", "p") != request_fingerprint("e", "p")
        # no ambiguity from concatenation
        assert request_fingerprint("ab", "c") != request_fingerprint("a", "bc")

    def test_text_only_rejects_media(self):
        backend = ScriptedBackend(BackendIdentity("r"), {})
        with pytest.raises(BackendError):
            backend.complete("p", "clip.mp4")


def http_backend(handler, monkeypatch=None, **kw):
    sleeps = []
    identity = BackendIdentity(**{"name": "live", "endpoint": "https://llm.example/v1",
                                  "model": "m-1", "auth_env_var": "TEST_LLM_KEY", **kw})
    backend = HttpBackend(identity, client=httpx.Client(transport=httpx.MockTransport(handler)),
                          sleep=sleeps.append)
    return backend, sleeps


def ok(text="B", **message):
    return httpx.Response(200, json={"choices": [{"message": {"content": text, **message}}],
                                     "usage": {"total_tokens": 7}})


@pytest.fixture(autouse=True)
def key(monkeypatch):
    monkeypatch.setenv("TEST_LLM_KEY", "sk-test")


class TestHttp:
    def test_retries_rate_limit_then_succeeds(self):
        calls = []

        def handler(request):
            calls.append(request)
            return httpx.Response(429) if len(calls) <= 2 else ok("B")

        backend, sleeps = http_backend(handler)
        record = backend.complete("question?")
        assert record.raw_text == "B"
        assert len(calls) == 3 and sleeps == [1.0, 2.0]
        assert record.latency_ms >= 0 and record.usage == {"total_tokens": 7}

    def test_request_shape(self):
        seen = {}

        def handler(request):
            seen["url"] = str(request.url)
            seen["auth"] = request.headers["authorization"]
            seen["body"] = json.loads(request.content)
            return ok()

        backend, _ = http_backend(handler)
        backend.complete("hello")
        assert seen["url"] == "https://llm.example/v1/chat/completions"
        assert seen["auth"] == "Bearer sk-test"
        assert seen["body"] == {"model": "m-1", "temperature": 0.0,
                                "messages": [{"role": "user", "content": "hello"}]}

    def test_multimodal_sends_clip_inline(self, tmp_path):
        clip = tmp_path / "clip.mp4"
        clip.write_bytes(b"\x00\x01")
        seen = {}

        def handler(request):
            seen["body"] = json.loads(request.content)
            return ok("I am in a kitchen.")

        backend, _ = http_backend(handler, kind="multimodal")
        backend.complete("describe", str(clip))
        parts = seen["body"]["messages"][0]["content"]
        assert parts[0] == {"type": "text", "text": "describe"}
        assert parts[1]["video_url"]["url"] == "data:video/mp4;base64,AAE="

    def test_reasoning_trace_is_preserved(self):
        backend, _ = http_backend(lambda r: ok("C", reasoning_content="thinking..."),
                                  adapter="reasoning")
        assert backend.complete("q").raw_text == "<think>\nthinking...\n</think>\nC"

    @pytest.mark.parametrize("status", [401, 403])
    def test_auth_failure_is_not_retried(self, status):
        backend, sleeps = http_backend(lambda r: httpx.Response(status))
        with pytest.raises(AuthError):
            backend.complete("q")
        assert sleeps == []

    def test_missing_credential(self, monkeypatch):
        monkeypatch.delenv("TEST_LLM_KEY")
        backend, _ = http_backend(lambda r: ok())
        with pytest.raises(AuthError):
            backend.complete("q")

    def test_server_errors_exhaust(self):
        backend, sleeps = http_backend(lambda r: httpx.Response(503), max_retries=3)
        with pytest.raises(TransientExhaustedError):
            backend.complete("q")
        assert sleeps == [1.0, 2.0, 4.0]

    def test_timeouts_exhaust(self):
        def handler(request):
            raise httpx.ReadTimeout("slow", request=request)

        backend, _ = http_backend(handler, max_retries=1)
        with pytest.raises(BackendTimeoutError):
            backend.complete("q")

    def test_context_overflow_reported_by_endpoint(self):
        backend, _ = http_backend(lambda r: httpx.Response(
            400, json={"error": {"message": "This model's maximum context length is 8192"}}))
        with pytest.raises(ContextOverflowError):
            backend.complete("q")

    def test_other_client_errors(self):
        backend, _ = http_backend(lambda r: httpx.Response(404, text="no such model"))
        with pytest.raises(BackendError):
            backend.complete("q")

    def test_rate_limit_spacing(self):
        now = [100.0]
        backend, sleeps = http_backend(lambda r: ok(), min_interval_s=0.5)
        backend.clock = lambda: now[0]
        backend.complete("a")
        backend.complete("b")
        assert sleeps == [0.5]


def test_build_backend(tmp_path):
    write_lines(tmp_path / "f.jsonl", [{"fp": request_fingerprint("r", "p"), "text": "A"}])
    b = build_backend({"name": "r", "type": "scripted", "fixture": "f.jsonl"}, tmp_path)
    assert b.complete("p").raw_text == "A"
    live = build_backend({"name": "x", "endpoint": "http://h", "kind": "multimodal"})
    assert isinstance(live, HttpBackend) and live.identity.kind == "multimodal"
    for bad in ({"name": "x", "type": "grpc"}, {"name": "x", "type": "scripted"},
                {"name": "x", "endpoint": "http://h", "colour": "red"},
                {"name": "x", "endpoint": "http://h", "adapter": "nope"},
                {"name": "x", "kind": "audio"}):
        with pytest.raises(ConfigError):
            build_backend(bad)


def test_canary_secret_never_reaches_artifacts(tmp_path, monkeypatch):
    canary = "sk-CANARY-7f3a9c"
    monkeypatch.setenv("TEST_LLM_KEY", canary)

    def handler(request):
        assert request.headers["authorization"] == f"Bearer {canary}"
        body = json.loads(request.content)
        content = body["messages"][0]["content"]
        return ok("B" if isinstance(content, str) else "I put the knife in the drawer.")

    descriptor, _ = http_backend(handler, name="desc", kind="multimodal")
    reasoner, _ = http_backend(handler, name="reas")
    clip_dir = tmp_path / "clips"
    clip_dir.mkdir()
    config = RunConfig(clip_length_s=30, descriptor_backend="desc", reasoner_backend="reas")
    media = MediaAdapter.passthrough(str(clip_dir / "{start}.mp4"))
    for start in (0, 30):
        (clip_dir / f"{start}.mp4").write_bytes(b"video")
    with MemoryStore(tmp_path / "out" / "v.jsonl", "v") as store:
        run_ingestion(StreamCursor.for_file("v", "v.mp4", 60), config, store, descriptor, media)
        memory = store.memory
    dataset = [DatasetRecord("q1", "v", "Where is the knife?",
                             ("sink", "drawer", "table", "bag"), "B")]
    result = evaluate(dataset, config, {"v": memory}, reasoner)
    write_result(result, tmp_path / "out", include_raw=True)
    assert result.n_correct == 1
    for path in (tmp_path / "out").rglob("*"):
        if path.is_file():
            assert canary not in path.read_text(), path
    assert canary not in repr(descriptor.identity) and canary not in repr(result)


def test_callable_backend():
    b = CallableBackend(BackendIdentity("fn"), lambda p, m: p.upper())
    assert b.complete("abc").raw_text == "ABC"
    mem = TextualMemory("v")
    task = QueryTask("q", ["a", "b", "c", "d"], "A", "v")
    assert answer_query(mem, task, RunConfig(), CallableBackend(
        BackendIdentity("fn"), lambda p, m: "A")).correct
