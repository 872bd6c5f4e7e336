"""Backend tests: digests, scripted fixtures, caching, the HTTP client."""
from __future__ import annotations

import json
import math
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from maieutic.backend import (
    CachedBackend,
    FixtureBuilder,
    HttpLmBackend,
    ResponseCache,
    ScriptedBackend,
    TraceRecorder,
    TruthResponse,
    cache_key,
    completion_request,
    logprob_request,
    negate,
    read_trace,
    request_digest,
    truth_request,
)
from maieutic.core import DecodingParams, DecodingStrategy, NegationStrategy
from maieutic.errors import (
    ArgmaxTie,
    BackendUnavailable,
    CacheCorrupt,
    EmptyGeneration,
    MalformedResponse,
    MissingFixture,
    NotSupported,
)
from maieutic.prompts import render_abductive_prompt
from scenarios import ABDUCTIVE_PROMPTS, EXPLANATION_PROMPTS, GREEDY, TRUTH_PROMPTS

NUCLEUS_PAIR = DecodingParams(DecodingStrategy.NUCLEUS, nucleus_p=0.9,
                              sample_count=2)


# --- request digests ---

def test_request_digest_is_stable_and_kind_sensitive():
    truth = truth_request("Water is wet? ...")
    assert request_digest(truth) == request_digest(truth_request("Water is wet? ..."))
    assert request_digest(truth) != request_digest(
        logprob_request("Water is wet? ...", "x"))
    assert request_digest(truth) != request_digest(truth_request("Water is dry? ..."))


def test_completion_digest_depends_on_decoding():
    greedy = completion_request("prompt text", GREEDY)
    nucleus = completion_request("prompt text", NUCLEUS_PAIR)
    assert request_digest(greedy) != request_digest(nucleus)


def test_cache_key_scopes_backend_and_seed():
    request = truth_request("Water is wet? ...")
    assert cache_key("a", request) == cache_key("a", request)
    assert cache_key("a", request) != cache_key("b", request)
    assert cache_key("a", request) != cache_key("a", request, seed=3)
    assert cache_key("a", request, seed=3) != cache_key("a", request, seed=4)


# --- truth responses ---

def test_truth_response_argmax():
    assert TruthResponse(0.7, 0.3).argmax() is True
    assert TruthResponse(0.2, 0.8).argmax() is False


def test_truth_response_tie_raises():
    with pytest.raises(ArgmaxTie):
        TruthResponse(0.5, 0.5).argmax()


# --- scripted backend through the fixture builder ---

def test_scripted_truth_renormalizes():
    builder = FixtureBuilder()
    builder.truth("Ice floats on water", TRUTH_PROMPTS, 0.3, 0.1)
    response = builder.backend().true_prob("Ice floats on water", TRUTH_PROMPTS)
    assert response.true_prob == pytest.approx(0.75)
    assert response.false_prob == pytest.approx(0.25)


@pytest.mark.parametrize("true_prob,false_prob", [(-0.2, 0.5), (0.0, 0.0),
                                                  (float("nan"), 0.5)])
def test_scripted_truth_rejects_bad_probabilities(true_prob, false_prob):
    builder = FixtureBuilder()
    digest = builder.truth("Ice floats on water", TRUTH_PROMPTS, 0.5, 0.5)
    builder.responses[digest] = {"true_prob": true_prob, "false_prob": false_prob}
    with pytest.raises(MalformedResponse):
        builder.backend().true_prob("Ice floats on water", TRUTH_PROMPTS)


def test_scripted_missing_fixture():
    backend = ScriptedBackend({})
    with pytest.raises(MissingFixture):
        backend.true_prob("Ice floats on water", TRUTH_PROMPTS)


def test_sample_abductive_strips_and_truncates():
    decoding = DecodingParams(DecodingStrategy.NUCLEUS, sample_count=3)
    builder = FixtureBuilder()
    builder.abductive("Ice floats on water", True, ABDUCTIVE_PROMPTS, decoding,
                      ["  padded reason  ", "", "dup", "dup", "extra"])
    out = builder.backend().sample_abductive("Ice floats on water", True,
                                             ABDUCTIVE_PROMPTS, decoding)
    # empties go, order survives, the count is capped; duplicates are
    # the tree builder's concern, not the backend's
    assert out == ["padded reason", "dup", "dup"]


def test_sample_abductive_empty_generation():
    builder = FixtureBuilder()
    builder.abductive("Ice floats on water", False, ABDUCTIVE_PROMPTS, GREEDY,
                      ["", "   "])
    with pytest.raises(EmptyGeneration):
        builder.backend().sample_abductive("Ice floats on water", False,
                                           ABDUCTIVE_PROMPTS, GREEDY)


def test_explained_answer_prob():
    builder = FixtureBuilder()
    builder.explained_answer("Ice floats on water?", "Ice is less dense.",
                             EXPLANATION_PROMPTS, 0.9, 0.1)
    response = builder.backend().explained_answer_prob(
        "Ice floats on water?", "Ice is less dense.", EXPLANATION_PROMPTS)
    assert response.true_prob == pytest.approx(0.9)


def test_sample_explanations_uses_default_decoding():
    builder = FixtureBuilder()
    builder.explanation_samples("Ice floats on water?", EXPLANATION_PROMPTS,
                                ["Ice is less dense than water."])
    out = builder.backend().sample_explanations("Ice floats on water?",
                                                EXPLANATION_PROMPTS)
    assert out == ["Ice is less dense than water."]


def test_sequence_logprob_validates_range():
    builder = FixtureBuilder()
    builder.logprob("Ice is less dense.", "Ice floats on water", True,
                    ABDUCTIVE_PROMPTS, -3.5)
    backend = builder.backend()
    assert backend.sequence_logprob("Ice is less dense.", "Ice floats on water",
                                    True, ABDUCTIVE_PROMPTS) == -3.5
    bad = FixtureBuilder()
    bad.logprob("Ice is less dense.", "Ice floats on water", True,
                ABDUCTIVE_PROMPTS, 1.0)
    with pytest.raises(MalformedResponse):
        bad.backend().sequence_logprob("Ice is less dense.", "Ice floats on water",
                                       True, ABDUCTIVE_PROMPTS)


def test_negate_prefix_and_lm():
    assert negate("Ice floats.", NegationStrategy.PREFIX) == \
        "It is wrong to say that ice floats."
    builder = FixtureBuilder()
    builder.negation("Ice floats.", "Ice does not float.")
    assert negate("Ice floats.", NegationStrategy.LM_GENERATED,
                  builder.backend()) == "Ice does not float."
    with pytest.raises(ValueError):
        negate("Ice floats.", NegationStrategy.LM_GENERATED)


def test_fixture_file_round_trip(tmp_path):
    builder = FixtureBuilder()
    builder.truth("Ice floats on water", TRUTH_PROMPTS, 0.8, 0.2)
    path = builder.write(tmp_path / "fixtures.json")
    backend = ScriptedBackend(path)
    assert backend.true_prob("Ice floats on water",
                             TRUTH_PROMPTS).true_prob == pytest.approx(0.8)
    sidecar = json.loads((tmp_path / "fixtures.json.prompts.json").read_text())
    (rendered,) = [entry["prompt"] for entry in sidecar.values()]
    assert rendered.endswith("Ice floats on water?")


def test_fixture_builder_merge():
    left = FixtureBuilder()
    left.truth("Ice floats on water", TRUTH_PROMPTS, 0.8, 0.2)
    right = FixtureBuilder()
    right.truth("Lead floats on water", TRUTH_PROMPTS, 0.1, 0.9)
    left.merge(right)
    backend = left.backend()
    assert backend.true_prob("Lead floats on water",
                             TRUTH_PROMPTS).true_prob == pytest.approx(0.1)
    assert backend.true_prob("Ice floats on water",
                             TRUTH_PROMPTS).true_prob == pytest.approx(0.8)


# --- response cache ---

def test_response_cache_round_trip(tmp_path):
    cache = ResponseCache(tmp_path / "cache")
    assert cache.get("k1") is None
    cache.put("k1", {"true_prob": 0.5, "false_prob": 0.5})
    assert cache.get("k1") == {"true_prob": 0.5, "false_prob": 0.5}
    cache.put("k1", {"true_prob": 0.9, "false_prob": 0.1})
    assert cache.get("k1")["true_prob"] == 0.9


def test_response_cache_detects_key_mismatch(tmp_path):
    cache = ResponseCache(tmp_path / "cache")
    cache.put("k1", {"logprob": -1.0})
    (tmp_path / "cache" / "k2.json").write_text(
        (tmp_path / "cache" / "k1.json").read_text())
    with pytest.raises(CacheCorrupt):
        cache.get("k2")


# --- cached backend ---

def _truth_world():
    builder = FixtureBuilder()
    builder.truth("Ice floats on water", TRUTH_PROMPTS, 0.8, 0.2)
    return builder.backend()


def test_cached_backend_serves_repeats_from_cache(tmp_path):
    trace = TraceRecorder()
    backend = CachedBackend(_truth_world(), ResponseCache(tmp_path), trace=trace)
    for _ in range(3):
        assert backend.true_prob("Ice floats on water",
                                 TRUTH_PROMPTS).true_prob == pytest.approx(0.8)
    assert [entry["cache_hit"] for entry in trace.records] == [False, True, True]
    assert trace.backend_call_count() == 1


def test_cache_survives_backend_restart(tmp_path):
    first = CachedBackend(_truth_world(), ResponseCache(tmp_path))
    first.true_prob("Ice floats on water", TRUTH_PROMPTS)
    trace = TraceRecorder()
    second = CachedBackend(ScriptedBackend({}), ResponseCache(tmp_path),
                           trace=trace)
    # the empty inner backend proves the response came from disk
    assert second.true_prob("Ice floats on water",
                            TRUTH_PROMPTS).true_prob == pytest.approx(0.8)
    assert trace.backend_call_count() == 0


def test_nucleus_completions_cached_only_with_seed(tmp_path):
    builder = FixtureBuilder()
    builder.abductive("Ice floats on water", True, ABDUCTIVE_PROMPTS,
                      NUCLEUS_PAIR, ["Ice is less dense.", "Ice traps air."])
    inner = builder.backend()

    unseeded_trace = TraceRecorder()
    unseeded = CachedBackend(inner, ResponseCache(tmp_path / "a"),
                             trace=unseeded_trace)
    for _ in range(2):
        unseeded.sample_abductive("Ice floats on water", True,
                                  ABDUCTIVE_PROMPTS, NUCLEUS_PAIR)
    assert unseeded_trace.backend_call_count() == 2

    seeded_trace = TraceRecorder()
    seeded = CachedBackend(inner, ResponseCache(tmp_path / "b"), seed=7,
                           trace=seeded_trace)
    for _ in range(2):
        seeded.sample_abductive("Ice floats on water", True,
                                ABDUCTIVE_PROMPTS, NUCLEUS_PAIR)
    assert seeded_trace.backend_call_count() == 1

    other_seed = CachedBackend(inner, ResponseCache(tmp_path / "b"), seed=8)
    other_trace = other_seed.trace
    other_seed.sample_abductive("Ice floats on water", True,
                                ABDUCTIVE_PROMPTS, NUCLEUS_PAIR)
    assert other_trace.backend_call_count() == 1  # seed keys do not collide


def test_greedy_completions_cached_without_seed(tmp_path):
    builder = FixtureBuilder()
    builder.abductive("Ice floats on water", False, ABDUCTIVE_PROMPTS, GREEDY,
                      ["Ice is less dense."])
    trace = TraceRecorder()
    backend = CachedBackend(builder.backend(), ResponseCache(tmp_path),
                            trace=trace)
    for _ in range(2):
        backend.sample_abductive("Ice floats on water", False,
                                 ABDUCTIVE_PROMPTS, GREEDY)
    assert trace.backend_call_count() == 1


def test_trace_only_wrapper_never_caches(tmp_path):
    trace = TraceRecorder(tmp_path / "trace.jsonl")
    backend = CachedBackend(_truth_world(), cache=None, trace=trace)
    backend.true_prob("Ice floats on water", TRUTH_PROMPTS)
    backend.true_prob("Ice floats on water", TRUTH_PROMPTS)
    assert trace.backend_call_count() == 2
    replayed = read_trace(tmp_path / "trace.jsonl")
    assert replayed == trace.records
    assert {entry["purpose"] for entry in replayed} == {"truth"}


# --- HTTP client against a local stub ---

class _StubHandler(BaseHTTPRequestHandler):
    def log_message(self, *args):
        pass

    def do_POST(self):
        length = int(self.headers.get("Content-Length", "0"))
        body = json.loads(self.rfile.read(length)) if length else {}
        self.server.requests.append(
            {"body": body, "auth": self.headers.get("Authorization")})
        if self.server.script:
            status, payload = self.server.script.pop(0)
        else:
            status, payload = 200, {"choices": [{"text": " ok"}]}
        blob = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(blob)))
        self.end_headers()
        self.wfile.write(blob)


@pytest.fixture()
def stub():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _StubHandler)
    server.requests = []
    server.script = []
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    server.endpoint = f"http://127.0.0.1:{server.server_address[1]}/v1/completions"
    try:
        yield server
    finally:
        server.shutdown()
        server.server_close()


def _client(stub, **kwargs):
    kwargs.setdefault("backoff", 0.01)
    return HttpLmBackend(stub.endpoint, **kwargs)


def test_http_truth_scoring(stub):
    stub.script.append((200, {"choices": [{"logprobs": {"top_logprobs": [
        {" True": math.log(0.6), " False": math.log(0.2), " Maybe": math.log(0.1)},
    ]}}]}))
    client = _client(stub, model="base", api_key="secret-key")
    response = client.true_prob("Ice floats on water", TRUTH_PROMPTS)
    assert response.true_prob == pytest.approx(0.75)
    sent = stub.requests[0]
    assert sent["auth"] == "Bearer secret-key"
    assert sent["body"]["model"] == "base"
    assert sent["body"]["max_tokens"] == 1
    assert sent["body"]["logprobs"] == 5


def test_http_truth_missing_answer_tokens(stub):
    stub.script.append((200, {"choices": [{"logprobs": {"top_logprobs": [
        {" Yes": -0.1, " No": -2.0},
    ]}}]}))
    with pytest.raises(MalformedResponse):
        _client(stub).true_prob("Ice floats on water", TRUTH_PROMPTS)


def test_http_one_sided_answer_distribution(stub):
    stub.script.append((200, {"choices": [{"logprobs": {"top_logprobs": [
        {" True": math.log(0.4)},
    ]}}]}))
    response = _client(stub).true_prob("Ice floats on water", TRUTH_PROMPTS)
    assert response.true_prob == 1.0


def test_http_completion_request_carries_decoding(stub):
    stub.script.append((200, {"choices": [{"text": " first reason"},
                                          {"text": " second reason"}]}))
    out = _client(stub).sample_abductive("Ice floats on water", True,
                                         ABDUCTIVE_PROMPTS, NUCLEUS_PAIR)
    assert out == ["first reason", "second reason"]
    body = stub.requests[0]["body"]
    assert body["n"] == 2
    assert body["top_p"] == 0.9
    assert body["temperature"] == 1.0
    assert "model" not in body


def test_http_retries_on_server_errors(stub):
    stub.script.append((500, {}))
    stub.script.append((200, {"choices": [{"logprobs": {"top_logprobs": [
        {" True": -0.5, " False": -1.5}]}}]}))
    response = _client(stub).true_prob("Ice floats on water", TRUTH_PROMPTS)
    assert 0.0 < response.true_prob < 1.0
    assert len(stub.requests) == 2


def test_http_gives_up_after_retry_budget(stub):
    stub.script.extend([(503, {}), (503, {}), (503, {})])
    with pytest.raises(BackendUnavailable):
        _client(stub, retries=3).true_prob("Ice floats on water", TRUTH_PROMPTS)
    assert len(stub.requests) == 3


def test_http_client_errors_do_not_retry(stub):
    stub.script.append((403, {"error": "forbidden"}))
    with pytest.raises(BackendUnavailable):
        _client(stub).true_prob("Ice floats on water", TRUTH_PROMPTS)
    assert len(stub.requests) == 1


def test_http_echo_logprob_sums_past_the_prompt(stub):
    prompt = render_abductive_prompt("Ice floats on water", True,
                                     ABDUCTIVE_PROMPTS)
    boundary = len(prompt)
    stub.script.append((200, {"choices": [{"logprobs": {
        "token_logprobs": [None, -9.0, -2.0, -0.5],
        "text_offset": [0, boundary - 5, boundary, boundary + 3],
    }}]}))
    value = _client(stub).sequence_logprob("Ice is less dense.",
                                           "Ice floats on water", True,
                                           ABDUCTIVE_PROMPTS)
    assert value == pytest.approx(-2.5)
    body = stub.requests[0]["body"]
    assert body["echo"] is True
    assert body["max_tokens"] == 0


def test_http_logprob_unsupported(stub):
    stub.script.append((200, {"choices": [{"text": "no logprobs here"}]}))
    with pytest.raises(NotSupported):
        _client(stub).sequence_logprob("Ice is less dense.",
                                       "Ice floats on water", True,
                                       ABDUCTIVE_PROMPTS)


def test_http_api_key_from_environment(stub, monkeypatch):
    monkeypatch.setenv("MAIEUTIC_API_KEY", "env-key")
    stub.script.append((200, {"choices": [{"logprobs": {"top_logprobs": [
        {" True": -0.5, " False": -1.5}]}}]}))
    _client(stub).true_prob("Ice floats on water", TRUTH_PROMPTS)
    assert stub.requests[0]["auth"] == "Bearer env-key"


def test_http_requires_endpoint():
    with pytest.raises(ValueError):
        HttpLmBackend("")
