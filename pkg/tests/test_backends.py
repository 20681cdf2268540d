"""Backend clients: token budgeting, mock determinism, wire protocol."""

import http.server
import json
import threading
import time

import pytest
import requests

import moprompt.backends as backends
from moprompt.backends import (
    BackendError,
    BackendPolicy,
    CLASSIFIER_TOKEN_BUDGET,
    DEFAULT_LEXICONS,
    GenerationRequest,
    HttpEmotionClassifier,
    MockEmotionClassifier,
    MockTextGenerator,
    OllamaClient,
    estimate_tokens,
    load_lexicons,
    parse_classifier_response,
    truncate_to_token_budget,
)
from moprompt.domain import EmotionLabel, GeneratedText


class StubServer:
    """Scripted local HTTP server for exercising the live clients.

    script is a list of (status, json_payload) pairs consumed per request;
    the final entry repeats. Records every request and tracks the peak
    number served concurrently (counted strictly between request read and
    response write, so it never overshoots the client's own window).
    """

    def __init__(self, script, delay=0.0):
        assert script
        self.script = list(script)
        self.delay = delay
        self.seen = []
        self.inflight = 0
        self.max_inflight = 0
        self._lock = threading.Lock()
        outer = self

        class Handler(http.server.BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length) or b"{}")
                with outer._lock:
                    outer.inflight += 1
                    outer.max_inflight = max(outer.max_inflight, outer.inflight)
                if outer.delay:
                    time.sleep(outer.delay)
                with outer._lock:
                    outer.inflight -= 1
                    outer.seen.append((self.path, dict(self.headers), body))
                    if len(outer.script) > 1:
                        status, payload = outer.script.pop(0)
                    else:
                        status, payload = outer.script[0]
                data = json.dumps(payload).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self._server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def url(self):
        host, port = self._server.server_address
        return f"http://{host}:{port}"

    def __enter__(self):
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self._server.shutdown()
        self._server.server_close()
        return False


SIX_SCORES = [
    {"label": "sadness", "score": 0.5},
    {"label": "joy", "score": 0.2},
    {"label": "love", "score": 0.1},
    {"label": "anger", "score": 0.1},
    {"label": "fear", "score": 0.05},
    {"label": "surprise", "score": 0.05},
]


# token budgeting


def test_estimate_tokens_rounds_up():
    assert estimate_tokens("") == 0
    assert estimate_tokens("one two three") == 4  # ceil(3 * 1.3)


def test_truncation_threshold():
    # 393 words estimate to 511 tokens and fit the 512 budget; 394 do not
    fits = " ".join(["word"] * 393)
    assert estimate_tokens(fits) <= CLASSIFIER_TOKEN_BUDGET
    assert truncate_to_token_budget(fits) == fits
    over = " ".join(["word"] * 394)
    truncated = truncate_to_token_budget(over)
    assert len(truncated.split()) == 393
    assert over.startswith(truncated)


def test_truncation_preserves_short_text_exactly():
    text = "a short  text with   odd spacing"
    assert truncate_to_token_budget(text) == text


# settings validation


def test_generation_request_validation():
    with pytest.raises(ValueError):
        GenerationRequest("hi", temperature=-0.1)
    with pytest.raises(ValueError):
        GenerationRequest("hi", context_window=0)
    with pytest.raises(ValueError):
        GenerationRequest("hi", max_output_tokens=0)


def test_backend_policy_validation():
    with pytest.raises(ValueError):
        BackendPolicy(timeout=0)
    with pytest.raises(ValueError):
        BackendPolicy(max_retries=-1)
    with pytest.raises(ValueError):
        BackendPolicy(backoff=-0.5)
    with pytest.raises(ValueError):
        BackendPolicy(max_concurrent_requests=0)


# mock classifier


def test_mock_classifier_empty_text_is_uniform():
    scores = MockEmotionClassifier().classify_emotions(GeneratedText(""))
    for value in scores.as_dict().values():
        assert value == pytest.approx(1 / 6)


def test_mock_classifier_count_formula():
    # raw score is 1 + keyword count, normalized: joy 3/9, fear 2/9, rest 1/9
    clf = MockEmotionClassifier(
        {EmotionLabel.JOY: ("delight",), EmotionLabel.FEAR: ("dread",)}
    )
    scores = clf.classify_emotions(GeneratedText("delight delight dread")).as_dict()
    assert scores[EmotionLabel.JOY] == pytest.approx(3 / 9)
    assert scores[EmotionLabel.FEAR] == pytest.approx(2 / 9)
    assert scores[EmotionLabel.SADNESS] == pytest.approx(1 / 9)


def test_mock_classifier_matches_whole_words_case_insensitively():
    clf = MockEmotionClassifier({EmotionLabel.JOY: ("delight",)})
    scores = clf.classify_emotions(GeneratedText("Delightful DELIGHT delight!")).as_dict()
    # "delightful" must not count; the two standalone occurrences do
    assert scores[EmotionLabel.JOY] == pytest.approx(3 / 8)


def test_mock_classifier_is_deterministic():
    clf = MockEmotionClassifier()
    text = GeneratedText("tears of joy and sudden dread")
    assert clf.classify_emotions(text) == clf.classify_emotions(text)


def test_mock_classifier_truncates_before_counting():
    clf = MockEmotionClassifier()
    text = GeneratedText(" ".join(["word"] * 393) + " joy")
    scores = clf.classify_emotions(text).as_dict()
    assert scores[EmotionLabel.JOY] == pytest.approx(1 / 6)


def test_load_lexicons_merges_over_defaults(tmp_path):
    path = tmp_path / "lex.json"
    path.write_text(json.dumps({"joy": ["glee"], "FEAR": ["qualm"]}))
    lexicons = load_lexicons(path)
    assert lexicons[EmotionLabel.JOY] == ("glee",)
    assert lexicons[EmotionLabel.FEAR] == ("qualm",)
    assert lexicons[EmotionLabel.SADNESS] == DEFAULT_LEXICONS[EmotionLabel.SADNESS]


def test_load_lexicons_rejects_unknown_label(tmp_path):
    path = tmp_path / "lex.json"
    path.write_text(json.dumps({"boredom": ["yawn"]}))
    with pytest.raises(ValueError):
        load_lexicons(path)


# mock generator


def test_mock_generator_is_a_pure_function_of_inputs_and_seed():
    request = GenerationRequest("write a 3 sentence story", system="be brief")
    assert MockTextGenerator(seed=7).complete(request) == MockTextGenerator(seed=7).complete(request)


def test_mock_generator_seed_changes_output():
    request = GenerationRequest("write a 3 sentence story about rivers")
    outputs = {MockTextGenerator(seed=s).complete(request) for s in range(8)}
    assert len(outputs) > 1


def test_mock_generator_story_echoes_content_words():
    request = GenerationRequest("write a 3 sentence story about grief and laughter")
    story = MockTextGenerator(seed=1).complete(request)
    assert "grief" in story and "laughter" in story


def test_mock_generator_story_never_empty():
    request = GenerationRequest("a of to")  # stopwords only
    story = MockTextGenerator(seed=1).complete(request)
    assert story.strip()


def test_mock_scaffolding_is_disjoint_from_default_lexicons():
    # story filler must never move any emotion score on its own
    scaffold = " ".join(
        backends._STORY_OPENERS + backends._STORY_CLOSERS + backends._NEUTRAL_WORDS
    )
    scores = MockEmotionClassifier().classify_emotions(GeneratedText(scaffold))
    for value in scores.as_dict().values():
        assert value == pytest.approx(1 / 6)


def test_mock_generator_rewrite_inserts_one_token():
    body = "Mutation Prompt: rephrase the prompt\nPrompt: tell sea story\nNew Prompt:"
    out = MockTextGenerator(seed=3).complete(GenerationRequest(body)).split()
    # 3-token targets are never shortened, so the edit is exactly one insertion
    assert len(out) == 4
    assert [w for w in out if w in {"tell", "sea", "story"}] == ["tell", "sea", "story"]


def test_mock_generator_rewrite_caps_length():
    target = " ".join(f"w{i}" for i in range(40))
    body = f"Mutation Prompt: shorten it\nPrompt: {target}\nNew Prompt:"
    out = MockTextGenerator(seed=3).complete(GenerationRequest(body))
    assert len(out.split()) <= backends._MOCK_MAX_PROMPT_TOKENS


def test_mock_generator_merge_unions_parent_words():
    body = (
        'One prompt is: "Write a somber tale", another prompt is: "Sing a bright tale". '
        "Analyze the prompts and generate a better prompt."
    )
    out = MockTextGenerator(seed=5).complete(GenerationRequest(body)).split()
    union = {"write", "a", "somber", "tale", "sing", "bright"}
    assert out
    assert set(out) <= union
    assert len(out) == len(set(out))


# response parsing


def test_parse_classifier_response_flat_list():
    scores = parse_classifier_response(SIX_SCORES).as_dict()
    assert scores[EmotionLabel.SADNESS] == 0.5
    assert scores[EmotionLabel.SURPRISE] == 0.05


def test_parse_classifier_response_nested_list():
    assert parse_classifier_response([SIX_SCORES]) == parse_classifier_response(SIX_SCORES)


def test_parse_classifier_response_any_label_order_and_case():
    shuffled = [dict(entry, label=entry["label"].upper()) for entry in reversed(SIX_SCORES)]
    assert parse_classifier_response(shuffled) == parse_classifier_response(SIX_SCORES)


def test_parse_classifier_response_missing_emotion():
    with pytest.raises(ValueError):
        parse_classifier_response(SIX_SCORES[:5])


def test_parse_classifier_response_rejects_non_list():
    with pytest.raises(ValueError):
        parse_classifier_response({"label": "joy", "score": 1.0})


# live clients against a stub server


def test_ollama_client_request_shape():
    with StubServer([(200, {"response": "a story"})]) as server:
        client = OllamaClient(server.url + "/")  # trailing slash is tolerated
        reply = client.complete(GenerationRequest("tell me", system="be kind"))
    assert reply == "a story"
    path, _, body = server.seen[0]
    assert path == "/api/generate"
    assert body["model"] == "llama2"
    assert body["prompt"] == "tell me"
    assert body["system"] == "be kind"
    assert body["stream"] is False
    assert body["options"] == {"temperature": 0.7, "num_ctx": 512, "num_predict": 256}


def test_ollama_client_sends_stop_sequences():
    with StubServer([(200, {"response": "x"})]) as server:
        client = OllamaClient(server.url)
        client.complete(GenerationRequest("hi", stop_sequences=("### User:",)))
    _, _, body = server.seen[0]
    assert body["options"]["stop"] == ["### User:"]


def test_ollama_client_retries_then_succeeds():
    script = [(500, {}), (500, {}), (200, {"response": "ok"})]
    with StubServer(script) as server:
        policy = BackendPolicy(max_retries=2, backoff=0.0)
        assert OllamaClient(server.url, policy).complete(GenerationRequest("hi")) == "ok"
    assert len(server.seen) == 3


def test_ollama_client_exhausts_retries():
    with StubServer([(500, {})]) as server:
        policy = BackendPolicy(max_retries=1, backoff=0.0)
        with pytest.raises(BackendError, match="2 attempts"):
            OllamaClient(server.url, policy).complete(GenerationRequest("hi"))
    assert len(server.seen) == 2


def test_ollama_client_rejects_reply_without_response_field():
    with StubServer([(200, {"unexpected": 1})]) as server:
        policy = BackendPolicy(max_retries=0, backoff=0.0)
        with pytest.raises(BackendError):
            OllamaClient(server.url, policy).complete(GenerationRequest("hi"))


def test_retry_backoff_doubles(monkeypatch):
    calls = []
    delays = []

    def refused(*args, **kwargs):
        calls.append(args)
        raise requests.ConnectionError("connection refused")

    monkeypatch.setattr(backends.requests, "post", refused)
    monkeypatch.setattr(backends.time, "sleep", delays.append)
    policy = BackendPolicy(max_retries=3, backoff=0.1)
    with pytest.raises(BackendError, match="4 attempts"):
        OllamaClient("http://127.0.0.1:1", policy).complete(GenerationRequest("hi"))
    assert len(calls) == 4
    assert delays == [0.1, 0.2, 0.4]


def test_zero_backoff_never_sleeps(monkeypatch):
    delays = []

    def refused(*args, **kwargs):
        raise requests.ConnectionError("connection refused")

    monkeypatch.setattr(backends.requests, "post", refused)
    monkeypatch.setattr(backends.time, "sleep", delays.append)
    policy = BackendPolicy(max_retries=2, backoff=0.0)
    with pytest.raises(BackendError):
        OllamaClient("http://127.0.0.1:1", policy).complete(GenerationRequest("hi"))
    assert delays == []


def test_classifier_client_sends_token_and_truncates():
    with StubServer([(200, SIX_SCORES)]) as server:
        client = HttpEmotionClassifier(server.url + "/classify", token="sekrit")
        text = GeneratedText(" ".join(["word"] * 500))
        scores = client.classify_emotions(text)
    assert scores.as_dict()[EmotionLabel.SADNESS] == 0.5
    path, headers, body = server.seen[0]
    assert path == "/classify"
    assert headers["Authorization"] == "Bearer sekrit"
    assert len(body["inputs"].split()) == 393


def test_classifier_client_omits_header_without_token():
    with StubServer([(200, SIX_SCORES)]) as server:
        HttpEmotionClassifier(server.url).classify_emotions(GeneratedText("hi"))
    _, headers, _ = server.seen[0]
    assert "Authorization" not in headers


def test_classifier_client_parses_nested_reply():
    with StubServer([(200, [SIX_SCORES])]) as server:
        scores = HttpEmotionClassifier(server.url).classify_emotions(GeneratedText("hi"))
    assert scores.as_dict()[EmotionLabel.JOY] == 0.2


def test_concurrency_cap_is_respected():
    with StubServer([(200, {"response": "ok"})], delay=0.15) as server:
        policy = BackendPolicy(max_concurrent_requests=2, max_retries=0)
        client = OllamaClient(server.url, policy)
        results = []

        def worker():
            results.append(client.complete(GenerationRequest("hi")))

        threads = [threading.Thread(target=worker) for _ in range(6)]
        for thread in threads:
            thread.start()
        for thread in threads:
            thread.join()
    assert results == ["ok"] * 6
    assert server.max_inflight <= 2
