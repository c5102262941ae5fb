"""RemoteBackend protocol behavior with a mocked transport (no sockets)."""

import types

import numpy as np
import pytest

from taxalign.errors import GatewayError
from taxalign.gateway import CompletionRequest, RemoteBackend


class FakeResponse:
    def __init__(self, status_code=200, payload=None, text=""):
        self.status_code = status_code
        self._payload = payload if payload is not None else {}
        self.text = text

    def json(self):
        return self._payload


class FakeRequestException(Exception):
    """Stands in for requests.RequestException (transport failures only)."""


class FakeRequests:
    def __init__(self, outcomes):
        self.outcomes = list(outcomes)
        self.calls = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.calls.append({"url": url, "json": json, "headers": headers})
        outcome = self.outcomes.pop(0)
        if isinstance(outcome, Exception):
            raise outcome
        return outcome


@pytest.fixture()
def patch_requests(monkeypatch):
    def apply(outcomes):
        fake = FakeRequests(outcomes)
        module = types.SimpleNamespace(
            post=fake.post, RequestException=FakeRequestException
        )
        monkeypatch.setitem(__import__("sys").modules, "requests", module)
        return fake

    return apply


def request():
    return CompletionRequest(template_id="relevance_filter", temperature=0.2)


COMPLETION = FakeResponse(payload={"choices": [{"message": {"content": "yes"}}]})


class TestRemoteCompletion:
    def test_happy_path_payload_shape(self, patch_requests):
        fake = patch_requests([COMPLETION])
        backend = RemoteBackend("http://host/v1", api_key="tok", backoff=0)
        text = backend.complete("PROMPT", request(), "judge-1")
        assert text == "yes"
        call = fake.calls[0]
        assert call["url"] == "http://host/v1/chat/completions"
        assert call["json"] == {
            "model": "judge-1",
            "messages": [{"role": "user", "content": "PROMPT"}],
            "temperature": 0.2,
        }
        assert call["headers"]["Authorization"] == "Bearer tok"

    def test_effort_hint_forwarded(self, patch_requests):
        fake = patch_requests([COMPLETION])
        backend = RemoteBackend("http://host", backoff=0)
        req = CompletionRequest(template_id="topic_merging", temperature=0, effort_hint="low")
        backend.complete("P", req, "m")
        assert fake.calls[0]["json"]["reasoning_effort"] == "low"

    def test_5xx_retried_then_succeeds(self, patch_requests):
        fake = patch_requests([FakeResponse(503), FakeResponse(502), COMPLETION])
        backend = RemoteBackend("http://host", backoff=0)
        assert backend.complete("P", request(), "m") == "yes"
        assert len(fake.calls) == 3

    def test_transport_error_exhausts_three_attempts(self, patch_requests):
        fake = patch_requests([FakeRequestException("down")] * 3)
        backend = RemoteBackend("http://host", backoff=0)
        with pytest.raises(GatewayError, match="3 attempts"):
            backend.complete("P", request(), "m")
        assert len(fake.calls) == 3

    def test_4xx_fails_immediately_without_retry(self, patch_requests):
        fake = patch_requests([FakeResponse(401, text="no auth")])
        backend = RemoteBackend("http://host", backoff=0)
        with pytest.raises(GatewayError, match="401"):
            backend.complete("P", request(), "m")
        assert len(fake.calls) == 1

    def test_malformed_completion_payload(self, patch_requests):
        patch_requests([FakeResponse(payload={"weird": True})])
        backend = RemoteBackend("http://host", backoff=0)
        with pytest.raises(GatewayError, match="malformed completion"):
            backend.complete("P", request(), "m")

    def test_base_url_required(self):
        with pytest.raises(Exception):
            RemoteBackend("")


class TestRemoteEmbeddings:
    def test_embedding_payload_shape(self, patch_requests):
        fake = patch_requests(
            [FakeResponse(payload={"data": [{"embedding": [1.0, 0.0]}, {"embedding": [0.0, 2.0]}]})]
        )
        backend = RemoteBackend("http://host", backoff=0)
        rows = backend.embed(["a", "b"], "embedder-1")
        assert fake.calls[0]["url"] == "http://host/embeddings"
        assert fake.calls[0]["json"] == {"model": "embedder-1", "input": ["a", "b"]}
        assert np.array_equal(rows, np.array([[1.0, 0.0], [0.0, 2.0]]))

    def test_malformed_embedding_payload(self, patch_requests):
        patch_requests([FakeResponse(payload={"data": "nope"})])
        backend = RemoteBackend("http://host", backoff=0)
        with pytest.raises(GatewayError, match="malformed embedding"):
            backend.embed(["a"], "m")
