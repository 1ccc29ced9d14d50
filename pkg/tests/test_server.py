import httpx
import numpy as np
import pytest

from src.common import RetryPolicy
from src.core.reconstruct import reconstruct_full
from src.errors import ProbeTransportError, UnknownTokenError, UnsupportedPolicyError
from src.mocknet.app import create_app
from src.mocknet.model import MockModel, hidden_state, logits
from src.requests.score_client import HttpScoreClient
from src.schemas import DisclosureKind, DisclosurePolicy, ScoreRequest


def _client(model: MockModel, **kwargs) -> HttpScoreClient:
    transport = httpx.ASGITransport(app=create_app(model))
    return HttpScoreClient("http://mock", transport=transport, **kwargs)


async def test_health_reports_dims_and_policy(make_config):
    cfg = make_config(policy=DisclosurePolicy(kind=DisclosureKind.TOP_K, k=5))
    transport = httpx.ASGITransport(app=create_app(MockModel(cfg)))

    async with httpx.AsyncClient(transport=transport, base_url="http://mock") as client:
        resp = await client.get("/health/ok")

    assert resp.status_code == 200
    body = resp.json()
    assert body["vocab_size"] == 512
    assert body["hidden_size"] == 32
    assert body["policy"] == {"kind": "top-k", "k": 5, "supports_bias": True}


async def test_logits_survive_json_bit_exactly(make_config):
    cfg = make_config()
    async with _client(MockModel(cfg)) as client:
        response = await client.score(ScoreRequest(prompt="exact", positions=2))

    expected = logits(cfg, hidden_state(cfg, "exact", 1))
    assert np.array_equal(np.asarray(response.positions[1].logits), expected)
    assert response.policy is None


async def test_reconstruction_over_http(make_config):
    policy = DisclosurePolicy(kind=DisclosureKind.TOP_K, k=8)
    cfg = make_config(vocab_size=96, hidden_size=8, policy=policy)
    model = MockModel(cfg)

    async with _client(model) as client:
        vector = await reconstruct_full(client, "over http", policy)

    truth = logits(cfg, hidden_state(cfg, "over http", 0))
    assert np.max(np.abs(vector.values - (truth - truth.mean()))) <= 1e-8
    assert client.request_count == model.request_count


async def test_unsupported_bias_maps_to_domain_error(make_config):
    cfg = make_config(policy=DisclosurePolicy(kind=DisclosureKind.TOP1, supports_bias=False))

    async with _client(MockModel(cfg)) as client:
        with pytest.raises(UnsupportedPolicyError):
            await client.score(ScoreRequest.biased("p", {3: 30.0}))


async def test_unknown_token_maps_to_domain_error(make_config):
    async with _client(MockModel(make_config())) as client:
        with pytest.raises(UnknownTokenError):
            await client.score(ScoreRequest.biased("p", {10_000: 1.0}))


async def test_malformed_request_is_422(make_config):
    transport = httpx.ASGITransport(app=create_app(MockModel(make_config())))

    async with httpx.AsyncClient(transport=transport, base_url="http://mock") as client:
        resp = await client.post("/v1/score", json={"prompt": "p", "positions": 0})

    assert resp.status_code == 422


async def test_server_errors_are_retried(fast_retries):
    calls = []

    def handler(request: httpx.Request) -> httpx.Response:
        calls.append(request)
        if len(calls) == 1:
            return httpx.Response(503)
        return httpx.Response(200, json={"vocab_size": 3, "positions": [{"logits": [1.0, 2.0, 3.0]}]})

    async with HttpScoreClient("http://flaky", transport=httpx.MockTransport(handler)) as client:
        response = await client.score(ScoreRequest(prompt="p"))

    assert len(calls) == 2
    assert response.positions[0].logits == [1.0, 2.0, 3.0]


async def test_unreachable_endpoint_raises_transport_error(fast_retries):
    def handler(request: httpx.Request) -> httpx.Response:
        raise httpx.ConnectError("connection refused", request=request)

    async with HttpScoreClient("http://down", transport=httpx.MockTransport(handler)) as client:
        with pytest.raises(ProbeTransportError) as err:
            await client.score(ScoreRequest(prompt="p"))

    assert err.value.retries == 2


def test_retry_policy_delays_follow_backoff():
    policy = RetryPolicy(retries=4, backoff=2.0, jitter=0.0)

    assert list(policy.delays()) == [2.0, 4.0, 8.0]
    assert list(RetryPolicy(retries=1).delays()) == []
