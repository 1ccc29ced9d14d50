import numpy as np
import pytest
from pydantic import ValidationError

from src.errors import ConfigurationError, UnknownTokenError, UnsupportedPolicyError
from src.mocknet.config import load_mock_config, parse_mock_config
from src.mocknet.model import (
    AttackKind,
    MockModel,
    hidden_state,
    served_weights,
    victim_weights,
)
from src.schemas import DisclosureKind, DisclosurePolicy, ScoreRequest


def test_responses_are_deterministic(make_config):
    cfg = make_config()
    request = ScoreRequest(prompt="same prompt", positions=3)

    first = MockModel(cfg).score(request)
    second = MockModel(cfg).score(request)

    assert first == second
    assert len(first.positions) == 3
    assert first.positions[0].logits != first.positions[1].logits


def test_victim_weights_depend_only_on_seed_and_dims():
    a = victim_weights(3, 100, 8)
    b = victim_weights(3, 100, 8)
    c = victim_weights(4, 100, 8)

    assert a is b
    assert not np.array_equal(a, c)
    assert not a.flags.writeable


def test_intermediate_finetune_keeps_last_layer(make_config):
    victim = make_config()
    tuned = make_config(AttackKind.INTERMEDIATE_FINETUNE)

    assert np.array_equal(served_weights(tuned), served_weights(victim))
    assert not np.array_equal(hidden_state(tuned, "p", 0), hidden_state(victim, "p", 0))


def test_hidden_state_is_standard_normal(make_config):
    cfg = make_config(vocab_size=64, hidden_size=8)
    z = np.stack([hidden_state(cfg, f"prompt-{i}", i % 3) for i in range(10_000)])

    assert abs(z.mean()) < 0.05
    assert abs(z.var() - 1.0) < 0.1


@pytest.mark.parametrize("rank", [1, 4, 16])
def test_lora_update_has_requested_rank(make_config, rank):
    victim = make_config()
    lora = make_config(AttackKind.LAST_LAYER_LORA, rank=rank)

    delta = served_weights(lora) - served_weights(victim)

    assert np.linalg.matrix_rank(delta) == rank


def test_independent_model_may_change_hidden_size(make_config):
    cfg = make_config(AttackKind.INDEPENDENT, hidden_size=32)
    wide = make_config(AttackKind.INDEPENDENT, hidden_size=32, h_prime=48)

    assert served_weights(cfg).shape == (512, 32)
    assert served_weights(wide).shape == (512, 48)
    assert hidden_state(wide, "p", 0).shape == (48,)


def test_config_validation(make_config):
    with pytest.raises(ValidationError):
        make_config(vocab_size=16, hidden_size=16)
    with pytest.raises(ValidationError):
        make_config(AttackKind.LAST_LAYER_LORA, rank=64)
    with pytest.raises(ValidationError):
        make_config(AttackKind.LAST_LAYER_LORA)


def test_top_k_disclosure_sorted_with_logprobs(make_config):
    cfg = make_config(policy=DisclosurePolicy(kind=DisclosureKind.TOP_K, k=5))

    payload = MockModel(cfg).score(ScoreRequest(prompt="p")).positions[0]

    assert payload.logits is None and payload.probs is None
    assert payload.top is not None and len(payload.top) == 5
    ps = [entry.p for entry in payload.top]
    assert ps == sorted(ps, reverse=True)
    for entry in payload.top:
        assert entry.logprob is not None
        assert np.isclose(np.exp(entry.logprob), entry.p, rtol=1e-12)


def test_bias_moves_token_to_top(make_config):
    cfg = make_config(policy=DisclosurePolicy(kind=DisclosureKind.TOP1))
    model = MockModel(cfg)

    response = model.score(ScoreRequest.biased("p", {123: 30.0}))

    assert response.positions[0].top[0].id == 123
    assert response.policy == cfg.disclosure


def test_full_probs_sum_to_one(make_config):
    cfg = make_config(policy=DisclosurePolicy(kind=DisclosureKind.FULL_PROBS))

    probs = MockModel(cfg).score(ScoreRequest(prompt="p")).positions[0].probs

    assert probs is not None
    assert abs(sum(probs) - 1.0) < 1e-12


def test_unknown_token_is_rejected(make_config):
    model = MockModel(make_config())

    with pytest.raises(UnknownTokenError):
        model.score(ScoreRequest(prompt="p", logit_bias={"512": 1.0}))
    with pytest.raises(UnknownTokenError):
        model.score(ScoreRequest(prompt="p", logit_bias={"abc": 1.0}))
    assert model.request_count == 0


def test_bias_unsupported(make_config):
    policy = DisclosurePolicy(kind=DisclosureKind.TOP1, supports_bias=False)
    model = MockModel(make_config(policy=policy))

    with pytest.raises(UnsupportedPolicyError):
        model.score(ScoreRequest.biased("p", {1: 30.0}))


def test_request_log(make_config):
    model = MockModel(make_config())
    model.score(ScoreRequest(prompt="a"))
    model.score(ScoreRequest(prompt="b"))

    assert [r.prompt for r in model.request_log] == ["a", "b"]
    model.reset_log()
    assert model.request_count == 0


def test_config_file(tmp_path):
    path = tmp_path / "mock.conf"
    path.write_text(
        "# lora suspect\n"
        "seed = 7\n"
        "vocab_size = 1024\n"
        "hidden_size = 64\n"
        "attack.kind = last-layer-lora\n"
        "attack.rank = 16\n"
        "disclosure.kind = top-k\n"
        "disclosure.k = 5\n"
        "port = 9001\n",
        encoding="utf-8",
    )

    server = load_mock_config(path)

    assert server.port == 9001
    assert server.model.vocab_size == 1024
    assert server.model.attack.kind is AttackKind.LAST_LAYER_LORA
    assert server.model.attack.rank == 16
    assert server.model.disclosure == DisclosurePolicy(kind=DisclosureKind.TOP_K, k=5)


def test_config_rejects_unknown_keys_and_values(tmp_path):
    with pytest.raises(ConfigurationError):
        parse_mock_config({"attack.knid": "none"})
    with pytest.raises(ConfigurationError):
        parse_mock_config({"disclosure.kind": "top-3"})
    with pytest.raises(ConfigurationError):
        load_mock_config(tmp_path / "missing.conf")
