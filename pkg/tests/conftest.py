from collections.abc import Callable
from pathlib import Path

import numpy as np
import pytest

from src.core.fingerprint_io import save_fingerprint
from src.core.subspace import Fingerprint
from src.core.vectors import ProbeVector
from src.mocknet.model import AttackConfig, AttackKind, MockModel, MockModelConfig, victim_weights
from src.probe.collect import vectors_from_response
from src.schemas import DisclosureKind, DisclosurePolicy, ScoreRequest
from src.settings import settings

VOCAB = 512
HIDDEN = 32

FULL_LOGITS = DisclosurePolicy(kind=DisclosureKind.FULL_LOGITS)
FULL_PROBS = DisclosurePolicy(kind=DisclosureKind.FULL_PROBS)


def mock_config(
    kind: AttackKind = AttackKind.NONE,
    *,
    vocab_size: int = VOCAB,
    hidden_size: int = HIDDEN,
    policy: DisclosurePolicy = FULL_LOGITS,
    seed: int = 7,
    h_prime: int | None = None,
    **attack: int | float,
) -> MockModelConfig:
    return MockModelConfig(
        seed=seed,
        vocab_size=vocab_size,
        hidden_size=hidden_size,
        attack=AttackConfig(kind=kind, seed=11, hidden_size=h_prime, **attack),
        disclosure=policy,
    )


def victim_fingerprint(cfg: MockModelConfig) -> Fingerprint:
    return Fingerprint(
        model_id="victim", weights=victim_weights(cfg.seed, cfg.vocab_size, cfg.hidden_size)
    )


def direct_samples(cfg: MockModelConfig, n: int, positions: int = 8) -> list[ProbeVector]:
    """n векторов полного раскрытия прямо из mock-модели, без клиента."""
    model = MockModel(cfg)
    vectors: list[ProbeVector] = []
    prompt_index = 0
    while len(vectors) < n:
        response = model.score(ScoreRequest(prompt=f"prompt {prompt_index}", positions=positions))
        vectors.extend(vectors_from_response(response, cfg.disclosure, f"q{prompt_index}"))
        prompt_index += 1
    return vectors[:n]


@pytest.fixture
def make_config() -> Callable[..., MockModelConfig]:
    return mock_config


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240601)


@pytest.fixture
def victim_config() -> MockModelConfig:
    return mock_config()


@pytest.fixture
def fingerprint(victim_config: MockModelConfig) -> Fingerprint:
    return victim_fingerprint(victim_config)


@pytest.fixture
def fingerprint_file(tmp_path: Path, fingerprint: Fingerprint) -> Path:
    path = tmp_path / "victim.llmfp"
    save_fingerprint(fingerprint, path)
    return path


@pytest.fixture
def queries_file(tmp_path: Path) -> Path:
    path = tmp_path / "queries.txt"
    path.write_text("\n".join(f"prompt number {i}" for i in range(50)) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def fast_retries(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setattr(settings, "retries", 2)
    monkeypatch.setattr(settings, "retry_backoff", 0.0)
    monkeypatch.setattr(settings, "retry_jitter", 0.0)


@pytest.fixture
def samples_of() -> Callable[..., list[ProbeVector]]:
    return direct_samples


@pytest.fixture
def fingerprint_of() -> Callable[[MockModelConfig], Fingerprint]:
    return victim_fingerprint
