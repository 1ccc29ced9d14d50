"""Детерминированная синтетическая LLM: скрытое состояние -> последний линейный слой.

Скрытые состояния z — гауссовские векторы из генератора, засеянного
(seed, hash(prompt), position). Logits s = W z. Атаки моделируют угрозы
из сценария PEFT:

- intermediate-finetune: меняются промежуточные слои (другой генератор z), W тот же;
- last-layer-lora: W_N = W + alpha * A B, A (|V| x r), B (r x h);
- independent: независимо засеянная W_ind, возможно со своей h'.

Все ответы — чистая функция (конфигурация, запрос); журнал запросов нужен
только для подсчета запросов в тестах.
"""

import hashlib
import threading
from enum import Enum
from functools import lru_cache

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..core.vectors import FloatArray
from ..errors import UnknownTokenError, UnsupportedPolicyError
from ..llmfp_logging import get_logger
from ..schemas import (
    DisclosureKind,
    DisclosurePolicy,
    PositionPayload,
    ScoreRequest,
    ScoreResponse,
    TopEntry,
)
from ..settings import settings

logger = get_logger()

SEED_MAX = 2**64 - 1

# Метки потоков SeedSequence: один seed, независимые генераторы
_TAG_VICTIM = 1
_TAG_HIDDEN = 2
_TAG_FINETUNE = 3
_TAG_LORA_A = 4
_TAG_LORA_B = 5
_TAG_INDEPENDENT = 6
_TAG_INDEPENDENT_HIDDEN = 7


class AttackKind(str, Enum):
    """Вид модификации украденной модели."""

    NONE = "none"
    INTERMEDIATE_FINETUNE = "intermediate-finetune"
    LAST_LAYER_LORA = "last-layer-lora"
    INDEPENDENT = "independent"


class AttackConfig(BaseModel):
    """Параметры атаки. rank и scale используются только LoRA, hidden_size — independent."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: AttackKind = AttackKind.NONE
    seed: int = Field(1, ge=0, le=SEED_MAX)
    rank: int | None = Field(None, ge=1)
    scale: float = Field(default_factory=lambda: settings.lora_scale)
    hidden_size: int | None = Field(None, ge=1)


class MockModelConfig(BaseModel):
    """Конфигурация mock-модели."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    seed: int = Field(0, ge=0, le=SEED_MAX)
    vocab_size: int = Field(default_factory=lambda: settings.mock_vocab_size, ge=2)
    hidden_size: int = Field(default_factory=lambda: settings.mock_hidden_size, ge=1)
    attack: AttackConfig = AttackConfig()
    disclosure: DisclosurePolicy = DisclosurePolicy(kind=DisclosureKind.FULL_LOGITS)

    @model_validator(mode="after")
    def check_dims(self) -> "MockModelConfig":
        if self.vocab_size <= self.hidden_size:
            raise ValueError(f"ожидается |V| > h, получено {self.vocab_size} <= {self.hidden_size}")
        if self.attack.kind is AttackKind.LAST_LAYER_LORA:
            if self.attack.rank is None or self.attack.rank > self.hidden_size:
                raise ValueError(f"LoRA требует 1 <= rank <= h={self.hidden_size}, получено {self.attack.rank}")
        h_ind = self.attack.hidden_size
        if self.attack.kind is AttackKind.INDEPENDENT and h_ind is not None and h_ind >= self.vocab_size:
            raise ValueError(f"h' независимой модели должна быть меньше |V|, получено {h_ind}")
        return self

    @property
    def effective_hidden_size(self) -> int:
        """Размерность z на стороне сервера."""
        if self.attack.kind is AttackKind.INDEPENDENT and self.attack.hidden_size is not None:
            return self.attack.hidden_size
        return self.hidden_size


def prompt_hash(prompt: str) -> int:
    """64-битный хеш промпта (первые 8 байт SHA-256)."""
    return int.from_bytes(hashlib.sha256(prompt.encode("utf-8")).digest()[:8], "little")


# -------------------- Веса --------------------
@lru_cache(maxsize=16)
def victim_weights(seed: int, vocab_size: int, hidden_size: int) -> FloatArray:
    """Веса W последнего слоя модели-жертвы, элементы N(0, 1/h)."""
    rng = np.random.default_rng([seed, _TAG_VICTIM])
    weights = rng.normal(0.0, 1.0 / np.sqrt(hidden_size), size=(vocab_size, hidden_size))
    weights.setflags(write=False)
    return weights


@lru_cache(maxsize=16)
def lora_factors(cfg: MockModelConfig) -> tuple[FloatArray, FloatArray]:
    """Факторы A (|V| x r) и B (r x h); A B z имеет элементы порядка 1."""
    rank = cfg.attack.rank or 1
    rng_a = np.random.default_rng([cfg.attack.seed, _TAG_LORA_A])
    rng_b = np.random.default_rng([cfg.attack.seed, _TAG_LORA_B])
    a = rng_a.normal(0.0, 1.0 / np.sqrt(rank), size=(cfg.vocab_size, rank))
    b = rng_b.normal(0.0, 1.0 / np.sqrt(cfg.hidden_size), size=(rank, cfg.hidden_size))
    return a, b


@lru_cache(maxsize=16)
def served_weights(cfg: MockModelConfig) -> FloatArray:
    """Матрица последнего слоя, которую реально обслуживает сервер."""
    kind = cfg.attack.kind
    if kind is AttackKind.LAST_LAYER_LORA:
        a, b = lora_factors(cfg)
        weights = victim_weights(cfg.seed, cfg.vocab_size, cfg.hidden_size) + cfg.attack.scale * (a @ b)
    elif kind is AttackKind.INDEPENDENT:
        h_ind = cfg.effective_hidden_size
        rng = np.random.default_rng([cfg.attack.seed, _TAG_INDEPENDENT])
        weights = rng.normal(0.0, 1.0 / np.sqrt(h_ind), size=(cfg.vocab_size, h_ind))
    else:
        return victim_weights(cfg.seed, cfg.vocab_size, cfg.hidden_size)
    weights.setflags(write=False)
    return weights


# -------------------- Операции модели --------------------
def hidden_state(cfg: MockModelConfig, prompt: str, position: int) -> FloatArray:
    """Скрытое состояние z для (prompt, position), элементы N(0, 1)."""
    kind = cfg.attack.kind
    if kind is AttackKind.INTERMEDIATE_FINETUNE:
        entropy = [cfg.seed, _TAG_FINETUNE, cfg.attack.seed, prompt_hash(prompt), position]
    elif kind is AttackKind.INDEPENDENT:
        entropy = [cfg.attack.seed, _TAG_INDEPENDENT_HIDDEN, prompt_hash(prompt), position]
    else:
        entropy = [cfg.seed, _TAG_HIDDEN, prompt_hash(prompt), position]
    return np.random.default_rng(entropy).standard_normal(cfg.effective_hidden_size)


def logits(cfg: MockModelConfig, z: FloatArray) -> FloatArray:
    """Logits s = W z для обслуживаемой матрицы."""
    weights = served_weights(cfg)
    if z.shape != (weights.shape[1],):
        raise ValueError(f"ожидается z длины {weights.shape[1]}, получено {z.shape}")
    return weights @ z


def log_softmax(values: FloatArray) -> tuple[FloatArray, FloatArray]:
    """Возвращает (probs, logprobs) с вычитанием максимума.

    Сумма остальных слагаемых идет через log1p, поэтому log-вероятность
    максимального токена сохраняет полную относительную точность даже при
    вероятности, неотличимой от 1.
    """
    top = int(np.argmax(values))
    shifted = values - values[top]
    ex = np.exp(shifted)
    ex[top] = 0.0
    rest = float(ex.sum())
    ex[top] = 1.0
    logprobs = shifted - np.log1p(rest)
    probs = ex / (1.0 + rest)
    return probs, logprobs


def disclose(
    cfg: MockModelConfig, raw_logits: FloatArray, bias: dict[int, float]
) -> PositionPayload:
    """Применяет logit bias и раскрывает ответ по политике конфигурации."""
    biased = raw_logits.copy()
    for token, value in bias.items():
        if not 0 <= token < cfg.vocab_size:
            raise UnknownTokenError(f"неизвестный id токена {token} при |V|={cfg.vocab_size}")
        biased[token] += value

    policy = cfg.disclosure
    if policy.kind is DisclosureKind.FULL_LOGITS:
        return PositionPayload(logits=biased.tolist())

    probs, logprobs = log_softmax(biased)
    if policy.kind is DisclosureKind.FULL_PROBS:
        return PositionPayload(probs=probs.tolist())

    width = min(policy.width or 1, cfg.vocab_size)
    order = np.argsort(-biased, kind="stable")[:width]
    return PositionPayload(
        top=[
            TopEntry(id=int(i), p=float(probs[i]), logprob=float(logprobs[i]))
            for i in order
        ]
    )


def parse_bias(cfg: MockModelConfig, logit_bias: dict[str, float]) -> dict[int, float]:
    """Ключи logit_bias — строковые id токенов."""
    parsed: dict[int, float] = {}
    for key, value in logit_bias.items():
        try:
            token = int(key)
        except ValueError:
            raise UnknownTokenError(f"id токена должен быть целым, получено '{key}'") from None
        if not 0 <= token < cfg.vocab_size:
            raise UnknownTokenError(f"неизвестный id токена {token} при |V|={cfg.vocab_size}")
        parsed[token] = float(value)
    return parsed


class MockModel:
    """Mock-модель с журналом запросов."""

    def __init__(self, cfg: MockModelConfig) -> None:
        """Инициализация; веса строятся лениво и кешируются."""
        self.cfg = cfg
        self._lock = threading.Lock()
        self._request_log: list[ScoreRequest] = []

    @property
    def request_log(self) -> list[ScoreRequest]:
        """Копия журнала запросов."""
        with self._lock:
            return list(self._request_log)

    @property
    def request_count(self) -> int:
        """Число обслуженных запросов."""
        with self._lock:
            return len(self._request_log)

    def reset_log(self) -> None:
        """Очищает журнал запросов."""
        with self._lock:
            self._request_log.clear()

    def score(self, request: ScoreRequest) -> ScoreResponse:
        """Обрабатывает один запрос /v1/score."""
        bias = parse_bias(self.cfg, request.logit_bias)
        if bias and not self.cfg.disclosure.supports_bias:
            raise UnsupportedPolicyError("endpoint не поддерживает logit_bias")
        with self._lock:
            self._request_log.append(request)

        positions = [
            disclose(self.cfg, logits(self.cfg, hidden_state(self.cfg, request.prompt, pos)), bias)
            for pos in range(request.positions)
        ]
        return ScoreResponse(
            vocab_size=self.cfg.vocab_size,
            positions=positions,
            policy=self.cfg.disclosure if request.echo_policy else None,
        )
