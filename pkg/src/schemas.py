# schemas.py

"""Модели протокола POST /v1/score и политики раскрытия.

Запрос:  {"prompt": str, "positions": int, "logit_bias": {"<token_id>": float}, "echo_policy": bool}
Ответ:   {"vocab_size": int, "positions": [{"logits": [...]} | {"probs": [...]} | {"top": [{"id", "p", "logprob"}]}],
          "policy": {...}}  # policy только при echo_policy=true

Числа с плавающей точкой сериализуются кратчайшим представлением,
которое читается обратно бит-в-бит (json/repr).
"""

from enum import Enum
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .core.vectors import BasisMode, VectorSource


class DisclosureKind(str, Enum):
    """Что раскрывает API подозреваемой модели."""

    FULL_LOGITS = "full-logits"
    FULL_PROBS = "full-probs"
    TOP_K = "top-k"
    TOP1 = "top-1"


class DisclosurePolicy(BaseModel):
    """Политика раскрытия: вид ответа и поддержка logit bias."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: DisclosureKind
    k: int | None = None
    supports_bias: bool = True

    @model_validator(mode="after")
    def check_k(self) -> "DisclosurePolicy":
        if self.kind is DisclosureKind.TOP_K and (self.k is None or self.k < 1):
            raise ValueError("политика top-k требует k >= 1")
        return self

    @property
    def is_restricted(self) -> bool:
        """Раскрывается только часть распределения."""
        return self.kind in (DisclosureKind.TOP_K, DisclosureKind.TOP1)

    @property
    def width(self) -> int | None:
        """Число раскрываемых токенов (None для полного раскрытия)."""
        if self.kind is DisclosureKind.TOP1:
            return 1
        if self.kind is DisclosureKind.TOP_K:
            return self.k
        return None

    @property
    def mode(self) -> BasisMode:
        """Режим проб: logits только для full-logits."""
        return BasisMode.LOGITS if self.kind is DisclosureKind.FULL_LOGITS else BasisMode.PROBABILITY

    @property
    def source(self) -> VectorSource:
        """Путь восстановления векторов при этой политике."""
        if self.width == 1:
            return VectorSource.TOP1_RECOVERED
        if self.kind is DisclosureKind.TOP_K:
            return VectorSource.TOP_K_RECOVERED
        return VectorSource.DIRECT

    def matches(self, other: "DisclosurePolicy") -> bool:
        """Совпадает ли вид раскрытия (без учета supports_bias); top-k(1) равно top-1."""
        if self.is_restricted or other.is_restricted:
            return self.is_restricted == other.is_restricted and self.width == other.width
        return self.kind is other.kind

    def label(self) -> str:
        """Короткая подпись для логов и отчетов."""
        return f"{self.kind.value}({self.k})" if self.kind is DisclosureKind.TOP_K else self.kind.value


class ScoreRequest(BaseModel):
    """Запрос к endpoint подозреваемой модели."""

    prompt: str
    positions: int = Field(1, ge=1, le=256)
    logit_bias: dict[str, float] = Field(default_factory=dict)
    echo_policy: bool = False

    @classmethod
    def biased(
        cls, prompt: str, bias: dict[int, float], positions: int = 1, echo_policy: bool = True
    ) -> "ScoreRequest":
        """Строит запрос из словаря {token_id: bias}."""
        return cls(
            prompt=prompt,
            positions=positions,
            logit_bias={str(token): value for token, value in bias.items()},
            echo_policy=echo_policy,
        )


class TopEntry(BaseModel):
    """Один раскрытый токен: id, вероятность и (если есть) log-вероятность."""

    id: int = Field(ge=0)
    p: float
    logprob: float | None = None


class PositionPayload(BaseModel):
    """Ответ для одной позиции: ровно одно из полей logits, probs, top."""

    logits: list[float] | None = None
    probs: list[float] | None = None
    top: list[TopEntry] | None = None

    @model_validator(mode="before")
    @classmethod
    def exactly_one(cls, values: Any) -> Any:
        if isinstance(values, dict):
            present = [key for key in ("logits", "probs", "top") if values.get(key) is not None]
            if len(present) != 1:
                raise ValueError(f"позиция должна содержать ровно одно из logits/probs/top, найдено {present}")
        return values


class ScoreResponse(BaseModel):
    """Ответ endpoint."""

    vocab_size: int = Field(ge=1)
    positions: list[PositionPayload]
    policy: DisclosurePolicy | None = None

    @field_validator("positions")
    @classmethod
    def non_empty(cls, value: list[PositionPayload]) -> list[PositionPayload]:
        if not value:
            raise ValueError("ответ не содержит ни одной позиции")
        return value
