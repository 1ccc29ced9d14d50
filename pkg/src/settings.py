"""Модуль определения переменных проекта.

Единая таблица значений по умолчанию: bias, N, пороги, размеры mock-модели.
Любое значение переопределяется переменной окружения с префиксом LLMFP_
(например LLMFP_BIAS=20) или строкой в .env.
"""

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Определение системных переменных."""

    model_config = SettingsConfigDict(
        env_prefix="LLMFP_",
        env_file=".env",
        extra="ignore",
        case_sensitive=False,
        env_file_encoding="utf-8",
    )

    # Восстановление распределений через logit bias
    bias: float = 30.0
    # без logprob в выдаче top-1 точность обращения падает как e^b
    top1_bias_without_logprob: float = 10.0
    clr_floor: float = 1e-300
    simplex_tolerance: float = 1e-6

    # Сбор проб
    n_min: int = Field(300, ge=1)
    positions: int = Field(8, ge=1)
    max_in_flight: int = Field(8, ge=1)

    # Транспорт
    retries: int = Field(3, ge=1)
    retry_backoff: float = 2.0
    retry_jitter: float = 1.0
    http_timeout: float = 10.0

    # Проверка принадлежности
    threshold_direct: float = 1e-6
    threshold_reconstructed: float = 1e-5
    derived_ratio: float = 0.1

    # Mock-модель
    lora_scale: float = 0.5
    mock_vocab_size: int = 4096
    mock_hidden_size: int = 64
    mock_host: str = "127.0.0.1"
    mock_port: int = 8000


settings = Settings()
