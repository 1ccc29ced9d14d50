"""Файл конфигурации mock-endpoint: строки `key = value`, комментарии `#`.

Пример:

    seed = 7
    vocab_size = 4096
    hidden_size = 64
    attack.kind = last-layer-lora
    attack.rank = 16
    attack.scale = 0.5
    disclosure.kind = top-k
    disclosure.k = 5
    port = 8000

Ключи: seed, vocab_size, hidden_size, attack.kind, attack.rank, attack.scale,
attack.seed, attack.hidden_size, disclosure.kind, disclosure.k,
disclosure.supports_bias, host, port.
"""

from pathlib import Path
from typing import Any

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ..errors import ConfigurationError
from ..settings import settings
from .model import MockModelConfig

_SERVER_KEYS = {"host", "port"}


class MockServerConfig(BaseModel):
    """Конфигурация процесса serve-mock."""

    model_config = ConfigDict(frozen=True)

    model: MockModelConfig = MockModelConfig()
    host: str = Field(default_factory=lambda: settings.mock_host)
    port: int = Field(default_factory=lambda: settings.mock_port, ge=0, le=65535)


def _nest(flat: dict[str, str | None]) -> dict[str, Any]:
    """{'attack.kind': 'x'} -> {'attack': {'kind': 'x'}}; пустые значения пропускаются."""
    nested: dict[str, Any] = {}
    for key, value in flat.items():
        if value is None or value == "":
            continue
        head, _, tail = key.strip().lower().partition(".")
        if tail:
            nested.setdefault(head, {})[tail] = value
        else:
            nested[head] = value
    return nested


def parse_mock_config(values: dict[str, str | None]) -> MockServerConfig:
    """Валидирует плоский словарь key = value."""
    nested = _nest(values)
    server = {key: nested.pop(key) for key in _SERVER_KEYS if key in nested}
    try:
        return MockServerConfig(model=MockModelConfig.model_validate(nested), **server)
    except ValidationError as e:
        raise ConfigurationError(f"некорректная конфигурация mock: {e}") from e


def load_mock_config(path: Path) -> MockServerConfig:
    """Читает файл конфигурации mock-endpoint."""
    if not path.is_file():
        raise ConfigurationError(f"файл конфигурации не найден: {path}")
    return parse_mock_config(dotenv_values(path))
