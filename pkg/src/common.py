"""Модуль общих функций llmfp: политика повторов запросов к endpoint."""

import asyncio
import random
from collections.abc import Awaitable, Callable, Iterator
from typing import TypeVar

from pydantic import BaseModel, ConfigDict, Field

from .llmfp_logging import get_logger
from .settings import settings

T = TypeVar("T")

logger = get_logger()


class RetryPolicy(BaseModel):
    """Число попыток и паузы между ними: backoff**attempt + U[0, jitter)."""

    model_config = ConfigDict(frozen=True)

    retries: int = Field(default_factory=lambda: settings.retries, ge=1)
    backoff: float = Field(default_factory=lambda: settings.retry_backoff, ge=0.0)
    jitter: float = Field(default_factory=lambda: settings.retry_jitter, ge=0.0)

    def delays(self) -> Iterator[float]:
        """Паузы после неудачных попыток 1..retries-1."""
        for attempt in range(1, self.retries):
            yield self.backoff**attempt + random.uniform(0, self.jitter)


async def retry_async(
    call: Callable[[], Awaitable[T]],
    policy: RetryPolicy,
    *,
    retry_on: tuple[type[BaseException], ...],
    target: str,
) -> T:
    """Вызывает call до policy.retries раз; после последней неудачи пробрасывает ошибку.

    Args:
        call: фабрика корутины одной попытки.
        policy: попытки и паузы.
        retry_on: типы исключений, после которых пробуем снова.
        target: адрес endpoint для логов.
    """
    delays = policy.delays()
    attempt = 0
    while True:
        attempt += 1
        try:
            return await call()
        except retry_on as e:
            wait = next(delays, None)
            if wait is None:
                logger.error("retry.exhausted", target=target, error=repr(e), retries=policy.retries)
                raise
            logger.warning(
                "retry.attempt",
                target=target,
                error=repr(e),
                attempt=attempt,
                retries=policy.retries,
                wait_sec=round(wait, 2),
            )
            await asyncio.sleep(wait)
