"""Логирование llmfp на structlog.

setup_logging() вызывается один раз в начале процесса (CLI или serve-mock).
Формат выбирается переменными окружения:
    ENV=dev         цветной ConsoleRenderer, промпты видны полностью
    ENV=prod        JSON, тексты промптов заменены отпечатком (по умолчанию)
    LOG_FORMAT=json JSON в любом окружении
    LOG_LEVEL       уровень stdlib logging, по умолчанию INFO
Все записи идут в stderr: stdout принадлежит отчетам CLI.
"""

import functools
import hashlib
import inspect
import logging
import os
import sys
import time
from collections.abc import AsyncIterator, Callable, Iterator
from contextlib import asynccontextmanager, contextmanager
from typing import Any, TypeVar

import numpy as np
import structlog
from structlog.contextvars import bind_contextvars, clear_contextvars  # noqa: F401
from structlog.typing import EventDict, WrappedLogger

F = TypeVar("F", bound=Callable[..., Any])

# Корпус запросов секретен: в prod в лог попадает только длина и хэш
PROMPT_KEYS = ("prompt", "prompt_text")


def _redact_prompts(logger: WrappedLogger, method: str, event_dict: EventDict) -> EventDict:
    for key in PROMPT_KEYS:
        if key in event_dict:
            text = str(event_dict[key])
            digest = hashlib.sha256(text.encode("utf-8")).hexdigest()[:10]
            event_dict[key] = f"<{len(text)} chars sha256:{digest}>"
    return event_dict


def _numpy_to_builtin(logger: WrappedLogger, method: str, event_dict: EventDict) -> EventDict:
    """np.int64, np.float64 и короткие массивы -> типы, понятные JSONRenderer."""
    for key, value in event_dict.items():
        if isinstance(value, np.generic):
            event_dict[key] = value.item()
        elif isinstance(value, np.ndarray):
            event_dict[key] = value.tolist() if value.size <= 16 else f"ndarray{value.shape}"
    return event_dict


def _run_id_first(logger: WrappedLogger, method: str, event_dict: EventDict) -> EventDict:
    run_id = event_dict.pop("run_id", None)
    if run_id is None:
        return event_dict
    return {"run_id": run_id, **event_dict}


def setup_logging() -> None:
    """Настройка structlog и корневого stdlib logger."""
    dev = os.getenv("ENV", "prod").strip().lower() == "dev"
    as_json = os.getenv("LOG_FORMAT", "").strip().lower() == "json" or not dev
    level = logging.getLevelName(os.getenv("LOG_LEVEL", "INFO").strip().upper())
    if not isinstance(level, int):
        level = logging.INFO

    logging.basicConfig(level=level, stream=sys.stderr, format="%(message)s", force=True)

    processors: list[Any] = [
        structlog.contextvars.merge_contextvars,
        structlog.processors.add_log_level,
        structlog.processors.TimeStamper(fmt="iso", utc=True),
        _run_id_first,
        _numpy_to_builtin,
    ]
    if as_json:
        processors += [
            _redact_prompts,
            structlog.processors.format_exc_info,
            structlog.processors.JSONRenderer(sort_keys=False),
        ]
    else:
        processors.append(structlog.dev.ConsoleRenderer())
    structlog.configure(
        processors=processors,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.make_filtering_bound_logger(level),
        cache_logger_on_first_use=True,
    )


def get_logger(**initial: Any) -> Any:
    """Bound logger; initial попадает в каждую запись."""
    return structlog.get_logger(**initial)


# -------------------- Профилирование --------------------
@contextmanager
def _measure(operation: str) -> Iterator[None]:
    t0 = time.perf_counter()
    log = get_logger()
    try:
        yield
    except Exception as e:
        log.error(
            f"{operation}.failed",
            duration_sec=round(time.perf_counter() - t0, 3),
            error=str(e),
            error_type=type(e).__name__,
        )
        raise
    log.info(f"{operation}.duration", duration_sec=round(time.perf_counter() - t0, 3))


def timed(operation: str) -> Callable[[F], F]:
    """Декоратор: пишет `<operation>.duration` или `<operation>.failed` с duration_sec."""

    def decorator(func: F) -> F:
        if inspect.iscoroutinefunction(func):

            @functools.wraps(func)
            async def async_wrapper(*args: Any, **kwargs: Any) -> Any:
                with _measure(operation):
                    return await func(*args, **kwargs)

            return async_wrapper  # type: ignore[return-value]

        @functools.wraps(func)
        def wrapper(*args: Any, **kwargs: Any) -> Any:
            with _measure(operation):
                return func(*args, **kwargs)

        return wrapper  # type: ignore[return-value]

    return decorator


@asynccontextmanager
async def timed_block(operation: str) -> AsyncIterator[None]:
    """Async-вариант timed для блока кода."""
    with _measure(operation):
        yield
