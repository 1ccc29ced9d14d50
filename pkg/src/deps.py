"""Зависимости FastAPI и контекстный менеджер клиента endpoint."""

from contextlib import asynccontextmanager
from pathlib import Path
from typing import AsyncGenerator

from fastapi import Request

from .llmfp_logging import get_logger
from .mocknet.config import load_mock_config
from .mocknet.model import MockModel
from .requests.score_client import HttpScoreClient, InProcessScoreClient, ScoreClient

logger = get_logger()


@asynccontextmanager
async def score_client(
    endpoint: str | None = None, mock_config: Path | None = None
) -> AsyncGenerator[ScoreClient, None]:
    """HTTP-клиент к endpoint или mock-модель в процессе (ровно одно из двух)."""
    if mock_config is not None:
        cfg = load_mock_config(mock_config)
        logger.info("probe.client.in_process", config=str(mock_config))
        async with InProcessScoreClient(MockModel(cfg.model)) as client:
            yield client
        return
    if endpoint is None:
        raise ValueError("нужен endpoint или mock_config")
    async with HttpScoreClient(endpoint) as http_client:
        yield http_client


def get_mock_model(request: Request) -> MockModel:
    """Достаёт mock-модель из app.state."""
    return request.app.state.mock_model
