"""FastAPI-приложение mock-endpoint и его запуск под uvicorn."""

from contextlib import asynccontextmanager
from typing import AsyncIterator

import uvicorn
from fastapi import FastAPI, Request
from fastapi.encoders import jsonable_encoder
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from ..llmfp_logging import get_logger
from ..routes.health import router as health_router
from ..routes.score import router as score_router
from .config import MockServerConfig
from .model import MockModel, served_weights

logger = get_logger()


def create_app(model: MockModel) -> FastAPI:
    """Приложение, обслуживающее одну mock-модель."""

    @asynccontextmanager
    async def lifespan(app: FastAPI) -> AsyncIterator[None]:
        """Жизненный цикл приложения: веса строятся до первого запроса."""
        served_weights(model.cfg)
        app.state.mock_model = model
        logger.info(
            "mock.started",
            vocab_size=model.cfg.vocab_size,
            hidden_size=model.cfg.effective_hidden_size,
            attack=model.cfg.attack.kind.value,
            policy=model.cfg.disclosure.label(),
        )
        try:
            yield
        finally:
            logger.info("mock.stopped", requests=model.request_count)

    app = FastAPI(title="llmfp mock endpoint", lifespan=lifespan)
    # Состояние доступно и без запуска lifespan (ASGITransport в тестах)
    app.state.mock_model = model

    @app.exception_handler(RequestValidationError)
    async def validation_exception_handler(
        request: Request, exc: RequestValidationError
    ) -> JSONResponse:
        """Обработчик ошибок валидации."""
        logger.error("validation.error", errors=exc.errors(), path=request.url.path)
        return JSONResponse(status_code=422, content={"detail": jsonable_encoder(exc.errors())})

    app.include_router(score_router)
    app.include_router(health_router)
    return app


def serve(config: MockServerConfig) -> None:
    """Запускает mock-endpoint; блокирует до остановки процесса."""
    app = create_app(MockModel(config.model))
    uvicorn.run(
        app,
        host=config.host,
        port=config.port,
        loop="uvloop",
        http="httptools",
        log_config=None,
    )
