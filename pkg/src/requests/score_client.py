"""Клиенты endpoint подозреваемой модели (POST /v1/score)."""

from typing import TYPE_CHECKING, Any, Protocol

import httpx

from ..common import RetryPolicy, retry_async
from ..errors import InvalidInputError, ProbeTransportError, UnknownTokenError, UnsupportedPolicyError
from ..llmfp_logging import get_logger
from ..schemas import ScoreRequest, ScoreResponse
from ..settings import settings

if TYPE_CHECKING:
    from ..mocknet.model import MockModel

logger = get_logger()

SCORE_PATH = "/v1/score"


class ScoreClient(Protocol):
    """Любой источник ответов /v1/score: HTTP или mock в том же процессе."""

    request_count: int

    async def score(self, request: ScoreRequest) -> ScoreResponse:
        """Выполняет один запрос."""
        ...


class _ServerError(Exception):
    """5xx от endpoint — повторяем как сбой транспорта."""


class HttpScoreClient:
    """HTTP-клиент с ретраями на сбои транспорта и 5xx."""

    def __init__(
        self,
        base_url: str,
        *,
        timeout: float | None = None,
        retries: int | None = None,
        backoff: float | None = None,
        jitter: float | None = None,
        transport: httpx.AsyncBaseTransport | None = None,
    ) -> None:
        """Инициализация; None берет значение из settings."""
        self.base_url = base_url.rstrip("/")
        overrides = {"retries": retries, "backoff": backoff, "jitter": jitter}
        self.retry_policy = RetryPolicy.model_validate({k: v for k, v in overrides.items() if v is not None})
        self.request_count = 0
        self._client = httpx.AsyncClient(
            base_url=self.base_url,
            timeout=settings.http_timeout if timeout is None else timeout,
            transport=transport,
        )

    async def __aenter__(self) -> "HttpScoreClient":
        return self

    async def __aexit__(self, *exc: Any) -> None:
        await self.aclose()

    async def aclose(self) -> None:
        """Закрывает пул соединений."""
        await self._client.aclose()

    async def score(self, request: ScoreRequest) -> ScoreResponse:
        """Отправка запроса с повтором при ошибках транспорта."""
        self.request_count += 1
        try:
            return await retry_async(
                lambda: self._post(request),
                self.retry_policy,
                retry_on=(httpx.TransportError, _ServerError),
                target=self.base_url,
            )
        except (httpx.TransportError, _ServerError) as e:
            raise ProbeTransportError(
                f"endpoint {self.base_url} недоступен: {e!r}", retries=self.retry_policy.retries
            ) from e

    async def _post(self, request: ScoreRequest) -> ScoreResponse:
        """Один POST без повторов."""
        resp = await self._client.post(SCORE_PATH, json=request.model_dump())
        if resp.status_code >= 500:
            logger.warning("http.server_error", status=resp.status_code)
            raise _ServerError(f"HTTP {resp.status_code}")
        if resp.status_code >= 400:
            _raise_client_error(resp)
        return ScoreResponse.model_validate_json(resp.content)


class InProcessScoreClient:
    """Клиент к mock-модели в том же процессе, без HTTP."""

    def __init__(self, model: "MockModel") -> None:
        """Инициализация."""
        self.model = model
        self.request_count = 0

    async def __aenter__(self) -> "InProcessScoreClient":
        return self

    async def __aexit__(self, *exc: Any) -> None:
        return None

    async def score(self, request: ScoreRequest) -> ScoreResponse:
        """Обрабатывает запрос синхронно в mock-модели."""
        self.request_count += 1
        return self.model.score(request)


def _raise_client_error(resp: httpx.Response) -> None:
    """Переводит 4xx в исключения пакета."""
    try:
        detail = resp.json().get("detail")
    except ValueError:
        detail = resp.text
    logger.warning("http.error", status=resp.status_code, detail=detail)
    if isinstance(detail, dict):
        message = str(detail.get("message", detail))
        if detail.get("error") == "unsupported_policy":
            raise UnsupportedPolicyError(message)
        if detail.get("error") == "unknown_token":
            raise UnknownTokenError(message)
    raise InvalidInputError(f"endpoint отклонил запрос: HTTP {resp.status_code} {detail}")
