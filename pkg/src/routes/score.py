"""Модуль создания endpointa '/v1/score' — ответы mock-модели."""

from fastapi import APIRouter, Depends, HTTPException, status

from ..deps import get_mock_model
from ..errors import FingerprintError, UnknownTokenError, UnsupportedPolicyError
from ..llmfp_logging import get_logger
from ..mocknet.model import MockModel
from ..schemas import ScoreRequest, ScoreResponse

logger = get_logger()

router = APIRouter(prefix="/v1", tags=["score"])


def _error_code(e: FingerprintError) -> str:
    if isinstance(e, UnsupportedPolicyError):
        return "unsupported_policy"
    if isinstance(e, UnknownTokenError):
        return "unknown_token"
    return "invalid_request"


@router.post("/score", response_model=ScoreResponse, response_model_exclude_none=True)
async def score(request: ScoreRequest, model: MockModel = Depends(get_mock_model)) -> ScoreResponse:
    """Один ответ модели: logits, вероятности или top-k по политике сервера."""
    try:
        return model.score(request)
    except FingerprintError as e:
        logger.warning("mock.score.rejected", error=str(e), prompt=request.prompt)
        raise HTTPException(
            status_code=status.HTTP_400_BAD_REQUEST,
            detail={"error": _error_code(e), "message": str(e)},
        ) from e
