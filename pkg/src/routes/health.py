"""Модуль реализует endpoint health/ok mock-модели."""

from typing import Any

from fastapi import APIRouter, Depends

from ..deps import get_mock_model
from ..mocknet.model import MockModel

router = APIRouter(prefix="/health", tags=["health"])


@router.get("/ok")
async def ok(model: MockModel = Depends(get_mock_model)) -> dict[str, Any]:
    """Размерности и политика раскрытия обслуживаемой модели."""
    cfg = model.cfg
    return {
        "status": "ok",
        "vocab_size": cfg.vocab_size,
        "hidden_size": cfg.effective_hidden_size,
        "attack": cfg.attack.kind.value,
        "policy": cfg.disclosure.model_dump(mode="json"),
        "requests": model.request_count,
    }
