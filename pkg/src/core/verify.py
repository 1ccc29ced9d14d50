"""Проверка владения: тест совместимости и разность размерностей.

Тест совместимости: каждая проба сравнивается с фиксированным span(W)
(или span([W, 1]) для CLR-проб); модель та же, если все относительные
расстояния меньше порога.

Разность размерностей: пробы проходятся по порядку транскрипта, каждая
проба с невязкой выше порога увеличивает delta_r и расширяет рабочий базис.
delta_r оценивает rank([W S]) - rank(W); модель производная, если delta_r
много меньше h.
"""

from collections.abc import Sequence
from enum import Enum
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..errors import DimensionMismatchError, InvalidInputError
from ..llmfp_logging import get_logger, timed
from ..settings import settings
from .subspace import Fingerprint, build_basis
from .vectors import BasisMode, ProbeVector

logger = get_logger()


class Threshold(BaseModel):
    """Порог относительной невязки e."""

    model_config = ConfigDict(frozen=True)

    e_relative: float = Field(gt=0.0, lt=1.0)

    @classmethod
    def for_samples(cls, samples: Sequence[ProbeVector]) -> "Threshold":
        """Порог по умолчанию: строже для прямых проб, мягче для восстановленных."""
        if any(sample.source.is_reconstructed for sample in samples):
            return cls(e_relative=settings.threshold_reconstructed)
        return cls(e_relative=settings.threshold_direct)


class CompatVerdict(str, Enum):
    SAME_LAST_LAYER = "SameLastLayer"
    NOT_SAME_LAST_LAYER = "NotSameLastLayer"


class AlignVerdict(str, Enum):
    DERIVED_FROM_VICTIM = "DerivedFromVictim"
    INDEPENDENT = "Independent"


class SampleDistance(BaseModel):
    """Невязка одной пробы."""

    query_id: str
    position: int
    distance: float
    relative_distance: float


class DistancesSummary(BaseModel):
    """Сводка относительных расстояний."""

    count: int
    mean: float
    min: float
    max: float

    @classmethod
    def of(cls, relative: Sequence[float]) -> "DistancesSummary":
        values = np.asarray(relative, dtype=np.float64)
        return cls(
            count=int(values.size),
            mean=float(values.mean()),
            min=float(values.min()),
            max=float(values.max()),
        )


class CompatReport(BaseModel):
    """Результат теста совместимости."""

    report_type: Literal["compat"] = "compat"
    model_id: str
    verdict: CompatVerdict
    n_samples: int
    vocab_size: int
    hidden_size: int
    mode: BasisMode
    threshold: float
    distances_summary: DistancesSummary
    distances: list[SampleDistance]


class AlignReport(BaseModel):
    """Результат проверки выравнивания (разность размерностей)."""

    report_type: Literal["align"] = "align"
    model_id: str
    verdict: AlignVerdict
    delta_r: int = Field(ge=0)
    n_samples: int
    vocab_size: int
    hidden_size: int
    basis_rank: int
    mode: BasisMode
    # столбец единиц фактически добавлен в базис (только вероятностный режим)
    ones_column: bool
    threshold: float
    derived_ratio: float
    augmenting_indices: list[int]
    distances_summary: DistancesSummary


def _check_samples(fp: Fingerprint, samples: Sequence[ProbeVector]) -> BasisMode:
    """Общие предусловия: непустая выборка одного режима и длины |V|."""
    if not samples:
        raise InvalidInputError("пустой список проб")
    modes = {sample.mode for sample in samples}
    if len(modes) > 1:
        raise InvalidInputError(f"пробы разных режимов: {sorted(m.value for m in modes)}")
    for sample in samples:
        if sample.vocab_size != fp.vocab_size:
            raise DimensionMismatchError(
                f"проба {sample.query_id}:{sample.position} длины {sample.vocab_size}, "
                f"|V| отпечатка = {fp.vocab_size}"
            )
    return modes.pop()


@timed("verify.compat")
def compat_test(
    fp: Fingerprint, samples: Sequence[ProbeVector], thr: Threshold | None = None
) -> CompatReport:
    """Тест совместимости по фиксированному базису, без расширения."""
    mode = _check_samples(fp, samples)
    threshold = thr or Threshold.for_samples(samples)
    basis = build_basis(fp, mode)

    distances: list[SampleDistance] = []
    for sample in samples:
        res = basis.residual(sample.values)
        distances.append(
            SampleDistance(
                query_id=sample.query_id,
                position=sample.position,
                distance=res.distance,
                relative_distance=res.relative_distance,
            )
        )

    relative = [d.relative_distance for d in distances]
    same = all(value < threshold.e_relative for value in relative)
    verdict = CompatVerdict.SAME_LAST_LAYER if same else CompatVerdict.NOT_SAME_LAST_LAYER
    summary = DistancesSummary.of(relative)
    logger.info(
        "verify.compat.completed",
        model_id=fp.model_id,
        verdict=verdict.value,
        n_samples=len(samples),
        max_relative=summary.max,
        threshold=threshold.e_relative,
    )
    return CompatReport(
        model_id=fp.model_id,
        verdict=verdict,
        n_samples=len(samples),
        vocab_size=fp.vocab_size,
        hidden_size=fp.hidden_size,
        mode=mode,
        threshold=threshold.e_relative,
        distances_summary=summary,
        distances=distances,
    )


@timed("verify.align")
def dimension_difference(
    fp: Fingerprint,
    samples: Sequence[ProbeVector],
    thr: Threshold | None = None,
    *,
    ones_column: bool = True,
    derived_ratio: float | None = None,
) -> AlignReport:
    """Разность размерностей delta_r по порядку проб.

    ones_column=False строит базис CLR-проб без столбца единиц: тогда
    константный сдвиг CLR сам расходует одну единицу delta_r.
    """
    mode = _check_samples(fp, samples)
    threshold = thr or Threshold.for_samples(samples)
    ratio = settings.derived_ratio if derived_ratio is None else derived_ratio
    if not ratio > 0.0:
        raise InvalidInputError(f"derived_ratio должен быть > 0, получено {ratio!r}")

    basis_mode = mode if ones_column else BasisMode.LOGITS
    basis = build_basis(fp, basis_mode)
    basis_rank = basis.r

    augmenting: list[int] = []
    relative: list[float] = []
    for index, sample in enumerate(samples):
        res = basis.residual(sample.values)
        relative.append(res.relative_distance)
        if res.relative_distance > threshold.e_relative and basis.r < basis.dim:
            basis.augment(res)
            augmenting.append(index)
            logger.debug(
                "verify.align.augmented",
                index=index,
                query_id=sample.query_id,
                relative_distance=res.relative_distance,
                rank=basis.r,
            )

    delta_r = len(augmenting)
    derived = delta_r < ratio * fp.hidden_size
    verdict = AlignVerdict.DERIVED_FROM_VICTIM if derived else AlignVerdict.INDEPENDENT
    logger.info(
        "verify.align.completed",
        model_id=fp.model_id,
        verdict=verdict.value,
        delta_r=delta_r,
        n_samples=len(samples),
        hidden_size=fp.hidden_size,
    )
    return AlignReport(
        model_id=fp.model_id,
        verdict=verdict,
        delta_r=delta_r,
        n_samples=len(samples),
        vocab_size=fp.vocab_size,
        hidden_size=fp.hidden_size,
        basis_rank=basis_rank,
        mode=mode,
        ones_column=basis_mode is BasisMode.PROBABILITY,
        threshold=threshold.e_relative,
        derived_ratio=ratio,
        augmenting_indices=augmenting,
        distances_summary=DistancesSummary.of(relative),
    )
