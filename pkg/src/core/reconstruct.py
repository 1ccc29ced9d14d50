"""Восстановление полного распределения следующего токена по ограниченному API.

Три сценария раскрытия:

- полные вероятности: CLR(p) = log p - mean(log p) совпадает с logits
  с точностью до константного сдвига (его поглощает столбец единиц в W');
- top-k с logit bias: опорный токен (top-1 без bias) остается в выдаче,
  остальные токены батчами по k-1 выталкиваются в top-k большим bias b,
  p_i = (p_i^b / p_ref^b) * p_ref * e^{-b};
- top-1 с logit bias: каждый токен по отдельности выводится в top-1,
  p_i = e^{-b} / (1/p_i^b - 1 + e^{-b}).

Множитель e^{-b} в формуле top-k обязателен: при прямой модели
p^b = softmax(s + b * 1_S) отношение p_i^b / p_ref^b = e^b * p_i / p_ref.
"""

import asyncio
import math
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt

from ..errors import (
    ConfigurationError,
    InconsistentObservationError,
    InvalidInputError,
    ReconstructionError,
    UnsupportedPolicyError,
)
from ..llmfp_logging import get_logger
from ..requests.score_client import ScoreClient
from ..schemas import DisclosureKind, DisclosurePolicy, ScoreRequest, ScoreResponse, TopEntry
from ..settings import settings
from .vectors import BasisMode, FloatArray, ProbeVector, VectorSource, as_float_vector

logger = get_logger()

# Допуск на сумму исходного распределения
SIMPLEX_ATOL = 1e-9
# Допуск на выход восстановленной вероятности за (0, 1)
PROBABILITY_ATOL = 1e-12


# -------------------- Типы --------------------
@dataclass(frozen=True, eq=False)
class Distribution:
    """Распределение по словарю: точка симплекса."""

    probs: FloatArray
    source: VectorSource = VectorSource.DIRECT

    def __post_init__(self) -> None:
        probs = as_float_vector(self.probs, name="probs")
        if np.any(probs < 0.0):
            bad = int(np.flatnonzero(probs < 0.0)[0])
            raise InvalidInputError(f"отрицательная вероятность в позиции {bad}: {probs[bad]!r}")
        total = float(probs.sum())
        if abs(total - 1.0) > SIMPLEX_ATOL:
            raise InvalidInputError(f"сумма вероятностей {total!r} отличается от 1")
        object.__setattr__(self, "probs", probs)


@dataclass(frozen=True, eq=False)
class ClrVector:
    """CLR-образ распределения: вектор с нулевым средним."""

    values: FloatArray

    def __post_init__(self) -> None:
        values = as_float_vector(self.values, name="clr")
        scale = max(1.0, float(np.max(np.abs(values))) if values.size else 1.0)
        if abs(float(values.mean())) > 1e-9 * scale:
            raise InvalidInputError("CLR-вектор должен иметь нулевое среднее")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class BiasQuery:
    """Один запрос плана: токены, получающие bias b."""

    batch_id: int
    tokens: tuple[int, ...]
    prompt_id: str = ""

    def bias_map(self, b: float) -> dict[int, float]:
        """Словарь {token_id: b} для запроса."""
        return {token: b for token in self.tokens}


@dataclass(frozen=True)
class BiasPlan:
    """Расписание запросов с logit bias для одного промпта."""

    queries: list[BiasQuery]
    k: int
    b: float
    ref_token: int | None = None
    covered: frozenset[int] = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "covered", frozenset(t for q in self.queries for t in q.tokens)
        )

    @property
    def query_count(self) -> int:
        """Число запросов плана."""
        return len(self.queries)


# -------------------- CLR --------------------
def clr_values(weights: npt.ArrayLike, floor: float | None = None) -> FloatArray:
    """CLR для положительного (не обязательно нормированного) вектора.

    Нули заменяются на floor (по умолчанию settings.clr_floor); отрицательные
    значения недопустимы. Результат инвариантен к умножению входа на c > 0.
    """
    values = as_float_vector(weights, name="weights")
    if values.size == 0:
        raise InvalidInputError("пустой вектор вероятностей")
    if np.any(values < 0.0):
        bad = int(np.flatnonzero(values < 0.0)[0])
        raise InvalidInputError(f"отрицательная вероятность в позиции {bad}: {values[bad]!r}")
    clamp = settings.clr_floor if floor is None else floor
    zeros = int(np.count_nonzero(values == 0.0))
    if zeros:
        logger.debug("reconstruct.clr.clamped", zeros=zeros, floor=clamp)
        values = np.where(values == 0.0, clamp, values)
    if not np.all(values > 0.0):
        raise InvalidInputError("вероятности должны быть строго положительны после ограничения снизу")
    logs = np.log(values)
    return logs - logs.mean()


def clr(dist: Distribution) -> ClrVector:
    """CLR(p) = log(p / g(p)), g — среднее геометрическое."""
    return ClrVector(clr_values(dist.probs))


# -------------------- Обращение bias --------------------
def invert_top1(p_biased: float, b: float, *, logprob_biased: float | None = None) -> float:
    """Восстанавливает p_i по вероятности токена i в top-1 после bias b.

    Формула p_i = 1 / (e^{b - log p_i^b} - e^b + 1) вычисляется в
    переписанном виде e^{-b} / (1/p^b - 1 + e^{-b}) (для b < 0 — с
    множителем e^{b}). Если известна log-вероятность, 1/p^b - 1 берется как
    expm1(-logprob) без потери точности при p^b, близкой к 1.
    """
    if not math.isfinite(b):
        raise InvalidInputError(f"bias должен быть конечным, получено {b!r}")
    if logprob_biased is not None:
        if not (math.isfinite(logprob_biased) and logprob_biased < 0.0):
            raise InconsistentObservationError(
                f"log-вероятность должна быть отрицательной, получено {logprob_biased!r}"
            )
        odds_against = math.expm1(-logprob_biased)
    else:
        if not 0.0 < p_biased < 1.0:
            raise InconsistentObservationError(
                f"вероятность должна лежать в (0, 1), получено {p_biased!r}"
            )
        odds_against = 1.0 / p_biased - 1.0

    if b >= 0.0:
        damp = math.exp(-b)
        p = damp / (odds_against + damp)
    else:
        p = 1.0 / (odds_against * math.exp(b) + 1.0)

    if not (-PROBABILITY_ATOL < p < 1.0 + PROBABILITY_ATOL) or p <= 0.0:
        raise InconsistentObservationError(f"восстановленная вероятность {p!r} вне (0, 1)")
    return min(p, 1.0)


def invert_topk(
    observed: list[tuple[int, float]],
    ref_token: int,
    p_ref: float,
    p_ref_biased: float,
    b: float,
) -> list[tuple[int, float]]:
    """Восстанавливает p_i для батча токенов по опорному токену.

    p_i = (p_i^b / p_ref^b) * p_ref * e^{-b}.
    """
    if not p_ref_biased > 0.0:
        raise InvalidInputError(f"вероятность опорного токена после bias должна быть > 0, получено {p_ref_biased!r}")
    if not 0.0 < p_ref <= 1.0:
        raise InvalidInputError(f"вероятность опорного токена вне (0, 1]: {p_ref!r}")
    tokens = [token for token, _ in observed]
    if ref_token in tokens:
        raise InvalidInputError(f"опорный токен {ref_token} не может входить в батч с bias")
    scale = p_ref * math.exp(-b) / p_ref_biased
    return [(token, p_biased * scale) for token, p_biased in observed]


# -------------------- План запросов --------------------
def plan_bias_queries(
    vocab_size: int,
    policy: DisclosurePolicy,
    b: float,
    *,
    ref_token: int = 0,
    prompt_id: str = "",
) -> BiasPlan:
    """Строит план запросов с bias, покрывающий словарь.

    top-k: токены без опорного, по возрастанию id, батчами по k-1.
    top-1: по одному запросу на каждый токен словаря.
    Если k >= |V|, план вырождается в один запрос без bias.
    """
    if vocab_size < 2:
        raise InvalidInputError(f"|V| должен быть >= 2, получено {vocab_size}")
    width = policy.width
    if width is None:
        raise InvalidInputError(f"политика {policy.label()} не требует плана с bias")

    if width == 1:
        queries = [BiasQuery(batch_id=t, tokens=(t,), prompt_id=prompt_id) for t in range(vocab_size)]
        return BiasPlan(queries=queries, k=1, b=b)

    if width >= vocab_size:
        return BiasPlan(queries=[BiasQuery(batch_id=0, tokens=(), prompt_id=prompt_id)], k=width, b=b)

    if not 0 <= ref_token < vocab_size:
        raise InvalidInputError(f"опорный токен {ref_token} вне словаря |V|={vocab_size}")
    others = [t for t in range(vocab_size) if t != ref_token]
    step = width - 1
    queries = [
        BiasQuery(batch_id=i, tokens=tuple(others[start : start + step]), prompt_id=prompt_id)
        for i, start in enumerate(range(0, len(others), step))
    ]
    return BiasPlan(queries=queries, k=width, b=b, ref_token=ref_token)


# -------------------- Запросы --------------------
def ensure_policy(
    response: ScoreResponse,
    policy: DisclosurePolicy,
    expected_vocab_size: int | None = None,
) -> None:
    """Проверяет, что endpoint раскрывает именно запрошенную политику и |V|."""
    if expected_vocab_size is not None and response.vocab_size != expected_vocab_size:
        raise ConfigurationError(
            f"|V| endpoint = {response.vocab_size}, |V| отпечатка = {expected_vocab_size}"
        )
    served = response.policy
    if served is not None and not served.matches(policy):
        raise UnsupportedPolicyError(
            f"endpoint раскрывает {served.label()}, запрошено {policy.label()}"
        )
    payload = response.positions[0]
    field_name = {
        DisclosureKind.FULL_LOGITS: "logits",
        DisclosureKind.FULL_PROBS: "probs",
    }.get(policy.kind, "top")
    if getattr(payload, field_name) is None:
        raise UnsupportedPolicyError(f"ответ не содержит поля '{field_name}' для политики {policy.label()}")
    if field_name != "top" and len(getattr(payload, field_name)) != response.vocab_size:
        raise InconsistentObservationError(
            f"длина вектора {len(getattr(payload, field_name))} не совпадает с vocab_size={response.vocab_size}"
        )


async def _query(
    client: ScoreClient,
    prompt: str,
    policy: DisclosurePolicy,
    bias: dict[int, float],
    expected_vocab_size: int | None,
) -> ScoreResponse:
    response = await client.score(ScoreRequest.biased(prompt, bias, positions=1))
    ensure_policy(response, policy, expected_vocab_size)
    return response


async def _issue_plan(
    client: ScoreClient,
    prompt: str,
    policy: DisclosurePolicy,
    plan: BiasPlan,
    expected_vocab_size: int | None,
    max_in_flight: int,
) -> dict[int, list[TopEntry]]:
    """Выполняет запросы плана параллельно; ответы ключуются по batch_id."""
    semaphore = asyncio.Semaphore(max_in_flight)

    async def run(query: BiasQuery) -> tuple[int, list[TopEntry]]:
        async with semaphore:
            response = await _query(client, prompt, policy, query.bias_map(plan.b), expected_vocab_size)
        return query.batch_id, response.positions[0].top or []

    pairs = await asyncio.gather(*(run(q) for q in plan.queries))
    return dict(pairs)


# -------------------- Сборка распределения --------------------
def _check_simplex(probs: FloatArray, batch_ids: list[int], tolerance: float) -> float:
    total = float(probs.sum())
    if abs(total - 1.0) > tolerance:
        raise ReconstructionError(
            f"сумма восстановленных вероятностей {total!r} вне 1 ± {tolerance}", batch_ids
        )
    return total


def _recover_topk(
    vocab_size: int,
    anchor: list[TopEntry],
    plan: BiasPlan,
    responses: dict[int, list[TopEntry]],
    tolerance: float,
) -> FloatArray:
    ref = anchor[0]
    probs = np.zeros(vocab_size)
    probs[ref.id] = ref.p
    for query in plan.queries:
        entries = {entry.id: entry for entry in responses[query.batch_id]}
        if ref.id not in entries:
            raise ReconstructionError(f"опорный токен {ref.id} выпал из top-{plan.k}", [query.batch_id])
        missing = [t for t in query.tokens if t not in entries]
        if missing:
            raise ReconstructionError(
                f"токены {missing} не вошли в top-{plan.k} при b={plan.b}", [query.batch_id]
            )
        recovered = invert_topk(
            [(t, entries[t].p) for t in query.tokens], ref.id, ref.p, entries[ref.id].p, plan.b
        )
        for token, p in recovered:
            probs[token] = p
    _check_simplex(probs, [q.batch_id for q in plan.queries], tolerance)
    return probs


def _recover_top1(
    vocab_size: int,
    anchor: list[TopEntry],
    plan: BiasPlan,
    responses: dict[int, list[TopEntry]],
    tolerance: float,
) -> FloatArray:
    probs = np.zeros(vocab_size)
    for query in plan.queries:
        (token,) = query.tokens
        entries = responses[query.batch_id]
        if not entries or entries[0].id != token:
            got = entries[0].id if entries else None
            raise ReconstructionError(
                f"bias b={plan.b} не вывел токен {token} в top-1 (получен {got})", [query.batch_id]
            )
        try:
            probs[token] = invert_top1(entries[0].p, plan.b, logprob_biased=entries[0].logprob)
        except InconsistentObservationError as e:
            raise ReconstructionError(str(e), [query.batch_id]) from e

    top = anchor[0]
    if abs(probs[top.id] - top.p) > tolerance * top.p:
        raise ReconstructionError(
            f"вероятность токена {top.id} без bias {top.p!r} расходится с восстановленной {probs[top.id]!r}",
            [top.id],
        )
    _check_simplex(probs, [q.batch_id for q in plan.queries], tolerance)
    return probs


async def reconstruct_distribution(
    client: ScoreClient,
    prompt: str,
    policy: DisclosurePolicy,
    *,
    bias: float | None = None,
    prompt_id: str = "",
    expected_vocab_size: int | None = None,
    max_in_flight: int | None = None,
) -> Distribution:
    """Восстанавливает распределение позиции 0 по ограниченному раскрытию.

    Расходует один запрос без bias плюс запросы плана.
    """
    if not policy.is_restricted:
        raise InvalidInputError(f"политика {policy.label()} раскрывает распределение целиком")
    b = settings.bias if bias is None else bias
    in_flight = settings.max_in_flight if max_in_flight is None else max_in_flight
    tolerance = settings.simplex_tolerance

    anchor_response = await _query(client, prompt, policy, {}, expected_vocab_size)
    vocab_size = anchor_response.vocab_size
    anchor = anchor_response.positions[0].top or []
    if not anchor:
        raise ReconstructionError("пустая выдача top без bias", [])

    width = policy.width or 1
    if width >= vocab_size:
        probs = np.zeros(vocab_size)
        for entry in anchor:
            probs[entry.id] = entry.p
        _check_simplex(probs, [0], tolerance)
        return Distribution(probs / probs.sum(), source=VectorSource.DIRECT)

    served = anchor_response.policy
    if served is not None and not served.supports_bias:
        raise UnsupportedPolicyError(
            f"восстановление {policy.label()} требует logit bias, endpoint его не поддерживает"
        )

    cap = settings.top1_bias_without_logprob
    if width == 1 and anchor[0].logprob is None and b > cap:
        logger.warning(
            "reconstruct.top1.bias_capped",
            requested_bias=b,
            bias=cap,
            hint="endpoint не отдает logprob; при большом b обращение top-1 теряет точность",
        )
        b = cap

    plan = plan_bias_queries(vocab_size, policy, b, ref_token=anchor[0].id, prompt_id=prompt_id)
    responses = await _issue_plan(client, prompt, policy, plan, expected_vocab_size, in_flight)
    if width == 1:
        probs = _recover_top1(vocab_size, anchor, plan, responses, tolerance)
    else:
        probs = _recover_topk(vocab_size, anchor, plan, responses, tolerance)

    logger.debug(
        "reconstruct.distribution.completed",
        policy=policy.label(),
        prompt_id=prompt_id,
        queries=plan.query_count + 1,
        simplex_sum=float(probs.sum()),
    )
    return Distribution(probs / probs.sum(), source=policy.source)


async def reconstruct_full(
    client: ScoreClient,
    prompt: str,
    policy: DisclosurePolicy,
    *,
    bias: float | None = None,
    query_id: str = "",
    expected_vocab_size: int | None = None,
    max_in_flight: int | None = None,
) -> ProbeVector:
    """Один полный вектор для позиции 0: logits или CLR-образ распределения."""
    if policy.kind is DisclosureKind.FULL_LOGITS:
        response = await _query(client, prompt, policy, {}, expected_vocab_size)
        values = response.positions[0].logits or []
        return ProbeVector(np.asarray(values), BasisMode.LOGITS, query_id, 0, VectorSource.DIRECT)

    if policy.kind is DisclosureKind.FULL_PROBS:
        response = await _query(client, prompt, policy, {}, expected_vocab_size)
        dist = Distribution(np.asarray(response.positions[0].probs or []))
        return ProbeVector(clr(dist).values, BasisMode.PROBABILITY, query_id, 0, VectorSource.DIRECT)

    dist = await reconstruct_distribution(
        client,
        prompt,
        policy,
        bias=bias,
        prompt_id=query_id,
        expected_vocab_size=expected_vocab_size,
        max_in_flight=max_in_flight,
    )
    return ProbeVector(clr(dist).values, BasisMode.PROBABILITY, query_id, 0, dist.source)
