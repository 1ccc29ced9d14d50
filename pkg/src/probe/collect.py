"""Сбор проб с endpoint подозреваемой модели.

Полное раскрытие: каждая позиция ответа дает один вектор, запросы к разным
промптам идут параллельно (не больше max_in_flight одновременно).
Ограниченное раскрытие: один восстановленный вектор (позиция 0) на промпт;
промпты обрабатываются по очереди, запросы плана одного промпта параллельно.
"""

import asyncio
import math

import numpy as np
from tqdm import tqdm

from ..core.reconstruct import Distribution, clr, ensure_policy, reconstruct_full
from ..core.vectors import BasisMode, ProbeVector, VectorSource
from ..errors import InvalidInputError, UnsupportedPolicyError
from ..llmfp_logging import get_logger, timed_block
from ..requests.score_client import ScoreClient
from ..schemas import DisclosureKind, DisclosurePolicy, ScoreRequest, ScoreResponse
from ..settings import settings
from .queries import Prompt, QuerySet

logger = get_logger()


def vectors_from_response(
    response: ScoreResponse, policy: DisclosurePolicy, query_id: str
) -> list[ProbeVector]:
    """Векторы всех позиций ответа при полном раскрытии."""
    vectors: list[ProbeVector] = []
    for position, payload in enumerate(response.positions):
        if policy.kind is DisclosureKind.FULL_LOGITS:
            if payload.logits is None:
                raise UnsupportedPolicyError(f"позиция {position} без logits")
            values = np.asarray(payload.logits)
            vectors.append(ProbeVector(values, BasisMode.LOGITS, query_id, position))
        else:
            if payload.probs is None:
                raise UnsupportedPolicyError(f"позиция {position} без probs")
            dist = Distribution(np.asarray(payload.probs), source=VectorSource.DIRECT)
            vectors.append(ProbeVector(clr(dist).values, BasisMode.PROBABILITY, query_id, position))
    return vectors


async def _collect_full(
    client: ScoreClient,
    qs: QuerySet,
    policy: DisclosurePolicy,
    n_min: int,
    expected_vocab_size: int | None,
    positions: int,
    max_in_flight: int,
    progress: tqdm,
) -> list[ProbeVector]:
    semaphore = asyncio.Semaphore(max_in_flight)

    async def run(prompt: Prompt) -> list[ProbeVector]:
        async with semaphore:
            response = await client.score(
                ScoreRequest(prompt=prompt.text, positions=positions, echo_policy=True)
            )
        ensure_policy(response, policy, expected_vocab_size)
        vectors = vectors_from_response(response, policy, prompt.id)
        progress.update(len(vectors))
        return vectors

    draws = qs.draws()
    collected: list[ProbeVector] = []
    while len(collected) < n_min:
        missing = n_min - len(collected)
        batch = [next(draws) for _ in range(math.ceil(missing / positions))]
        for vectors in await asyncio.gather(*(run(p) for p in batch)):
            collected.extend(vectors)
    return collected


async def _collect_restricted(
    client: ScoreClient,
    qs: QuerySet,
    policy: DisclosurePolicy,
    n_min: int,
    expected_vocab_size: int | None,
    max_in_flight: int,
    bias: float | None,
    progress: tqdm,
) -> list[ProbeVector]:
    collected: list[ProbeVector] = []
    for prompt in qs.sample(n_min):
        vector = await reconstruct_full(
            client,
            prompt.text,
            policy,
            bias=bias,
            query_id=prompt.id,
            expected_vocab_size=expected_vocab_size,
            max_in_flight=max_in_flight,
        )
        collected.append(vector)
        progress.update(1)
    return collected


async def collect(
    client: ScoreClient,
    qs: QuerySet,
    policy: DisclosurePolicy,
    n_min: int | None = None,
    *,
    expected_vocab_size: int | None = None,
    positions: int | None = None,
    max_in_flight: int | None = None,
    bias: float | None = None,
    show_progress: bool = False,
) -> list[ProbeVector]:
    """Собирает не меньше n_min векторов проб в порядке выбора промптов.

    Args:
        client: источник ответов /v1/score.
        qs: корпус запросов с seed выбора.
        policy: политика раскрытия endpoint.
        n_min: минимальное число векторов (по умолчанию settings.n_min).
        expected_vocab_size: |V| отпечатка; расхождение с endpoint фатально.
        positions: позиций на запрос при полном раскрытии.
        max_in_flight: предел одновременных запросов.
        bias: logit bias для восстановления (по умолчанию settings.bias).
        show_progress: индикатор tqdm в stderr.
    """
    n_min = settings.n_min if n_min is None else n_min
    if n_min < 1:
        raise InvalidInputError(f"n_min должен быть >= 1, получено {n_min}")
    positions = settings.positions if positions is None else positions
    in_flight = settings.max_in_flight if max_in_flight is None else max_in_flight
    start_requests = client.request_count

    logger.info(
        "probe.collect.started",
        policy=policy.label(),
        n_min=n_min,
        positions=positions if not policy.is_restricted else 1,
        corpus_size=len(qs.prompts),
    )
    with tqdm(total=n_min, disable=not show_progress, unit="vec", desc="probe") as progress:
        async with timed_block("probe.collect"):
            if policy.is_restricted:
                vectors = await _collect_restricted(
                    client, qs, policy, n_min, expected_vocab_size, in_flight, bias, progress
                )
            else:
                vectors = await _collect_full(
                    client, qs, policy, n_min, expected_vocab_size, positions, in_flight, progress
                )

    logger.info(
        "probe.collect.completed",
        policy=policy.label(),
        vectors=len(vectors),
        queries=client.request_count - start_requests,
    )
    return vectors
