"""Корпус запросов и воспроизводимый выбор промптов."""

from collections.abc import Iterator
from itertools import islice
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from ..errors import InvalidInputError

SEED_MAX = 2**64 - 1


class Prompt(BaseModel):
    """Промпт со стабильным id."""

    model_config = ConfigDict(frozen=True)

    id: str
    text: str


class QuerySet(BaseModel):
    """Упорядоченный корпус промптов и seed выбора."""

    prompts: list[Prompt]
    seed: int = Field(0, ge=0, le=SEED_MAX)

    @field_validator("prompts")
    @classmethod
    def check_prompts(cls, value: list[Prompt]) -> list[Prompt]:
        if not value:
            raise ValueError("корпус запросов пуст")
        ids = [p.id for p in value]
        if len(set(ids)) != len(ids):
            raise ValueError("id промптов должны быть уникальны")
        return value

    @classmethod
    def from_texts(cls, texts: list[str], seed: int = 0) -> "QuerySet":
        """Корпус из списка строк; id — порядковый номер."""
        return cls(prompts=[Prompt(id=f"q{i}", text=t) for i, t in enumerate(texts)], seed=seed)

    @classmethod
    def from_file(cls, path: Path, seed: int = 0) -> "QuerySet":
        """Один промпт на строку, UTF-8; пустые строки пропускаются."""
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
        except UnicodeDecodeError as e:
            raise InvalidInputError(f"корпус {path} не в UTF-8: {e}") from e
        texts = [line for line in lines if line.strip()]
        if not texts:
            raise InvalidInputError(f"корпус {path} не содержит промптов")
        return cls.from_texts(texts, seed=seed)

    def draws(self) -> Iterator[Prompt]:
        """Бесконечная последовательность промптов: seeded-перестановки корпуса подряд.

        Повторные проходы по корпусу получают суффикс '~<проход>' в id.
        """
        rng = np.random.default_rng(self.seed)
        cycle = 0
        while True:
            for index in rng.permutation(len(self.prompts)):
                prompt = self.prompts[int(index)]
                yield prompt if cycle == 0 else Prompt(id=f"{prompt.id}~{cycle}", text=prompt.text)
            cycle += 1

    def sample(self, count: int) -> list[Prompt]:
        """Первые count промптов последовательности draws()."""
        return list(islice(self.draws(), count))
