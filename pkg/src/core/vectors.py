"""Общие типы векторов проб."""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import numpy.typing as npt

from ..errors import InvalidInputError

FloatArray = npt.NDArray[np.float64]


class BasisMode(str, Enum):
    """Режим пространства: сырые logits или CLR-образы вероятностей (с колонкой единиц)."""

    LOGITS = "logits"
    PROBABILITY = "probability"


class VectorSource(str, Enum):
    """Как получен вектор пробы."""

    DIRECT = "direct"
    TOP_K_RECOVERED = "top-k-recovered"
    TOP1_RECOVERED = "top-1-recovered"

    @property
    def is_reconstructed(self) -> bool:
        """Вектор восстановлен по ограниченному раскрытию."""
        return self is not VectorSource.DIRECT


def as_float_vector(values: npt.ArrayLike, name: str = "vector") -> FloatArray:
    """Приводит вход к конечному одномерному float64 вектору."""
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidInputError(f"{name}: ожидается одномерный вектор, получено ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(arr))[0])
        raise InvalidInputError(f"{name}: не конечное значение в позиции {bad}")
    return arr


@dataclass(frozen=True, eq=False)
class ProbeVector:
    """Один вектор logits или CLR, полученный от подозреваемой модели."""

    values: FloatArray
    mode: BasisMode
    query_id: str
    position: int = 0
    source: VectorSource = VectorSource.DIRECT
    norm: float = field(init=False)

    def __post_init__(self) -> None:
        values = as_float_vector(self.values, name=f"probe {self.query_id}:{self.position}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "norm", float(np.linalg.norm(values)))
        if self.position < 0:
            raise InvalidInputError(f"позиция не может быть отрицательной: {self.position}")

    @property
    def vocab_size(self) -> int:
        """Длина вектора |V|."""
        return int(self.values.shape[0])

    @property
    def key(self) -> tuple[str, int]:
        """Ключ записи транскрипта."""
        return self.query_id, self.position
