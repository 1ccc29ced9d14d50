"""Численное ядро: ортонормированный базис пространства последнего слоя.

Отпечаток модели — матрица W (|V| x h) последнего линейного слоя. Все logits
s = W z лежат в span(W), поэтому принадлежность пробы пространству
проверяется расстоянием от s до span(W). Расстояние считается проекцией на
заранее построенный ортонормированный базис (один QR с выбором ведущего
столбца), а не решением W x = s для каждой пробы.

В режиме вероятностей CLR-образ отличается от logits на константный сдвиг,
поэтому к W дописывается столбец единиц: W' = [W, 1].
"""

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
import scipy.linalg

from ..errors import DimensionMismatchError, InvalidInputError
from ..llmfp_logging import get_logger
from .vectors import BasisMode, FloatArray, as_float_vector

logger = get_logger()

TINY = float(np.finfo(np.float64).tiny)
EPS = float(np.finfo(np.float64).eps)

# Минимальный прирост емкости буфера при augment
_GROW_STEP = 16


@dataclass(frozen=True, eq=False)
class Fingerprint:
    """Секрет владельца: веса последнего линейного слоя и метаданные модели."""

    model_id: str
    weights: FloatArray

    def __post_init__(self) -> None:
        weights = np.array(self.weights, dtype=np.float64)
        if weights.ndim != 2:
            raise InvalidInputError(f"веса должны быть матрицей, получено ndim={weights.ndim}")
        vocab_size, hidden_size = weights.shape
        if hidden_size < 1 or vocab_size <= hidden_size:
            raise InvalidInputError(
                f"ожидается |V| > h >= 1, получено |V|={vocab_size}, h={hidden_size}"
            )
        _ensure_finite(weights)
        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)

    @property
    def vocab_size(self) -> int:
        """Размер словаря |V|."""
        return int(self.weights.shape[0])

    @property
    def hidden_size(self) -> int:
        """Скрытая размерность h."""
        return int(self.weights.shape[1])


@dataclass(frozen=True, eq=False)
class Residual:
    """Невязка пробы относительно span(basis)."""

    distance: float
    relative_distance: float
    component: FloatArray


class OrthoBasis:
    """Ортонормированный базис подпространства R^|V|.

    Столбцы хранятся в буфере с запасом емкости, augment дописывает столбец
    на месте. Для чтения (residual) базис неизменяем; augment требует
    эксклюзивного доступа.
    """

    def __init__(self, columns: npt.ArrayLike, origin: BasisMode) -> None:
        """Создает базис из уже ортонормированных столбцов."""
        cols = np.array(columns, dtype=np.float64, order="F")
        if cols.ndim != 2:
            raise InvalidInputError(f"столбцы базиса должны быть матрицей, ndim={cols.ndim}")
        self._buffer = cols
        self._rank = cols.shape[1]
        self.origin = origin

    @property
    def dim(self) -> int:
        """Размерность объемлющего пространства |V|."""
        return int(self._buffer.shape[0])

    @property
    def r(self) -> int:
        """Текущая размерность подпространства."""
        return self._rank

    @property
    def columns(self) -> FloatArray:
        """Столбцы базиса (|V| x r), view без копирования."""
        return self._buffer[:, : self._rank]

    def copy(self) -> "OrthoBasis":
        """Независимая копия базиса."""
        return OrthoBasis(self.columns.copy(), self.origin)

    def project_out(self, s: FloatArray) -> FloatArray:
        """Возвращает s минус проекция на span (два прохода)."""
        q = self.columns
        component = s - q @ (q.T @ s)
        # второй проход возвращает ортогональность, потерянную на округлениях
        component -= q @ (q.T @ component)
        return component

    def residual(self, s: npt.ArrayLike) -> Residual:
        """Невязка вектора s относительно span(basis)."""
        vec = as_float_vector(s, name="s")
        if vec.shape[0] != self.dim:
            raise DimensionMismatchError(
                f"длина вектора {vec.shape[0]} не совпадает с |V|={self.dim}"
            )
        component = self.project_out(vec)
        distance = float(np.linalg.norm(component))
        relative = distance / max(float(np.linalg.norm(vec)), TINY)
        return Residual(distance=distance, relative_distance=relative, component=component)

    def augment(self, res: Residual) -> "OrthoBasis":
        """Дописывает нормированную невязку новым столбцом (на месте)."""
        if not res.distance > TINY:
            raise InvalidInputError(
                f"невязка {res.distance!r} слишком мала для расширения базиса"
            )
        if res.component.shape[0] != self.dim:
            raise DimensionMismatchError(
                f"длина невязки {res.component.shape[0]} не совпадает с |V|={self.dim}"
            )
        if self._rank >= self.dim:
            raise InvalidInputError("базис уже покрывает все пространство")

        direction = res.component / res.distance
        direction = self.project_out(direction)
        norm = float(np.linalg.norm(direction))
        if not norm > TINY:
            raise InvalidInputError("невязка лежит в span(basis) после переортогонализации")
        direction /= norm

        self._ensure_capacity(self._rank + 1)
        self._buffer[:, self._rank] = direction
        self._rank += 1
        return self

    def _ensure_capacity(self, needed: int) -> None:
        capacity = self._buffer.shape[1]
        if needed <= capacity:
            return
        new_capacity = min(self.dim, max(needed, capacity * 2, capacity + _GROW_STEP))
        grown = np.zeros((self.dim, new_capacity), dtype=np.float64, order="F")
        grown[:, : self._rank] = self.columns
        self._buffer = grown


def _ensure_finite(weights: FloatArray) -> None:
    if not np.all(np.isfinite(weights)):
        row, col = (int(i[0]) for i in np.nonzero(~np.isfinite(weights)))
        raise InvalidInputError(
            f"веса содержат не конечное значение: строка {row}, столбец {col}"
        )


def build_basis(fp: Fingerprint, mode: BasisMode) -> OrthoBasis:
    """Строит ортонормированный базис span(W) или span([W, 1]).

    Ранговая неполнота W допускается: r может быть меньше h.
    """
    weights = fp.weights
    _ensure_finite(weights)
    if mode is BasisMode.PROBABILITY:
        weights = np.hstack([weights, np.ones((fp.vocab_size, 1))])

    q, r_factor, _ = scipy.linalg.qr(weights, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r_factor))
    if diag.size == 0 or diag[0] == 0.0:
        rank = 0
    else:
        tol = max(weights.shape) * EPS * diag[0]
        rank = int(np.count_nonzero(diag > tol))

    if rank < weights.shape[1]:
        logger.info(
            "subspace.basis.rank_deficient",
            model_id=fp.model_id,
            mode=mode.value,
            columns=weights.shape[1],
            rank=rank,
        )
    return OrthoBasis(q[:, :rank], origin=mode)


def residual(basis: OrthoBasis, s: npt.ArrayLike) -> Residual:
    """Расстояние от s до span(basis)."""
    return basis.residual(s)


def augment(basis: OrthoBasis, res: Residual) -> OrthoBasis:
    """Расширяет базис на направление невязки."""
    return basis.augment(res)
