"""Иерархия исключений llmfp."""

from collections.abc import Sequence


class FingerprintError(Exception):
    """Базовое исключение пакета."""


class InvalidInputError(FingerprintError, ValueError):
    """Некорректные входные данные: не конечные значения, пустые выборки, смешанные режимы."""


class DimensionMismatchError(InvalidInputError):
    """Размерность вектора не совпадает с размерностью пространства."""


class FingerprintFormatError(FingerprintError):
    """Ошибка разбора бинарного файла (LLMFP/1 или RAWMAT/1)."""

    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f"{message} (смещение {offset})")
        self.offset = offset


class TranscriptError(FingerprintError):
    """Ошибка чтения транскрипта проб. record_index считается с 1."""

    def __init__(self, message: str, record_index: int) -> None:
        super().__init__(f"запись {record_index}: {message}")
        self.record_index = record_index


class InconsistentObservationError(FingerprintError):
    """Наблюдение не может быть получено из прямой модели softmax с bias."""


class ReconstructionError(FingerprintError):
    """Не удалось восстановить распределение по ограниченному раскрытию."""

    def __init__(self, message: str, batch_ids: Sequence[int]) -> None:
        ids = list(batch_ids)
        super().__init__(f"{message} (батчи: {ids})")
        self.batch_ids = ids


class UnsupportedPolicyError(FingerprintError):
    """Endpoint не поддерживает запрошенную политику раскрытия или logit bias."""


class ProbeTransportError(FingerprintError):
    """Endpoint недоступен после всех попыток."""

    def __init__(self, message: str, retries: int) -> None:
        super().__init__(f"{message} (попыток: {retries})")
        self.retries = retries


class ConfigurationError(FingerprintError):
    """Фатальное расхождение конфигурации (например |V| endpoint и отпечатка)."""


class UnknownTokenError(FingerprintError):
    """Bias задан для несуществующего id токена."""
