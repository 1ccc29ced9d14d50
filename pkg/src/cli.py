"""Командная строка llmfp.

Подкоманды:
    fingerprint-export  RAWMAT/1 -> LLMFP/1
    fingerprint-show    метаданные и контрольная сумма LLMFP/1
    mock-weights        веса жертвы mock-конфигурации в RAWMAT/1
    serve-mock          HTTP mock-endpoint
    probe               сбор проб в транскрипт
    verify-compat       тест совместимости
    verify-align        разность размерностей

Коды выхода verify-*: 0 — та же/производная модель, 1 — другая/независимая,
2 — ошибка выполнения. Остальные подкоманды: 0 — успех, 2 — ошибка.
"""

import argparse
import asyncio
import sys
import uuid
from enum import Enum
from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field, FilePath, ValidationError, model_validator

from .core.fingerprint_io import (
    DTYPE_F32,
    encode_raw_matrix,
    load_fingerprint,
    load_raw_matrix,
    read_fingerprint_header,
    save_fingerprint,
)
from .core.report import Report, ReportFormat, render_report
from .core.subspace import Fingerprint
from .core.vectors import ProbeVector
from .core.verify import (
    AlignVerdict,
    CompatVerdict,
    Threshold,
    compat_test,
    dimension_difference,
)
from .deps import score_client
from .errors import DimensionMismatchError, FingerprintError
from .llmfp_logging import bind_contextvars, get_logger, setup_logging
from .mocknet.app import serve
from .mocknet.config import MockServerConfig, load_mock_config
from .mocknet.model import SEED_MAX, MockModelConfig, victim_weights
from .probe.collect import collect
from .probe.queries import QuerySet
from .probe.transcript import append_transcript, load_transcript
from .schemas import DisclosureKind, DisclosurePolicy
from .settings import settings

logger = get_logger()

EXIT_OK = 0
EXIT_NEGATIVE = 1
EXIT_ERROR = 2


class Subcommand(str, Enum):
    FINGERPRINT_EXPORT = "fingerprint-export"
    FINGERPRINT_SHOW = "fingerprint-show"
    MOCK_WEIGHTS = "mock-weights"
    SERVE_MOCK = "serve-mock"
    PROBE = "probe"
    VERIFY_COMPAT = "verify-compat"
    VERIFY_ALIGN = "verify-align"


class RunConfig(BaseModel):
    """Проверенные аргументы одного запуска."""

    model_config = ConfigDict(frozen=True)

    subcommand: Subcommand
    endpoint: str | None = None
    mock_config: FilePath | None = None
    fingerprint: FilePath | None = None
    queries: FilePath | None = None
    transcript: Path | None = None
    weights_in: FilePath | None = None
    out: Path | None = None

    policy: DisclosureKind = DisclosureKind.FULL_LOGITS
    k: int | None = Field(None, ge=1)
    bias: float = Field(default_factory=lambda: settings.bias)
    n_min: int = Field(default_factory=lambda: settings.n_min, ge=1)
    positions: int = Field(default_factory=lambda: settings.positions, ge=1, le=256)
    seed: int = Field(0, ge=0, le=SEED_MAX)

    threshold: float | None = Field(None, gt=0.0, lt=1.0)
    ones_column: bool = True
    derived_ratio: float = Field(default_factory=lambda: settings.derived_ratio, gt=0.0)
    format: ReportFormat = ReportFormat.HUMAN

    model_id: str | None = None
    dtype: str | None = Field(None, pattern="^f(32|64)$")
    vocab_size: int | None = Field(None, ge=2)
    hidden_size: int | None = Field(None, ge=1)
    host: str | None = None
    port: int | None = Field(None, ge=0, le=65535)
    progress: bool = False

    @model_validator(mode="after")
    def check_subcommand(self) -> "RunConfig":
        cmd = self.subcommand
        if cmd is Subcommand.FINGERPRINT_EXPORT and (self.weights_in is None or self.out is None):
            raise ValueError("fingerprint-export требует --weights-in и --out")
        if cmd is Subcommand.FINGERPRINT_SHOW and self.fingerprint is None:
            raise ValueError("fingerprint-show требует --fingerprint")
        if cmd is Subcommand.MOCK_WEIGHTS and self.out is None:
            raise ValueError("mock-weights требует --out")
        if cmd is Subcommand.PROBE:
            self._check_live_source()
            if self.transcript is None:
                raise ValueError("probe требует --transcript")
        if cmd in (Subcommand.VERIFY_COMPAT, Subcommand.VERIFY_ALIGN):
            if self.fingerprint is None:
                raise ValueError(f"{cmd.value} требует --fingerprint")
            if self.transcript is None:
                self._check_live_source()
            elif not self.transcript.is_file():
                raise ValueError(f"транскрипт не найден: {self.transcript}")
        if self.policy is DisclosureKind.TOP_K and self.k is None:
            raise ValueError("--policy top-k требует --k")
        return self

    def _check_live_source(self) -> None:
        if (self.endpoint is None) == (self.mock_config is None):
            raise ValueError("нужен ровно один из --endpoint и --mock-config")
        if self.queries is None:
            raise ValueError("сбор проб требует --queries")

    @property
    def disclosure(self) -> DisclosurePolicy:
        """Политика раскрытия; top-k с k = 1 обрабатывается как top-1."""
        if self.policy is DisclosureKind.TOP_K and self.k == 1:
            return DisclosurePolicy(kind=DisclosureKind.TOP1)
        return DisclosurePolicy(kind=self.policy, k=self.k if self.policy is DisclosureKind.TOP_K else None)


# -------------------- Аргументы --------------------
def _add_live_source(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--endpoint", help="URL endpoint подозреваемой модели")
    parser.add_argument("--mock-config", type=Path, help="mock-модель в процессе вместо endpoint")
    parser.add_argument("--queries", type=Path, help="корпус: один промпт на строку, UTF-8")
    parser.add_argument(
        "--policy",
        choices=[kind.value for kind in DisclosureKind],
        default=DisclosureKind.FULL_LOGITS.value,
    )
    parser.add_argument("--k", type=int, help="k для --policy top-k")
    parser.add_argument("--bias", type=float, help=f"logit bias (по умолчанию {settings.bias:g})")
    parser.add_argument("--n-min", type=int, help=f"минимум векторов (по умолчанию {settings.n_min})")
    parser.add_argument("--positions", type=int, help="позиций на запрос при полном раскрытии")
    parser.add_argument("--seed", type=int, default=0, help="seed выбора промптов")
    parser.add_argument("--progress", action="store_true", help="индикатор прогресса в stderr")


def _add_verify(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--fingerprint", type=Path, required=True)
    parser.add_argument("--transcript", type=Path, help="готовый транскрипт вместо сбора проб")
    parser.add_argument("--threshold", type=float, help="порог относительной невязки e")
    parser.add_argument("--format", choices=[f.value for f in ReportFormat], default="human")
    parser.add_argument("--out", type=Path, help="копия отчета в файл")
    _add_live_source(parser)


def build_parser() -> argparse.ArgumentParser:
    """Парсер всех подкоманд."""
    parser = argparse.ArgumentParser(
        prog="llmfp",
        description="Проверка происхождения LLM по пространству последнего линейного слоя.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    export = sub.add_parser(Subcommand.FINGERPRINT_EXPORT.value, help="RAWMAT/1 -> LLMFP/1")
    export.add_argument("--weights-in", type=Path, required=True)
    export.add_argument("--out", type=Path, required=True)
    export.add_argument("--vocab-size", type=int, help="ожидаемое |V|")
    export.add_argument("--hidden-size", type=int, help="ожидаемое h")
    export.add_argument("--dtype", choices=["f32", "f64"], help="по умолчанию тип входа")
    export.add_argument("--model-id")

    show = sub.add_parser(Subcommand.FINGERPRINT_SHOW.value, help="метаданные LLMFP/1")
    show.add_argument("--fingerprint", type=Path, required=True)

    weights = sub.add_parser(Subcommand.MOCK_WEIGHTS.value, help="веса жертвы mock в RAWMAT/1")
    weights.add_argument("--mock-config", type=Path)
    weights.add_argument("--out", type=Path, required=True)
    weights.add_argument("--dtype", choices=["f32", "f64"], default="f64")

    serve_mock = sub.add_parser(Subcommand.SERVE_MOCK.value, help="HTTP mock-endpoint")
    serve_mock.add_argument("--mock-config", type=Path)
    serve_mock.add_argument("--host")
    serve_mock.add_argument("--port", type=int)

    probe = sub.add_parser(Subcommand.PROBE.value, help="сбор проб в транскрипт")
    _add_live_source(probe)
    probe.add_argument("--fingerprint", type=Path, help="сверить |V| endpoint с отпечатком")
    probe.add_argument("--transcript", "--out", dest="transcript", type=Path, required=True)

    compat = sub.add_parser(Subcommand.VERIFY_COMPAT.value, help="тест совместимости")
    _add_verify(compat)

    align = sub.add_parser(Subcommand.VERIFY_ALIGN.value, help="разность размерностей")
    _add_verify(align)
    align.add_argument("--mode-ones-column", choices=["on", "off"], default="on")
    align.add_argument("--derived-ratio", type=float, help="производная, если delta_r < ratio * h")
    return parser


def parse_config(argv: list[str] | None = None) -> RunConfig:
    """argv -> RunConfig; значения None заменяются умолчаниями settings."""
    args = vars(build_parser().parse_args(argv))
    ones = args.pop("mode_ones_column", "on")
    values = {key: value for key, value in args.items() if value is not None}
    values["ones_column"] = ones == "on"
    return RunConfig.model_validate(values)


# -------------------- Подкоманды --------------------
def _export(cfg: RunConfig) -> int:
    assert cfg.weights_in is not None and cfg.out is not None
    matrix, tag = load_raw_matrix(cfg.weights_in)
    rows, cols = matrix.shape
    if cfg.vocab_size is not None and cfg.vocab_size != rows:
        raise DimensionMismatchError(f"|V| в файле {rows}, ожидалось {cfg.vocab_size}")
    if cfg.hidden_size is not None and cfg.hidden_size != cols:
        raise DimensionMismatchError(f"h в файле {cols}, ожидалось {cfg.hidden_size}")
    fp = Fingerprint(model_id=cfg.model_id or cfg.out.stem, weights=matrix)
    dtype = cfg.dtype or ("f32" if tag == DTYPE_F32 else "f64")
    save_fingerprint(fp, cfg.out, dtype=dtype)
    print(f"{cfg.out}: {fp.vocab_size} x {fp.hidden_size} {dtype}")
    return EXIT_OK


def _show(cfg: RunConfig) -> int:
    assert cfg.fingerprint is not None
    header = read_fingerprint_header(cfg.fingerprint)
    dtype = "f32" if header["dtype_tag"] == DTYPE_F32 else "f64"
    print(f"path         {cfg.fingerprint}")
    print(f"vocab_size   {header['vocab_size']}")
    print(f"hidden_size  {header['hidden_size']}")
    print(f"dtype        {dtype}")
    print(f"checksum     {'ok' if header['checksum_ok'] else 'MISMATCH'}")
    return EXIT_OK if header["checksum_ok"] else EXIT_ERROR


def _mock_server_config(cfg: RunConfig) -> MockServerConfig:
    if cfg.mock_config is not None:
        return load_mock_config(cfg.mock_config)
    return MockServerConfig(model=MockModelConfig())


def _mock_weights(cfg: RunConfig) -> int:
    assert cfg.out is not None
    model = _mock_server_config(cfg).model
    weights = victim_weights(model.seed, model.vocab_size, model.hidden_size)
    cfg.out.write_bytes(encode_raw_matrix(weights, dtype=cfg.dtype or "f64"))
    print(f"{cfg.out}: {model.vocab_size} x {model.hidden_size}")
    return EXIT_OK


def _serve(cfg: RunConfig) -> int:
    server = _mock_server_config(cfg)
    overrides = {key: value for key, value in (("host", cfg.host), ("port", cfg.port)) if value is not None}
    serve(server.model_copy(update=overrides))
    return EXIT_OK


async def _collect_live(cfg: RunConfig, vocab_size: int | None) -> tuple[list[ProbeVector], int]:
    assert cfg.queries is not None
    qs = QuerySet.from_file(cfg.queries, seed=cfg.seed)
    async with score_client(cfg.endpoint, cfg.mock_config) as client:
        vectors = await collect(
            client,
            qs,
            cfg.disclosure,
            cfg.n_min,
            expected_vocab_size=vocab_size,
            positions=cfg.positions,
            bias=cfg.bias,
            show_progress=cfg.progress,
        )
        return vectors, client.request_count


def _probe(cfg: RunConfig) -> int:
    assert cfg.transcript is not None
    vocab_size = None
    if cfg.fingerprint is not None:
        vocab_size = int(read_fingerprint_header(cfg.fingerprint)["vocab_size"])
    vectors, queries = asyncio.run(_collect_live(cfg, vocab_size))
    written = append_transcript(cfg.transcript, vectors)
    print(f"queries={queries} samples={written} transcript={cfg.transcript}")
    return EXIT_OK


def _verify(cfg: RunConfig) -> int:
    assert cfg.fingerprint is not None
    fp = load_fingerprint(cfg.fingerprint)
    if cfg.transcript is not None:
        samples = load_transcript(cfg.transcript)
    else:
        samples, _ = asyncio.run(_collect_live(cfg, fp.vocab_size))
    thr = Threshold(e_relative=cfg.threshold) if cfg.threshold is not None else None

    report: Report
    if cfg.subcommand is Subcommand.VERIFY_COMPAT:
        report = compat_test(fp, samples, thr)
        positive = report.verdict is CompatVerdict.SAME_LAST_LAYER
    else:
        report = dimension_difference(
            fp, samples, thr, ones_column=cfg.ones_column, derived_ratio=cfg.derived_ratio
        )
        positive = report.verdict is AlignVerdict.DERIVED_FROM_VICTIM

    text = render_report(report, cfg.format)
    sys.stdout.write(text if text.endswith("\n") else text + "\n")
    if cfg.out is not None:
        cfg.out.write_text(text, encoding="utf-8")
    return EXIT_OK if positive else EXIT_NEGATIVE


_HANDLERS = {
    Subcommand.FINGERPRINT_EXPORT: _export,
    Subcommand.FINGERPRINT_SHOW: _show,
    Subcommand.MOCK_WEIGHTS: _mock_weights,
    Subcommand.SERVE_MOCK: _serve,
    Subcommand.PROBE: _probe,
    Subcommand.VERIFY_COMPAT: _verify,
    Subcommand.VERIFY_ALIGN: _verify,
}


def main(argv: list[str] | None = None) -> int:
    """Точка входа: возвращает код выхода."""
    setup_logging()
    bind_contextvars(run_id=uuid.uuid4().hex[:12])
    try:
        cfg = parse_config(argv)
    except ValidationError as e:
        logger.error("cli.invalid_arguments", errors=e.errors(include_url=False))
        print(f"ошибка аргументов: {e}", file=sys.stderr)
        return EXIT_ERROR

    bind_contextvars(subcommand=cfg.subcommand.value)
    try:
        return _HANDLERS[cfg.subcommand](cfg)
    except FingerprintError as e:
        logger.error("cli.failed", error=str(e), error_type=type(e).__name__)
        print(f"ошибка: {e}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as e:
        logger.exception("cli.crashed", error=str(e))
        print(f"ошибка: {e!r}", file=sys.stderr)
        return EXIT_ERROR
