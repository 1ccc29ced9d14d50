"""Отчеты о проверке: таблица для человека и JSON для скриптов.

Машинный формат — один JSON-объект с отсортированными ключами и без
временных меток: два запуска с одинаковыми входами дают одинаковые байты.
Схема отчета строится из pydantic-моделей и проверяется jsonschema-rs.
"""

import io
import json
from enum import Enum
from typing import Annotated, Any

import jsonschema_rs
from pydantic import Field, TypeAdapter
from rich.console import Console
from rich.markup import escape
from rich.table import Table

from ..errors import InvalidInputError
from .verify import AlignReport, AlignVerdict, CompatReport, CompatVerdict

Report = CompatReport | AlignReport

_REPORT_ADAPTER: TypeAdapter[Report] = TypeAdapter(
    Annotated[Report, Field(discriminator="report_type")]
)

REPORT_SCHEMAS: dict[str, dict[str, Any]] = {
    "compat": CompatReport.model_json_schema(mode="serialization"),
    "align": AlignReport.model_json_schema(mode="serialization"),
}


class ReportFormat(str, Enum):
    HUMAN = "human"
    MACHINE = "machine"


def render_report(report: Report, fmt: ReportFormat | str = ReportFormat.HUMAN) -> str:
    """Отчет в виде текста заданного формата."""
    fmt = ReportFormat(fmt)
    if fmt is ReportFormat.MACHINE:
        return json.dumps(report.model_dump(mode="json"), sort_keys=True)
    return _render_human(report)


def validate_machine_report(text: str) -> dict[str, Any]:
    """Проверяет машинный отчет по схеме его типа, возвращает разобранный объект."""
    try:
        instance = json.loads(text)
    except json.JSONDecodeError as e:
        raise InvalidInputError(f"отчет не является JSON: {e}") from e
    kind = instance.get("report_type") if isinstance(instance, dict) else None
    schema = REPORT_SCHEMAS.get(str(kind))
    if schema is None:
        raise InvalidInputError(f"неизвестный тип отчета: {kind!r}")
    try:
        jsonschema_rs.validate(schema, instance)
    except jsonschema_rs.ValidationError as e:
        raise InvalidInputError(f"отчет не соответствует схеме: {e}") from e
    return instance


def parse_report(text: str) -> Report:
    """Обратное преобразование машинного отчета."""
    return _REPORT_ADAPTER.validate_json(text)


def _fmt(value: float) -> str:
    return f"{value:.3e}"


def _render_human(report: Report) -> str:
    summary = report.distances_summary
    table = Table(show_header=False, box=None, pad_edge=False)
    table.add_column("field", style="bold")
    table.add_column("value")

    if isinstance(report, CompatReport):
        title = "Тест совместимости"
        same = report.verdict is CompatVerdict.SAME_LAST_LAYER
        rationale = (
            f"все относительные расстояния < {_fmt(report.threshold)}"
            if same
            else f"максимальное расстояние {_fmt(summary.max)} >= {_fmt(report.threshold)}"
        )
        rows = [
            ("verdict", report.verdict.value),
            ("rationale", rationale),
        ]
    else:
        title = "Разность размерностей"
        bound = report.derived_ratio * report.hidden_size
        derived = report.verdict is AlignVerdict.DERIVED_FROM_VICTIM
        relation = "<" if derived else ">="
        rows = [
            ("verdict", report.verdict.value),
            ("rationale", f"delta_r = {report.delta_r} {relation} {bound:g} = {report.derived_ratio:g} * h"),
            ("delta_r", str(report.delta_r)),
            ("basis_rank", str(report.basis_rank)),
            ("ones_column", "on" if report.ones_column else "off"),
            ("augmenting_indices", _short_list(report.augmenting_indices)),
        ]

    rows += [
        ("model_id", report.model_id),
        ("mode", report.mode.value),
        ("n_samples", str(report.n_samples)),
        ("|V| x h", f"{report.vocab_size} x {report.hidden_size}"),
        ("threshold", _fmt(report.threshold)),
        ("distance mean", _fmt(summary.mean)),
        ("distance min", _fmt(summary.min)),
        ("distance max", _fmt(summary.max)),
    ]
    for name, value in rows:
        table.add_row(name, escape(value))

    buffer = io.StringIO()
    console = Console(file=buffer, width=100, color_system=None, force_terminal=False)
    console.print(f"[bold]{title}[/bold]")
    console.print(table)
    return buffer.getvalue()


def _short_list(values: list[int], limit: int = 20) -> str:
    if len(values) <= limit:
        return ", ".join(map(str, values)) or "-"
    head = ", ".join(map(str, values[:limit]))
    return f"{head}, ... (+{len(values) - limit})"
