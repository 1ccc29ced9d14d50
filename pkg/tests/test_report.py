import json

import pytest

from src.core.report import (
    REPORT_SCHEMAS,
    parse_report,
    render_report,
    validate_machine_report,
)
from src.core.verify import AlignVerdict, CompatVerdict, compat_test, dimension_difference
from src.errors import InvalidInputError
from src.mocknet.model import AttackKind


@pytest.fixture
def compat_report(fingerprint, victim_config, samples_of):
    return compat_test(fingerprint, samples_of(victim_config, 40))


@pytest.fixture
def align_report(make_config, fingerprint_of, samples_of):
    cfg = make_config(AttackKind.LAST_LAYER_LORA, rank=16)
    return dimension_difference(fingerprint_of(cfg), samples_of(cfg, 80))


def test_human_compat_report(compat_report):
    text = render_report(compat_report, "human")

    assert compat_report.verdict is CompatVerdict.SAME_LAST_LAYER
    assert "SameLastLayer" in text
    assert f"{compat_report.distances_summary.max:.3e}" in text


def test_human_align_report_has_rationale(align_report):
    text = render_report(align_report, "human")

    assert align_report.delta_r == 16
    assert align_report.verdict is AlignVerdict.INDEPENDENT
    assert "Independent" in text
    assert "delta_r = 16 >= 3.2" in text


def test_machine_align_report(align_report):
    text = render_report(align_report, "machine")
    data = json.loads(text)

    assert data["delta_r"] == 16
    assert data["hidden_size"] == 32
    assert data["verdict"] == "Independent"
    assert data["report_type"] == "align"
    assert list(data) == sorted(data)
    for field in ("verdict", "delta_r", "n_samples", "hidden_size", "threshold", "mode",
                  "augmenting_indices", "distances_summary"):
        assert field in data


@pytest.mark.parametrize("name", ["compat_report", "align_report"])
def test_machine_report_validates_and_round_trips(request, name):
    report = request.getfixturevalue(name)
    text = render_report(report, "machine")

    validate_machine_report(text)
    assert parse_report(text) == report
    assert render_report(parse_report(text), "machine") == text


def test_schema_rejects_tampered_report(align_report):
    data = json.loads(render_report(align_report, "machine"))
    data["delta_r"] = -1

    with pytest.raises(InvalidInputError):
        validate_machine_report(json.dumps(data))


def test_unknown_report_type():
    with pytest.raises(InvalidInputError):
        validate_machine_report('{"report_type": "other"}')
    with pytest.raises(InvalidInputError):
        validate_machine_report("not json")


def test_schemas_document_stable_fields():
    assert set(REPORT_SCHEMAS) == {"compat", "align"}
    align_fields = set(REPORT_SCHEMAS["align"]["properties"])
    assert {"verdict", "delta_r", "augmenting_indices", "distances_summary"} <= align_fields
