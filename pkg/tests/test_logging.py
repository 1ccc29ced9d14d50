import numpy as np
import pytest
from structlog.testing import capture_logs

from src.llmfp_logging import _numpy_to_builtin, _redact_prompts, timed, timed_block


def test_prompts_are_redacted_to_length_and_digest():
    event = _redact_prompts(None, "info", {"event": "x", "prompt": "секретный промпт"})

    assert "секрет" not in event["prompt"]
    assert event["prompt"].startswith("<16 chars sha256:")


def test_numpy_values_become_builtins():
    event = _numpy_to_builtin(
        None, "info", {"delta_r": np.int64(16), "d": np.float64(0.5), "idx": np.arange(3), "big": np.zeros(100)}
    )

    assert event["delta_r"] == 16 and type(event["delta_r"]) is int
    assert type(event["d"]) is float
    assert event["idx"] == [0, 1, 2]
    assert event["big"] == "ndarray(100,)"


def test_timed_logs_duration_and_failure():
    @timed("demo.sync")
    def ok() -> int:
        return 1

    @timed("demo.broken")
    def broken() -> None:
        raise ValueError("boom")

    with capture_logs() as logs:
        assert ok() == 1
        with pytest.raises(ValueError):
            broken()

    events = [entry["event"] for entry in logs]
    assert events == ["demo.sync.duration", "demo.broken.failed"]
    assert logs[1]["error_type"] == "ValueError"


async def test_timed_block_async():
    with capture_logs() as logs:
        async with timed_block("demo.block"):
            pass

    assert logs[0]["event"] == "demo.block.duration"
    assert logs[0]["duration_sec"] >= 0
