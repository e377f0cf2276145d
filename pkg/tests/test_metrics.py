import json

import pytest

from src.harness.controller import ExecutionPath, RoundResult
from src.harness.metrics import MetricsReport, compute, render_text


def _result(index, success=True, path=ExecutionPath.L2_PURE, calls=0, phase="P2", variation="L",
            task="set_alarm", match_kind="FULL"):
    return RoundResult(round_index=index, phase=phase, task_id=task, variation=variation, success=success,
                       execution_path=path, policy_calls=calls, match_kind=match_kind)


def test_success_rate():
    results = [_result(1), _result(2), _result(3), _result(4, success=False)]
    assert compute(results).success_rate == 0.75


def test_zero_llm_rate():
    results = [_result(i, calls=0 if i < 3 else 2) for i in range(10)]
    assert compute(results).zero_llm_rate == pytest.approx(0.3)


def test_fallback_rate_over_replay_attempts():
    paths = [ExecutionPath.L2_TO_L1] * 2 + [ExecutionPath.L2_PURE] * 4 + [ExecutionPath.L2_STEP_FALLBACK] * 2
    results = [_result(i, path=p) for i, p in enumerate(paths)]
    results.append(_result(99, path=ExecutionPath.L1_FRESH, calls=6, match_kind="NO_MATCH"))

    report = compute(results)

    assert report.fallback_rate == 0.25
    assert report.match_rate == pytest.approx(8 / 9)


def test_layer_means_and_call_reduction():
    results = [
        _result(1, path=ExecutionPath.L1_FRESH, calls=6),
        _result(2, path=ExecutionPath.L2_TO_L1, calls=4),
        _result(3, path=ExecutionPath.L2_PURE, calls=0),
        _result(4, path=ExecutionPath.L2_SEMANTIC, calls=1),
    ]

    report = compute(results)

    assert report.mean_calls_l1 == 5.0
    assert report.mean_calls_l2 == 0.5
    assert report.call_reduction == 10.0
    assert report.total_policy_calls == 11
    assert report.layer_distribution["L1_FRESH"] == 1
    assert report.layer_distribution["L2_STEP_FALLBACK"] == 0


def test_call_reduction_undefined_without_replay_calls():
    assert compute([_result(1)]).call_reduction is None


def test_groups():
    results = [
        _result(1, phase="P1", variation="C", task="wifi_on", path=ExecutionPath.L1_FRESH, calls=4),
        _result(2, phase="P2", variation="L", task="wifi_on"),
        _result(3, phase="P2", variation="M", task="set_alarm", calls=1, success=False),
    ]

    report = compute(results)

    assert report.by_phase["P2"].rounds == 2
    assert report.by_phase["P2"].success_rate == 0.5
    assert report.by_variation["C"].mean_policy_calls == 4.0
    assert report.by_task["wifi_on"].zero_llm_rate == 0.5
    assert report.by_path["L2_PURE"].rounds == 2


def test_empty_report():
    report = compute([])
    assert report.rounds == 0
    assert report.success_rate == 0.0
    assert report.fallback_rate == 0.0
    assert report.by_phase == {}


def test_report_json_is_sorted():
    data = json.loads(compute([_result(1)]).to_json())
    assert data["rounds"] == 1
    assert list(data["by_phase"]) == ["P2"]


def test_render_text_lists_every_path():
    text = render_text(compute([_result(1, phase="P1"), _result(2, phase="P2", calls=1)]))
    assert text.startswith("rounds: 2\n")
    assert "success_rate: 1.0000" in text
    for path in ExecutionPath:
        assert path.value in text
    assert "P1" in text and "P2" in text
    assert text.endswith("\n")


def test_render_text_for_default_report():
    assert "rounds: 0" in render_text(MetricsReport())
