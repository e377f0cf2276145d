import json

import pytest
import structlog

from src.config import DEFAULT_DISMISS_KEYWORDS, LoopBudget, ReplayBudget, Settings
from src.errors import BudgetError
from src.log import configure_logging, get_logger
from src.trace import TraceLog

ENV_VARS = ("LLM_API_PROVIDER", "LLM_MODEL", "SKILL_STORE_PATH", "LOG_LEVEL", "SIM_SEED", "LOOP_N_MAX",
            "LOOP_G_MAX", "LOOP_K_RETRY", "REPLAY_B_CONSEC", "REPLAY_B_TOTAL", "DISMISS_KEYWORDS")


@pytest.fixture
def clean_env(monkeypatch, tmp_path):
    # 先 setenv 再 delenv，测试结束后 dotenv 写入的值也会被撤销
    for name in ENV_VARS:
        monkeypatch.setenv(name, "")
        monkeypatch.delenv(name)
    return str(tmp_path / "missing.env")


def test_defaults(clean_env):
    settings = Settings.from_env(clean_env)
    assert settings.loop_budget == LoopBudget()
    assert settings.replay_budget == ReplayBudget()
    assert settings.dismiss_keywords == DEFAULT_DISMISS_KEYWORDS
    assert settings.seed == 0


def test_environment_overrides(clean_env, monkeypatch):
    monkeypatch.setenv("LLM_API_PROVIDER", "DeepSeek")
    monkeypatch.setenv("SKILL_STORE_PATH", "/tmp/s.db")
    monkeypatch.setenv("SIM_SEED", "7")
    monkeypatch.setenv("REPLAY_B_TOTAL", "8")
    monkeypatch.setenv("DISMISS_KEYWORDS", "Allow, Continue ,")

    settings = Settings.from_env(clean_env)

    assert settings.llm_provider == "deepseek"
    assert settings.store_path == "/tmp/s.db"
    assert settings.seed == 7
    assert settings.replay_budget.b_total == 8
    assert settings.replay_budget.b_consec == 2
    assert settings.dismiss_keywords == ("allow", "continue")


def test_env_file_is_read(clean_env, tmp_path):
    env = tmp_path / ".env"
    env.write_text("LOOP_N_MAX=12\n", encoding="utf-8")
    settings = Settings.from_env(str(env))

    assert settings.loop_budget.n_max == 12


def test_non_integer_budget_is_rejected(clean_env, monkeypatch):
    monkeypatch.setenv("LOOP_G_MAX", "three")
    with pytest.raises(BudgetError):
        Settings.from_env(clean_env)


def test_describe_hides_api_key():
    summary = Settings(llm_api_key="secret").describe()
    assert "llm_api_key" not in summary
    assert summary["llm_model"] == "gpt-4o-mini"


@pytest.mark.parametrize("kwargs", [{"n_max": 10}, {"g_max": 5}, {"k_retry": 0}])
def test_loop_budget_is_fixed_without_override(kwargs):
    with pytest.raises(BudgetError):
        LoopBudget(**kwargs)


def test_budget_must_stay_positive():
    with pytest.raises(BudgetError):
        ReplayBudget(b_total=0, override=True)


@pytest.mark.parametrize("step, expected", [(4, False), (5, True), (6, False), (8, True), (11, True), (12, False)])
def test_checkpoints(step, expected):
    assert LoopBudget().is_checkpoint(step) is expected


def test_json_logging(capsys):
    configure_logging("INFO", "json")
    get_logger("tests").info("skill_saved", skill="clock-1", version=2)

    line = capsys.readouterr().err.strip().splitlines()[-1]
    record = json.loads(line)
    assert record == {"event": "skill_saved", "level": "info", "skill": "clock-1", "version": 2}
    structlog.reset_defaults()


def test_log_level_filters(capsys):
    configure_logging("WARNING", "console")
    get_logger("tests").info("hidden")
    assert "hidden" not in capsys.readouterr().err
    structlog.reset_defaults()


def test_trace_log_is_deterministic(tmp_path):
    trace = TraceLog("rounds")
    trace.emit(b=1, a={"y": 2, "x": 1})
    assert trace.to_ndjson() == '{"a": {"x": 1,"y": 2},"b": 1}\n'

    path = tmp_path / "logs" / "rounds.ndjson"
    trace.write(str(path))
    assert path.read_text(encoding="utf-8") == trace.to_ndjson()
    assert TraceLog().to_ndjson() == ""
