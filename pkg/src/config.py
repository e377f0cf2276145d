"""
配置管理
从环境变量（.env）加载运行配置，并定义循环预算与回放预算常量
"""
import os
from dataclasses import dataclass, field, fields
from typing import Dict, Optional, Tuple

from dotenv import load_dotenv

from .errors import BudgetError

PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
DATA_DIR = os.path.join(PROJECT_ROOT, "data")
PROMPTS_DIR = os.path.join(PROJECT_ROOT, "prompts")

DEFAULT_SCENARIO_DIR = os.path.join(DATA_DIR, "scenarios")
DEFAULT_KEYWORDS_PATH = os.path.join(DATA_DIR, "app_keywords.json")
DEFAULT_POLICY_PATH = os.path.join(DATA_DIR, "policies", "scripted.json")

# 自动关闭弹窗时识别的按钮关键词（按单词边界匹配）
DEFAULT_DISMISS_KEYWORDS: Tuple[str, ...] = (
    "allow", "ok", "skip", "got it", "accept", "dismiss", "not now",
)


def _check_budget(budget, defaults: Dict[str, int]) -> None:
    for name, default in defaults.items():
        value = getattr(budget, name)
        if not isinstance(value, int) or value <= 0:
            raise BudgetError(f"{name} 必须是正整数，实际为 {value!r}")
        if not budget.override and value != default:
            raise BudgetError(f"{name} 固定为 {default}，修改需通过配置显式覆盖")


@dataclass(frozen=True)
class LoopBudget:
    """第一层执行循环的预算"""
    n_max: int = 20  # 每条轨迹的最大步数
    g_max: int = 3  # 连续护栏覆盖次数上限
    k_retry: int = 2  # DONE被检查器拒绝后的重试次数
    checkpoint_start: int = 5
    checkpoint_every: int = 3
    override: bool = field(default=False, compare=False, repr=False)

    def __post_init__(self):
        _check_budget(self, {"n_max": 20, "g_max": 3, "k_retry": 2,
                             "checkpoint_start": 5, "checkpoint_every": 3})

    def is_checkpoint(self, step: int) -> bool:
        """第5、8、11……步之后运行检查器"""
        if step < self.checkpoint_start:
            return False
        return (step - self.checkpoint_start) % self.checkpoint_every == 0


@dataclass(frozen=True)
class ReplayBudget:
    """第二层回放的单步回退预算"""
    b_consec: int = 2
    b_total: int = 5
    override: bool = field(default=False, compare=False, repr=False)

    def __post_init__(self):
        _check_budget(self, {"b_consec": 2, "b_total": 5})


def _int_env(name: str) -> Optional[int]:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return None
    try:
        return int(raw)
    except ValueError as e:
        raise BudgetError(f"环境变量 {name} 不是整数: {raw!r}") from e


def _budget_from_env(cls, mapping: Dict[str, str]):
    values = {}
    for attr, env_name in mapping.items():
        value = _int_env(env_name)
        if value is not None:
            values[attr] = value
    if not values:
        return cls()
    return cls(override=True, **values)


@dataclass
class Settings:
    """运行配置"""
    llm_provider: str = "openai"
    llm_model: str = "gpt-4o-mini"
    llm_api_key: Optional[str] = None
    store_path: str = "skills.db"
    scenario_dir: str = DEFAULT_SCENARIO_DIR
    keywords_path: str = DEFAULT_KEYWORDS_PATH
    policy_path: str = DEFAULT_POLICY_PATH
    log_level: str = "INFO"
    log_format: str = "console"
    seed: int = 0
    loop_budget: LoopBudget = field(default_factory=LoopBudget)
    replay_budget: ReplayBudget = field(default_factory=ReplayBudget)
    dismiss_keywords: Tuple[str, ...] = DEFAULT_DISMISS_KEYWORDS

    @classmethod
    def from_env(cls, env_file: Optional[str] = None) -> "Settings":
        """从环境变量构建配置（.env中的值不会覆盖已存在的环境变量）"""
        if env_file:
            load_dotenv(env_file)
        else:
            load_dotenv()

        keywords = os.getenv("DISMISS_KEYWORDS")
        dismiss = DEFAULT_DISMISS_KEYWORDS
        if keywords:
            dismiss = tuple(k.strip().lower() for k in keywords.split(",") if k.strip())

        return cls(
            llm_provider=os.getenv("LLM_API_PROVIDER", "openai").lower(),
            llm_model=os.getenv("LLM_MODEL", "gpt-4o-mini"),
            llm_api_key=os.getenv("LLM_API_KEY"),
            store_path=os.getenv("SKILL_STORE_PATH", "skills.db"),
            scenario_dir=os.getenv("SCENARIO_DIR", DEFAULT_SCENARIO_DIR),
            keywords_path=os.getenv("APP_KEYWORDS_PATH", DEFAULT_KEYWORDS_PATH),
            policy_path=os.getenv("SCRIPTED_POLICY_PATH", DEFAULT_POLICY_PATH),
            log_level=os.getenv("LOG_LEVEL", "INFO"),
            log_format=os.getenv("LOG_FORMAT", "console"),
            seed=_int_env("SIM_SEED") or 0,
            loop_budget=_budget_from_env(LoopBudget, {
                "n_max": "LOOP_N_MAX",
                "g_max": "LOOP_G_MAX",
                "k_retry": "LOOP_K_RETRY",
            }),
            replay_budget=_budget_from_env(ReplayBudget, {
                "b_consec": "REPLAY_B_CONSEC",
                "b_total": "REPLAY_B_TOTAL",
            }),
            dismiss_keywords=dismiss,
        )

    def describe(self) -> Dict[str, object]:
        """用于日志输出的配置摘要（不含密钥）"""
        summary = {}
        for f in fields(self):
            if f.name == "llm_api_key":
                continue
            summary[f.name] = getattr(self, f.name)
        return summary
