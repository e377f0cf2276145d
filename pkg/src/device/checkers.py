"""
真值检查器
只读取设备的持久状态，不读取任何策略输出或轨迹
"""
import re
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict

from .scenario import CheckerDef

_TIME_RE = re.compile(r"^\s*(\d{1,2})(?::(\d{2}))?\s*([ap]m)?\s*$", re.IGNORECASE)


class CheckStatus(Enum):
    VERIFIED = "VERIFIED"
    NOT_SATISFIED = "NOT_SATISFIED"
    CHECK_ERROR = "CHECK_ERROR"


@dataclass(frozen=True)
class CheckerResult:
    status: CheckStatus
    message: str = ""

    @property
    def verified(self) -> bool:
        return self.status == CheckStatus.VERIFIED

    def to_dict(self) -> Dict[str, str]:
        return {"status": self.status.value, "message": self.message}


def normalize_time(value: Any) -> str:
    """'7:30 AM'、'07:30'、'19:30' 统一为 24 小时制 'HH:MM'"""
    text = str(value)
    m = _TIME_RE.match(text)
    if not m:
        return text.strip().lower()
    hour = int(m.group(1))
    minute = int(m.group(2) or 0)
    meridiem = (m.group(3) or "").lower()
    if meridiem == "pm" and hour < 12:
        hour += 12
    elif meridiem == "am" and hour == 12:
        hour = 0
    return f"{hour:02d}:{minute:02d}"


def _normalize(value: Any, mode) -> Any:
    if mode == "time":
        return normalize_time(value)
    if mode == "lower":
        return str(value).strip().lower()
    return value


def evaluate_checker(checker: CheckerDef, state: Dict[str, Any], foreground: str,
                     expected: Dict[str, Any]) -> CheckerResult:
    if checker.require_foreground and foreground != checker.app_id:
        return CheckerResult(CheckStatus.NOT_SATISFIED,
                             f"{checker.app_id} is not in the foreground")

    actual = state.get(checker.state_key)

    if checker.fields:
        missing = [k for k in checker.fields if k not in expected]
        if missing:
            return CheckerResult(CheckStatus.CHECK_ERROR, f"missing expected values: {', '.join(missing)}")
        wanted = {k: _normalize(expected[k], checker.normalize) for k in checker.fields}
    elif checker.value_key is not None:
        if checker.value_key not in expected:
            return CheckerResult(CheckStatus.CHECK_ERROR, f"missing expected value: {checker.value_key}")
        wanted = _normalize(expected[checker.value_key], checker.normalize)
    else:
        wanted = _normalize(checker.value, checker.normalize)

    if checker.comparator == "equals":
        if _normalize(actual, checker.normalize) == wanted:
            return CheckerResult(CheckStatus.VERIFIED)
        return CheckerResult(CheckStatus.NOT_SATISFIED,
                             f"{checker.state_key} is {actual!r}, expected {wanted!r}")

    # contains
    items = actual if isinstance(actual, list) else []
    for item in items:
        if isinstance(wanted, dict):
            if isinstance(item, dict) and all(
                    _normalize(item.get(k), checker.normalize) == v for k, v in wanted.items()):
                return CheckerResult(CheckStatus.VERIFIED)
        elif _normalize(item, checker.normalize) == wanted:
            return CheckerResult(CheckStatus.VERIFIED)
    return CheckerResult(CheckStatus.NOT_SATISFIED,
                         f"{checker.state_key} does not contain {wanted!r}")
