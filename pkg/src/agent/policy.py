"""
策略接口
步骤决策、槽位抽取、语义匹配确认、单步回退四种角色共用一个入口，
调用计数器由基类统一维护，所有指标都以它为准
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from ..device.actions import Action, ActionKind
from ..device.ui_model import UITree
from ..errors import PolicyParseError

HISTORY_LIMIT = 20


class PolicyRole(Enum):
    STEP_DECIDE = "STEP_DECIDE"
    SLOT_EXTRACT = "SLOT_EXTRACT"
    MATCH_CONFIRM = "MATCH_CONFIRM"
    STEP_FALLBACK = "STEP_FALLBACK"


STEP_ROLES = (PolicyRole.STEP_DECIDE, PolicyRole.STEP_FALLBACK)

# 槽位绑定：名称 -> (值, 类型)
SlotBindings = Dict[str, Tuple[str, str]]


@dataclass
class PolicyRequest:
    role: PolicyRole
    instruction: str
    tree: Optional[UITree] = None
    history: List[Tuple[Action, str]] = field(default_factory=list)
    feedback: Optional[str] = None
    context: Dict[str, Any] = field(default_factory=dict)  # 角色相关的附加信息

    def __post_init__(self):
        if len(self.history) >= HISTORY_LIMIT:
            raise ValueError(f"历史长度 {len(self.history)} 超过上限 {HISTORY_LIMIT - 1}")


@dataclass
class PolicyResponse:
    action: Optional[Action] = None
    reasoning: str = ""
    slot_bindings: Optional[SlotBindings] = None
    confirm: Optional[bool] = None


@dataclass
class CallCounter:
    """策略调用计数（单个回合序列内单调递增）"""
    total: int = 0
    by_role: Dict[str, int] = field(default_factory=dict)

    def increment(self, role: PolicyRole) -> None:
        self.total += 1
        self.by_role[role.value] = self.by_role.get(role.value, 0) + 1

    def snapshot(self) -> Dict[str, Any]:
        return {"total": self.total, "by_role": dict(sorted(self.by_role.items()))}


class Policy:
    """策略基类：子类实现 respond，decide 负责计数和角色约束校验"""

    def __init__(self, counter: Optional[CallCounter] = None):
        self.counter = counter if counter is not None else CallCounter()

    def decide(self, request: PolicyRequest) -> PolicyResponse:
        # 先计数：解析失败也算一次调用
        self.counter.increment(request.role)
        response = self.respond(request)
        check_role_invariant(request.role, response)
        return response

    def respond(self, request: PolicyRequest) -> PolicyResponse:
        raise NotImplementedError


def check_role_invariant(role: PolicyRole, response: PolicyResponse) -> None:
    if role in STEP_ROLES and response.action is None:
        raise PolicyParseError(f"{role.value} 响应缺少 action")
    if role == PolicyRole.SLOT_EXTRACT and response.slot_bindings is None:
        raise PolicyParseError("SLOT_EXTRACT 响应缺少 slot_bindings")
    if role == PolicyRole.MATCH_CONFIRM:
        if response.confirm is None:
            raise PolicyParseError("MATCH_CONFIRM 响应缺少 confirm")
        if response.confirm and response.slot_bindings is None:
            response.slot_bindings = {}


def parse_slot_bindings(raw: Any) -> SlotBindings:
    """接受 {"name": {"value": .., "type": ..}} 或 {"name": [value, type]}"""
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise PolicyParseError(f"slot_bindings 必须是对象，实际为 {type(raw).__name__}")
    bindings: SlotBindings = {}
    for name, item in raw.items():
        if isinstance(item, dict):
            value, slot_type = item.get("value"), item.get("type", "text")
        elif isinstance(item, (list, tuple)) and len(item) == 2:
            value, slot_type = item
        else:
            value, slot_type = item, "text"
        if value is None:
            raise PolicyParseError(f"槽位 {name} 缺少取值")
        bindings[str(name)] = (str(value), str(slot_type))
    return bindings


def parse_response(payload: Any, role: PolicyRole) -> PolicyResponse:
    """把后端返回的JSON对象转换为 PolicyResponse"""
    if not isinstance(payload, dict):
        raise PolicyParseError("响应不是JSON对象")
    action = None
    if role in STEP_ROLES:
        raw_action = payload.get("action")
        if not isinstance(raw_action, dict):
            raise PolicyParseError("响应缺少 action 对象")
        try:
            action = Action.from_dict(raw_action)
        except (KeyError, ValueError, TypeError) as e:
            raise PolicyParseError(f"非法动作: {e}") from e
    bindings = None
    if role in (PolicyRole.SLOT_EXTRACT, PolicyRole.MATCH_CONFIRM):
        bindings = parse_slot_bindings(payload.get("slot_bindings"))
    confirm = None
    if role == PolicyRole.MATCH_CONFIRM:
        confirm = payload.get("confirm")
        if not isinstance(confirm, bool):
            raise PolicyParseError("confirm 必须是布尔值")
    return PolicyResponse(action=action, reasoning=str(payload.get("reasoning", "")),
                          slot_bindings=bindings, confirm=confirm)


def fail_response(reasoning: str) -> PolicyResponse:
    return PolicyResponse(action=Action(ActionKind.FAIL), reasoning=reasoning)
