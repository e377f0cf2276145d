"""
脚本化策略
按（指令正则, 屏幕, 选择器）查表返回动作，完全确定，用于测试和离线实验
"""
import json
import re
from dataclasses import dataclass
from typing import Any, Dict, List, Optional

from ..device.actions import Action, ActionKind
from ..device.ui_model import UITree, flatten_tree
from ..errors import PolicyParseError
from ..log import get_logger
from .policy import (STEP_ROLES, CallCounter, Policy, PolicyRequest, PolicyResponse, PolicyRole,
                     fail_response)

logger = get_logger(__name__)

_TEMPLATE_RE = re.compile(r"\{([a-z_]+)\}")
SELECTOR_FIELDS = ("resource_id", "text", "content_desc", "class_name")


def fill_template(value: str, groups: Dict[str, str]) -> str:
    return _TEMPLATE_RE.sub(lambda m: groups.get(m.group(1), m.group(0)), value)


def resolve_selector(tree: Optional[UITree], selector: Dict[str, Any]) -> Optional[int]:
    """选择器 -> 展平列表中第一个匹配节点的下标"""
    if tree is None:
        return None
    for index, node in enumerate(flatten_tree(tree)):
        if all(getattr(node, key, None) == value for key, value in selector.items()):
            return index
    return None


@dataclass
class ScriptedRule:
    role: PolicyRole
    instruction_pattern: "re.Pattern[str]"
    response: Dict[str, Any]
    screen_id: Optional[str] = None
    present: Optional[Dict[str, Any]] = None
    absent: Optional[Dict[str, Any]] = None
    skill_pattern: Optional[str] = None

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ScriptedRule":
        try:
            role = PolicyRole(data["role"])
            pattern = re.compile(data.get("instruction_pattern", ".*"), re.IGNORECASE)
        except (KeyError, ValueError, re.error) as e:
            raise PolicyParseError(f"脚本规则无效: {data!r} ({e})") from e
        for key in ("present", "absent"):
            selector = data.get(key)
            if selector and any(k not in SELECTOR_FIELDS for k in selector):
                raise PolicyParseError(f"选择器字段无效: {selector!r}")
        return cls(role=role, instruction_pattern=pattern, response=data.get("response", {}),
                   screen_id=data.get("screen_id"), present=data.get("present"),
                   absent=data.get("absent"), skill_pattern=data.get("skill_pattern"))

    def match(self, request: PolicyRequest) -> Optional["re.Match[str]"]:
        m = self.instruction_pattern.search(request.instruction)
        if m is None:
            return None
        if self.screen_id is not None and (request.tree is None or request.tree.activity != self.screen_id):
            return None
        if self.present is not None and resolve_selector(request.tree, self.present) is None:
            return None
        if self.absent is not None and resolve_selector(request.tree, self.absent) is not None:
            return None
        if self.skill_pattern is not None and request.context.get("intent_pattern") != self.skill_pattern:
            return None
        return m


class ScriptedPolicy(Policy):
    """查表策略；premature_done_at=k 时第k步（无反馈时）提前报告完成"""

    def __init__(self, rules: List[ScriptedRule], counter: Optional[CallCounter] = None,
                 premature_done_at: Optional[int] = None):
        super().__init__(counter)
        self.rules = rules
        self.premature_done_at = premature_done_at

    @classmethod
    def from_file(cls, path: str, **kwargs) -> "ScriptedPolicy":
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
        rules = data["rules"] if isinstance(data, dict) else data
        return cls([ScriptedRule.from_dict(r) for r in rules], **kwargs)

    def respond(self, request: PolicyRequest) -> PolicyResponse:
        if (request.role == PolicyRole.STEP_DECIDE and self.premature_done_at is not None
                and request.feedback is None and len(request.history) + 1 == self.premature_done_at):
            return PolicyResponse(action=Action(ActionKind.DONE), reasoning="任务看起来已经完成")

        roles = [request.role]
        if request.role == PolicyRole.STEP_FALLBACK:
            roles.append(PolicyRole.STEP_DECIDE)
        for role in roles:
            for rule in self.rules:
                if rule.role != role:
                    continue
                m = rule.match(request)
                if m is not None:
                    groups = {k: v for k, v in m.groupdict().items() if v is not None}
                    return self._build(rule, groups, request)

        logger.debug("scripted_table_miss", role=request.role.value, instruction=request.instruction,
                     screen=request.tree.activity if request.tree else None)
        if request.role in STEP_ROLES:
            return fail_response("脚本表中没有匹配的规则")
        if request.role == PolicyRole.SLOT_EXTRACT:
            return PolicyResponse(slot_bindings={}, reasoning="没有可参数化的值")
        return PolicyResponse(confirm=False, reasoning="指令与候选技能不符")

    def _build(self, rule: ScriptedRule, groups: Dict[str, str], request: PolicyRequest) -> PolicyResponse:
        spec = rule.response
        reasoning = fill_template(spec.get("reasoning", ""), groups)
        action = None
        if "action" in spec:
            raw = spec["action"]
            kind = ActionKind(raw["kind"])
            index = None
            if "target" in raw:
                index = resolve_selector(request.tree, raw["target"])
                if index is None:
                    return fail_response(f"找不到目标元素 {raw['target']!r}")
            payload = raw.get("payload")
            if payload is not None:
                payload = fill_template(payload, groups)
            action = Action(kind, element_index=index, payload=payload)

        bindings = None
        if "slot_bindings" in spec:
            bindings = {
                name: (fill_template(item["value"], groups), item.get("type", "text"))
                for name, item in spec["slot_bindings"].items()
            }
        confirm = spec.get("confirm")
        if rule.role == PolicyRole.MATCH_CONFIRM and bindings is None and confirm:
            bindings = {}
        return PolicyResponse(action=action, reasoning=reasoning, slot_bindings=bindings, confirm=confirm)
