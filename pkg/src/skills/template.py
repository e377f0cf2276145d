"""
技能模板
意图模式 + 类型化槽位 + 每步（定位器, 状态描述符, 动作, 参数）骨架
"""
import json
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, List, Optional

from ..device.actions import TARGETED_KINDS, ActionKind
from ..device.ui_model import UIStateDescriptor
from ..errors import SlotMismatchError, UnlocatableElementError

PLACEHOLDER_RE = re.compile(r"\{([a-z_]+)\}")

V_MAX = 3

# 定位器特征权重（百分之一为单位，总和100）
LOCATOR_WEIGHTS: Dict[str, int] = {
    "resource_id": 40,
    "text": 20,
    "content_desc": 15,
    "class_name": 10,
    "parent_class": 10,
    "sibling_index": 5,
}
LOCATOR_FEATURES = tuple(LOCATOR_WEIGHTS)


class SlotType(Enum):
    TEXT = "text"
    TIME = "time"
    PHONE = "phone"
    URL = "url"


@dataclass(frozen=True)
class Slot:
    name: str
    slot_type: SlotType

    @property
    def placeholder(self) -> str:
        return "{" + self.name + "}"

    def to_dict(self) -> Dict[str, str]:
        return {"name": self.name, "slot_type": self.slot_type.value}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Slot":
        return cls(name=data["name"], slot_type=SlotType(data["slot_type"]))


def placeholders(text: Optional[str]) -> List[str]:
    return PLACEHOLDER_RE.findall(text or "")


def fill_placeholders(text: Optional[str], bindings: Optional[Dict[str, str]]) -> Optional[str]:
    """把 {name} 替换为绑定值；未绑定的占位符保持原样"""
    if text is None or not bindings:
        return text
    return PLACEHOLDER_RE.sub(lambda m: str(bindings.get(m.group(1), m.group(0))), text)


@dataclass(frozen=True)
class ElementLocator:
    """最多六个特征的加权定位器；权重是模块常量，不随定位器存储"""
    resource_id: Optional[str] = None
    text: Optional[str] = None
    content_desc: Optional[str] = None
    class_name: Optional[str] = None
    parent_class: Optional[str] = None
    sibling_index: Optional[int] = None

    def __post_init__(self):
        if not self.active_features():
            raise UnlocatableElementError("定位器至少需要一个非空特征")

    def active_features(self) -> List[str]:
        active = []
        for name in LOCATOR_FEATURES:
            value = getattr(self, name)
            if value is None or value == "":
                continue
            active.append(name)
        return active

    def substituted(self, bindings: Optional[Dict[str, str]]) -> "ElementLocator":
        if self.text is None or not bindings:
            return self
        return replace(self, text=fill_placeholders(self.text, bindings))

    def to_dict(self) -> Dict[str, Any]:
        return {name: getattr(self, name) for name in LOCATOR_FEATURES}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ElementLocator":
        sibling = data.get("sibling_index")
        return cls(
            resource_id=data.get("resource_id"),
            text=data.get("text"),
            content_desc=data.get("content_desc"),
            class_name=data.get("class_name"),
            parent_class=data.get("parent_class"),
            sibling_index=int(sibling) if sibling is not None else None,
        )


@dataclass
class SkillStep:
    action_kind: ActionKind
    descriptor: UIStateDescriptor
    locator: Optional[ElementLocator] = None
    params: Optional[str] = None

    def __post_init__(self):
        if (self.action_kind in TARGETED_KINDS) != (self.locator is not None):
            raise ValueError(f"{self.action_kind.value} 步骤的定位器与动作类型不一致")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "action_kind": self.action_kind.value,
            "descriptor": self.descriptor.to_dict(),
            "locator": self.locator.to_dict() if self.locator else None,
            "params": self.params,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SkillStep":
        locator = data.get("locator")
        return cls(
            action_kind=ActionKind(data["action_kind"]),
            descriptor=UIStateDescriptor.from_dict(data["descriptor"]),
            locator=ElementLocator.from_dict(locator) if locator else None,
            params=data.get("params"),
        )


@dataclass
class SkillTemplate:
    skill_id: str
    intent_pattern: str
    target_app: str
    slots: List[Slot] = field(default_factory=list)
    steps: List[SkillStep] = field(default_factory=list)
    version: int = 1
    n_succ: int = 0
    n_fail: int = 0
    needs_recompile: bool = False
    last_success: int = 0  # 最近一次成功的全局序号，0 表示从未成功
    origin_skill: Optional[str] = None  # 从哪个技能的回退中恢复而来

    def __post_init__(self):
        if not 1 <= self.version <= V_MAX:
            raise ValueError(f"版本号 {self.version} 超出范围 1..{V_MAX}")
        declared = [s.name for s in self.slots]
        used = placeholders(self.intent_pattern)
        if set(declared) != set(used) or len(declared) != len(set(declared)):
            raise SlotMismatchError(f"意图模式占位符 {used} 与槽位 {declared} 不一致")

    @property
    def slot_names(self) -> List[str]:
        return [s.name for s in self.slots]

    @property
    def step_placeholders(self) -> List[str]:
        """步骤参数和定位器文本中引用的槽位名"""
        names: List[str] = []
        for step in self.steps:
            texts = [step.params, step.locator.text if step.locator else None]
            for name in (n for text in texts for n in placeholders(text)):
                if name not in names:
                    names.append(name)
        return names

    @property
    def r_fail(self) -> float:
        total = self.n_succ + self.n_fail
        return self.n_fail / total if total else 0.0

    def instruction_for(self, bindings: Dict[str, str]) -> str:
        return fill_placeholders(self.intent_pattern, bindings)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "skill_id": self.skill_id,
            "intent_pattern": self.intent_pattern,
            "target_app": self.target_app,
            "slots": [s.to_dict() for s in self.slots],
            "steps": [s.to_dict() for s in self.steps],
            "version": self.version,
            "n_succ": self.n_succ,
            "n_fail": self.n_fail,
            "needs_recompile": self.needs_recompile,
            "last_success": self.last_success,
            "origin_skill": self.origin_skill,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SkillTemplate":
        return cls(
            skill_id=data["skill_id"],
            intent_pattern=data["intent_pattern"],
            target_app=data["target_app"],
            slots=[Slot.from_dict(s) for s in data.get("slots", [])],
            steps=[SkillStep.from_dict(s) for s in data.get("steps", [])],
            version=int(data.get("version", 1)),
            n_succ=int(data.get("n_succ", 0)),
            n_fail=int(data.get("n_fail", 0)),
            needs_recompile=bool(data.get("needs_recompile", False)),
            last_success=int(data.get("last_success", 0)),
            origin_skill=data.get("origin_skill"),
        )

    @classmethod
    def from_json(cls, text: str) -> "SkillTemplate":
        return cls.from_dict(json.loads(text))
