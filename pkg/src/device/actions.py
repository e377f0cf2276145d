"""
动作与扰动定义
"""
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional


class ActionKind(Enum):
    """动作类型"""
    TAP = "TAP"
    INPUT = "INPUT"
    SCROLL = "SCROLL"
    BACK = "BACK"
    LAUNCH = "LAUNCH"
    DONE = "DONE"
    FAIL = "FAIL"


# 需要目标元素的动作
TARGETED_KINDS = (ActionKind.TAP, ActionKind.INPUT)


class ApplyOutcome(Enum):
    CHANGED = "CHANGED"
    UNCHANGED = "UNCHANGED"
    REJECTED = "REJECTED"


@dataclass(frozen=True)
class Action:
    """设备动作：类型 + 元素下标 + 参数（输入文本 / 应用ID / 滚动方向）"""
    kind: ActionKind
    element_index: Optional[int] = None
    payload: Optional[str] = None

    def __post_init__(self):
        if self.kind in TARGETED_KINDS and self.element_index is None:
            raise ValueError(f"{self.kind.value} 动作需要 element_index")
        if self.kind == ActionKind.INPUT and self.payload is None:
            raise ValueError("INPUT 动作需要输入文本")
        if self.kind == ActionKind.LAUNCH and not self.payload:
            raise ValueError("LAUNCH 动作需要应用ID")

    def describe(self) -> str:
        text = self.kind.value
        if self.element_index is not None:
            text += f"[{self.element_index}]"
        if self.payload is not None:
            text += f" {self.payload!r}"
        return text

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind.value,
            "element_index": self.element_index,
            "payload": self.payload,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Action":
        index = data.get("element_index")
        return cls(
            kind=ActionKind(str(data["kind"]).upper()),
            element_index=int(index) if index is not None else None,
            payload=data.get("payload"),
        )


class PerturbationKind(Enum):
    """扰动类型"""
    CHOOSER_DIALOG = "CHOOSER_DIALOG"  # 应用选择器弹窗
    CLEAR_APP_DATA = "CLEAR_APP_DATA"  # 清除应用数据，触发欢迎流程
    REVOKE_PERMISSION = "REVOKE_PERMISSION"  # 撤销权限，下次打开弹出授权框


@dataclass(frozen=True)
class Perturbation:
    kind: PerturbationKind
    target_app: str

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind.value, "target_app": self.target_app}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Perturbation":
        return cls(kind=PerturbationKind(data["kind"]), target_app=data["target_app"])
