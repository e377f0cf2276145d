"""
第三层的记录类型：失败上下文、守卫条件、成功/失败统计
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional

from ..agent.deviation import Severity
from ..device.ui_model import UITree, dialog_nodes


@dataclass
class FailureRecord:
    """一次第二层失败；step_index 等于骨架长度表示完成后检查器失败"""
    skill_id: str
    version: int
    step_index: int
    severity: Severity
    descriptor_at_failure: Optional[Dict[str, Any]] = None
    recovered: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return {
            "skill_id": self.skill_id,
            "version": self.version,
            "step_index": self.step_index,
            "severity": self.severity.value,
            "descriptor_at_failure": self.descriptor_at_failure,
            "recovered": self.recovered,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "FailureRecord":
        return cls(
            skill_id=data["skill_id"],
            version=int(data["version"]),
            step_index=int(data["step_index"]),
            severity=Severity(data["severity"]),
            descriptor_at_failure=data.get("descriptor_at_failure"),
            recovered=bool(data.get("recovered", False)),
        )


class GuardPredicate(Enum):
    NO_DIALOG_OVERLAY = "no_dialog_overlay"
    FOREGROUND_IS_TARGET = "foreground_is_target"


@dataclass
class GuardCondition:
    """回放前可免策略调用评估的前置条件"""
    skill_id: str
    predicate: GuardPredicate
    step_index: int
    severity: Severity
    source_failure_count: int
    params: Dict[str, Any] = field(default_factory=dict)

    def holds(self, tree: UITree) -> bool:
        if self.predicate == GuardPredicate.NO_DIALOG_OVERLAY:
            return not dialog_nodes(tree)
        # 桌面或目标应用在前台都可以开始回放，其他应用在前台则不行
        allowed = {self.params.get("target_app"), self.params.get("home_app", "home")}
        return tree.foreground_app in allowed

    def to_dict(self) -> Dict[str, Any]:
        return {
            "skill_id": self.skill_id,
            "predicate": self.predicate.value,
            "step_index": self.step_index,
            "severity": self.severity.value,
            "source_failure_count": self.source_failure_count,
            "params": dict(self.params),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GuardCondition":
        return cls(
            skill_id=data["skill_id"],
            predicate=GuardPredicate(data["predicate"]),
            step_index=int(data["step_index"]),
            severity=Severity(data["severity"]),
            source_failure_count=int(data["source_failure_count"]),
            params=dict(data.get("params", {})),
        )


@dataclass
class SkillStats:
    skill_id: str
    version: int
    n_succ: int = 0
    n_fail: int = 0
    needs_recompile: bool = False
    last_success: int = 0

    @property
    def r_fail(self) -> float:
        total = self.n_succ + self.n_fail
        return self.n_fail / total if total else 0.0
