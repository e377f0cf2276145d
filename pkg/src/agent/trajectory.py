"""
轨迹数据结构
第一层执行记录的每一步，以及回退时交给第一层的已完成上下文
"""
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

from ..device.actions import TARGETED_KINDS, Action
from ..device.ui_model import UINode, UITree

TRAJECTORY_LIMIT = 20


@dataclass(frozen=True)
class TargetFeatures:
    """被点击/输入节点的特征快照"""
    resource_id: Optional[str] = None
    text: Optional[str] = None
    content_desc: Optional[str] = None
    class_name: Optional[str] = None
    parent_class: Optional[str] = None
    sibling_index: Optional[int] = None

    @classmethod
    def from_node(cls, node: UINode) -> "TargetFeatures":
        return cls(
            resource_id=node.resource_id or None,
            text=node.text or None,
            content_desc=node.content_desc or None,
            class_name=node.class_name or None,
            parent_class=node.parent_class or None,
            sibling_index=node.sibling_index,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "resource_id": self.resource_id,
            "text": self.text,
            "content_desc": self.content_desc,
            "class_name": self.class_name,
            "parent_class": self.parent_class,
            "sibling_index": self.sibling_index,
        }


@dataclass
class TrajectoryStep:
    action: Action
    tree_before: UITree
    target_features: Optional[TargetFeatures] = None
    reasoning: str = ""
    success: bool = True
    overridden: bool = False  # 护栏覆盖产生的动作

    def __post_init__(self):
        targeted = self.action.kind in TARGETED_KINDS
        if targeted != (self.target_features is not None):
            raise ValueError(f"{self.action.kind.value} 步骤的目标特征与动作类型不一致")

    def summary(self) -> Dict[str, Any]:
        return {
            "action": self.action.to_dict(),
            "target": self.target_features.to_dict() if self.target_features else None,
            "activity": self.tree_before.activity,
            "overridden": self.overridden,
            "success": self.success,
        }


@dataclass
class Trajectory:
    instruction: str
    target_app: str
    steps: List[TrajectoryStep] = field(default_factory=list)
    verified: bool = False

    def __post_init__(self):
        if len(self.steps) > TRAJECTORY_LIMIT:
            raise ValueError(f"轨迹长度 {len(self.steps)} 超过上限 {TRAJECTORY_LIMIT}")


@dataclass
class PriorContext:
    """回放中已经真实执行过的步骤"""
    origin_skill: str
    completed_steps: List[TrajectoryStep] = field(default_factory=list)
