"""
阶段计划
一个计划由若干阶段（P1~P5）组成，每个阶段是一组按顺序执行的回合
"""
import json
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

from ..device.actions import Perturbation
from ..errors import PlanError

VARIATIONS = ("C", "L", "M", "H")
PHASES = ("P1", "P2", "P3", "P4", "P5")


@dataclass
class RoundSpec:
    task_id: str
    instruction: str
    variation: str
    perturbation: Optional[Perturbation] = None
    setup: List[Dict[str, Any]] = field(default_factory=list)
    expected: Dict[str, Any] = field(default_factory=dict)  # 检查器期望值

    def __post_init__(self):
        if self.variation not in VARIATIONS:
            raise PlanError(f"变化等级 {self.variation!r} 不在 {VARIATIONS} 中")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "task_id": self.task_id,
            "instruction": self.instruction,
            "variation": self.variation,
            "perturbation": self.perturbation.to_dict() if self.perturbation else None,
            "setup": list(self.setup),
            "expected": dict(self.expected),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RoundSpec":
        try:
            perturbation = data.get("perturbation")
            return cls(
                task_id=data["task_id"],
                instruction=data["instruction"],
                variation=data.get("variation", "C"),
                perturbation=Perturbation.from_dict(perturbation) if perturbation else None,
                setup=list(data.get("setup") or []),
                expected=dict(data.get("expected") or {}),
            )
        except PlanError:
            raise
        except (KeyError, ValueError, TypeError) as e:
            raise PlanError(f"回合定义无效: {data!r} ({e})") from e


@dataclass
class Phase:
    name: str
    rounds: List[RoundSpec] = field(default_factory=list)
    description: str = ""


def parse_plan(data: Dict[str, Any]) -> List[Phase]:
    if not isinstance(data, dict) or not isinstance(data.get("phases"), list):
        raise PlanError("计划文件必须包含 phases 列表")
    phases = []
    for raw in data["phases"]:
        name = raw.get("phase") if isinstance(raw, dict) else None
        if name not in PHASES:
            raise PlanError(f"阶段名 {name!r} 必须是 {PHASES} 之一")
        rounds = [RoundSpec.from_dict(r) for r in raw.get("rounds", [])]
        phases.append(Phase(name=name, rounds=rounds, description=raw.get("description", "")))
    return phases


def load_plan(path: str) -> List[Phase]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise PlanError(f"无法读取计划文件 {path}: {e}") from e
    return parse_plan(data)
