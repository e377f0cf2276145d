"""
统一异常定义
每个异常携带稳定的错误码（code），CLI输出与测试断言都以错误码为准
"""
from typing import Optional


class SkillAgentError(Exception):
    """所有业务异常的基类"""
    code = "skill-agent-error"

    def __init__(self, message: Optional[str] = None):
        self.message = message or self.code
        super().__init__(self.message)

    def __str__(self) -> str:
        return f"[{self.code}] {self.message}"


class DegenerateBoundsError(SkillAgentError, ValueError):
    """节点边界面积为零"""
    code = "degenerate-bounds"


class NoSuchAppError(SkillAgentError, KeyError):
    """设备上不存在该应用"""
    code = "no-such-app"


class ScenarioError(SkillAgentError, ValueError):
    """场景文件格式错误"""
    code = "bad-scenario"


class PolicyParseError(SkillAgentError):
    """策略后端返回了无法解析的响应（仍计为一次调用）"""
    code = "parse-failure"


class SlotMismatchError(SkillAgentError):
    """槽位值既不在指令中也不在任何步骤中"""
    code = "slot-mismatch"


class UnlocatableElementError(SkillAgentError, ValueError):
    """目标元素没有任何可用特征"""
    code = "unlocatable-element"


class UnverifiedTrajectoryError(SkillAgentError):
    """未经检查器验证的轨迹不能编译"""
    code = "unverified-trajectory"


class NoSuchSkillError(SkillAgentError, KeyError):
    """技能库中不存在该技能"""
    code = "no-such-skill"


class NotFlaggedError(SkillAgentError):
    """技能未被标记为需要重编译"""
    code = "not-flagged"


class StoreCorruptError(SkillAgentError):
    """技能库记录损坏"""
    code = "store-corrupt"


class VersionConflictError(SkillAgentError):
    """版本号不连续或超过上限"""
    code = "version-conflict"


class BudgetError(SkillAgentError, ValueError):
    """预算常量被非法修改"""
    code = "bad-budget"


class PlanError(SkillAgentError, ValueError):
    """阶段计划文件格式错误"""
    code = "bad-plan"
