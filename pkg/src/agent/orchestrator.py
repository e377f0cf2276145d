"""
第一层：带护栏的逐步执行循环
capture → flatten → decide → apply → record，检查器把关任务完成，记录的轨迹用于编译技能
"""
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from ..config import LoopBudget
from ..device.actions import TARGETED_KINDS, Action, ActionKind, ApplyOutcome
from ..device.checkers import CheckerResult
from ..device.simulator import SimDevice
from ..device.ui_model import UITree, flatten_tree
from ..errors import PolicyParseError
from ..log import get_logger
from ..trace import TraceLog
from .policy import Policy, PolicyRequest, PolicyRole
from .trajectory import TRAJECTORY_LIMIT, PriorContext, TargetFeatures, Trajectory, TrajectoryStep

logger = get_logger(__name__)

FEEDBACK_TEMPLATE = ("Verification FAILED: {message}. The task is NOT complete. "
                     "Look at the current UI and try again.")
STALE_SCROLL_FEEDBACK = "screen unchanged"
STALE_SCROLL_LIMIT = 2

# 护栏不拦截的动作
GUARDRAIL_EXEMPT = (ActionKind.BACK, ActionKind.DONE, ActionKind.FAIL)


class ExecutionOutcome(Enum):
    SUCCESS = "SUCCESS"
    FAIL_STEP_LIMIT = "FAIL_STEP_LIMIT"
    FAIL_POLICY = "FAIL_POLICY"
    FAIL_CHECKER = "FAIL_CHECKER"


def violates_guardrail(action: Action, tree: UITree, target_app: str) -> bool:
    """启动非目标应用，或在非目标应用中点击/输入/滚动"""
    if action.kind in GUARDRAIL_EXEMPT:
        return False
    if action.kind == ActionKind.LAUNCH:
        return action.payload != target_app
    return tree.foreground_app != target_app


class Orchestrator:
    """第一层执行器

    护栏最多连续改写 g_max 次；第 g_max+1 次连续违规时以 FAIL_POLICY 结束。
    """

    def __init__(self, device: SimDevice, policy: Policy, budget: Optional[LoopBudget] = None,
                 trace: Optional[TraceLog] = None):
        self.device = device
        self.policy = policy
        self.budget = budget or LoopBudget()
        self.trace = trace if trace is not None else TraceLog("episode")

    def execute(self, instruction: str, task_id: str, expected: Optional[Dict[str, Any]] = None,
                prior: Optional[PriorContext] = None,
                target_app: Optional[str] = None) -> Tuple[Trajectory, ExecutionOutcome]:
        target_app = target_app or self.device.task_app(task_id) or ""
        expected = expected or {}
        steps: List[TrajectoryStep] = list(prior.completed_steps) if prior else []
        history = [(s.action, s.reasoning) for s in steps]
        budget = self.budget

        def finish(outcome: ExecutionOutcome, verified: bool = False):
            trajectory = Trajectory(instruction=instruction, target_app=target_app,
                                    steps=steps[:TRAJECTORY_LIMIT], verified=verified)
            logger.info("layer1_finished", task=task_id, outcome=outcome.value, steps=len(steps))
            return trajectory, outcome

        decisions = len(steps)
        feedback: Optional[str] = None
        consecutive_overrides = 0
        rejected_dones = 0
        unchanged_scrolls = 0

        while decisions < budget.n_max:
            decisions += 1
            tree = self.device.capture()
            request = PolicyRequest(
                role=PolicyRole.STEP_DECIDE,
                instruction=instruction,
                tree=tree,
                history=list(history[-(budget.n_max - 1):]),
                feedback=feedback,
                context={"target_app": target_app,
                         "prior_steps": len(prior.completed_steps) if prior else 0},
            )
            feedback = None
            try:
                response = self.policy.decide(request)
            except PolicyParseError as e:
                logger.warning("policy_parse_failure", task=task_id, error=str(e))
                return finish(ExecutionOutcome.FAIL_POLICY)
            action = response.action

            if action.kind == ActionKind.FAIL:
                self._emit(len(steps) + 1, action, False, None)
                return finish(ExecutionOutcome.FAIL_POLICY)

            if action.kind == ActionKind.DONE:
                result = self.device.run_checker(task_id, expected)
                steps.append(TrajectoryStep(action=action, tree_before=tree, reasoning=response.reasoning,
                                            success=result.verified))
                history.append((action, response.reasoning))
                self._emit(len(steps), action, False, result)
                if result.verified:
                    return finish(ExecutionOutcome.SUCCESS, verified=True)
                rejected_dones += 1
                if rejected_dones > budget.k_retry:
                    return finish(ExecutionOutcome.FAIL_CHECKER)
                feedback = FEEDBACK_TEMPLATE.format(message=result.message)
                continue

            overridden = False
            if violates_guardrail(action, tree, target_app):
                consecutive_overrides += 1
                logger.info("guardrail_override", task=task_id, action=action.describe(),
                            foreground=tree.foreground_app, consecutive=consecutive_overrides)
                if consecutive_overrides > budget.g_max:
                    self._emit(len(steps) + 1, action, True, None)
                    return finish(ExecutionOutcome.FAIL_POLICY)
                action = Action(ActionKind.LAUNCH, payload=target_app)
                overridden = True
            else:
                consecutive_overrides = 0

            features = None
            if action.kind in TARGETED_KINDS:
                nodes = flatten_tree(tree)
                if 0 <= action.element_index < len(nodes):
                    features = TargetFeatures.from_node(nodes[action.element_index])

            outcome = self.device.apply(action)
            if outcome == ApplyOutcome.REJECTED:
                feedback = f"Action {action.describe()} was rejected by the device."
                self._emit(len(steps) + 1, action, overridden, None)
                continue

            steps.append(TrajectoryStep(action=action, tree_before=tree, target_features=features,
                                        reasoning=response.reasoning,
                                        success=outcome == ApplyOutcome.CHANGED, overridden=overridden))
            history.append((action, response.reasoning))

            if action.kind == ActionKind.SCROLL and outcome == ApplyOutcome.UNCHANGED:
                unchanged_scrolls += 1
            else:
                unchanged_scrolls = 0
            if unchanged_scrolls >= STALE_SCROLL_LIMIT:
                feedback = STALE_SCROLL_FEEDBACK

            checker = None
            if budget.is_checkpoint(len(steps)):
                checker = self.device.run_checker(task_id, expected)
            self._emit(len(steps), action, overridden, checker)
            if checker is not None and checker.verified:
                return finish(ExecutionOutcome.SUCCESS, verified=True)

        return finish(ExecutionOutcome.FAIL_STEP_LIMIT)

    def _emit(self, step: int, action: Action, overridden: bool, checker: Optional[CheckerResult]) -> None:
        self.trace.emit(
            step=step,
            action=action.to_dict(),
            overridden=overridden,
            checker=checker.to_dict() if checker else None,
            counter_snapshot=self.policy.counter.snapshot(),
        )
