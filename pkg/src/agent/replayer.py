"""
第二层：技能骨架的推测式回放
每步先校验界面状态，再用加权定位器找元素；找不到时依次尝试跳步、单步策略回退，
预算用尽或遇到完全不同的应用时整体回退到第一层
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence

from ..config import DEFAULT_DISMISS_KEYWORDS, ReplayBudget
from ..device.actions import Action, ActionKind, ApplyOutcome, TARGETED_KINDS
from ..device.checkers import CheckerResult
from ..device.simulator import SimDevice
from ..device.ui_model import UITree, flatten_tree, make_descriptor
from ..errors import PolicyParseError
from ..log import get_logger
from ..skills.template import SkillStep, SkillTemplate, fill_placeholders
from ..trace import TraceLog
from .deviation import DeviationReport, Severity, try_dismiss, verify_state
from .element_finder import TAU_RELAXED, TAU_STRICT, find_element
from .policy import Policy, PolicyRequest, PolicyRole
from .trajectory import PriorContext, TargetFeatures, TrajectoryStep

logger = get_logger(__name__)

SKIP_LOOKAHEAD = 3


class ReplayStatus(Enum):
    COMPLETED = "COMPLETED"
    FELL_BACK = "FELL_BACK"  # 回退预算用尽，交给第一层
    ABORTED = "ABORTED"  # 严重偏差，直接交给第一层


@dataclass
class ReplayOutcome:
    status: ReplayStatus
    executed_steps: List[TrajectoryStep] = field(default_factory=list)
    skipped_step_indices: List[int] = field(default_factory=list)
    fallback_calls: int = 0
    policy_calls: int = 0
    failure_step: Optional[int] = None
    failure_severity: Optional[Severity] = None
    failure_descriptor: Optional[Dict[str, Any]] = None
    dismissals: int = 0
    checker: Optional[CheckerResult] = None

    @property
    def verified(self) -> bool:
        return self.status == ReplayStatus.COMPLETED and self.checker is not None and self.checker.verified

    def prior_context(self, origin_skill: str) -> PriorContext:
        return PriorContext(origin_skill=origin_skill, completed_steps=list(self.executed_steps))


class Replayer:
    """第二层执行器；同一个实例可以顺序回放多个技能"""

    def __init__(self, device: SimDevice, policy: Policy, budget: Optional[ReplayBudget] = None,
                 dismiss_keywords: Sequence[str] = DEFAULT_DISMISS_KEYWORDS,
                 trace: Optional[TraceLog] = None):
        self.device = device
        self.policy = policy
        self.budget = budget or ReplayBudget()
        self.dismiss_keywords = tuple(dismiss_keywords)
        self.trace = trace if trace is not None else TraceLog("replay")

    def replay(self, skill: SkillTemplate, bindings: Dict[str, str], task_id: Optional[str] = None,
               expected: Optional[Dict[str, Any]] = None) -> ReplayOutcome:
        calls_before = self.policy.counter.total
        outcome = ReplayOutcome(status=ReplayStatus.COMPLETED)
        instruction = skill.instruction_for(bindings)
        consecutive = 0
        t = 0

        def stop(status: ReplayStatus, step: int, severity: Severity, tree: UITree) -> ReplayOutcome:
            outcome.status = status
            outcome.failure_step = step
            outcome.failure_severity = severity
            outcome.failure_descriptor = make_descriptor(tree).to_dict()
            outcome.policy_calls = self.policy.counter.total - calls_before
            logger.info("replay_stopped", skill=skill.skill_id, status=status.value, step=step,
                        severity=severity.value, fallbacks=outcome.fallback_calls)
            return outcome

        while t < len(skill.steps):
            step = skill.steps[t]
            tree = self.device.capture()

            if step.action_kind == ActionKind.LAUNCH:
                action = Action(ActionKind.LAUNCH, payload=fill_placeholders(step.params, bindings))
                if self.device.apply(action) == ApplyOutcome.REJECTED:
                    self._emit(t, Severity.MAJOR, None, False, False)
                    return stop(ReplayStatus.ABORTED, t, Severity.MAJOR, tree)
                outcome.executed_steps.append(TrajectoryStep(action=action, tree_before=tree,
                                                             reasoning="replay"))
                self._emit(t, Severity.NONE, None, False, False)
                t += 1
                continue

            report = verify_state(tree, step.descriptor, skill.target_app)
            forced_miss = False
            if report.severity == Severity.MODERATE:
                # 弹窗不占用骨架步骤
                if try_dismiss(self.device, tree, self.dismiss_keywords):
                    outcome.dismissals += 1
                    tree = self.device.capture()
                    report = verify_state(tree, step.descriptor, skill.target_app)
                forced_miss = report.severity == Severity.MODERATE
            if report.severity == Severity.MAJOR:
                self._emit(t, report.severity, None, False, False)
                return stop(ReplayStatus.ABORTED, t, report.severity, tree)

            threshold = TAU_RELAXED if report.severity == Severity.MINOR else TAU_STRICT
            if not forced_miss and self._execute_step(step, tree, threshold, bindings, outcome, t, report):
                consecutive = 0
                t += 1
                continue

            if self._can_skip(tree, t, skill, bindings):
                outcome.skipped_step_indices.append(t)
                self._emit(t, report.severity, None, True, False)
                consecutive = 0
                t += 1
                continue

            if consecutive >= self.budget.b_consec or outcome.fallback_calls >= self.budget.b_total:
                self._emit(t, report.severity, None, False, False)
                return stop(ReplayStatus.FELL_BACK, t, report.severity, tree)

            consecutive += 1
            outcome.fallback_calls += 1
            resolved = self._fallback(instruction, skill, t, tree, outcome)
            self._emit(t, report.severity, None, False, True)
            if resolved is None:
                return stop(ReplayStatus.FELL_BACK, t, report.severity, tree)
            if self._advance_after_fallback(resolved, t, skill, outcome.executed_steps[-1].success):
                t += 1

        outcome.policy_calls = self.policy.counter.total - calls_before
        if task_id is not None:
            outcome.checker = self.device.run_checker(task_id, expected)
        logger.info("replay_completed", skill=skill.skill_id, skipped=outcome.skipped_step_indices,
                    fallbacks=outcome.fallback_calls, dismissals=outcome.dismissals,
                    checker=outcome.checker.status.value if outcome.checker else None)
        return outcome

    def _execute_step(self, step: SkillStep, tree: UITree, threshold: float, bindings: Dict[str, str],
                      outcome: ReplayOutcome, t: int, report: DeviationReport) -> bool:
        """按定位器执行一步；找不到元素时返回False"""
        payload = fill_placeholders(step.params, bindings)
        if step.action_kind not in TARGETED_KINDS:
            action = Action(step.action_kind, payload=payload)
            self.device.apply(action)
            outcome.executed_steps.append(TrajectoryStep(action=action, tree_before=tree, reasoning="replay"))
            self._emit(t, report.severity, None, False, False)
            return True

        nodes = flatten_tree(tree)
        found = find_element(tree, step.locator, threshold, bindings, nodes=nodes)
        if found is None:
            return False
        index, score = found
        action = Action(step.action_kind, element_index=index, payload=payload)
        result = self.device.apply(action)
        if result == ApplyOutcome.REJECTED:
            return False
        outcome.executed_steps.append(TrajectoryStep(
            action=action, tree_before=tree, target_features=TargetFeatures.from_node(nodes[index]),
            reasoning="replay", success=result == ApplyOutcome.CHANGED))
        self._emit(t, report.severity, score, False, False)
        return True

    def _can_skip(self, tree: UITree, t: int, skill: SkillTemplate, bindings: Dict[str, str]) -> bool:
        """当前界面已满足第t步的后置条件，且后续某步的元素已经可见"""
        if t + 1 >= len(skill.steps):
            return False
        successor = skill.steps[t + 1].descriptor
        if tree.activity != successor.activity:
            return False
        if verify_state(tree, successor, skill.target_app).severity != Severity.NONE:
            return False
        nodes = flatten_tree(tree)
        for ahead in skill.steps[t + 1:t + 1 + SKIP_LOOKAHEAD]:
            if ahead.locator is None:
                continue
            if find_element(tree, ahead.locator, TAU_STRICT, bindings, nodes=nodes) is not None:
                return True
        return False

    def _fallback(self, instruction: str, skill: SkillTemplate, t: int, tree: UITree,
                  outcome: ReplayOutcome) -> Optional[UITree]:
        """一次单步回退调用；成功执行后返回新的界面，否则返回None"""
        step = skill.steps[t]
        history = [(s.action, s.reasoning) for s in outcome.executed_steps][-19:]
        request = PolicyRequest(
            role=PolicyRole.STEP_FALLBACK,
            instruction=instruction,
            tree=tree,
            history=history,
            context={
                "target_app": skill.target_app,
                "intent_pattern": skill.intent_pattern,
                "step_index": t,
                "expected_action": step.action_kind.value,
                "expected_activity": step.descriptor.activity,
                "locator": step.locator.to_dict() if step.locator else None,
            },
        )
        try:
            response = self.policy.decide(request)
        except PolicyParseError as e:
            logger.warning("fallback_parse_failure", skill=skill.skill_id, step=t, error=str(e))
            return None
        action = response.action
        if action.kind in (ActionKind.DONE, ActionKind.FAIL):
            logger.info("fallback_gave_up", skill=skill.skill_id, step=t, action=action.kind.value)
            return None

        features = None
        if action.kind in TARGETED_KINDS:
            nodes = flatten_tree(tree)
            if not 0 <= action.element_index < len(nodes):
                return None
            features = TargetFeatures.from_node(nodes[action.element_index])
        result = self.device.apply(action)
        if result == ApplyOutcome.REJECTED:
            return None
        outcome.executed_steps.append(TrajectoryStep(
            action=action, tree_before=tree, target_features=features, reasoning=response.reasoning,
            success=result == ApplyOutcome.CHANGED))
        return self.device.capture()

    @staticmethod
    def _advance_after_fallback(tree: UITree, t: int, skill: SkillTemplate, changed: bool) -> bool:
        """回退动作之后界面到达下一步的状态才前进，否则重试当前步

        动作改变了界面时，下一步的偏差为 MINOR 也前进。
        """
        if t + 1 >= len(skill.steps):
            return True
        successor = skill.steps[t + 1].descriptor
        if tree.activity != successor.activity:
            return False
        severity = verify_state(tree, successor, skill.target_app).severity
        return severity == Severity.NONE or (changed and severity == Severity.MINOR)

    def _emit(self, step: int, severity: Severity, score: Optional[float], skipped: bool,
              fallback: bool) -> None:
        self.trace.emit(step=step, severity=severity.value,
                        found_score=round(score, 6) if score is not None else None,
                        skipped=skipped, fallback=fallback)
