"""
智能体控制器
一个回合：重置设备 → 预置状态 → 注入扰动 → 匹配 → 回放或第一层执行 → 编译 → 记录到第三层
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional

from ..agent.deviation import Severity
from ..agent.matcher import MatchKind, SkillMatcher
from ..agent.orchestrator import ExecutionOutcome, Orchestrator
from ..agent.policy import Policy
from ..agent.replayer import Replayer, ReplayOutcome, ReplayStatus
from ..agent.trajectory import PriorContext, Trajectory
from ..config import DEFAULT_DISMISS_KEYWORDS, LoopBudget, ReplayBudget
from ..device.simulator import SimDevice
from ..device.ui_model import make_descriptor
from ..errors import SkillAgentError
from ..log import get_logger
from ..skills.compiler import compile_trajectory, make_skill_id
from ..skills.learning import LearningManager, RecompileDecision
from ..skills.records import FailureRecord
from ..skills.store import SkillStore
from ..skills.template import SkillTemplate
from ..trace import TraceLog
from .plan import RoundSpec

logger = get_logger(__name__)

RESTART_EVERY = 30


class ExecutionPath(Enum):
    L2_PURE = "L2_PURE"
    L2_SEMANTIC = "L2_SEMANTIC"
    L2_STEP_FALLBACK = "L2_STEP_FALLBACK"
    L2_TO_L1 = "L2_TO_L1"
    L1_FRESH = "L1_FRESH"


L2_PATHS = (ExecutionPath.L2_PURE, ExecutionPath.L2_SEMANTIC, ExecutionPath.L2_STEP_FALLBACK)


def classify_path(route: Dict[str, Any]) -> ExecutionPath:
    """由回合路由记录得到执行路径；纯函数，对存档的记录重复分类结果不变"""
    if route.get("replay_status") is None:
        return ExecutionPath.L1_FRESH
    if route.get("layer1_ran"):
        return ExecutionPath.L2_TO_L1
    if route.get("fallback_calls", 0) > 0:
        return ExecutionPath.L2_STEP_FALLBACK
    if route.get("strategy") == "EMBEDDING":
        return ExecutionPath.L2_SEMANTIC
    return ExecutionPath.L2_PURE


@dataclass
class RoundResult:
    round_index: int
    phase: str
    task_id: str
    variation: str
    success: bool
    execution_path: ExecutionPath
    policy_calls: int
    match_kind: Optional[str] = None
    skipped_steps: int = 0
    route: Dict[str, Any] = field(default_factory=dict)
    error: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "round": self.round_index,
            "phase": self.phase,
            "task_id": self.task_id,
            "variation": self.variation,
            "success": self.success,
            "execution_path": self.execution_path.value,
            "policy_calls": self.policy_calls,
            "match_kind": self.match_kind,
            "skipped_steps": self.skipped_steps,
            "route": dict(self.route),
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RoundResult":
        return cls(
            round_index=data["round"],
            phase=data["phase"],
            task_id=data["task_id"],
            variation=data["variation"],
            success=bool(data["success"]),
            execution_path=ExecutionPath(data["execution_path"]),
            policy_calls=int(data["policy_calls"]),
            match_kind=data.get("match_kind"),
            skipped_steps=int(data.get("skipped_steps", 0)),
            route=dict(data.get("route") or {}),
            error=data.get("error"),
        )


class AgentController:
    """按三层结构路由每个回合；use_skills=False 时只走第一层（对照组）"""

    def __init__(self, device_factory: Callable[[], SimDevice], policy: Policy, store: SkillStore,
                 matcher: Optional[SkillMatcher] = None, learning: Optional[LearningManager] = None,
                 loop_budget: Optional[LoopBudget] = None, replay_budget: Optional[ReplayBudget] = None,
                 dismiss_keywords=DEFAULT_DISMISS_KEYWORDS, use_skills: bool = True,
                 restart_every: int = RESTART_EVERY):
        if use_skills and matcher is None:
            raise ValueError("使用技能时必须提供匹配器")
        self.device_factory = device_factory
        self.device = device_factory()
        self.policy = policy
        self.store = store
        self.matcher = matcher
        self.learning = learning or LearningManager(store)
        self.loop_budget = loop_budget or LoopBudget()
        self.replay_budget = replay_budget or ReplayBudget()
        self.dismiss_keywords = tuple(dismiss_keywords)
        self.use_skills = use_skills
        self.restart_every = restart_every
        self.rounds_run = 0
        self.round_log = TraceLog("rounds")
        self.episode_trace = TraceLog("episode")
        self.replay_trace = TraceLog("replay")

    def _maybe_restart(self) -> None:
        """每 restart_every 个回合重新创建设备"""
        if self.restart_every and self.rounds_run and self.rounds_run % self.restart_every == 0:
            logger.info("device_restart", after_rounds=self.rounds_run)
            self.device = self.device_factory()

    def run_round(self, spec: RoundSpec, phase: str = "P1") -> RoundResult:
        self._maybe_restart()
        round_index = self.rounds_run + 1
        self.rounds_run += 1
        calls_before = self.policy.counter.total
        route: Dict[str, Any] = {"match_kind": None, "strategy": None, "skill_id": None,
                                 "replay_status": None, "fallback_calls": 0, "layer1_ran": False}
        success = False
        skipped = 0
        error = None
        try:
            self.device.reset()
            self.device.apply_setup(spec.setup)
            if spec.perturbation is not None:
                self.device.inject(spec.perturbation)
            success, skipped = self._route(spec, route)
        except Exception as e:
            # 单个回合出错只记为失败，不中断整个计划
            error = str(e) if isinstance(e, SkillAgentError) else f"{type(e).__name__}: {e}"
            logger.error("round_error", round=round_index, task=spec.task_id, error=error)

        result = RoundResult(
            round_index=round_index,
            phase=phase,
            task_id=spec.task_id,
            variation=spec.variation,
            success=success,
            execution_path=classify_path(route),
            policy_calls=self.policy.counter.total - calls_before,
            match_kind=route["match_kind"],
            skipped_steps=skipped,
            route=route,
            error=error,
        )
        self.round_log.emit(**result.to_dict())
        logger.info("round_finished", round=round_index, phase=phase, task=spec.task_id,
                    path=result.execution_path.value, success=success, calls=result.policy_calls)
        return result

    # ---- 路由 ----

    def _route(self, spec: RoundSpec, route: Dict[str, Any]):
        if not self.use_skills:
            trajectory, outcome = self._layer1(spec, route)
            return outcome == ExecutionOutcome.SUCCESS, 0

        match = self.matcher.match(spec.instruction, self.store.list_skills())
        route["match_kind"] = match.kind.value
        route["strategy"] = match.strategy.value
        if match.kind != MatchKind.FULL:
            return self._fresh(spec, route), 0

        skill = self.store.load_skill(match.skill_id)
        route["skill_id"] = skill.skill_id
        route["skill_version"] = skill.version

        if skill.needs_recompile and self.learning.request_recompile(skill.skill_id) == RecompileDecision.RECOMPILE:
            route["recompile"] = True
            return self._recompile(spec, skill, route), 0

        violated = self.learning.violated_guards(skill.skill_id, self.device.capture())
        if violated:
            route["guard_routed"] = [g.predicate.value for g in violated]
            trajectory, outcome = self._layer1(spec, route)
            return outcome == ExecutionOutcome.SUCCESS, 0

        return self._replay(spec, skill, match.bindings, route)

    def _layer1(self, spec: RoundSpec, route: Dict[str, Any], prior: Optional[PriorContext] = None,
                target_app: Optional[str] = None):
        orchestrator = Orchestrator(self.device, self.policy, self.loop_budget, trace=self.episode_trace)
        route["layer1_ran"] = True
        trajectory, outcome = orchestrator.execute(spec.instruction, spec.task_id, spec.expected,
                                                   prior=prior, target_app=target_app)
        route["layer1_outcome"] = outcome.value
        return trajectory, outcome

    def _fresh(self, spec: RoundSpec, route: Dict[str, Any]) -> bool:
        trajectory, outcome = self._layer1(spec, route)
        if outcome != ExecutionOutcome.SUCCESS:
            return False
        self._compile_new(trajectory, route)
        return True

    def _recompile(self, spec: RoundSpec, skill: SkillTemplate, route: Dict[str, Any]) -> bool:
        """被标记的技能强制走一次第一层，结果存为下一个版本"""
        trajectory, outcome = self._layer1(spec, route, target_app=skill.target_app)
        if outcome != ExecutionOutcome.SUCCESS:
            return False
        fresh = self._compile(trajectory, skill_id=skill.skill_id)
        if fresh is not None:
            upgraded = self.learning.apply_recompile(skill.skill_id, fresh)
            route["compiled"] = f"{upgraded.skill_id}@v{upgraded.version}"
        return True

    def _replay(self, spec: RoundSpec, skill: SkillTemplate, bindings: Dict[str, str],
                route: Dict[str, Any]):
        replayer = Replayer(self.device, self.policy, self.replay_budget, self.dismiss_keywords,
                            trace=self.replay_trace)
        outcome = replayer.replay(skill, bindings, spec.task_id, spec.expected)
        route["replay_status"] = outcome.status.value
        route["fallback_calls"] = outcome.fallback_calls
        route["dismissals"] = outcome.dismissals
        skipped = len(outcome.skipped_step_indices)

        if outcome.verified:
            self.learning.record_outcome(skill.skill_id, skill.version, success=True)
            return True, skipped

        # 回放失败（含完成后检查器不通过）：交给第一层并带上已执行步骤
        trajectory, l1_outcome = self._layer1(spec, route, prior=outcome.prior_context(skill.skill_id),
                                              target_app=skill.target_app)
        recovered = l1_outcome == ExecutionOutcome.SUCCESS
        self.learning.record_outcome(skill.skill_id, skill.version, success=False,
                                     failure=self._failure_record(skill, outcome, recovered))
        if recovered:
            self._compile_new(trajectory, route, origin_skill=skill.skill_id)
        return recovered, skipped

    def _failure_record(self, skill: SkillTemplate, outcome: ReplayOutcome, recovered: bool) -> FailureRecord:
        if outcome.status == ReplayStatus.COMPLETED:
            return FailureRecord(skill.skill_id, skill.version, len(skill.steps), Severity.NONE,
                                 make_descriptor(self.device.capture()).to_dict(), recovered)
        return FailureRecord(skill.skill_id, skill.version, outcome.failure_step,
                             outcome.failure_severity or Severity.NONE, outcome.failure_descriptor, recovered)

    # ---- 编译 ----

    def _compile(self, trajectory: Trajectory, skill_id: Optional[str] = None,
                 origin_skill: Optional[str] = None) -> Optional[SkillTemplate]:
        try:
            return compile_trajectory(self.policy, trajectory, skill_id=skill_id, origin_skill=origin_skill)
        except SkillAgentError as e:
            logger.warning("compile_failed", instruction=trajectory.instruction, error=str(e))
            return None

    def _compile_new(self, trajectory: Trajectory, route: Dict[str, Any],
                     origin_skill: Optional[str] = None) -> None:
        """第一层成功后编译新技能；恢复轨迹总是存为新的 skill_id"""
        template = self._compile(trajectory, origin_skill=origin_skill)
        if template is None:
            return
        base = make_skill_id(template.target_app, template.intent_pattern)
        if origin_skill is None and self._pattern_stored(template):
            logger.info("skill_exists", skill=base)
            return
        template.skill_id = self.store.allocate_skill_id(base)
        template.last_success = self.store.next_sequence()
        self.store.save_skill(template)
        route["compiled"] = f"{template.skill_id}@v{template.version}"

    def _pattern_stored(self, template: SkillTemplate) -> bool:
        wanted = template.intent_pattern.lower()
        return any(s.intent_pattern.lower() == wanted for s in self.store.list_skills(template.target_app))

    def run_rounds(self, rounds: List[RoundSpec], phase: str) -> List[RoundResult]:
        return [self.run_round(spec, phase) for spec in rounds]
