"""
第三层：持续学习
记录回放成败、按失败模式生成守卫条件、失败率超过阈值时标记重编译（最多三个版本）
"""
from collections import defaultdict
from dataclasses import replace
from enum import Enum
from typing import Dict, List, Optional, Tuple

from ..agent.deviation import Severity
from ..device.ui_model import UITree
from ..errors import NotFlaggedError
from ..log import get_logger
from .records import FailureRecord, GuardCondition, GuardPredicate, SkillStats
from .store import SkillStore
from .template import V_MAX, SkillTemplate

logger = get_logger(__name__)

R_FAIL_LIMIT = 0.5
GUARD_MIN_RECURRENCE = 2
HOME_APP = "home"

_GUARD_FOR_SEVERITY = {
    Severity.MODERATE: GuardPredicate.NO_DIALOG_OVERLAY,
    Severity.MAJOR: GuardPredicate.FOREGROUND_IS_TARGET,
}


class RecompileDecision(Enum):
    RECOMPILE = "RECOMPILE"
    VERSION_CAP_REACHED = "VERSION_CAP_REACHED"


def synthesize_guards(failures: List[FailureRecord], target_app: str) -> List[GuardCondition]:
    """同一 (步骤, 严重度) 至少出现两次才生成守卫；MINOR 不生成"""
    groups: Dict[Tuple[int, Severity], List[FailureRecord]] = defaultdict(list)
    for record in failures:
        if record.severity in _GUARD_FOR_SEVERITY:
            groups[(record.step_index, record.severity)].append(record)

    guards = []
    for (step_index, severity), records in sorted(groups.items(), key=lambda g: (g[0][0], g[0][1].value)):
        if len(records) < GUARD_MIN_RECURRENCE:
            continue
        params = {"target_app": target_app}
        if severity == Severity.MAJOR:
            params["home_app"] = HOME_APP
        guards.append(GuardCondition(
            skill_id=records[0].skill_id,
            predicate=_GUARD_FOR_SEVERITY[severity],
            step_index=step_index,
            severity=severity,
            source_failure_count=len(records),
            params=params,
        ))
    return guards


class LearningManager:
    def __init__(self, store: SkillStore):
        self.store = store

    def record_outcome(self, skill_id: str, version: int, success: bool,
                       failure: Optional[FailureRecord] = None) -> SkillStats:
        stats = self.store.get_stats(skill_id, version)
        if success:
            stats.n_succ += 1
            stats.last_success = self.store.next_sequence()
        else:
            stats.n_fail += 1
        if stats.r_fail > R_FAIL_LIMIT and not stats.needs_recompile:
            stats.needs_recompile = True
            logger.info("skill_flagged", skill=skill_id, version=version, r_fail=round(stats.r_fail, 4))
        self.store.update_stats(stats)

        if failure is not None:
            self.store.add_failure(failure)
            target_app = self.store.load_skill(skill_id, version).target_app
            guards = synthesize_guards(self.store.failures(skill_id, version), target_app)
            self.store.replace_guards(skill_id, guards)
        return stats

    def request_recompile(self, skill_id: str) -> RecompileDecision:
        skill = self.store.load_skill(skill_id)
        if not skill.needs_recompile:
            raise NotFlaggedError(f"技能 {skill_id} 没有被标记为需要重编译")
        if skill.version < V_MAX:
            return RecompileDecision.RECOMPILE
        return RecompileDecision.VERSION_CAP_REACHED

    def apply_recompile(self, skill_id: str, fresh: SkillTemplate) -> SkillTemplate:
        """把新编译的模板存为下一个版本：计数清零、标记清除、守卫重置

        只替换步骤；意图模式、槽位和目标应用沿用当前版本，
        除非新步骤引用了当前版本没有的槽位。
        """
        current = self.store.load_skill(skill_id)
        pattern, slots = current.intent_pattern, list(current.slots)
        if not set(fresh.step_placeholders) <= set(current.slot_names):
            logger.warning("recompile_pattern_changed", skill=skill_id,
                           old=current.intent_pattern, new=fresh.intent_pattern)
            pattern, slots = fresh.intent_pattern, list(fresh.slots)
        upgraded = replace(
            fresh,
            skill_id=skill_id,
            intent_pattern=pattern,
            slots=slots,
            target_app=current.target_app,
            version=current.version + 1,
            n_succ=0,
            n_fail=0,
            needs_recompile=False,
            last_success=self.store.next_sequence(),
            origin_skill=current.origin_skill,
        )
        self.store.save_skill(upgraded)
        self.store.replace_guards(skill_id, [])
        logger.info("skill_recompiled", skill=skill_id, version=upgraded.version)
        return upgraded

    def violated_guards(self, skill_id: str, tree: UITree) -> List[GuardCondition]:
        """回放前评估守卫，不调用策略"""
        return [guard for guard in self.store.guards(skill_id) if not guard.holds(tree)]
