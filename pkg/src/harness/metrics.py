"""
指标计算
成功率、平均策略调用次数、零调用率、匹配率、回退率，以及按阶段/变化等级/任务的分组和执行路径分布
"""
import json
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

from .controller import L2_PATHS, ExecutionPath, RoundResult


def _rate(numerator: int, denominator: int) -> float:
    return numerator / denominator if denominator else 0.0


def _mean(values: Sequence[int]) -> float:
    return sum(values) / len(values) if values else 0.0


@dataclass
class GroupStats:
    rounds: int
    success_rate: float
    mean_policy_calls: float
    zero_llm_rate: float

    @classmethod
    def of(cls, results: Sequence[RoundResult]) -> "GroupStats":
        return cls(
            rounds=len(results),
            success_rate=_rate(sum(1 for r in results if r.success), len(results)),
            mean_policy_calls=_mean([r.policy_calls for r in results]),
            zero_llm_rate=_rate(sum(1 for r in results if r.policy_calls == 0), len(results)),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "rounds": self.rounds,
            "success_rate": round(self.success_rate, 6),
            "mean_policy_calls": round(self.mean_policy_calls, 6),
            "zero_llm_rate": round(self.zero_llm_rate, 6),
        }


@dataclass
class MetricsReport:
    rounds: int = 0
    success_rate: float = 0.0
    mean_policy_calls: float = 0.0
    zero_llm_rate: float = 0.0
    match_rate: float = 0.0
    fallback_rate: float = 0.0
    total_policy_calls: int = 0
    mean_calls_l1: float = 0.0
    mean_calls_l2: float = 0.0
    by_phase: Dict[str, GroupStats] = field(default_factory=dict)
    by_variation: Dict[str, GroupStats] = field(default_factory=dict)
    by_task: Dict[str, GroupStats] = field(default_factory=dict)
    by_path: Dict[str, GroupStats] = field(default_factory=dict)
    layer_distribution: Dict[str, int] = field(default_factory=dict)

    @property
    def call_reduction(self) -> Optional[float]:
        """第一层与第二层平均调用数之比，作为加速比的代理"""
        if self.mean_calls_l2 == 0:
            return None
        return self.mean_calls_l1 / self.mean_calls_l2

    def to_dict(self) -> Dict[str, Any]:
        def groups(items: Dict[str, GroupStats]) -> Dict[str, Any]:
            return {k: v.to_dict() for k, v in sorted(items.items())}

        return {
            "rounds": self.rounds,
            "success_rate": round(self.success_rate, 6),
            "mean_policy_calls": round(self.mean_policy_calls, 6),
            "zero_llm_rate": round(self.zero_llm_rate, 6),
            "match_rate": round(self.match_rate, 6),
            "fallback_rate": round(self.fallback_rate, 6),
            "total_policy_calls": self.total_policy_calls,
            "mean_calls_l1": round(self.mean_calls_l1, 6),
            "mean_calls_l2": round(self.mean_calls_l2, 6),
            "by_phase": groups(self.by_phase),
            "by_variation": groups(self.by_variation),
            "by_task": groups(self.by_task),
            "by_path": groups(self.by_path),
            "layer_distribution": dict(self.layer_distribution),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False, indent=2)


def _group(results: Sequence[RoundResult], key) -> Dict[str, GroupStats]:
    buckets: Dict[str, List[RoundResult]] = {}
    for result in results:
        buckets.setdefault(key(result), []).append(result)
    return {name: GroupStats.of(items) for name, items in buckets.items()}


def compute(results: Sequence[RoundResult]) -> MetricsReport:
    n = len(results)
    overall = GroupStats.of(results)
    # 尝试过回放的回合（包括回放后回退到第一层的）
    l2_attempts = [r for r in results if r.execution_path != ExecutionPath.L1_FRESH]
    fell_back = [r for r in l2_attempts if r.execution_path == ExecutionPath.L2_TO_L1]
    l1_rounds = [r for r in results if r.execution_path not in L2_PATHS]
    l2_rounds = [r for r in results if r.execution_path in L2_PATHS]

    return MetricsReport(
        rounds=n,
        success_rate=overall.success_rate,
        mean_policy_calls=overall.mean_policy_calls,
        zero_llm_rate=overall.zero_llm_rate,
        match_rate=_rate(sum(1 for r in results if r.match_kind == "FULL"), n),
        fallback_rate=_rate(len(fell_back), len(l2_attempts)),
        total_policy_calls=sum(r.policy_calls for r in results),
        mean_calls_l1=_mean([r.policy_calls for r in l1_rounds]),
        mean_calls_l2=_mean([r.policy_calls for r in l2_rounds]),
        by_phase=_group(results, lambda r: r.phase),
        by_variation=_group(results, lambda r: r.variation),
        by_task=_group(results, lambda r: r.task_id),
        by_path=_group(results, lambda r: r.execution_path.value),
        layer_distribution={path.value: sum(1 for r in results if r.execution_path == path)
                            for path in ExecutionPath},
    )


def render_text(report: MetricsReport) -> str:
    """对齐的纯文本表格：总体指标 + 按执行路径 + 按阶段"""
    lines = [
        f"rounds: {report.rounds}",
        f"success_rate: {report.success_rate:.4f}",
        f"mean_policy_calls: {report.mean_policy_calls:.4f}",
        f"zero_llm_rate: {report.zero_llm_rate:.4f}",
        f"match_rate: {report.match_rate:.4f}",
        f"fallback_rate: {report.fallback_rate:.4f}",
        f"mean_calls_l1: {report.mean_calls_l1:.4f}",
        f"mean_calls_l2: {report.mean_calls_l2:.4f}",
        "",
        f"{'Path':<18} {'Rounds':>7} {'Success':>8} {'Calls':>8}",
    ]
    for path in ExecutionPath:
        stats = report.by_path.get(path.value)
        if stats is None:
            lines.append(f"{path.value:<18} {0:>7d} {'-':>8} {'-':>8}")
        else:
            lines.append(f"{path.value:<18} {stats.rounds:>7d} {stats.success_rate:>8.2%} "
                         f"{stats.mean_policy_calls:>8.2f}")
    if report.by_phase:
        lines.append("")
        lines.append(f"{'Phase':<18} {'Rounds':>7} {'Success':>8} {'Calls':>8} {'0-LLM':>8}")
        for name, stats in sorted(report.by_phase.items()):
            lines.append(f"{name:<18} {stats.rounds:>7d} {stats.success_rate:>8.2%} "
                         f"{stats.mean_policy_calls:>8.2f} {stats.zero_llm_rate:>8.2%}")
    return "\n".join(lines) + "\n"
