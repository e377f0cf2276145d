"""
纵向实验运行器
按顺序执行各阶段的回合（共享同一个技能库和设备），汇总指标并写出报告
"""
import os
from dataclasses import dataclass, field
from typing import Dict, List

from ..log import get_logger
from .controller import AgentController, RoundResult
from .metrics import MetricsReport, compute, render_text
from .plan import Phase

logger = get_logger(__name__)


@dataclass
class PlanRun:
    results: List[RoundResult] = field(default_factory=list)
    report: MetricsReport = field(default_factory=MetricsReport)
    phase_reports: Dict[str, MetricsReport] = field(default_factory=dict)

    def write(self, controller: AgentController, out_dir: str) -> Dict[str, str]:
        """写出 report.json / report.txt 以及三份NDJSON日志，返回文件路径"""
        os.makedirs(out_dir, exist_ok=True)
        paths = {
            "report_json": os.path.join(out_dir, "report.json"),
            "report_text": os.path.join(out_dir, "report.txt"),
            "rounds": os.path.join(out_dir, "rounds.ndjson"),
            "replay": os.path.join(out_dir, "replay.ndjson"),
            "episodes": os.path.join(out_dir, "episodes.ndjson"),
        }
        with open(paths["report_json"], "w", encoding="utf-8") as f:
            f.write(self.report.to_json() + "\n")
        with open(paths["report_text"], "w", encoding="utf-8") as f:
            f.write(render_text(self.report))
        controller.round_log.write(paths["rounds"])
        controller.replay_trace.write(paths["replay"])
        controller.episode_trace.write(paths["episodes"])
        return paths


def run_phases(controller: AgentController, phases: List[Phase]) -> PlanRun:
    run = PlanRun()
    for phase in phases:
        logger.info("phase_started", phase=phase.name, rounds=len(phase.rounds))
        phase_results = controller.run_rounds(phase.rounds, phase.name)
        run.results.extend(phase_results)
        run.phase_reports[phase.name] = compute(phase_results)
    run.report = compute(run.results)
    logger.info("plan_finished", rounds=run.report.rounds, success_rate=round(run.report.success_rate, 4),
                mean_calls=round(run.report.mean_policy_calls, 4))
    return run
