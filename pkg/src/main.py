"""
技能编译与回放引擎 - 命令行入口
用法: python -m src.main <run|match|inspect|export|score> ...
"""
import argparse
import json
import os
import sys
from typing import Any, List, Optional

from .agent.embeddings import TokenHashEmbedding
from .agent.element_finder import TAU_STRICT, find_element, score_fraction
from .agent.intent import AppDictionary
from .agent.llm_policy import OpenAIPolicy
from .agent.matcher import SkillMatcher
from .agent.policy import Policy
from .agent.scripted_policy import ScriptedPolicy
from .config import Settings
from .device.simulator import SimDevice
from .device.ui_model import flatten_tree, tree_from_dict
from .errors import SkillAgentError
from .harness.controller import AgentController
from .harness.metrics import render_text
from .harness.plan import load_plan
from .harness.runner import run_phases
from .log import configure_logging, get_logger
from .skills.learning import LearningManager
from .skills.store import SkillStore
from .skills.template import ElementLocator

logger = get_logger(__name__)


def build_policy(spec: str, settings: Settings) -> Policy:
    """scripted / scripted:<file> / llm"""
    if spec == "llm":
        return OpenAIPolicy(api_provider=settings.llm_provider, model=settings.llm_model,
                            api_key=settings.llm_api_key)
    if spec == "scripted":
        return ScriptedPolicy.from_file(settings.policy_path)
    if spec.startswith("scripted:"):
        return ScriptedPolicy.from_file(spec[len("scripted:"):])
    raise ValueError(f"未知的策略 {spec!r}（可选 scripted、scripted:<file>、llm）")


def _load_json_arg(value: str) -> Any:
    """参数既可以是JSON字符串，也可以是JSON文件路径"""
    if os.path.isfile(value):
        with open(value, "r", encoding="utf-8") as f:
            return json.load(f)
    return json.loads(value)


def _print_json(data: Any) -> None:
    print(json.dumps(data, sort_keys=True, ensure_ascii=False, indent=2))


def cmd_run(args, settings: Settings) -> int:
    phases = load_plan(args.plan)
    scenario_dir = args.scenarios or settings.scenario_dir
    seed = args.seed if args.seed is not None else settings.seed
    policy = build_policy(args.policy, settings)
    store = SkillStore(args.store or settings.store_path)
    try:
        matcher = None
        if not args.baseline:
            matcher = SkillMatcher(TokenHashEmbedding(), AppDictionary.from_file(settings.keywords_path),
                                   policy, store=store)
        controller = AgentController(
            device_factory=lambda: SimDevice.from_directory(scenario_dir, rng_seed=seed),
            policy=policy,
            store=store,
            matcher=matcher,
            learning=LearningManager(store),
            loop_budget=settings.loop_budget,
            replay_budget=settings.replay_budget,
            dismiss_keywords=settings.dismiss_keywords,
            use_skills=not args.baseline,
        )
        run = run_phases(controller, phases)
        if args.out_dir:
            paths = run.write(controller, args.out_dir)
            logger.info("reports_written", **paths)
        print(render_text(run.report), end="")
    finally:
        store.close()
    return 0


def cmd_match(args, settings: Settings) -> int:
    policy = build_policy(args.policy, settings)
    with SkillStore(args.store or settings.store_path) as store:
        matcher = SkillMatcher(TokenHashEmbedding(), AppDictionary.from_file(settings.keywords_path),
                               policy, store=store)
        result = matcher.match(args.instruction, store.list_skills())
        output = result.to_dict()
        output["policy_calls"] = policy.counter.total
        _print_json(output)
    return 0


def cmd_inspect(args, settings: Settings) -> int:
    with SkillStore(args.store or settings.store_path) as store:
        skill = store.load_skill(args.skill, args.version)
        stats = store.get_stats(skill.skill_id, skill.version)
        _print_json({
            "skill": skill.to_dict(),
            "versions": store.versions(skill.skill_id),
            "r_fail": round(stats.r_fail, 6),
            "failures": [f.to_dict() for f in store.failures(skill.skill_id)],
            "guards": [g.to_dict() for g in store.guards(skill.skill_id)],
        })
    return 0


def cmd_export(args, settings: Settings) -> int:
    with SkillStore(args.store or settings.store_path) as store:
        text = store.export_json()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(text + "\n")
    else:
        print(text)
    return 0


def cmd_score(args, settings: Settings) -> int:
    locator = ElementLocator.from_dict(_load_json_arg(args.locator))
    tree = tree_from_dict(_load_json_arg(args.tree))
    bindings = _load_json_arg(args.bindings) if args.bindings else None
    scores = []
    for index, node in enumerate(flatten_tree(tree)):
        fraction = score_fraction(node, locator, bindings)
        scores.append({"index": index, "resource_id": node.resource_id, "score": float(fraction),
                       "fraction": f"{fraction.numerator}/{fraction.denominator}"})
    found = find_element(tree, locator, args.threshold, bindings)
    _print_json({
        "threshold": args.threshold,
        "found": {"index": found[0], "score": found[1]} if found else None,
        "scores": scores,
    })
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="python -m src.main", description="GUI技能编译与回放引擎")
    parser.add_argument("--env-file", help=".env 文件路径")
    parser.add_argument("--log-level", help="日志级别（默认取 LOG_LEVEL）")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="按阶段计划运行纵向实验")
    run.add_argument("--plan", required=True, help="阶段计划JSON")
    run.add_argument("--scenarios", help="场景目录（默认取 SCENARIO_DIR）")
    run.add_argument("--store", help="技能库路径（默认取 SKILL_STORE_PATH）")
    run.add_argument("--policy", default="scripted", help="scripted | scripted:<file> | llm")
    run.add_argument("--seed", type=int, help="模拟器随机种子")
    run.add_argument("--baseline", action="store_true", help="只使用第一层（对照组）")
    run.add_argument("--out-dir", help="报告与日志输出目录")
    run.set_defaults(handler=cmd_run)

    match = sub.add_parser("match", help="对一条指令做技能匹配")
    match.add_argument("--instruction", required=True)
    match.add_argument("--store", help="技能库路径")
    match.add_argument("--policy", default="scripted", help="scripted | scripted:<file> | llm")
    match.set_defaults(handler=cmd_match)

    inspect = sub.add_parser("inspect", help="查看技能详情")
    inspect.add_argument("--skill", required=True)
    inspect.add_argument("--version", type=int)
    inspect.add_argument("--store", help="技能库路径")
    inspect.set_defaults(handler=cmd_inspect)

    export = sub.add_parser("export", help="把技能库导出为JSON")
    export.add_argument("--store", help="技能库路径")
    export.add_argument("--out", help="输出文件（默认打印到标准输出）")
    export.set_defaults(handler=cmd_export)

    score = sub.add_parser("score", help="计算定位器对界面树各节点的匹配分数")
    score.add_argument("--locator", required=True, help="定位器JSON或文件")
    score.add_argument("--tree", required=True, help="界面树JSON或文件")
    score.add_argument("--bindings", help="槽位绑定JSON")
    score.add_argument("--threshold", type=float, default=TAU_STRICT)
    score.set_defaults(handler=cmd_score)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = Settings.from_env(args.env_file)
        configure_logging(args.log_level or settings.log_level, settings.log_format)
        return args.handler(args, settings)
    except (SkillAgentError, ValueError, KeyError, OSError) as e:
        print(f"错误: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
