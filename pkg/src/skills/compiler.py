"""
技能编译器
把检查器验证过的轨迹编译为技能模板：槽位抽取 → 定位器生成 → 状态描述符
"""
import hashlib
import re
from typing import Dict, List, Optional, Tuple

from ..agent.policy import Policy, PolicyRequest, PolicyRole
from ..agent.trajectory import TargetFeatures, Trajectory
from ..device.actions import ActionKind
from ..device.ui_model import make_descriptor
from ..errors import SlotMismatchError, UnlocatableElementError, UnverifiedTrajectoryError
from ..log import get_logger
from .template import ElementLocator, SkillStep, SkillTemplate, Slot, SlotType

logger = get_logger(__name__)

SLOT_NAME_RE = re.compile(r"^[a-z_]+$")

# 每步需要替换的字段：步骤下标 -> {"params": .., "text": ..}
StepSubstitutions = Dict[int, Dict[str, str]]


def make_skill_id(target_app: str, intent_pattern: str) -> str:
    digest = hashlib.sha1(intent_pattern.lower().encode("utf-8")).hexdigest()[:8]
    return f"{target_app}-{digest}"


def _claim_spans(text: str, values: List[Tuple[str, str]]) -> Optional[Dict[str, Tuple[int, int]]]:
    """为每个值在text中找第一个不重叠的出现位置（长值优先）"""
    taken: List[Tuple[int, int]] = []
    spans: Dict[str, Tuple[int, int]] = {}
    for name, value in sorted(values, key=lambda nv: (-len(nv[1]), nv[0])):
        start = text.find(value)
        while start != -1:
            end = start + len(value)
            if all(end <= a or start >= b for a, b in taken):
                break
            start = text.find(value, start + 1)
        if start == -1:
            return None
        spans[name] = (start, start + len(value))
        taken.append(spans[name])
    return spans


def _apply_spans(text: str, spans: Dict[str, Tuple[int, int]]) -> str:
    out = text
    for name, (start, end) in sorted(spans.items(), key=lambda item: -item[1][0]):
        out = out[:start] + "{" + name + "}" + out[end:]
    return out


def _substitute(text: str, values: List[Tuple[str, str]]) -> str:
    """整体等于某个槽位值时直接替换为占位符，否则替换其中出现的子串"""
    for name, value in values:
        if text == value:
            return "{" + name + "}"
    present = [(n, v) for n, v in values if v in text]
    if not present:
        return text
    spans = _claim_spans(text, present)
    return _apply_spans(text, spans) if spans else text


def extract_slots(policy: Policy, trajectory: Trajectory) -> Tuple[str, List[Slot], StepSubstitutions]:
    if not trajectory.verified:
        raise UnverifiedTrajectoryError("只能编译检查器验证过的轨迹")

    request = PolicyRequest(
        role=PolicyRole.SLOT_EXTRACT,
        instruction=trajectory.instruction,
        history=[(s.action, s.reasoning) for s in trajectory.steps][-19:],
        context={"steps": [s.summary() for s in trajectory.steps], "target_app": trajectory.target_app},
    )
    bindings = policy.decide(request).slot_bindings or {}

    instruction = trajectory.instruction
    step_texts = []
    for step in trajectory.steps:
        if step.action.kind == ActionKind.INPUT and step.action.payload:
            step_texts.append(step.action.payload)
        if step.target_features and step.target_features.text:
            step_texts.append(step.target_features.text)

    slots: List[Slot] = []
    kept: List[Tuple[str, str]] = []
    for name, (value, slot_type) in sorted(bindings.items()):
        if not SLOT_NAME_RE.match(name):
            raise SlotMismatchError(f"槽位名 {name!r} 不合法")
        try:
            parsed_type = SlotType(slot_type)
        except ValueError as e:
            raise SlotMismatchError(f"槽位 {name} 的类型 {slot_type!r} 不合法") from e
        if not value:
            raise SlotMismatchError(f"槽位 {name} 的值为空")
        if value in instruction:
            slots.append(Slot(name=name, slot_type=parsed_type))
            kept.append((name, value))
        elif any(value in text for text in step_texts):
            logger.warning("slot_not_in_instruction", slot=name, value=value)
        else:
            raise SlotMismatchError(f"槽位 {name}={value!r} 既不在指令中也不在任何步骤中")

    spans = _claim_spans(instruction, kept)
    if spans is None:
        raise SlotMismatchError("槽位值在指令中互相重叠")
    pattern = _apply_spans(instruction, spans)

    substitutions: StepSubstitutions = {}
    for index, step in enumerate(trajectory.steps):
        changes: Dict[str, str] = {}
        if step.action.kind == ActionKind.INPUT and step.action.payload:
            params = _substitute(step.action.payload, kept)
            if params != step.action.payload:
                changes["params"] = params
                # 输入值本身就是槽位时，定位器文本也存占位符
                if params.startswith("{") and params.endswith("}") and params[1:-1] in dict(kept):
                    changes["text"] = params
        if "text" not in changes and step.target_features and step.target_features.text:
            text = _substitute(step.target_features.text, kept)
            if text != step.target_features.text:
                changes["text"] = text
        if changes:
            substitutions[index] = changes
    return pattern, slots, substitutions


def build_locator(features: TargetFeatures, text_placeholder: Optional[str] = None) -> ElementLocator:
    """按原样复制非空特征；text_placeholder 非空时用它替代文本"""
    values = features.to_dict()
    if text_placeholder is not None:
        values["text"] = text_placeholder
    cleaned = {k: (None if v == "" else v) for k, v in values.items()}
    if all(v is None for v in cleaned.values()):
        raise UnlocatableElementError("目标元素所有特征均为空")
    return ElementLocator(**cleaned)


def compile_trajectory(policy: Policy, trajectory: Trajectory, skill_id: Optional[str] = None,
                       origin_skill: Optional[str] = None) -> SkillTemplate:
    pattern, slots, substitutions = extract_slots(policy, trajectory)

    steps: List[SkillStep] = []
    for index, step in enumerate(trajectory.steps):
        kind = step.action.kind
        if kind in (ActionKind.DONE, ActionKind.FAIL):
            continue
        changes = substitutions.get(index, {})
        locator = None
        if step.target_features is not None:
            locator = build_locator(step.target_features, changes.get("text"))
        params = step.action.payload
        if "params" in changes:
            params = changes["params"]
        steps.append(SkillStep(action_kind=kind, descriptor=make_descriptor(step.tree_before),
                               locator=locator, params=params))

    template = SkillTemplate(
        skill_id=skill_id or make_skill_id(trajectory.target_app, pattern),
        intent_pattern=pattern,
        target_app=trajectory.target_app,
        slots=slots,
        steps=steps,
        origin_skill=origin_skill,
    )
    logger.info("skill_compiled", skill=template.skill_id, pattern=pattern,
                steps=len(steps), slots=template.slot_names)
    return template
