"""测试共用的构造函数：规范指令表、按 resource_id 操作设备、链式测试应用"""
import os
from typing import Any, Dict, List

from src.agent.scripted_policy import ScriptedPolicy, ScriptedRule
from src.config import PROJECT_ROOT
from src.device.actions import Action, ActionKind, ApplyOutcome
from src.device.scenario import parse_scenario
from src.device.simulator import SimDevice
from src.device.ui_model import UIStateDescriptor, UITree, flatten_tree
from src.skills.template import ElementLocator, SkillStep, SkillTemplate, Slot, SlotType

MINI_PLAN = os.path.join(PROJECT_ROOT, "data", "plans", "mini_plan.json")
DEFAULT_PLAN = os.path.join(PROJECT_ROOT, "data", "plans", "default_plan.json")

# 每个任务的规范指令与检查器期望值
CANONICAL = {
    "set_alarm": ("Set an alarm for 7:30 AM", {"time": "7:30 AM"}),
    "chrome_search": ("Search for weather in Chrome", {"search_query": "weather"}),
    "create_contact": ("Add contact Alice with phone 5551234", {"name": "Alice", "phone": "5551234"}),
    "wifi_on": ("Turn on WiFi", {}),
    "create_note": ("Create a note titled Groceries", {"title": "Groceries"}),
    "open_url": ("Open wikipedia.org", {"url": "wikipedia.org"}),
    "airplane_on": ("Turn on airplane mode", {}),
}

# 低变化（新参数）指令的绑定与期望值
LOW_VARIATION = {
    "set_alarm": ({"time": "9:00 AM"}, {"time": "9:00 AM"}),
    "chrome_search": ({"search_query": "news"}, {"search_query": "news"}),
    "create_contact": ({"name": "Carol", "phone": "5550001"}, {"name": "Carol", "phone": "5550001"}),
    "wifi_on": ({}, {}),
    "create_note": ({"title": "Books"}, {"title": "Books"}),
    "open_url": ({"url": "github.com"}, {"url": "github.com"}),
    "airplane_on": ({}, {}),
}


def index_of(tree: UITree, resource_id: str) -> int:
    for index, node in enumerate(flatten_tree(tree)):
        if node.resource_id == resource_id:
            return index
    raise AssertionError(f"{resource_id} not on screen {tree.activity}")


def tap(device: SimDevice, resource_id: str) -> ApplyOutcome:
    return device.apply(Action(ActionKind.TAP, element_index=index_of(device.capture(), resource_id)))


def type_into(device: SimDevice, resource_id: str, text: str) -> ApplyOutcome:
    return device.apply(Action(ActionKind.INPUT, element_index=index_of(device.capture(), resource_id),
                               payload=text))


# ---- 链式测试应用：s0 -> s1 -> ... -> sN，每屏一个 next_k 按钮 ----

def chain_scenario(length: int) -> Dict[str, Any]:
    screens = {}
    for k in range(length + 1):
        nodes = [{"class_name": "android.widget.TextView", "resource_id": f"title_{k}", "text": f"Screen {k}"}]
        transitions = []
        if k < length:
            nodes.append({"class_name": "android.widget.Button", "resource_id": f"next_{k}",
                          "text": f"Next {k}", "clickable": True})
            transitions.append({"on": {"kind": "TAP", "resource_id": f"next_{k}"}, "to": f"s{k + 1}"})
        screens[f"s{k}"] = {"nodes": nodes, "transitions": transitions}
    return {"app_id": "chain", "label": "Chain", "initial_screen": "s0", "screens": screens}


def chain_device(length: int) -> SimDevice:
    return SimDevice({"chain": parse_scenario(chain_scenario(length))})


def chain_policy(length: int) -> ScriptedPolicy:
    """回退时总是点击当前屏的 next_k"""
    rules = [
        ScriptedRule.from_dict({
            "role": "STEP_DECIDE", "screen_id": f"s{k}",
            "response": {"action": {"kind": "TAP", "target": {"resource_id": f"next_{k}"}}},
        })
        for k in range(length)
    ]
    return ScriptedPolicy(rules)


def chain_skill(ghosts: List[bool]) -> SkillTemplate:
    """ghosts[k] 为 True 时第k个点击步骤的定位器指向不存在的元素"""
    steps = [SkillStep(ActionKind.LAUNCH, UIStateDescriptor("home", ["home_clock", "launcher_grid"]),
                       params="chain")]
    for k, ghost in enumerate(ghosts):
        rid = f"ghost_{k}" if ghost else f"next_{k}"
        steps.append(SkillStep(ActionKind.TAP, UIStateDescriptor(f"s{k}", [f"title_{k}", f"next_{k}"]),
                               locator=ElementLocator(resource_id=rid)))
    return SkillTemplate(skill_id="chain-walk", intent_pattern="Walk the chain", target_app="chain", steps=steps)


def alarm_skill(skill_id: str = "clock-alarm", version: int = 1, app: str = "clock") -> SkillTemplate:
    """只有启动和输入两步的小技能，用于存储和学习测试"""
    steps = [
        SkillStep(ActionKind.LAUNCH, UIStateDescriptor("home", ["home_clock"]), params=app),
        SkillStep(ActionKind.INPUT, UIStateDescriptor("time_picker", ["time_input", "ok_button"]),
                  locator=ElementLocator(resource_id="time_input", text="{time}"), params="{time}"),
    ]
    return SkillTemplate(skill_id=skill_id, intent_pattern="Set an alarm for {time}", target_app=app,
                         slots=[Slot("time", SlotType.TIME)], steps=steps, version=version)
