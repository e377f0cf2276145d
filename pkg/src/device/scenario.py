"""
场景文件解析
每个应用是一个JSON文档：屏幕（节点模板 + 跳转规则）、初始状态、检查器与弹窗模板
"""
import copy
import json
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

from ..errors import ScenarioError
from .actions import ActionKind
from .ui_model import DIALOG_CLASS, UINode

BACK_TARGET = "@back"
WELCOME_SCREEN = "welcome"

EFFECT_OPS = ("draft", "commit", "set", "toggle", "clear_draft")
COMPARATORS = ("contains", "equals")

DEFAULT_DIALOGS: Dict[str, Dict[str, Any]] = {
    "chooser": {
        "class_name": DIALOG_CLASS,
        "resource_id": "chooser_dialog",
        "children": [
            {"class_name": "android.widget.TextView", "resource_id": "chooser_title", "text": "Open with"},
            {"class_name": "android.widget.Button", "resource_id": "chooser_once", "text": "Just once", "clickable": True},
            {"class_name": "android.widget.Button", "resource_id": "chooser_always", "text": "Always", "clickable": True},
            {"class_name": "android.widget.Button", "resource_id": "chooser_dismiss", "text": "Not now", "clickable": True},
        ],
    },
    "permission": {
        "class_name": DIALOG_CLASS,
        "resource_id": "permission_dialog",
        "children": [
            {"class_name": "android.widget.TextView", "resource_id": "permission_message",
             "text": "{app_label} needs access to continue"},
            {"class_name": "android.widget.Button", "resource_id": "permission_allow", "text": "Allow", "clickable": True},
            {"class_name": "android.widget.Button", "resource_id": "permission_deny", "text": "Deny", "clickable": True},
        ],
    },
}


@dataclass
class TransitionRule:
    """跳转规则：动作模式 → 目标屏幕 + 状态修改"""
    kind: ActionKind
    to: Optional[str] = None  # None 表示停留；"@back" 表示出栈
    resource_id: Optional[str] = None
    text: Optional[str] = None
    replace: bool = False  # 替换栈顶而不是压栈
    effects: List[Dict[str, Any]] = field(default_factory=list)

    def matches(self, kind: ActionKind, node: Optional[UINode]) -> bool:
        if kind != self.kind:
            return False
        if self.resource_id is not None and (node is None or node.resource_id != self.resource_id):
            return False
        if self.text is not None and (node is None or node.text != self.text):
            return False
        return True


@dataclass
class ScreenDef:
    screen_id: str
    nodes: List[Dict[str, Any]]
    transitions: List[TransitionRule] = field(default_factory=list)


@dataclass
class CheckerDef:
    """真值检查器：只读取设备持久状态"""
    task_id: str
    app_id: str
    state_key: str
    comparator: str
    value_key: Optional[str] = None  # 期望值取自绑定中的该键
    fields: List[str] = field(default_factory=list)  # 记录型比较使用的绑定键
    value: Any = None  # 字面期望值
    normalize: Optional[str] = None
    require_foreground: bool = False


@dataclass
class SimApp:
    """以有限状态机描述的应用"""
    app_id: str
    label: str
    initial_screen: str
    screens: Dict[str, ScreenDef]
    initial_state: Dict[str, Any] = field(default_factory=dict)
    checkers: List[CheckerDef] = field(default_factory=list)
    dialogs: Dict[str, Dict[str, Any]] = field(default_factory=dict)

    def fresh_state(self) -> Dict[str, Any]:
        return copy.deepcopy(self.initial_state)

    def has_welcome(self) -> bool:
        return WELCOME_SCREEN in self.screens


def _parse_transition(app_id: str, screen_id: str, raw: Dict[str, Any]) -> TransitionRule:
    on = raw.get("on")
    if not isinstance(on, dict) or "kind" not in on:
        raise ScenarioError(f"{app_id}/{screen_id}: 跳转规则缺少 on.kind")
    try:
        kind = ActionKind(str(on["kind"]).upper())
    except ValueError as e:
        raise ScenarioError(f"{app_id}/{screen_id}: 未知动作类型 {on['kind']}") from e
    effects = raw.get("effects")
    if effects is None:
        effects = [raw["effect"]] if "effect" in raw else []
    for effect in effects:
        if effect.get("op") not in EFFECT_OPS:
            raise ScenarioError(f"{app_id}/{screen_id}: 未知状态操作 {effect.get('op')}")
    return TransitionRule(
        kind=kind,
        to=raw.get("to"),
        resource_id=on.get("resource_id"),
        text=on.get("text"),
        replace=bool(raw.get("replace", False)),
        effects=list(effects),
    )


def _parse_checker(app_id: str, raw: Dict[str, Any]) -> CheckerDef:
    comparator = raw.get("comparator", "contains")
    if comparator not in COMPARATORS:
        raise ScenarioError(f"{app_id}: 未知比较方式 {comparator}")
    for key in ("task_id", "state_key"):
        if key not in raw:
            raise ScenarioError(f"{app_id}: 检查器缺少 {key}")
    return CheckerDef(
        task_id=raw["task_id"],
        app_id=app_id,
        state_key=raw["state_key"],
        comparator=comparator,
        value_key=raw.get("value_key"),
        fields=list(raw.get("fields", [])),
        value=raw.get("value"),
        normalize=raw.get("normalize"),
        require_foreground=bool(raw.get("require_foreground", False)),
    )


def parse_scenario(data: Dict[str, Any]) -> SimApp:
    for key in ("app_id", "initial_screen", "screens"):
        if key not in data:
            raise ScenarioError(f"场景缺少字段 {key}")
    app_id = data["app_id"]
    screens: Dict[str, ScreenDef] = {}
    for screen_id, raw in data["screens"].items():
        transitions = [_parse_transition(app_id, screen_id, t) for t in raw.get("transitions", [])]
        screens[screen_id] = ScreenDef(screen_id=screen_id, nodes=list(raw.get("nodes", [])),
                                       transitions=transitions)

    if data["initial_screen"] not in screens:
        raise ScenarioError(f"{app_id}: 初始屏幕 {data['initial_screen']} 不存在")
    for screen in screens.values():
        for rule in screen.transitions:
            if rule.to is not None and rule.to != BACK_TARGET and rule.to not in screens:
                raise ScenarioError(f"{app_id}/{screen.screen_id}: 跳转目标 {rule.to} 不存在")

    dialogs = copy.deepcopy(DEFAULT_DIALOGS)
    dialogs.update(data.get("dialogs", {}))
    return SimApp(
        app_id=app_id,
        label=data.get("label", app_id),
        initial_screen=data["initial_screen"],
        screens=screens,
        initial_state=copy.deepcopy(data.get("initial_state", {})),
        checkers=[_parse_checker(app_id, c) for c in data.get("checkers", [])],
        dialogs=dialogs,
    )


def load_scenario(path: str) -> SimApp:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ScenarioError(f"无法读取场景文件 {path}: {e}") from e
    return parse_scenario(data)


def load_scenarios(directory: str) -> Dict[str, SimApp]:
    """加载目录下的全部场景（按文件名排序）"""
    if not os.path.isdir(directory):
        raise ScenarioError(f"场景目录不存在: {directory}")
    apps: Dict[str, SimApp] = {}
    for name in sorted(os.listdir(directory)):
        if not name.endswith(".json"):
            continue
        app = load_scenario(os.path.join(directory, name))
        if app.app_id in apps:
            raise ScenarioError(f"重复的应用ID: {app.app_id}")
        apps[app.app_id] = app
    return apps
