"""
确定性模拟设备
应用是场景文件描述的有限状态机；设备负责渲染界面树、执行动作、注入扰动和运行真值检查器
"""
import random
import re
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Set, Tuple

from ..errors import NoSuchAppError
from ..log import get_logger
from .actions import Action, ActionKind, ApplyOutcome, Perturbation, PerturbationKind
from .checkers import CheckerResult, CheckStatus, evaluate_checker
from .scenario import BACK_TARGET, WELCOME_SCREEN, CheckerDef, SimApp, TransitionRule, load_scenarios
from .ui_model import ROOT_CLASS, Bounds, UINode, UITree, annotate, flatten_tree, iter_bfs

logger = get_logger(__name__)

HOME_APP = "home"
HOME_ACTIVITY = "home"
SCREEN_BOUNDS = Bounds(0, 0, 1080, 2400)
DIALOG_BOUNDS = Bounds(90, 800, 990, 1600)

_PLACEHOLDER_RE = re.compile(r"\{(draft|state)\.([a-z_]+)\}")


@dataclass
class AppRuntime:
    """单个应用的运行时状态：屏幕栈、持久状态、输入草稿"""
    stack: List[str]
    state: Dict[str, Any]
    draft: Dict[str, str] = field(default_factory=dict)


class SimDevice:
    """模拟的移动设备（单线程使用）"""

    def __init__(self, apps: Dict[str, SimApp], rng_seed: int = 0):
        if not apps:
            raise ValueError("设备至少需要一个应用")
        self.apps = apps
        self.rng_seed = rng_seed
        self.reset_count = 0
        self.foreground = HOME_APP
        self.pending_dialog: Optional[str] = None  # 选择器弹窗所属应用
        self._armed_permissions: Set[str] = set()
        self._runtime: Dict[str, AppRuntime] = {}
        self._checkers: Dict[str, CheckerDef] = {}
        for app in apps.values():
            for checker in app.checkers:
                self._checkers[checker.task_id] = checker
        self.reset()

    @classmethod
    def from_directory(cls, directory: str, rng_seed: int = 0) -> "SimDevice":
        return cls(load_scenarios(directory), rng_seed=rng_seed)

    # ---- 生命周期 ----

    def reset(self) -> None:
        """恢复所有应用的初始状态并回到桌面"""
        self.reset_count += 1
        self.foreground = HOME_APP
        self.pending_dialog = None
        self._armed_permissions = set()
        self._runtime = {
            app_id: AppRuntime(stack=[app.initial_screen], state=app.fresh_state())
            for app_id, app in self.apps.items()
        }

    def installed_apps(self) -> List[str]:
        return sorted(self.apps)

    def task_app(self, task_id: str) -> Optional[str]:
        """任务检查器所属的应用"""
        checker = self._checkers.get(task_id)
        return checker.app_id if checker else None

    def current_screen(self, app_id: str) -> str:
        return self._app_runtime(app_id).stack[-1]

    def app_state(self, app_id: str) -> Dict[str, Any]:
        return dict(self._app_runtime(app_id).state)

    def _app_runtime(self, app_id: str) -> AppRuntime:
        if app_id not in self._runtime:
            raise NoSuchAppError(f"设备上没有应用 {app_id}")
        return self._runtime[app_id]

    # ---- 渲染 ----

    def _visible_dialog(self) -> Optional[Tuple[str, str]]:
        """当前可见的弹窗：(模板名, 所属应用)"""
        if self.pending_dialog is not None:
            return "chooser", self.pending_dialog
        if self.foreground in self._armed_permissions:
            return "permission", self.foreground
        return None

    def _fill(self, value: Optional[str], app_id: str) -> Optional[str]:
        if value is None:
            return None
        app = self.apps[app_id]
        runtime = self._runtime[app_id]

        def lookup(m: re.Match) -> str:
            source = runtime.draft if m.group(1) == "draft" else runtime.state
            found = source.get(m.group(2))
            return "" if found is None else str(found)

        text = _PLACEHOLDER_RE.sub(lookup, value).replace("{app_label}", app.label)
        return text or None

    def _vary_choice(self, key: str, options: List[Any]) -> Any:
        rng = random.Random(f"{self.rng_seed}:{self.reset_count}:{key}")
        return rng.choice(options)

    def _render(self, template: Dict[str, Any], app_id: str, path: str, bounds: Bounds) -> UINode:
        values = {
            "class_name": template.get("class_name", "android.view.View"),
            "resource_id": template.get("resource_id"),
            "text": template.get("text"),
            "content_desc": template.get("content_desc"),
        }
        for key, options in sorted((template.get("vary") or {}).items()):
            if key in values and options:
                values[key] = self._vary_choice(f"{app_id}:{path}:{key}", options)
        if "bounds" in template:
            bounds = Bounds.from_list(template["bounds"])
        children_templates = template.get("children", [])
        children = [
            self._render(child, app_id, f"{path}/{i}", _stack_bounds(bounds, len(children_templates), i))
            for i, child in enumerate(children_templates)
        ]
        return UINode(
            class_name=values["class_name"],
            resource_id=values["resource_id"] or None,
            text=self._fill(values["text"], app_id),
            content_desc=self._fill(values["content_desc"], app_id),
            bounds=bounds,
            clickable=bool(template.get("clickable", False)),
            children=children,
        )

    def _home_templates(self) -> List[Dict[str, Any]]:
        icons = [
            {"class_name": "android.widget.TextView", "resource_id": f"launcher_{app_id}",
             "text": self.apps[app_id].label, "content_desc": self.apps[app_id].label, "clickable": True}
            for app_id in self.installed_apps()
        ]
        return [
            {"class_name": "android.widget.TextView", "resource_id": "home_clock", "text": "10:08"},
            {"class_name": "android.widget.GridView", "resource_id": "launcher_grid", "children": icons},
        ]

    def capture(self) -> UITree:
        """渲染前台界面；有弹窗时作为根节点的最后一个子节点叠加"""
        if self.foreground == HOME_APP:
            activity = HOME_ACTIVITY
            templates = self._home_templates()
            render_app = None
        else:
            activity = self._runtime[self.foreground].stack[-1]
            templates = self.apps[self.foreground].screens[activity].nodes
            render_app = self.foreground

        children = []
        for i, template in enumerate(templates):
            child_bounds = _stack_bounds(SCREEN_BOUNDS, len(templates), i)
            if render_app is None:
                children.append(self._render_static(template, child_bounds))
            else:
                children.append(self._render(template, render_app, f"{activity}/{i}", child_bounds))

        dialog = self._visible_dialog()
        if dialog is not None:
            name, owner = dialog
            template = self.apps[owner].dialogs[name]
            children.append(self._render(template, owner, f"dialog:{name}", DIALOG_BOUNDS))

        root = UINode(class_name=ROOT_CLASS, bounds=SCREEN_BOUNDS, children=children)
        return UITree(root=annotate(root), activity=activity, foreground_app=self.foreground)

    def _render_static(self, template: Dict[str, Any], bounds: Bounds) -> UINode:
        children_templates = template.get("children", [])
        return UINode(
            class_name=template["class_name"],
            resource_id=template.get("resource_id"),
            text=template.get("text"),
            content_desc=template.get("content_desc"),
            bounds=bounds,
            clickable=bool(template.get("clickable", False)),
            children=[self._render_static(c, _stack_bounds(bounds, len(children_templates), i))
                      for i, c in enumerate(children_templates)],
        )

    # ---- 动作 ----

    def apply(self, action: Action) -> ApplyOutcome:
        kind = action.kind
        if kind in (ActionKind.DONE, ActionKind.FAIL):
            return ApplyOutcome.UNCHANGED

        if kind == ActionKind.LAUNCH:
            if action.payload not in self.apps:
                return ApplyOutcome.REJECTED
            if action.payload == self.foreground:
                return ApplyOutcome.UNCHANGED
            self.foreground = action.payload
            return ApplyOutcome.CHANGED

        dialog = self._visible_dialog()

        if kind == ActionKind.BACK:
            if dialog is not None:
                self._clear_dialog(dialog)
                return ApplyOutcome.CHANGED
            if self.foreground == HOME_APP:
                return ApplyOutcome.UNCHANGED
            self._go_back(self._runtime[self.foreground])
            return ApplyOutcome.CHANGED

        tree = self.capture()
        node = None
        if kind in (ActionKind.TAP, ActionKind.INPUT):
            nodes = flatten_tree(tree)
            if action.element_index is None or not 0 <= action.element_index < len(nodes):
                return ApplyOutcome.REJECTED
            node = nodes[action.element_index]

        if dialog is not None:
            # 模态弹窗：只有弹窗内的可点击节点响应
            dialog_root = tree.root.children[-1]
            inside = node is not None and any(n is node for n in iter_bfs(dialog_root))
            if kind == ActionKind.TAP and inside and node.clickable:
                self._clear_dialog(dialog)
                return ApplyOutcome.CHANGED
            return ApplyOutcome.UNCHANGED

        if self.foreground == HOME_APP:
            if kind == ActionKind.TAP and node.resource_id and node.resource_id.startswith("launcher_"):
                app_id = node.resource_id[len("launcher_"):]
                if app_id in self.apps:
                    self.foreground = app_id
                    return ApplyOutcome.CHANGED
            return ApplyOutcome.UNCHANGED

        runtime = self._runtime[self.foreground]
        screen = self.apps[self.foreground].screens[runtime.stack[-1]]
        for rule in screen.transitions:
            if rule.matches(kind, node):
                self._fire(runtime, rule, action.payload)
                return ApplyOutcome.CHANGED
        return ApplyOutcome.UNCHANGED

    def _clear_dialog(self, dialog: Tuple[str, str]) -> None:
        name, owner = dialog
        if name == "chooser":
            self.pending_dialog = None
        else:
            self._armed_permissions.discard(owner)

    def _go_back(self, runtime: AppRuntime) -> None:
        if len(runtime.stack) > 1:
            runtime.stack.pop()
        else:
            self.foreground = HOME_APP

    def _fire(self, runtime: AppRuntime, rule: TransitionRule, payload: Optional[str]) -> None:
        for effect in rule.effects:
            op = effect["op"]
            key = effect.get("key")
            if op == "draft":
                runtime.draft[key] = payload if payload is not None else ""
            elif op == "commit":
                if "fields" in effect:
                    item = {name: runtime.draft.get(src, "") for name, src in sorted(effect["fields"].items())}
                else:
                    item = runtime.draft.get(effect.get("from", key), "")
                runtime.state.setdefault(key, []).append(item)
            elif op == "set":
                if "from" in effect:
                    runtime.state[key] = runtime.draft.get(effect["from"], "")
                else:
                    runtime.state[key] = effect.get("value")
            elif op == "toggle":
                runtime.state[key] = not bool(runtime.state.get(key))
            elif op == "clear_draft":
                runtime.draft = {}

        if rule.to is None:
            return
        if rule.to == BACK_TARGET:
            self._go_back(runtime)
        elif rule.replace:
            runtime.stack[-1] = rule.to
        elif rule.to != runtime.stack[-1]:
            runtime.stack.append(rule.to)

    # ---- 扰动与预置 ----

    def inject(self, perturbation: Perturbation) -> None:
        app_id = perturbation.target_app
        if app_id not in self.apps:
            raise NoSuchAppError(f"设备上没有应用 {app_id}")
        if perturbation.kind == PerturbationKind.CHOOSER_DIALOG:
            self.pending_dialog = app_id
        elif perturbation.kind == PerturbationKind.CLEAR_APP_DATA:
            app = self.apps[app_id]
            start = WELCOME_SCREEN if app.has_welcome() else app.initial_screen
            self._runtime[app_id] = AppRuntime(stack=[start], state=app.fresh_state())
        elif perturbation.kind == PerturbationKind.REVOKE_PERMISSION:
            self._armed_permissions.add(app_id)
        logger.debug("perturbation_injected", kind=perturbation.kind.value, app=app_id)

    def apply_setup(self, mutations: Optional[List[Dict[str, Any]]]) -> None:
        """回合开始前的状态预置，例如预先创建一个联系人"""
        for mutation in mutations or []:
            runtime = self._app_runtime(mutation["app"])
            op = mutation.get("op", "set")
            if op == "append":
                runtime.state.setdefault(mutation["key"], []).append(mutation["value"])
            else:
                runtime.state[mutation["key"]] = mutation["value"]

    # ---- 检查器 ----

    def run_checker(self, task_id: str, expected: Optional[Dict[str, Any]] = None) -> CheckerResult:
        checker = self._checkers.get(task_id)
        if checker is None:
            return CheckerResult(CheckStatus.CHECK_ERROR, f"no checker registered for task {task_id}")
        state = self._runtime[checker.app_id].state
        return evaluate_checker(checker, state, self.foreground, expected or {})


def _stack_bounds(parent: Bounds, count: int, index: int) -> Bounds:
    """子节点在父节点内纵向均分"""
    if count <= 0:
        return parent
    height = max((parent.bottom - parent.top) // count, 1)
    top = parent.top + index * height
    bottom = parent.bottom if index == count - 1 else top + height
    return Bounds(parent.left, top, parent.right, max(bottom, top + 1))
