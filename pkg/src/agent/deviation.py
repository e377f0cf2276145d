"""
偏差检测与自动关闭弹窗
"""
import re
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional

from ..device.actions import Action, ActionKind
from ..device.ui_model import UIStateDescriptor, UITree, flatten_tree, iter_bfs, resource_ids


class Severity(Enum):
    """偏差等级"""
    NONE = "NONE"
    MINOR = "MINOR"  # 部分元素移位
    MODERATE = "MODERATE"  # 意外弹窗
    MAJOR = "MAJOR"  # 完全不同的应用


@dataclass(frozen=True)
class DeviationReport:
    severity: Severity
    detail: str = ""


def verify_state(tree: UITree, expected: UIStateDescriptor, target_app: str) -> DeviationReport:
    if tree.foreground_app != target_app:
        return DeviationReport(Severity.MAJOR, f"foreground is {tree.foreground_app}, expected {target_app}")

    nodes = flatten_tree(tree)
    for node in nodes:
        if node.is_dialog() and node.resource_id not in expected.key_element_ids:
            return DeviationReport(Severity.MODERATE, f"unexpected dialog {node.resource_id}")

    if tree.activity == expected.activity and expected.key_element_ids:
        present_ids = set(resource_ids(tree))
        present = sum(1 for rid in expected.key_element_ids if rid in present_ids)
        if present * 2 < len(expected.key_element_ids):
            return DeviationReport(
                Severity.MINOR, f"{present}/{len(expected.key_element_ids)} key elements present")
    return DeviationReport(Severity.NONE)


def keyword_patterns(keywords: Iterable[str]):
    return [re.compile(r"\b" + re.escape(k) + r"\b", re.IGNORECASE) for k in keywords]


def find_dismiss_target(tree: UITree, keywords: Iterable[str]) -> Optional[int]:
    """在弹窗子树中按BFS顺序找第一个文本命中关键词的可点击节点"""
    patterns = keyword_patterns(keywords)
    nodes = flatten_tree(tree)
    position = {id(n): i for i, n in enumerate(nodes)}
    for dialog in (n for n in nodes if n.is_dialog()):
        for node in iter_bfs(dialog):
            if not node.clickable:
                continue
            label = node.text or node.content_desc or ""
            if any(p.search(label) for p in patterns):
                return position[id(node)]
    return None


def try_dismiss(device, tree: UITree, keywords: Iterable[str]) -> bool:
    """点击弹窗中的关闭类按钮，不调用策略"""
    index = find_dismiss_target(tree, keywords)
    if index is None:
        return False
    device.apply(Action(ActionKind.TAP, element_index=index))
    return True
