"""
元素查找
加权特征匹配打分，并在展平的界面树中选出最佳元素
"""
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

from ..device.ui_model import UINode, UITree, flatten_tree
from ..skills.template import LOCATOR_WEIGHTS, ElementLocator

TAU_STRICT = 0.5
TAU_RELAXED = 0.3


def _present(value) -> bool:
    return value is not None and value != ""


def feature_matches(feature: str, element: UINode, locator: ElementLocator) -> bool:
    expected = getattr(locator, feature)
    actual = getattr(element, feature)
    if feature == "sibling_index":
        return actual is not None and int(actual) == int(expected)
    if not _present(actual):
        return False
    if feature in ("text", "content_desc"):
        # 文本类特征按子串包含匹配
        return str(expected) in str(actual)
    return actual == expected


def score_fraction(element: UINode, locator: ElementLocator,
                   bindings: Optional[Dict[str, str]] = None) -> Fraction:
    resolved = locator.substituted(bindings)
    matched = 0
    active = 0
    for feature in resolved.active_features():
        weight = LOCATOR_WEIGHTS[feature]
        active += weight
        if feature_matches(feature, element, resolved):
            matched += weight
    return Fraction(matched, active)


def score_element(element: UINode, locator: ElementLocator,
                  bindings: Optional[Dict[str, str]] = None) -> float:
    """命中特征权重之和 / 激活特征权重之和"""
    return float(score_fraction(element, locator, bindings))


def find_element(tree: UITree, locator: ElementLocator, threshold: float,
                 bindings: Optional[Dict[str, str]] = None,
                 nodes: Optional[List[UINode]] = None) -> Optional[Tuple[int, float]]:
    """返回 (展平下标, 分数)；同分取BFS下标最小者，低于阈值返回None"""
    if nodes is None:
        nodes = flatten_tree(tree)
    best_index = -1
    best_score = Fraction(-1)
    for index, node in enumerate(nodes):
        score = score_fraction(node, locator, bindings)
        if score > best_score:
            best_index, best_score = index, score
    if best_index < 0 or float(best_score) < threshold:
        return None
    return best_index, float(best_score)
