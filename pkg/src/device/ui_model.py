"""
UI状态模型
无障碍节点树、广度优先展平以及紧凑的状态描述符，各层共用
"""
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Tuple

from ..errors import DegenerateBoundsError

DIALOG_CLASS = "android.app.Dialog"
ROOT_CLASS = "android.widget.FrameLayout"

KEY_ELEMENT_LIMIT = 5
COUNT_BUCKET_WIDTH = 10


@dataclass(frozen=True)
class Bounds:
    """屏幕矩形（像素）"""
    left: int
    top: int
    right: int
    bottom: int

    def is_degenerate(self) -> bool:
        return self.right <= self.left or self.bottom <= self.top

    def to_list(self) -> List[int]:
        return [self.left, self.top, self.right, self.bottom]

    @classmethod
    def from_list(cls, values) -> "Bounds":
        left, top, right, bottom = (int(v) for v in values)
        return cls(left, top, right, bottom)


@dataclass
class UINode:
    """无障碍树中的一个节点"""
    class_name: str
    resource_id: Optional[str] = None
    text: Optional[str] = None
    content_desc: Optional[str] = None
    bounds: Bounds = field(default_factory=lambda: Bounds(0, 0, 1, 1))
    parent_class: Optional[str] = None
    sibling_index: int = 0
    children: List["UINode"] = field(default_factory=list)
    clickable: bool = False
    node_id: int = 0

    def is_dialog(self) -> bool:
        return self.class_name == DIALOG_CLASS


@dataclass
class UITree:
    """一次截取的界面"""
    root: UINode
    activity: str
    foreground_app: str


@dataclass
class UIStateDescriptor:
    """界面指纹：activity + 前5个关键resource_id + 节点数分桶"""
    activity: str
    key_element_ids: List[str] = field(default_factory=list)
    element_count_bucket: int = 0

    def __post_init__(self):
        seen = set()
        for rid in self.key_element_ids:
            if not rid:
                raise ValueError("key_element_ids 不能包含空字符串")
            if rid in seen:
                raise ValueError(f"key_element_ids 重复: {rid}")
            seen.add(rid)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "activity": self.activity,
            "key_element_ids": list(self.key_element_ids),
            "element_count_bucket": self.element_count_bucket,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "UIStateDescriptor":
        return cls(
            activity=data["activity"],
            key_element_ids=list(data.get("key_element_ids", [])),
            element_count_bucket=int(data.get("element_count_bucket", 0)),
        )


def iter_bfs(node: UINode) -> Iterator[UINode]:
    """从node开始的广度优先遍历"""
    queue = deque([node])
    while queue:
        current = queue.popleft()
        yield current
        queue.extend(current.children)


def flatten_tree(tree: UITree) -> List[UINode]:
    """广度优先展平，列表下标即策略使用的元素下标"""
    return list(iter_bfs(tree.root))


def annotate(root: UINode) -> UINode:
    """按结构回填 parent_class / sibling_index / node_id（node_id = BFS下标）"""
    root.parent_class = None
    root.sibling_index = 0
    for index, node in enumerate(iter_bfs(root)):
        node.node_id = index
        for position, child in enumerate(node.children):
            child.parent_class = node.class_name
            child.sibling_index = position
    return root


def node_center(node: UINode) -> Tuple[int, int]:
    """点击坐标：边界中点，向零截断"""
    b = node.bounds
    if b.is_degenerate():
        raise DegenerateBoundsError(f"节点 {node.resource_id or node.node_id} 的边界面积为零: {b.to_list()}")
    return int((b.left + b.right) / 2), int((b.top + b.bottom) / 2)


def make_descriptor(tree: UITree) -> UIStateDescriptor:
    nodes = flatten_tree(tree)
    key_ids: List[str] = []
    for node in nodes:
        rid = node.resource_id
        if rid and rid not in key_ids:
            key_ids.append(rid)
            if len(key_ids) == KEY_ELEMENT_LIMIT:
                break
    return UIStateDescriptor(
        activity=tree.activity,
        key_element_ids=key_ids,
        element_count_bucket=len(nodes) // COUNT_BUCKET_WIDTH,
    )


def dialog_nodes(tree: UITree) -> List[UINode]:
    return [n for n in flatten_tree(tree) if n.is_dialog()]


def resource_ids(tree: UITree) -> List[str]:
    return [n.resource_id for n in flatten_tree(tree) if n.resource_id]


# ---- 序列化（模拟器、引擎与轨迹日志之间的传输格式） ----

def node_to_dict(node: UINode) -> Dict[str, Any]:
    return {
        "resource_id": node.resource_id,
        "text": node.text,
        "content_desc": node.content_desc,
        "class_name": node.class_name,
        "bounds": node.bounds.to_list(),
        "parent_class": node.parent_class,
        "sibling_index": node.sibling_index,
        "clickable": node.clickable,
        "node_id": node.node_id,
        "children": [node_to_dict(c) for c in node.children],
    }


def node_from_dict(data: Dict[str, Any]) -> UINode:
    return UINode(
        class_name=data.get("class_name") or "android.view.View",
        resource_id=data.get("resource_id"),
        text=data.get("text"),
        content_desc=data.get("content_desc"),
        bounds=Bounds.from_list(data.get("bounds", [0, 0, 1, 1])),
        clickable=bool(data.get("clickable", False)),
        children=[node_from_dict(c) for c in data.get("children", [])],
    )


def tree_to_dict(tree: UITree) -> Dict[str, Any]:
    return {
        "activity": tree.activity,
        "foreground_app": tree.foreground_app,
        "root": node_to_dict(tree.root),
    }


def tree_from_dict(data: Dict[str, Any]) -> UITree:
    """解析树；结构字段（父类、兄弟序号、node_id）总是按结构重新推导"""
    root = annotate(node_from_dict(data["root"]))
    return UITree(root=root, activity=data.get("activity", ""),
                  foreground_app=data.get("foreground_app", ""))
