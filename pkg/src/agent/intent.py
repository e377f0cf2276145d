"""
意图分析：判断一条指令要操作哪个应用
三遍扫描：显式上下文（"in Chrome"）→ 域名后缀 → 关键词（最长者优先）
"""
import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

_DOMAIN_RE = re.compile(r"\b[a-z0-9][a-z0-9-]*(?:\.[a-z0-9-]+)*\.(?:com|org|net|io|edu|gov|dev|app|co)\b",
                        re.IGNORECASE)
_CONTEXT_PREFIX = r"\b(?:in|using|via|with|on)\s+(?:the\s+)?"


class IntentMethod(Enum):
    EXPLICIT_CONTEXT = "EXPLICIT_CONTEXT"
    DOMAIN_SUFFIX = "DOMAIN_SUFFIX"
    KEYWORD = "KEYWORD"
    NONE = "NONE"


@dataclass(frozen=True)
class IntentResolution:
    target_app: Optional[str]
    method: IntentMethod

    def __post_init__(self):
        if self.method == IntentMethod.NONE and self.target_app is not None:
            raise ValueError("NONE 解析结果不能带目标应用")

    def to_dict(self) -> Dict[str, Optional[str]]:
        return {"target_app": self.target_app, "method": self.method.value}


@dataclass
class AppDictionary:
    """应用名与关键词词典；browser 指定域名指令路由到的浏览器"""
    browser: Optional[str] = None
    apps: Dict[str, str] = field(default_factory=dict)
    keywords: Dict[str, str] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: Dict) -> "AppDictionary":
        return cls(
            browser=data.get("browser"),
            apps={k.lower(): v for k, v in data.get("apps", {}).items()},
            keywords={k.lower(): v for k, v in data.get("keywords", {}).items()},
        )

    @classmethod
    def from_file(cls, path: str) -> "AppDictionary":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def _longest(instruction: str, names: Dict[str, str], prefix: str = r"\b") -> Optional[Tuple[str, str]]:
    hits: List[Tuple[str, str]] = []
    for name, app in names.items():
        if re.search(prefix + re.escape(name) + r"\b", instruction, re.IGNORECASE):
            hits.append((name, app))
    if not hits:
        return None
    return min(hits, key=lambda hit: (-len(hit[0]), hit[0]))


def resolve_intent(instruction: str, dictionary: AppDictionary) -> IntentResolution:
    hit = _longest(instruction, dictionary.apps, prefix=_CONTEXT_PREFIX)
    if hit is not None:
        return IntentResolution(hit[1], IntentMethod.EXPLICIT_CONTEXT)

    if dictionary.browser and _DOMAIN_RE.search(instruction):
        return IntentResolution(dictionary.browser, IntentMethod.DOMAIN_SUFFIX)

    # 关键词表和应用名一起参与，"phone number" 比 "phone" 长所以优先
    hit = _longest(instruction, {**dictionary.apps, **dictionary.keywords})
    if hit is not None:
        return IntentResolution(hit[1], IntentMethod.KEYWORD)
    return IntentResolution(None, IntentMethod.NONE)
