"""
技能匹配
三级级联：正则匹配（零调用）→ 句向量相似度 + 一次策略确认 → 应用过滤
"""
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import PolicyParseError
from ..log import get_logger
from ..skills.template import PLACEHOLDER_RE, SkillTemplate
from .embeddings import EmbeddingProvider, cosine, strip_placeholders
from .intent import AppDictionary, IntentResolution, resolve_intent
from .policy import Policy, PolicyRequest, PolicyRole

logger = get_logger(__name__)

TAU_SEM = 0.40
MAX_CONFIRMATIONS = 3


class MatchKind(Enum):
    FULL = "FULL"
    PARTIAL = "PARTIAL"
    NO_MATCH = "NO_MATCH"


class MatchStrategy(Enum):
    REGEX = "REGEX"
    EMBEDDING = "EMBEDDING"
    NONE = "NONE"


@dataclass
class MatchResult:
    kind: MatchKind
    skill_id: Optional[str] = None
    bindings: Dict[str, str] = field(default_factory=dict)
    strategy: MatchStrategy = MatchStrategy.NONE
    similarity: Optional[float] = None
    intent: Optional[IntentResolution] = None
    confirmations: int = 0  # 本次匹配发起的确认调用次数

    def to_dict(self) -> Dict:
        return {
            "kind": self.kind.value,
            "skill_id": self.skill_id,
            "bindings": dict(sorted(self.bindings.items())),
            "strategy": self.strategy.value,
            "similarity": round(self.similarity, 6) if self.similarity is not None else None,
            "intent": self.intent.to_dict() if self.intent else None,
            "confirmations": self.confirmations,
        }


def pattern_to_regex(intent_pattern: str) -> "re.Pattern[str]":
    """字面部分转义，占位符变为命名捕获组，整串锚定且忽略大小写"""
    parts: List[str] = []
    seen = set()
    last = 0
    for m in PLACEHOLDER_RE.finditer(intent_pattern):
        parts.append(re.escape(intent_pattern[last:m.start()]))
        name = m.group(1)
        # 同名占位符重复出现时必须取同一个值
        parts.append(f"(?P={name})" if name in seen else f"(?P<{name}>.+)")
        seen.add(name)
        last = m.end()
    parts.append(re.escape(intent_pattern[last:]))
    return re.compile("^" + "".join(parts) + "$", re.IGNORECASE)


def order_skills(skills: Sequence[SkillTemplate]) -> List[SkillTemplate]:
    """最近成功的技能优先，其余按 skill_id 排序"""
    return sorted(skills, key=lambda s: (-s.last_success, s.skill_id))


def semantic_candidates(instruction: str, skills: Sequence[SkillTemplate], provider: EmbeddingProvider,
                        threshold: float = TAU_SEM,
                        vectors: Optional[Dict[str, np.ndarray]] = None) -> List[Tuple[str, float]]:
    query = provider.embed(instruction)
    ranked: List[Tuple[str, float]] = []
    for skill in skills:
        vector = vectors.get(skill.skill_id) if vectors else None
        if vector is None:
            vector = provider.embed(strip_placeholders(skill.intent_pattern))
        similarity = min(1.0, max(0.0, cosine(query, vector)))
        if similarity >= threshold:
            ranked.append((skill.skill_id, similarity))
    ranked.sort(key=lambda item: (-item[1], item[0]))
    return ranked


class SkillMatcher:
    """把指令路由到已存储的技能"""

    def __init__(self, provider: EmbeddingProvider, dictionary: AppDictionary, policy: Policy,
                 store=None, threshold: float = TAU_SEM, max_confirmations: int = MAX_CONFIRMATIONS):
        self.provider = provider
        self.dictionary = dictionary
        self.policy = policy
        self.store = store
        self.threshold = threshold
        self.max_confirmations = max_confirmations
        self._vectors: Dict[Tuple[str, int, str, int], np.ndarray] = {}

    def skill_vector(self, skill: SkillTemplate) -> np.ndarray:
        """预计算的技能向量，按 (skill_id, 版本, provider_id, 维度) 缓存"""
        key = (skill.skill_id, skill.version, self.provider.provider_id, self.provider.dimension)
        if key in self._vectors:
            return self._vectors[key]
        vector = None
        if self.store is not None:
            vector = self.store.get_embedding(skill.skill_id, self.provider.provider_id, self.provider.dimension)
        if vector is None:
            vector = self.provider.embed(strip_placeholders(skill.intent_pattern))
            if self.store is not None:
                self.store.put_embedding(skill.skill_id, self.provider.provider_id, vector)
        self._vectors[key] = vector
        return vector

    def match(self, instruction: str, skills: Sequence[SkillTemplate]) -> MatchResult:
        intent = resolve_intent(instruction, self.dictionary)
        pool = order_skills(skills)
        # 应用过滤先于正则：识别出目标应用时，其他应用的技能不参与任何一轮匹配
        if intent.target_app is not None:
            pool = [s for s in pool if s.target_app == intent.target_app]

        for skill in pool:
            m = pattern_to_regex(skill.intent_pattern).match(instruction)
            if m is not None:
                bindings = {name: value for name, value in m.groupdict().items() if value is not None}
                logger.info("match_regex", skill=skill.skill_id, bindings=bindings)
                return MatchResult(MatchKind.FULL, skill.skill_id, bindings, MatchStrategy.REGEX, intent=intent)

        by_id = {s.skill_id: s for s in pool}
        vectors = {s.skill_id: self.skill_vector(s) for s in pool}
        candidates = semantic_candidates(instruction, pool, self.provider, self.threshold, vectors)
        confirmations = 0
        for skill_id, similarity in candidates[:self.max_confirmations]:
            skill = by_id[skill_id]
            confirmations += 1
            bindings = self._confirm(instruction, skill, similarity)
            if bindings is not None:
                logger.info("match_semantic", skill=skill_id, similarity=round(similarity, 4),
                            confirmations=confirmations)
                return MatchResult(MatchKind.FULL, skill_id, bindings, MatchStrategy.EMBEDDING,
                                   similarity=similarity, intent=intent, confirmations=confirmations)

        if intent.target_app is not None and pool:
            return MatchResult(MatchKind.PARTIAL, intent=intent, confirmations=confirmations)
        return MatchResult(MatchKind.NO_MATCH, intent=intent, confirmations=confirmations)

    def _confirm(self, instruction: str, skill: SkillTemplate, similarity: float) -> Optional[Dict[str, str]]:
        """一次 MATCH_CONFIRM 调用；确认且槽位齐全时返回绑定"""
        request = PolicyRequest(
            role=PolicyRole.MATCH_CONFIRM,
            instruction=instruction,
            context={
                "skill_id": skill.skill_id,
                "intent_pattern": skill.intent_pattern,
                "target_app": skill.target_app,
                "slots": [slot.to_dict() for slot in skill.slots],
                "similarity": round(similarity, 4),
            },
        )
        try:
            response = self.policy.decide(request)
        except PolicyParseError as e:
            logger.warning("match_confirm_parse_failure", skill=skill.skill_id, error=str(e))
            return None
        if not response.confirm:
            return None
        bindings = {name: value for name, (value, _) in (response.slot_bindings or {}).items()}
        missing = [name for name in skill.slot_names if name not in bindings]
        if missing:
            logger.warning("match_confirm_missing_slots", skill=skill.skill_id, missing=missing)
            return None
        return {name: bindings[name] for name in skill.slot_names}
