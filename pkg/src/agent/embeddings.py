"""
句向量接口
内置一个确定性的词哈希基线实现，真实的句向量模型实现同一接口即可替换
"""
import hashlib
import re
from typing import List

import numpy as np

from ..skills.template import PLACEHOLDER_RE

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def strip_placeholders(pattern: str) -> str:
    """去掉意图模式中的 {slot} 占位符"""
    return " ".join(PLACEHOLDER_RE.sub(" ", pattern).split())


def tokenize(text: str) -> List[str]:
    return _TOKEN_RE.findall(text.lower())


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    norm = float(np.linalg.norm(a) * np.linalg.norm(b))
    if norm == 0.0:
        return 0.0
    return float(np.dot(a, b) / norm)


class EmbeddingProvider:
    """embed 必须确定且返回单位向量"""
    provider_id = "abstract"
    dimension = 0

    def embed(self, text: str) -> np.ndarray:
        raise NotImplementedError


class TokenHashEmbedding(EmbeddingProvider):
    """词集合哈希到定长向量后做L2归一化"""
    provider_id = "token-hash-v1"

    def __init__(self, dimension: int = 64):
        if dimension <= 0:
            raise ValueError("向量维度必须为正")
        self.dimension = dimension

    def bucket(self, token: str) -> int:
        digest = hashlib.md5(token.encode("utf-8")).hexdigest()
        return int(digest, 16) % self.dimension

    def embed(self, text: str) -> np.ndarray:
        tokens = set(tokenize(text)) or {"<empty>"}
        vector = np.zeros(self.dimension, dtype=np.float64)
        for token in tokens:
            vector[self.bucket(token)] = 1.0
        return vector / np.linalg.norm(vector)
