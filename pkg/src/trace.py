"""
轨迹日志
以换行分隔的JSON（NDJSON）记录每一步，键排序、不含时间戳，
同一种子的两次运行产生逐字节相同的输出
"""
import json
import os
from typing import Any, Dict, List


def dumps(record: Any) -> str:
    """确定性的JSON序列化"""
    return json.dumps(record, sort_keys=True, ensure_ascii=False, separators=(",", ": "))


class TraceLog:
    """内存中的NDJSON记录器"""

    def __init__(self, channel: str = "trace"):
        self.channel = channel
        self.records: List[Dict[str, Any]] = []

    def emit(self, **record: Any) -> None:
        self.records.append(record)

    def extend(self, records: List[Dict[str, Any]]) -> None:
        self.records.extend(records)

    def clear(self) -> None:
        self.records = []

    def __len__(self) -> int:
        return len(self.records)

    def to_ndjson(self) -> str:
        if not self.records:
            return ""
        return "\n".join(dumps(r) for r in self.records) + "\n"

    def write(self, path: str) -> None:
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_ndjson())
