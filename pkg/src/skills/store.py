"""
技能库持久化（SQLite 单文件）
表：skills / stats / failures / guards / embeddings / meta，所有写操作都在事务内完成
"""
import json
import os
import sqlite3
from typing import Any, Dict, List, Optional

import numpy as np

from ..errors import NoSuchSkillError, SkillAgentError, StoreCorruptError, VersionConflictError
from ..log import get_logger
from .records import FailureRecord, GuardCondition, SkillStats
from .template import V_MAX, SkillTemplate

logger = get_logger(__name__)

SCHEMA = """
CREATE TABLE IF NOT EXISTS skills (
    skill_id TEXT NOT NULL,
    version INTEGER NOT NULL,
    target_app TEXT NOT NULL,
    json TEXT NOT NULL,
    PRIMARY KEY (skill_id, version)
);
CREATE TABLE IF NOT EXISTS stats (
    skill_id TEXT NOT NULL,
    version INTEGER NOT NULL,
    n_succ INTEGER NOT NULL DEFAULT 0,
    n_fail INTEGER NOT NULL DEFAULT 0,
    needs_recompile INTEGER NOT NULL DEFAULT 0,
    last_success INTEGER NOT NULL DEFAULT 0,
    PRIMARY KEY (skill_id, version)
);
CREATE TABLE IF NOT EXISTS failures (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    skill_id TEXT NOT NULL,
    version INTEGER NOT NULL,
    json TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS guards (
    skill_id TEXT NOT NULL,
    position INTEGER NOT NULL,
    json TEXT NOT NULL,
    PRIMARY KEY (skill_id, position)
);
CREATE TABLE IF NOT EXISTS embeddings (
    skill_id TEXT NOT NULL,
    provider_id TEXT NOT NULL,
    dimension INTEGER NOT NULL,
    vector TEXT NOT NULL,
    PRIMARY KEY (skill_id, provider_id, dimension)
);
CREATE TABLE IF NOT EXISTS meta (
    key TEXT PRIMARY KEY,
    value TEXT NOT NULL
);
"""


def _dumps(data: Any) -> str:
    return json.dumps(data, sort_keys=True, ensure_ascii=False)


class SkillStore:
    """一个写者、多个读者；path 为 ":memory:" 时只在内存中"""

    def __init__(self, path: str = ":memory:"):
        self.path = path
        if path != ":memory:":
            directory = os.path.dirname(os.path.abspath(path))
            os.makedirs(directory, exist_ok=True)
        self.conn = sqlite3.connect(path)
        self.conn.row_factory = sqlite3.Row
        with self.conn:
            self.conn.executescript(SCHEMA)

    def close(self) -> None:
        self.conn.close()

    def __enter__(self) -> "SkillStore":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # ---- 技能 ----

    def versions(self, skill_id: str) -> List[int]:
        rows = self.conn.execute(
            "SELECT version FROM skills WHERE skill_id = ? ORDER BY version", (skill_id,)).fetchall()
        return [row["version"] for row in rows]

    def has_skill(self, skill_id: str) -> bool:
        return bool(self.versions(skill_id))

    def allocate_skill_id(self, base: str) -> str:
        """base 已被占用时依次尝试 base-r2、base-r3……"""
        candidate = base
        suffix = 2
        while self.has_skill(candidate):
            candidate = f"{base}-r{suffix}"
            suffix += 1
        return candidate

    def save_skill(self, template: SkillTemplate) -> None:
        existing = self.versions(template.skill_id)
        if not existing:
            allowed = {1}
        else:
            latest = existing[-1]
            allowed = {latest, latest + 1}
        if template.version not in allowed or template.version > V_MAX:
            raise VersionConflictError(
                f"{template.skill_id}@v{template.version} 不满足版本单调（已有 {existing}）")
        with self.conn:
            self.conn.execute(
                "INSERT OR REPLACE INTO skills (skill_id, version, target_app, json) VALUES (?, ?, ?, ?)",
                (template.skill_id, template.version, template.target_app, template.to_json()))
            self.conn.execute(
                "INSERT OR REPLACE INTO stats (skill_id, version, n_succ, n_fail, needs_recompile, last_success)"
                " VALUES (?, ?, ?, ?, ?, ?)",
                (template.skill_id, template.version, template.n_succ, template.n_fail,
                 int(template.needs_recompile), template.last_success))
            # 模式可能变化，预计算的向量作废
            self.conn.execute("DELETE FROM embeddings WHERE skill_id = ?", (template.skill_id,))
        logger.info("skill_saved", skill=template.skill_id, version=template.version)

    def load_skill(self, skill_id: str, version: Optional[int] = None) -> SkillTemplate:
        if version is None:
            row = self.conn.execute(
                "SELECT version, json FROM skills WHERE skill_id = ? ORDER BY version DESC LIMIT 1",
                (skill_id,)).fetchone()
        else:
            row = self.conn.execute(
                "SELECT version, json FROM skills WHERE skill_id = ? AND version = ?",
                (skill_id, version)).fetchone()
        if row is None:
            label = skill_id if version is None else f"{skill_id}@v{version}"
            raise NoSuchSkillError(f"技能 {label} 不存在")
        key = f"{skill_id}@v{row['version']}"
        try:
            template = SkillTemplate.from_json(row["json"])
        except (ValueError, KeyError, TypeError, SkillAgentError) as e:
            raise StoreCorruptError(f"记录 {key} 无法解析: {e}") from e
        if template.skill_id != skill_id or template.version != row["version"]:
            raise StoreCorruptError(f"记录 {key} 的内容与主键不一致")
        stats = self.get_stats(skill_id, row["version"])
        template.n_succ = stats.n_succ
        template.n_fail = stats.n_fail
        template.needs_recompile = stats.needs_recompile
        template.last_success = stats.last_success
        return template

    def list_skills(self, target_app: Optional[str] = None) -> List[SkillTemplate]:
        """每个技能的最新版本，包括已标记需要重编译的"""
        if target_app is None:
            rows = self.conn.execute("SELECT DISTINCT skill_id FROM skills ORDER BY skill_id").fetchall()
        else:
            rows = self.conn.execute(
                "SELECT DISTINCT skill_id FROM skills WHERE target_app = ? ORDER BY skill_id",
                (target_app,)).fetchall()
        return [self.load_skill(row["skill_id"]) for row in rows]

    # ---- 统计 ----

    def get_stats(self, skill_id: str, version: Optional[int] = None) -> SkillStats:
        if version is None:
            existing = self.versions(skill_id)
            if not existing:
                raise NoSuchSkillError(f"技能 {skill_id} 不存在")
            version = existing[-1]
        row = self.conn.execute(
            "SELECT * FROM stats WHERE skill_id = ? AND version = ?", (skill_id, version)).fetchone()
        if row is None:
            raise NoSuchSkillError(f"技能 {skill_id}@v{version} 不存在")
        return SkillStats(skill_id=skill_id, version=version, n_succ=row["n_succ"], n_fail=row["n_fail"],
                          needs_recompile=bool(row["needs_recompile"]), last_success=row["last_success"])

    def update_stats(self, stats: SkillStats) -> None:
        with self.conn:
            cursor = self.conn.execute(
                "UPDATE stats SET n_succ = ?, n_fail = ?, needs_recompile = ?, last_success = ?"
                " WHERE skill_id = ? AND version = ?",
                (stats.n_succ, stats.n_fail, int(stats.needs_recompile), stats.last_success,
                 stats.skill_id, stats.version))
        if cursor.rowcount == 0:
            raise NoSuchSkillError(f"技能 {stats.skill_id}@v{stats.version} 不存在")

    def next_sequence(self) -> int:
        """全局递增序号，用来记录“最近一次成功”的先后"""
        with self.conn:
            row = self.conn.execute("SELECT value FROM meta WHERE key = 'sequence'").fetchone()
            value = int(row["value"]) + 1 if row else 1
            self.conn.execute("INSERT OR REPLACE INTO meta (key, value) VALUES ('sequence', ?)", (str(value),))
        return value

    # ---- 失败记录与守卫 ----

    def add_failure(self, record: FailureRecord) -> None:
        with self.conn:
            self.conn.execute("INSERT INTO failures (skill_id, version, json) VALUES (?, ?, ?)",
                              (record.skill_id, record.version, _dumps(record.to_dict())))

    def failures(self, skill_id: str, version: Optional[int] = None) -> List[FailureRecord]:
        if version is None:
            rows = self.conn.execute(
                "SELECT id, json FROM failures WHERE skill_id = ? ORDER BY id", (skill_id,)).fetchall()
        else:
            rows = self.conn.execute(
                "SELECT id, json FROM failures WHERE skill_id = ? AND version = ? ORDER BY id",
                (skill_id, version)).fetchall()
        records = []
        for row in rows:
            try:
                records.append(FailureRecord.from_dict(json.loads(row["json"])))
            except (ValueError, KeyError, TypeError) as e:
                raise StoreCorruptError(f"失败记录 {skill_id}#{row['id']} 无法解析: {e}") from e
        return records

    def replace_guards(self, skill_id: str, guards: List[GuardCondition]) -> None:
        with self.conn:
            self.conn.execute("DELETE FROM guards WHERE skill_id = ?", (skill_id,))
            self.conn.executemany(
                "INSERT INTO guards (skill_id, position, json) VALUES (?, ?, ?)",
                [(skill_id, i, _dumps(g.to_dict())) for i, g in enumerate(guards)])

    def guards(self, skill_id: str) -> List[GuardCondition]:
        rows = self.conn.execute(
            "SELECT position, json FROM guards WHERE skill_id = ? ORDER BY position", (skill_id,)).fetchall()
        result = []
        for row in rows:
            try:
                result.append(GuardCondition.from_dict(json.loads(row["json"])))
            except (ValueError, KeyError, TypeError) as e:
                raise StoreCorruptError(f"守卫 {skill_id}#{row['position']} 无法解析: {e}") from e
        return result

    # ---- 向量缓存 ----

    def get_embedding(self, skill_id: str, provider_id: str, dimension: int) -> Optional[np.ndarray]:
        row = self.conn.execute(
            "SELECT vector FROM embeddings WHERE skill_id = ? AND provider_id = ? AND dimension = ?",
            (skill_id, provider_id, dimension)).fetchone()
        if row is None:
            return None
        try:
            vector = np.asarray(json.loads(row["vector"]), dtype=np.float64)
        except (ValueError, TypeError) as e:
            raise StoreCorruptError(f"向量 {skill_id}/{provider_id} 无法解析: {e}") from e
        if vector.shape != (dimension,):
            raise StoreCorruptError(f"向量 {skill_id}/{provider_id} 维度错误")
        return vector

    def put_embedding(self, skill_id: str, provider_id: str, vector: np.ndarray) -> None:
        with self.conn:
            self.conn.execute(
                "INSERT OR REPLACE INTO embeddings (skill_id, provider_id, dimension, vector) VALUES (?, ?, ?, ?)",
                (skill_id, provider_id, int(vector.shape[0]), json.dumps([float(x) for x in vector])))

    # ---- 导出 ----

    def export(self) -> Dict[str, Any]:
        """整个库导出为一个JSON文档（向量只列出键）"""
        skills = [json.loads(row["json"]) for row in
                  self.conn.execute("SELECT json FROM skills ORDER BY skill_id, version")]
        stats = [
            {"skill_id": r["skill_id"], "version": r["version"], "n_succ": r["n_succ"], "n_fail": r["n_fail"],
             "needs_recompile": bool(r["needs_recompile"]), "last_success": r["last_success"]}
            for r in self.conn.execute("SELECT * FROM stats ORDER BY skill_id, version")
        ]
        failures = [json.loads(r["json"]) for r in self.conn.execute("SELECT json FROM failures ORDER BY id")]
        guards = [json.loads(r["json"]) for r in
                  self.conn.execute("SELECT json FROM guards ORDER BY skill_id, position")]
        embeddings = [
            {"skill_id": r["skill_id"], "provider_id": r["provider_id"], "dimension": r["dimension"]}
            for r in self.conn.execute(
                "SELECT skill_id, provider_id, dimension FROM embeddings ORDER BY skill_id, provider_id, dimension")
        ]
        meta = {r["key"]: r["value"] for r in self.conn.execute("SELECT key, value FROM meta ORDER BY key")}
        return {"skills": skills, "stats": stats, "failures": failures, "guards": guards,
                "embeddings": embeddings, "meta": meta}

    def export_json(self) -> str:
        return json.dumps(self.export(), sort_keys=True, ensure_ascii=False, indent=2)
