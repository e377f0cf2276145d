from typing import Any, Dict, Optional

import pytest
import structlog

from src.agent.embeddings import TokenHashEmbedding
from src.agent.intent import AppDictionary
from src.agent.matcher import SkillMatcher
from src.agent.orchestrator import ExecutionOutcome, Orchestrator
from src.agent.scripted_policy import ScriptedPolicy
from src.config import DEFAULT_KEYWORDS_PATH, DEFAULT_POLICY_PATH, DEFAULT_SCENARIO_DIR
from src.device.actions import Perturbation
from src.device.simulator import SimDevice
from src.skills.compiler import compile_trajectory
from src.skills.store import SkillStore
from src.skills.template import SkillTemplate

from tests.helpers import CANONICAL


@pytest.fixture(autouse=True)
def _reset_structlog():
    """configure_logging binds pytest's per-test captured stderr; restore defaults so later tests don't log to a closed stream"""
    yield
    structlog.reset_defaults()


@pytest.fixture
def device() -> SimDevice:
    return SimDevice.from_directory(DEFAULT_SCENARIO_DIR, rng_seed=0)


@pytest.fixture
def policy() -> ScriptedPolicy:
    return ScriptedPolicy.from_file(DEFAULT_POLICY_PATH)


@pytest.fixture
def store():
    with SkillStore(":memory:") as s:
        yield s


@pytest.fixture
def dictionary() -> AppDictionary:
    return AppDictionary.from_file(DEFAULT_KEYWORDS_PATH)


@pytest.fixture
def matcher(policy, dictionary, store) -> SkillMatcher:
    return SkillMatcher(TokenHashEmbedding(), dictionary, policy, store=store)


@pytest.fixture
def learn(device, policy):
    """在设备上跑一次第一层并编译，返回技能模板（设备随后被重置）"""

    def _learn(task_id: str, instruction: Optional[str] = None, expected: Optional[Dict[str, Any]] = None,
               perturbation: Optional[Perturbation] = None) -> SkillTemplate:
        canonical_instruction, canonical_expected = CANONICAL[task_id]
        device.reset()
        if perturbation is not None:
            device.inject(perturbation)
        trajectory, outcome = Orchestrator(device, policy).execute(
            instruction or canonical_instruction, task_id,
            expected if expected is not None else canonical_expected)
        assert outcome == ExecutionOutcome.SUCCESS
        template = compile_trajectory(policy, trajectory)
        device.reset()
        return template

    return _learn
