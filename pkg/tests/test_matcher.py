import numpy as np
import pytest

from src.agent.embeddings import EmbeddingProvider, TokenHashEmbedding
from src.agent.matcher import (MatchKind, MatchStrategy, SkillMatcher, order_skills, pattern_to_regex,
                               semantic_candidates)
from src.agent.scripted_policy import ScriptedPolicy
from src.device.actions import ActionKind
from src.device.ui_model import UIStateDescriptor
from src.skills.template import SkillStep, SkillTemplate, Slot, SlotType


class KeywordEmbedding(EmbeddingProvider):
    """按是否含有时钟类词语映射到两个正交单位向量"""
    provider_id = "keyword-stub"
    dimension = 2

    def embed(self, text):
        lowered = text.lower()
        if "alarm" in lowered or "wake" in lowered:
            return np.array([1.0, 0.0])
        return np.array([0.0, 1.0])


def _bare_skill(skill_id, pattern, app="clock", last_success=0):
    steps = [SkillStep(ActionKind.LAUNCH, UIStateDescriptor("home", []), params=app)]
    return SkillTemplate(skill_id=skill_id, intent_pattern=pattern, target_app=app, steps=steps,
                         last_success=last_success)


def test_pattern_to_regex_binds_slots():
    m = pattern_to_regex("Set an alarm for {time}").match("set an ALARM for 9:15 PM")
    assert m.groupdict() == {"time": "9:15 PM"}


def test_pattern_to_regex_escapes_literals():
    regex = pattern_to_regex("Call (555) {number}?")
    assert regex.match("Call (555) 1234?").group("number") == "1234"
    assert regex.match("Call 555 1234?") is None


def test_pattern_to_regex_is_anchored():
    assert pattern_to_regex("Turn on WiFi").match("Please turn on WiFi") is None
    assert pattern_to_regex("Turn on WiFi").match("Turn on WiFi now") is None


def test_repeated_placeholder_must_agree():
    regex = pattern_to_regex("{a} and {a}")
    assert regex.match("x and x")
    assert regex.match("x and y") is None


def test_order_skills_prefers_recent_success():
    skills = [_bare_skill("b", "B"), _bare_skill("a", "A"), _bare_skill("c", "C", last_success=7)]
    assert [s.skill_id for s in order_skills(skills)] == ["c", "a", "b"]


def test_regex_match_needs_no_calls(matcher, policy, learn):
    skill = learn("set_alarm")

    result = matcher.match("Set an alarm for 9:00 AM", [skill])

    assert result.kind == MatchKind.FULL
    assert result.strategy == MatchStrategy.REGEX
    assert result.bindings == {"time": "9:00 AM"}
    assert result.confirmations == 0
    assert policy.counter.by_role.get("MATCH_CONFIRM", 0) == 0


def test_semantic_match_uses_one_confirmation(matcher, policy, learn):
    skills = [learn("wifi_on"), learn("set_alarm")]

    result = matcher.match("Please turn on WiFi", skills)

    assert result.kind == MatchKind.FULL
    assert result.strategy == MatchStrategy.EMBEDDING
    assert result.skill_id == skills[0].skill_id
    assert result.confirmations == 1
    assert policy.counter.by_role["MATCH_CONFIRM"] == 1
    assert 0.4 <= result.similarity <= 1.0


def test_semantic_match_binds_slots(matcher, learn):
    skill = learn("chrome_search")

    result = matcher.match("Could you search for cats in Chrome", [skill])

    assert result.kind == MatchKind.FULL
    assert result.bindings == {"search_query": "cats"}


def test_paraphrase_with_semantic_provider(policy, dictionary, learn):
    skill = learn("set_alarm")
    matcher = SkillMatcher(KeywordEmbedding(), dictionary, policy)

    result = matcher.match("Wake me up at 6 tomorrow", [skill])

    assert result.kind == MatchKind.FULL
    assert result.strategy == MatchStrategy.EMBEDDING
    assert result.bindings == {"time": "6:00 AM"}
    assert result.similarity == 1.0
    assert result.confirmations == 1


def test_other_task_in_same_app_is_partial(matcher, learn):
    skill = learn("set_alarm")
    assert matcher.match("Set a timer for 5 minutes", [skill]).kind == MatchKind.PARTIAL


def test_app_without_skills_is_no_match(matcher, policy, learn):
    skills = [learn("set_alarm"), learn("wifi_on")]
    calls = policy.counter.total

    result = matcher.match("Call mom", skills)

    assert result.kind == MatchKind.NO_MATCH
    assert result.intent.target_app == "dialer"
    assert policy.counter.total == calls


def test_app_filter_hides_other_apps(matcher, learn):
    skill = learn("wifi_on")
    # 指令指向时钟，WiFi 技能即使正则能匹配也不会被选中
    result = matcher.match("Turn on WiFi in Clock", [skill])
    assert result.kind == MatchKind.NO_MATCH


def test_keyword_intent_filters_before_regex(dictionary):
    search = SkillTemplate(skill_id="chrome-search", intent_pattern="Search for {query}", target_app="chrome",
                           slots=[Slot("query", SlotType.TEXT)],
                           steps=[SkillStep(ActionKind.LAUNCH, UIStateDescriptor("home", []), params="chrome")])
    policy = ScriptedPolicy([])
    matcher = SkillMatcher(KeywordEmbedding(), dictionary, policy)
    assert pattern_to_regex(search.intent_pattern).match("Search for airplane tickets")

    result = matcher.match("Search for airplane tickets", [search])

    assert result.intent.target_app == "settings"
    assert (result.kind, result.strategy) == (MatchKind.NO_MATCH, MatchStrategy.NONE)
    assert policy.counter.total == 0


def test_confirmations_are_capped(dictionary):
    skills = [_bare_skill(f"clock-{i}", f"Alarm chore {i}") for i in range(5)]
    policy = ScriptedPolicy([])
    matcher = SkillMatcher(KeywordEmbedding(), dictionary, policy)

    result = matcher.match("alarm please", skills)

    assert result.kind == MatchKind.PARTIAL
    assert result.confirmations == 3
    assert policy.counter.total == 3


def test_semantic_candidates_threshold_and_order():
    skills = [_bare_skill("b", "Alarm b"), _bare_skill("a", "Alarm a"), _bare_skill("z", "Browse news")]
    ranked = semantic_candidates("alarm", skills, KeywordEmbedding(), threshold=0.4)
    assert ranked == [("a", 1.0), ("b", 1.0)]


def test_skill_vectors_are_cached_in_store(matcher, store, learn):
    skill = learn("wifi_on")
    provider = TokenHashEmbedding()
    assert store.get_embedding(skill.skill_id, provider.provider_id, provider.dimension) is None

    matcher.match("Please turn on WiFi", [skill])

    cached = store.get_embedding(skill.skill_id, provider.provider_id, provider.dimension)
    assert cached is not None
    assert np.allclose(cached, provider.embed("Turn on WiFi"))


def test_match_result_to_dict(matcher, learn):
    skill = learn("set_alarm")
    data = matcher.match("Set an alarm for 9:00 AM", [skill]).to_dict()
    assert data["kind"] == "FULL"
    assert data["strategy"] == "REGEX"
    assert data["intent"] == {"target_app": "clock", "method": "KEYWORD"}


@pytest.mark.parametrize("instruction", ["", "   "])
def test_blank_instruction_has_no_match(matcher, learn, instruction):
    skill = learn("wifi_on")
    assert matcher.match(instruction, [skill]).kind == MatchKind.NO_MATCH
