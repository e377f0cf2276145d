import itertools
import random
from fractions import Fraction

import pytest

from src.agent.element_finder import TAU_RELAXED, TAU_STRICT, find_element, score_element, score_fraction
from src.device.ui_model import ROOT_CLASS, Bounds, UINode, UITree, annotate
from src.errors import UnlocatableElementError
from src.skills.template import LOCATOR_FEATURES, LOCATOR_WEIGHTS, ElementLocator

ELEMENT = UINode(
    class_name="android.widget.Button",
    resource_id="fab",
    text="Add alarm",
    content_desc="Add",
    parent_class="android.widget.FrameLayout",
    sibling_index=2,
)

MATCHING = {
    "resource_id": "fab",
    "text": "Add alarm",
    "content_desc": "Add",
    "class_name": "android.widget.Button",
    "parent_class": "android.widget.FrameLayout",
    "sibling_index": 2,
}
MISMATCHING = {
    "resource_id": "other",
    "text": "zzz",
    "content_desc": "qqq",
    "class_name": "android.widget.TextView",
    "parent_class": "android.widget.ListView",
    "sibling_index": 9,
}


def _locator(active, matched):
    values = {f: (MATCHING[f] if f in matched else MISMATCHING[f]) for f in active}
    return ElementLocator(**values)


def _oracle(active, matched):
    total = sum(LOCATOR_WEIGHTS[f] for f in active)
    hit = sum(LOCATOR_WEIGHTS[f] for f in active if f in matched)
    return Fraction(hit, total)


def _subsets(features):
    for size in range(1, len(features) + 1):
        yield from itertools.combinations(features, size)


def test_weights_sum_to_one():
    assert sum(LOCATOR_WEIGHTS.values()) == 100


def test_score_matches_exact_oracle_on_every_subset():
    checked = 0
    for active in _subsets(LOCATOR_FEATURES):
        for size in range(len(active) + 1):
            for matched in itertools.combinations(active, size):
                locator = _locator(active, set(matched))
                assert score_fraction(ELEMENT, locator) == _oracle(active, set(matched))
                checked += 1
    # 63 个非空激活集合，每个特征取 未激活/命中/未命中
    assert checked == 3 ** 6 - 1


def test_resource_id_only_match_scores_0_4706():
    active = ("resource_id", "text", "class_name", "parent_class", "sibling_index")
    score = score_element(ELEMENT, _locator(active, {"resource_id"}))
    assert score == pytest.approx(40 / 85)
    assert round(score, 4) == 0.4706


def test_full_match_scores_one():
    assert score_element(ELEMENT, ElementLocator(**MATCHING)) == 1.0


def test_two_feature_locator():
    active = ("resource_id", "class_name")
    assert score_element(ELEMENT, _locator(active, set(active))) == 1.0
    assert score_element(ELEMENT, _locator(active, {"class_name"})) == pytest.approx(0.2)


def test_text_matches_by_containment():
    assert score_element(ELEMENT, ElementLocator(text="alarm")) == 1.0
    assert score_element(ELEMENT, ElementLocator(text="Alarm")) == 0.0


def test_bindings_fill_text_placeholder():
    locator = ElementLocator(resource_id="fab", text="{label}")
    assert score_element(ELEMENT, locator, {"label": "Add alarm"}) == 1.0
    assert score_element(ELEMENT, locator, {"label": "Remove"}) == pytest.approx(40 / 60)


def test_missing_element_feature_never_matches():
    bare = UINode(class_name="android.widget.Button", sibling_index=0)
    assert score_element(bare, ElementLocator(resource_id="fab", class_name="android.widget.Button")) == \
        pytest.approx(10 / 50)


def test_empty_locator_is_rejected():
    with pytest.raises(UnlocatableElementError):
        ElementLocator()
    with pytest.raises(UnlocatableElementError):
        ElementLocator(resource_id="", text="")


def _screen(*children):
    root = UINode(class_name=ROOT_CLASS, bounds=Bounds(0, 0, 100, 100), children=list(children))
    return UITree(root=annotate(root), activity="Main", foreground_app="app")


def test_find_element_thresholds():
    locator = ElementLocator(resource_id="fab", text="Add alarm", class_name="android.widget.Button",
                             parent_class=ROOT_CLASS, sibling_index=0)
    rid_and_class = _screen(UINode(class_name="android.widget.Button", resource_id="fab", text="Cancel",
                                   bounds=Bounds(0, 0, 10, 10)),
                            UINode(class_name="android.widget.View", bounds=Bounds(0, 10, 10, 20)))
    # 只差文本
    found = find_element(rid_and_class, locator, TAU_STRICT)
    assert found == (1, pytest.approx(65 / 85))

    rid_class_only = _screen(UINode(class_name="android.widget.TextView", bounds=Bounds(0, 0, 10, 10)),
                             UINode(class_name="android.widget.Button", resource_id="fab", text="Cancel",
                                    bounds=Bounds(0, 10, 10, 20)))
    found = find_element(rid_class_only, locator, TAU_STRICT)
    assert found is not None
    assert found[0] == 2
    assert found[1] == pytest.approx(60 / 85)


def test_score_0_588_passes_strict():
    locator = ElementLocator(resource_id="fab", text="Add alarm", class_name="android.widget.Button",
                             parent_class="android.widget.LinearLayout", sibling_index=4)
    tree = _screen(UINode(class_name="android.widget.Button", resource_id="fab", bounds=Bounds(0, 0, 10, 10)))
    found = find_element(tree, locator, TAU_STRICT)
    assert found is not None
    assert round(found[1], 3) == 0.588


def test_score_0_4706_needs_relaxed_threshold():
    locator = ElementLocator(resource_id="fab", text="Add alarm", class_name="android.widget.Button",
                             parent_class="android.widget.LinearLayout", sibling_index=4)
    tree = _screen(UINode(class_name="android.widget.ImageButton", resource_id="fab", bounds=Bounds(0, 0, 10, 10)))
    assert find_element(tree, locator, TAU_STRICT) is None
    found = find_element(tree, locator, TAU_RELAXED)
    assert found is not None
    assert found[0] == 1


def test_ties_go_to_lowest_bfs_index():
    tree = _screen(UINode(class_name="android.widget.Button", text="OK", bounds=Bounds(0, 0, 10, 10)),
                   UINode(class_name="android.widget.Button", text="OK", bounds=Bounds(0, 10, 10, 20)))
    assert find_element(tree, ElementLocator(text="OK"), TAU_STRICT)[0] == 1


def _random_value(rng, feature):
    if feature == "sibling_index":
        return rng.randint(0, 3)
    return rng.choice(["a", "b", "c"]) + rng.choice(["", "x"])


def test_score_is_monotone_in_matching_features():
    rng = random.Random(1234)
    for _ in range(1000):
        element = UINode(class_name=_random_value(rng, "class_name"),
                         resource_id=_random_value(rng, "resource_id"),
                         text=_random_value(rng, "text"),
                         content_desc=_random_value(rng, "content_desc"),
                         parent_class=_random_value(rng, "parent_class"),
                         sibling_index=_random_value(rng, "sibling_index"))
        active = [f for f in LOCATOR_FEATURES if rng.random() < 0.6] or ["resource_id"]
        values = {f: _random_value(rng, f) for f in active}
        before = score_fraction(element, ElementLocator(**values))
        assert 0 <= before <= 1

        # 把一个特征改成与元素一致，分数不会下降
        feature = rng.choice(active)
        values[feature] = getattr(element, feature)
        after = score_fraction(element, ElementLocator(**values))
        assert after >= before
