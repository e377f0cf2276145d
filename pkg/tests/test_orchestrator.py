import pytest

from src.agent.orchestrator import (FEEDBACK_TEMPLATE, ExecutionOutcome, Orchestrator, violates_guardrail)
from src.agent.policy import Policy, PolicyResponse
from src.agent.scripted_policy import ScriptedPolicy
from src.agent.trajectory import PriorContext
from src.config import DEFAULT_POLICY_PATH, LoopBudget
from src.device.actions import Action, ActionKind, Perturbation, PerturbationKind

from tests.helpers import CANONICAL


class FixedPolicy(Policy):
    """每次都返回同一个动作，并记录收到的请求"""

    def __init__(self, action):
        super().__init__()
        self.action = action
        self.requests = []

    def respond(self, request):
        self.requests.append(request)
        return PolicyResponse(action=self.action, reasoning="fixed")


class SequencePolicy(Policy):
    """按顺序返回给定的动作"""

    def __init__(self, actions):
        super().__init__()
        self.actions = list(actions)

    def respond(self, request):
        return PolicyResponse(action=self.actions.pop(0), reasoning="sequence")


@pytest.mark.parametrize("task_id", sorted(CANONICAL))
def test_canonical_tasks_succeed(task_id, device, policy):
    instruction, expected = CANONICAL[task_id]

    trajectory, outcome = Orchestrator(device, policy).execute(instruction, task_id, expected)

    assert outcome == ExecutionOutcome.SUCCESS
    assert trajectory.verified
    assert 1 <= len(trajectory.steps) <= 8
    assert device.run_checker(task_id, expected).verified


def test_alarm_trajectory_shape(device, policy):
    trajectory, _ = Orchestrator(device, policy).execute("Set an alarm for 7:30 AM", "set_alarm",
                                                         {"time": "7:30 AM"})

    kinds = [s.action.kind for s in trajectory.steps]
    assert kinds == [ActionKind.LAUNCH, ActionKind.TAP, ActionKind.TAP, ActionKind.INPUT, ActionKind.TAP]
    assert trajectory.steps[3].action.payload == "7:30 AM"
    assert trajectory.steps[3].target_features.resource_id == "time_input"
    assert trajectory.steps[0].target_features is None
    # 第5步后检查器通过，没有再调用策略
    assert policy.counter.total == 5


def test_rejected_done_feeds_back_and_gives_up(device):
    policy = FixedPolicy(Action(ActionKind.DONE))
    message = device.run_checker("set_alarm", {"time": "7:30 AM"}).message

    trajectory, outcome = Orchestrator(device, policy).execute("Set an alarm for 7:30 AM", "set_alarm",
                                                               {"time": "7:30 AM"})

    assert outcome == ExecutionOutcome.FAIL_CHECKER
    assert policy.counter.total == 3
    assert policy.requests[0].feedback is None
    assert policy.requests[1].feedback == FEEDBACK_TEMPLATE.format(message=message)
    assert policy.requests[1].feedback.startswith("Verification FAILED: ")
    assert policy.requests[1].feedback.endswith("The task is NOT complete. Look at the current UI and try again.")
    assert not trajectory.verified


def test_repeated_guardrail_overrides_fail(device):
    policy = FixedPolicy(Action(ActionKind.LAUNCH, payload="chrome"))
    orchestrator = Orchestrator(device, policy)

    trajectory, outcome = orchestrator.execute("Set an alarm for 7:30 AM", "set_alarm", {"time": "7:30 AM"})

    assert outcome == ExecutionOutcome.FAIL_POLICY
    assert policy.counter.total == 4
    # 连续三次被改写为启动目标应用，第四次违规时放弃
    assert [s.action for s in trajectory.steps] == [Action(ActionKind.LAUNCH, payload="clock")] * 3
    assert all(s.overridden for s in trajectory.steps)
    assert device.capture().foreground_app == "clock"
    assert orchestrator.trace.records[-1]["overridden"] is True


def test_guardrail_count_resets_after_compliant_step(device):
    launch_chrome = Action(ActionKind.LAUNCH, payload="chrome")
    policy = SequencePolicy([launch_chrome] * 3 + [Action(ActionKind.BACK)] + [launch_chrome] * 3
                            + [Action(ActionKind.FAIL)])

    trajectory, outcome = Orchestrator(device, policy).execute("Set an alarm for 7:30 AM", "set_alarm",
                                                               {"time": "7:30 AM"})

    assert outcome == ExecutionOutcome.FAIL_POLICY
    assert policy.counter.total == 8
    assert sum(s.overridden for s in trajectory.steps) == 6


def test_premature_done_recovers(device):
    policy = ScriptedPolicy.from_file(DEFAULT_POLICY_PATH, premature_done_at=1)

    trajectory, outcome = Orchestrator(device, policy).execute("Turn on WiFi", "wifi_on", {})

    assert outcome == ExecutionOutcome.SUCCESS
    assert trajectory.steps[0].action.kind == ActionKind.DONE
    assert trajectory.steps[0].success is False


def test_policy_failure_stops_loop(device):
    trajectory, outcome = Orchestrator(device, ScriptedPolicy([])).execute("Order a pizza", "set_alarm",
                                                                           {"time": "7:30 AM"})
    assert outcome == ExecutionOutcome.FAIL_POLICY
    assert trajectory.steps == []


def test_step_limit(device):
    policy = FixedPolicy(Action(ActionKind.SCROLL, payload="down"))

    trajectory, outcome = Orchestrator(device, policy).execute("Turn on WiFi", "wifi_on", {})

    assert outcome == ExecutionOutcome.FAIL_STEP_LIMIT
    assert policy.counter.total == 20
    assert len(trajectory.steps) <= 20


def test_stale_scroll_feedback(device):
    device.apply(Action(ActionKind.LAUNCH, payload="settings"))
    policy = FixedPolicy(Action(ActionKind.SCROLL, payload="down"))
    budget = LoopBudget(n_max=3, override=True)

    Orchestrator(device, policy, budget).execute("Turn on WiFi", "wifi_on", {})

    assert policy.requests[2].feedback == "screen unchanged"


def test_permission_dialog_is_part_of_trajectory(device, policy):
    device.inject(Perturbation(PerturbationKind.REVOKE_PERMISSION, "contacts"))
    instruction, expected = CANONICAL["create_contact"]

    trajectory, outcome = Orchestrator(device, policy).execute(instruction, "create_contact", expected)

    assert outcome == ExecutionOutcome.SUCCESS
    assert len(trajectory.steps) == 7
    assert trajectory.steps[1].target_features.resource_id == "permission_allow"


def test_prior_context_continues_history(device, policy):
    first, _ = Orchestrator(device, policy).execute("Turn on WiFi", "wifi_on", {})
    device.reset()
    device.apply(first.steps[0].action)
    prior = PriorContext(origin_skill="settings-1", completed_steps=first.steps[:1])

    trajectory, outcome = Orchestrator(device, policy).execute("Turn on WiFi", "wifi_on", {}, prior=prior)

    assert outcome == ExecutionOutcome.SUCCESS
    assert trajectory.steps[0] is first.steps[0]
    assert [s.action.kind for s in trajectory.steps] == [s.action.kind for s in first.steps]


@pytest.mark.parametrize("action, foreground, violates", [
    (Action(ActionKind.LAUNCH, payload="chrome"), "home", True),
    (Action(ActionKind.LAUNCH, payload="clock"), "home", False),
    (Action(ActionKind.TAP, element_index=1), "chrome", True),
    (Action(ActionKind.TAP, element_index=1), "clock", False),
    (Action(ActionKind.BACK), "chrome", False),
    (Action(ActionKind.DONE), "chrome", False),
])
def test_violates_guardrail(action, foreground, violates, device):
    tree = device.capture()
    tree.foreground_app = foreground
    assert violates_guardrail(action, tree, "clock") is violates
