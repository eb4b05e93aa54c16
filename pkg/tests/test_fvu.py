import pytest

from dpe import fvu as f
from dpe.device import EnforcementOutcome, EnforcementStatus, Emmd, OsIntegrity
from dpe.policy import Camera, PrivacySettings, SettingsDelta, compile_policy
from dpe.protocol import Enforce, EnforceAck, Interrogate, Restore, StateReport

POLICY = compile_policy({
    "policy_id": "pol", "premise_id": "cinema",
    "rules": [
        {"rule_id": "screen", "scope": {"tags": ["screen"]}, "required": {"camera": "off"}},
        {"rule_id": "quiet", "scope": "all", "required": {"audio_profile": "silent"}},
    ],
})


def _unit(tags=("screen",)):
    return f.FvuState("fvu-z0-1", "z0-1", frozenset(tags), "cinema", policies={"pol": POLICY})


def _report(settings=PrivacySettings()):
    return StateReport("d", settings, OsIntegrity.INTACT, Emmd.ABSENT)


def _ack(status):
    return EnforceAck("d", EnforcementOutcome(status, PrivacySettings()))


def test_detect_interrogates_and_arms_timer():
    state, actions = f.on_device_in_range(_unit(), "d", 1000)
    assert actions == [f.Send(Interrogate("fvu-z0-1"), "d"), f.SetTimer("d", 1000 + f.T_REPORT_MS)]
    assert state.sessions["d"].phase is f.Phase.AWAIT_REPORT
    assert f.on_device_in_range(state, "d", 1500) == (state, [])


def test_noncompliant_report_sends_only_deviating_fields():
    state, _ = f.on_device_in_range(_unit(), "d", 0)
    silent = PrivacySettings(audio_profile="silent")
    state, actions = f.on_state_report(state, _report(silent), 40)
    assert actions[0] == f.Send(Enforce("d", SettingsDelta(camera="off")), "d")
    assert state.sessions["d"].phase is f.Phase.AWAIT_ACK
    state, actions = f.on_enforce_ack(state, _ack(EnforcementStatus.APPLIED_VIA_OS), 80)
    assert actions == [
        f.ReportResult("d", "enforced:os", (("pol", 1),)),
        f.SetTimer("d", 80 + f.T_PROBE_MS),
    ]
    assert state.sessions["d"].phase is f.Phase.MONITORING


def test_compliant_report_goes_straight_to_monitoring():
    state, _ = f.on_device_in_range(_unit(()), "d", 0)
    state, actions = f.on_state_report(state, _report(PrivacySettings(audio_profile="silent")), 40)
    assert actions[0].outcome == "compliant"
    assert state.sessions["d"].phase is f.Phase.MONITORING


def test_emmd_channel_is_reported():
    state, _ = f.on_device_in_range(_unit(), "d", 0)
    state, _ = f.on_state_report(state, _report(), 40)
    _, actions = f.on_enforce_ack(state, _ack(EnforcementStatus.APPLIED_VIA_EMMD), 80)
    assert actions[0].outcome == "enforced:emmd"


def test_rejection_alerts_once():
    state, _ = f.on_device_in_range(_unit(), "d", 0)
    state, _ = f.on_state_report(state, _report(), 40)
    state, actions = f.on_enforce_ack(state, _ack(EnforcementStatus.REJECTED), 80)
    assert f.RaiseAlert("d", f.REASON_REJECTED) in actions
    assert actions[-1].outcome == "rejected"
    assert state.sessions["d"].phase is f.Phase.ALERTED
    # nothing further happens for an alerted session
    assert f.on_timer(state, "d", 80 + f.T_PROBE_MS)[1] == []


def test_report_timeout_retries_then_alerts():
    state, _ = f.on_device_in_range(_unit(), "d", 0)
    t = 0
    for attempt in range(2, f.MAX_ATTEMPTS + 1):
        t += f.T_REPORT_MS
        state, actions = f.on_timer(state, "d", t)
        assert isinstance(actions[0].body, Interrogate)
        assert state.sessions["d"].attempts == attempt
    t += f.T_REPORT_MS
    state, actions = f.on_timer(state, "d", t)
    assert actions == [f.RaiseAlert("d", f.REASON_UNRESPONSIVE)]


def test_ack_timeout_resends_pending_delta():
    state, _ = f.on_device_in_range(_unit(), "d", 0)
    state, _ = f.on_state_report(state, _report(), 40)
    deadline = 40 + f.T_ACK_MS
    state, actions = f.on_timer(state, "d", deadline)
    assert actions[0].body == Enforce("d", SettingsDelta(camera="off", audio_profile="silent"))
    for _ in range(f.MAX_ATTEMPTS - 1):
        deadline += f.T_ACK_MS
        state, actions = f.on_timer(state, "d", deadline)
    assert actions == [f.RaiseAlert("d", f.REASON_ENFORCE_TIMEOUT)]


def test_stale_timer_is_ignored():
    state, _ = f.on_device_in_range(_unit(), "d", 0)
    assert f.on_timer(state, "d", 1234) == (state, [])
    assert f.on_timer(state, "ghost", 2000) == (state, [])


def test_probe_reinterrogates():
    state, _ = f.on_device_in_range(_unit(()), "d", 0)
    state, _ = f.on_state_report(state, _report(PrivacySettings(audio_profile="silent")), 40)
    state, actions = f.on_timer(state, "d", 40 + f.T_PROBE_MS)
    assert isinstance(actions[0].body, Interrogate)
    assert state.sessions["d"].phase is f.Phase.AWAIT_REPORT


def test_out_of_range_restores_only_when_leaving_premise():
    state, _ = f.on_device_in_range(_unit(), "d", 0)
    dropped, actions = f.on_device_out_of_range(state, "d", 10)
    assert "d" not in dropped.sessions and actions == []
    _, actions = f.on_device_out_of_range(_unit(), "d", 10, left_premise=True)
    assert actions == [f.Send(Restore("d"), "d")]


def test_unknown_session_report_is_ignored(caplog):
    caplog.set_level("INFO", logger="dpe.fvu")
    state = _unit()
    assert f.on_state_report(state, _report(), 5) == (state, [])
    assert "UnknownSession" in caplog.text


def test_policy_push_versions():
    state, _ = f.on_device_in_range(_unit(()), "d", 0)
    state, _ = f.on_state_report(state, _report(PrivacySettings(audio_profile="silent")), 40)
    newer = POLICY.with_version(2)
    state, actions = f.on_policy_push(state, newer, 500)
    assert state.policy_versions() == (("pol", 2),)
    assert isinstance(actions[0].body, Interrogate)
    stale, actions = f.on_policy_push(state, POLICY, 600)
    assert stale.policy_versions() == (("pol", 2),) and actions == []


def test_required_merges_policies():
    other = compile_policy({"policy_id": "extra", "premise_id": "cinema",
                            "rules": [{"rule_id": "r", "scope": "all", "required": {"camera": "off"}}]})
    state = f.FvuState("u", "z", frozenset(), "cinema", policies={"pol": POLICY, "extra": other})
    assert state.required() == SettingsDelta(camera=Camera.OFF, audio_profile="silent")


def test_session_attempts_bounded():
    with pytest.raises(ValueError):
        f.Session(f.Phase.AWAIT_REPORT, 0, f.MAX_ATTEMPTS + 1)
