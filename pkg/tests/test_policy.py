import itertools
import json

import pytest
from hypothesis import given, strategies as st

from dpe.errors import ParseError, ValidationError
from dpe.policy import (
    AudioProfile,
    Camera,
    FIELDS,
    Microphone,
    Policy,
    PrivacySettings,
    RadioMode,
    Rule,
    SettingsDelta,
    apply_delta,
    compile_policy,
    is_compliant,
    required_settings,
)

from oracles import RANKS, merge_oracle

CINEMA = {
    "policy_id": "cinema-main",
    "premise_id": "cinema",
    "rules": [
        {"rule_id": "no-camera-at-screen", "scope": {"tags": ["screen"]}, "required": {"camera": "off"}},
        {"rule_id": "quiet", "scope": "all", "required": {"audio_profile": "silent"}},
    ],
}

deltas = st.fixed_dictionaries({}, optional={n: st.sampled_from(v) for n, v in RANKS.items()})


def test_rank_order_matches_declaration():
    assert [m.value for m in AudioProfile] == RANKS["audio_profile"]
    assert Camera.OFF.rank > Camera.ON.rank
    assert RadioMode.AIRPLANE.rank > RadioMode.NORMAL.rank


def test_compile_and_evaluate_cinema():
    policy = compile_policy(json.dumps(CINEMA))
    screen = required_settings(policy, {"screen"})
    assert screen == SettingsDelta(camera=Camera.OFF, audio_profile=AudioProfile.SILENT)
    lobby = required_settings(policy, set())
    assert lobby == SettingsDelta(audio_profile=AudioProfile.SILENT)


def test_conflicting_rules_pick_the_stricter_value():
    doc = {
        "policy_id": "p", "premise_id": "x",
        "rules": [
            {"rule_id": "a", "scope": "all", "required": {"audio_profile": "vibrate"}, "priority": 9},
            {"rule_id": "b", "scope": "all", "required": {"audio_profile": "silent"}},
        ],
    }
    assert required_settings(compile_policy(doc), ()).audio_profile is AudioProfile.SILENT


def test_duplicate_rule_id_rejected():
    doc = dict(CINEMA, rules=CINEMA["rules"] + [CINEMA["rules"][0]])
    with pytest.raises(ValidationError) as err:
        compile_policy(doc)
    assert err.value.subject == "no-camera-at-screen"


@pytest.mark.parametrize("doc", [
    "not json",
    {"policy_id": "p", "premise_id": "x", "extra": 1},
    {"policy_id": "p", "premise_id": "x", "rules": [{"rule_id": "r", "required": {"camera": "maybe"}}]},
    {"policy_id": "p", "premise_id": "x", "rules": [{"rule_id": "r", "required": {"flash": "off"}}]},
    {"policy_id": "p", "premise_id": "x", "rules": [{"rule_id": "r", "scope": "some", "required": {"camera": "off"}}]},
    {"policy_id": "", "premise_id": "x"},
])
def test_parse_errors(doc):
    with pytest.raises(ParseError):
        compile_policy(doc)


@pytest.mark.parametrize("rule", [
    {"rule_id": "r", "scope": {"tags": []}, "required": {"camera": "off"}},
    {"rule_id": "r", "scope": "all", "required": {}},
    {"rule_id": "r", "scope": "all", "required": {"camera": "off"}, "priority": -1},
])
def test_validation_errors(rule):
    with pytest.raises(ValidationError):
        compile_policy({"policy_id": "p", "premise_id": "x", "rules": [rule]})


def test_untagged_zone_ignores_tagged_rules():
    policy = compile_policy(CINEMA)
    assert required_settings(policy, {"lobby"}).camera is None


def test_is_compliant_lists_deviations_in_field_order():
    current = PrivacySettings()
    required = SettingsDelta(radio_mode="airplane", camera="off")
    ok, deviating = is_compliant(current, required)
    assert not ok
    assert deviating == ["camera", "radio_mode"]


def test_stricter_current_value_is_compliant():
    current = PrivacySettings(audio_profile=AudioProfile.SILENT)
    assert is_compliant(current, SettingsDelta(audio_profile="vibrate")) == (True, [])


def test_policy_round_trips_through_to_dict():
    policy = compile_policy(CINEMA)
    assert compile_policy(policy.to_dict()) == policy


def test_declared_tag_sets():
    policy = compile_policy(CINEMA)
    assert policy.declared_tag_sets() == [frozenset(), frozenset({"screen"})]


@given(st.lists(deltas.filter(bool), min_size=1, max_size=5))
def test_evaluation_matches_oracle_under_every_rule_order(requireds):
    expected = merge_oracle(requireds)
    for perm in itertools.permutations(range(len(requireds))):
        rules = [Rule(f"r{i}", SettingsDelta.from_dict(requireds[i])) for i in perm]
        got = required_settings(Policy("p", "x", 1, tuple(rules)), ())
        assert got.to_dict() == expected


@given(deltas, deltas)
def test_merge_is_commutative_and_idempotent(a, b):
    da, db = SettingsDelta.from_dict(a), SettingsDelta.from_dict(b)
    assert da.merge(db) == db.merge(da)
    assert da.merge(da) == da
    assert da.merge(SettingsDelta()) == da


@given(deltas)
def test_applying_required_makes_any_device_compliant(req):
    delta = SettingsDelta.from_dict(req)
    for values in itertools.product(*(RANKS[n] for n in FIELDS)):
        current = PrivacySettings.from_dict(dict(zip(FIELDS, values)))
        assert is_compliant(apply_delta(current, delta), delta)[0]


def test_apply_delta_touches_only_present_fields():
    current = PrivacySettings(microphone=Microphone.OFF)
    out = apply_delta(current, SettingsDelta(camera="off"))
    assert out == PrivacySettings(camera=Camera.OFF, microphone=Microphone.OFF)
