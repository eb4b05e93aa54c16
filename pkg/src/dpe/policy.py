"""Privacy settings, rules and policies.

A policy is an ordered list of simple rules. Each rule scopes a partial
assignment of device controls (a :class:`SettingsDelta`) to every zone or to
zones carrying particular tags. Evaluating a policy for a zone merges every
matching rule; when two rules disagree on a field the more restrictive value
wins, so evaluation never depends on rule order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Iterable, Mapping

from dpe.errors import ParseError, ValidationError


class _Ordered(Enum):
    """Enum whose declaration order is the restrictiveness order (least first)."""

    @property
    def rank(self) -> int:
        return list(type(self)).index(self)


class Camera(_Ordered):
    ON = "on"
    OFF = "off"


class Microphone(_Ordered):
    ON = "on"
    OFF = "off"


class AudioProfile(_Ordered):
    NORMAL = "normal"
    VIBRATE = "vibrate"
    SILENT = "silent"


class RadioMode(_Ordered):
    NORMAL = "normal"
    AIRPLANE = "airplane"


FIELD_TYPES: dict[str, type[_Ordered]] = {
    "camera": Camera,
    "microphone": Microphone,
    "audio_profile": AudioProfile,
    "radio_mode": RadioMode,
}
# canonical field order, used for deviation lists and serialization
FIELDS: tuple[str, ...] = tuple(FIELD_TYPES)


def _coerce(name: str, value: Any) -> _Ordered:
    enum_type = FIELD_TYPES[name]
    if isinstance(value, enum_type):
        return value
    try:
        return enum_type(value)
    except ValueError:
        legal = ", ".join(m.value for m in enum_type)
        raise ParseError(f"{name}: illegal value {value!r} (expected one of {legal})") from None


def stricter(a: _Ordered, b: _Ordered) -> _Ordered:
    return a if a.rank >= b.rank else b


@dataclass(frozen=True)
class PrivacySettings:
    """The full set of enforceable device controls."""

    camera: Camera = Camera.ON
    microphone: Microphone = Microphone.ON
    audio_profile: AudioProfile = AudioProfile.NORMAL
    radio_mode: RadioMode = RadioMode.NORMAL

    def __post_init__(self) -> None:
        for name in FIELDS:
            object.__setattr__(self, name, _coerce(name, getattr(self, name)))

    def to_dict(self) -> dict[str, str]:
        return {name: getattr(self, name).value for name in FIELDS}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> PrivacySettings:
        unknown = set(data) - set(FIELDS)
        if unknown:
            raise ParseError(f"unknown settings field(s): {sorted(unknown)}")
        missing = [name for name in FIELDS if name not in data]
        if missing:
            raise ParseError(f"settings missing field(s): {missing}")
        return cls(**{name: _coerce(name, data[name]) for name in FIELDS})


@dataclass(frozen=True)
class SettingsDelta:
    """A partial assignment of settings; ``None`` means the field is absent."""

    camera: Camera | None = None
    microphone: Microphone | None = None
    audio_profile: AudioProfile | None = None
    radio_mode: RadioMode | None = None

    def __post_init__(self) -> None:
        for name in FIELDS:
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, _coerce(name, value))

    def items(self) -> list[tuple[str, _Ordered]]:
        return [(n, getattr(self, n)) for n in FIELDS if getattr(self, n) is not None]

    def is_empty(self) -> bool:
        return not self.items()

    def merge(self, other: SettingsDelta) -> SettingsDelta:
        """Field-wise most-restrictive union; the empty delta is the identity."""
        merged = {}
        for name in FIELDS:
            a, b = getattr(self, name), getattr(other, name)
            if a is None:
                merged[name] = b
            elif b is None:
                merged[name] = a
            else:
                merged[name] = stricter(a, b)
        return SettingsDelta(**merged)

    def restrict(self, names: Iterable[str]) -> SettingsDelta:
        keep = set(names)
        return SettingsDelta(**{n: v for n, v in self.items() if n in keep})

    def to_dict(self) -> dict[str, str]:
        return {name: value.value for name, value in self.items()}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> SettingsDelta:
        unknown = set(data) - set(FIELDS)
        if unknown:
            raise ParseError(f"unknown settings field(s): {sorted(unknown)}")
        return cls(**{name: _coerce(name, v) for name, v in data.items()})


@dataclass(frozen=True)
class Rule:
    """One simple rule.

    ``tags`` of ``None`` scopes the rule to all zones; otherwise the rule
    applies to any zone sharing at least one tag with it. ``priority`` only
    orders rules for display and audit; it never overrides restrictiveness.
    """

    rule_id: str
    required: SettingsDelta
    tags: frozenset[str] | None = None
    priority: int = 0

    def __post_init__(self) -> None:
        if self.tags is not None:
            object.__setattr__(self, "tags", frozenset(self.tags))
            if not self.tags:
                raise ValidationError(self.rule_id, "tagged scope needs at least one tag")
        if self.required.is_empty():
            raise ValidationError(self.rule_id, "rule requires no settings")
        if self.priority < 0:
            raise ValidationError(self.rule_id, "priority must be >= 0")

    def matches(self, zone_tags: Iterable[str]) -> bool:
        return self.tags is None or not self.tags.isdisjoint(zone_tags)

    def to_dict(self) -> dict[str, Any]:
        return {
            "rule_id": self.rule_id,
            "scope": "all" if self.tags is None else {"tags": sorted(self.tags)},
            "required": self.required.to_dict(),
            "priority": self.priority,
        }


@dataclass(frozen=True)
class Policy:
    policy_id: str
    premise_id: str
    version: int = 1
    rules: tuple[Rule, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        object.__setattr__(self, "rules", tuple(self.rules))
        if self.version < 1:
            raise ValidationError(self.policy_id, "version must be >= 1")
        seen: set[str] = set()
        for rule in self.rules:
            if rule.rule_id in seen:
                raise ValidationError(rule.rule_id, "duplicate rule_id")
            seen.add(rule.rule_id)

    def with_version(self, version: int) -> Policy:
        return replace(self, version=version)

    def declared_tag_sets(self) -> list[frozenset[str]]:
        """The empty tag set plus every distinct tagged scope, in rule order."""
        out: list[frozenset[str]] = [frozenset()]
        for rule in self.rules:
            if rule.tags is not None and rule.tags not in out:
                out.append(rule.tags)
        return out

    def to_dict(self) -> dict[str, Any]:
        return {
            "policy_id": self.policy_id,
            "premise_id": self.premise_id,
            "version": self.version,
            "rules": [rule.to_dict() for rule in self.rules],
        }


_POLICY_KEYS = {"policy_id", "premise_id", "version", "rules"}
_RULE_KEYS = {"rule_id", "scope", "required", "priority"}


def _parse_rule(raw: Any, index: int) -> Rule:
    if not isinstance(raw, Mapping):
        raise ParseError(f"rules[{index}] is not an object")
    unknown = set(raw) - _RULE_KEYS
    if unknown:
        raise ParseError(f"rules[{index}]: unknown key(s) {sorted(unknown)}")
    rule_id = raw.get("rule_id")
    if not isinstance(rule_id, str) or not rule_id:
        raise ParseError(f"rules[{index}].rule_id must be a non-empty string")
    scope = raw.get("scope", "all")
    if scope == "all":
        tags = None
    elif isinstance(scope, Mapping) and set(scope) == {"tags"} and isinstance(scope["tags"], list):
        if not all(isinstance(t, str) for t in scope["tags"]):
            raise ParseError(f"rules[{index}].scope.tags must be strings")
        tags = frozenset(scope["tags"])
        if not tags:
            raise ValidationError(rule_id, "tagged scope needs at least one tag")
    else:
        raise ParseError(f"rules[{index}].scope must be \"all\" or {{\"tags\": [...]}}")
    required = raw.get("required")
    if not isinstance(required, Mapping):
        raise ParseError(f"rules[{index}].required must be an object")
    priority = raw.get("priority", 0)
    if not isinstance(priority, int) or isinstance(priority, bool):
        raise ParseError(f"rules[{index}].priority must be an integer")
    return Rule(rule_id, SettingsDelta.from_dict(required), tags, priority)


def compile_policy(source: str | bytes | Mapping[str, Any]) -> Policy:
    """Validate a policy document (JSON text or an already-parsed mapping)."""
    if isinstance(source, (str, bytes)):
        try:
            source = json.loads(source)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise ParseError(f"policy document is not valid JSON: {exc}") from None
    if not isinstance(source, Mapping):
        raise ParseError("policy document must be an object")
    unknown = set(source) - _POLICY_KEYS
    if unknown:
        raise ParseError(f"unknown policy key(s): {sorted(unknown)}")
    for key in ("policy_id", "premise_id"):
        if not isinstance(source.get(key), str) or not source[key]:
            raise ParseError(f"{key} must be a non-empty string")
    version = source.get("version", 1)
    if not isinstance(version, int) or isinstance(version, bool):
        raise ParseError("version must be an integer")
    rules_raw = source.get("rules", [])
    if not isinstance(rules_raw, list):
        raise ParseError("rules must be a list")
    rules = [_parse_rule(raw, i) for i, raw in enumerate(rules_raw)]
    return Policy(source["policy_id"], source["premise_id"], version, tuple(rules))


def required_settings(policy: Policy, zone_tags: Iterable[str]) -> SettingsDelta:
    tags = frozenset(zone_tags)
    result = SettingsDelta()
    for rule in policy.rules:
        if rule.matches(tags):
            result = result.merge(rule.required)
    return result


def is_compliant(current: PrivacySettings, required: SettingsDelta) -> tuple[bool, list[str]]:
    deviating = [
        name for name, value in required.items() if getattr(current, name).rank < value.rank
    ]
    return not deviating, deviating


def apply_delta(current: PrivacySettings, delta: SettingsDelta) -> PrivacySettings:
    """Overwrite exactly the fields present in ``delta``."""
    return replace(current, **dict(delta.items()))
