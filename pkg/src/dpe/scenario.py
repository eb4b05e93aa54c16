"""Scenario values and the JSON scenario-file loader.

Scenario files use seconds and metres; the loaded :class:`Scenario` holds
integer milliseconds. Files are schema-checked before anything else, unknown
keys are rejected, and the first problem is raised as a
:class:`~dpe.errors.ScenarioError` naming the offending field
(e.g. ``run.tick``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import jsonschema

from dpe.device import Behavior, DeviceProfile, Emmd, OsIntegrity
from dpe.errors import DpeError, ScenarioError
from dpe.geometry import PremiseLayout, Point, Zone, hex_layout
from dpe.policy import Policy, PrivacySettings, compile_policy

NETWORK_PRESETS_MS = {"wifi": 20, "lte": 60}


def to_ms(seconds: float) -> int:
    return int(round(seconds * 1000))


@dataclass(frozen=True)
class PolicyUpdate:
    at_ms: int
    premise_id: str
    policy: Policy


@dataclass(frozen=True)
class Scenario:
    layouts: tuple[PremiseLayout, ...]
    devices: tuple[DeviceProfile, ...]
    duration_ms: int
    policies: Mapping[str, tuple[Policy, ...]] = field(default_factory=dict)
    link_latency_ms: int = NETWORK_PRESETS_MS["wifi"]
    tick_ms: int = 1000
    seed: int = 0
    sync_period_ms: int = 0
    sync_links: tuple[tuple[str, str], ...] | None = None
    jitter_ms: int = 0
    updates: tuple[PolicyUpdate, ...] = ()
    name: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "layouts", tuple(self.layouts))
        object.__setattr__(self, "devices", tuple(self.devices))
        object.__setattr__(self, "policies", {k: tuple(v) for k, v in self.policies.items()})
        object.__setattr__(self, "updates", tuple(self.updates))
        if self.sync_links is not None:
            object.__setattr__(self, "sync_links", tuple(tuple(l) for l in self.sync_links))

    def layout(self, premise_id: str) -> PremiseLayout:
        for layout in self.layouts:
            if layout.premise_id == premise_id:
                return layout
        raise KeyError(premise_id)

    def validate(self) -> None:
        """Raise :class:`ScenarioError` for the first violated precondition."""
        if self.duration_ms <= 0:
            raise ScenarioError("run.duration", "must be > 0")
        if self.tick_ms <= 0:
            raise ScenarioError("run.tick", "must be > 0")
        if self.link_latency_ms < 0:
            raise ScenarioError("network.latency", "must be >= 0")
        if self.jitter_ms < 0:
            raise ScenarioError("network.jitter", "must be >= 0")
        if self.sync_period_ms < 0:
            raise ScenarioError("egos.sync_period", "must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise ScenarioError("run.seed", "must be an unsigned 64-bit integer")

        premise_ids: list[str] = []
        for i, layout in enumerate(self.layouts):
            where = f"premises[{i}]"
            if layout.premise_id in premise_ids:
                raise ScenarioError(f"{where}.premise_id", f"duplicate premise {layout.premise_id!r}")
            premise_ids.append(layout.premise_id)
            _check_wire_id(f"{where}.console_id", layout.console_id)
            for zone in layout.zones:
                _check_wire_id(f"{where}.zones.{zone.zone_id}.fvu_id", zone.fvu_id)
        for i, a in enumerate(self.layouts):
            for b in self.layouts[i + 1:]:
                if _partially_overlap(a, b):
                    raise ScenarioError(
                        "premises",
                        f"{a.premise_id!r} and {b.premise_id!r} overlap without nesting",
                    )

        for pid, policies in self.policies.items():
            if pid not in premise_ids:
                raise ScenarioError(f"policies.{pid}", "no such premise")
            seen = set()
            for j, policy in enumerate(policies):
                if policy.premise_id != pid:
                    raise ScenarioError(f"policies.{pid}[{j}].premise_id", "does not match premise")
                if policy.policy_id in seen:
                    raise ScenarioError(f"policies.{pid}[{j}].policy_id", "duplicate policy_id")
                seen.add(policy.policy_id)
        for j, update in enumerate(self.updates):
            if update.premise_id not in premise_ids:
                raise ScenarioError(f"updates[{j}].premise_id", "no such premise")
            if update.policy.premise_id != update.premise_id:
                raise ScenarioError(f"updates[{j}].policy.premise_id", "does not match premise")
            if update.at_ms < 0:
                raise ScenarioError(f"updates[{j}].at", "must be >= 0")

        device_ids = set()
        for i, dev in enumerate(self.devices):
            where = f"devices[{i}]"
            if dev.device_id in device_ids:
                raise ScenarioError(f"{where}.device_id", f"duplicate device {dev.device_id!r}")
            device_ids.add(dev.device_id)
            _check_wire_id(f"{where}.device_id", dev.device_id)
            if not dev.waypoints:
                raise ScenarioError(f"{where}.waypoints", "must not be empty")
            times = [t for t, _ in dev.waypoints]
            if times != sorted(times):
                raise ScenarioError(f"{where}.waypoints", "must be sorted by time")
            if dev.snapshots:
                raise ScenarioError(f"{where}", "devices must start outside every premise stack")

        if self.sync_links is not None:
            for j, (a, b) in enumerate(self.sync_links):
                if a not in premise_ids or b not in premise_ids or a == b:
                    raise ScenarioError(f"egos.links[{j}]", f"bad link {a!r} -> {b!r}")


def _check_wire_id(where: str, value: str) -> None:
    raw = value.encode("utf-8")
    if not raw or len(raw) > 16 or b"\x00" in raw:
        raise ScenarioError(where, f"{value!r} must be 1-16 UTF-8 bytes")


def _partially_overlap(a: PremiseLayout, b: PremiseLayout) -> bool:
    ax0, ay0, ax1, ay1 = a.bounds()
    bx0, by0, bx1, by1 = b.bounds()
    disjoint = ax1 < bx0 or bx1 < ax0 or ay1 < by0 or by1 < ay0
    a_in_b = bx0 <= ax0 and ax1 <= bx1 and by0 <= ay0 and ay1 <= by1
    b_in_a = ax0 <= bx0 and bx1 <= ax1 and ay0 <= by0 and by1 <= ay1
    return not (disjoint or a_in_b or b_in_a)


# --- file format ----------------------------------------------------------

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_xy = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}
_tags = {"type": "array", "items": {"type": "string"}}
_id = {"type": "string", "minLength": 1}
_settings = {
    "type": "object",
    "additionalProperties": False,
    "required": ["camera", "microphone", "audio_profile", "radio_mode"],
    "properties": {
        "camera": {"enum": ["on", "off"]},
        "microphone": {"enum": ["on", "off"]},
        "audio_profile": {"enum": ["normal", "vibrate", "silent"]},
        "radio_mode": {"enum": ["normal", "airplane"]},
    },
}

SCENARIO_SCHEMA: dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "required": ["premises", "devices", "run"],
    "properties": {
        "name": {"type": "string"},
        "premises": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["premise_id", "width", "height"],
                "properties": {
                    "premise_id": _id,
                    "console_id": _id,
                    "origin": _xy,
                    "width": _pos,
                    "height": _pos,
                    "hex": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["pitch", "radius"],
                        "properties": {"pitch": _pos, "radius": _pos, "tags": _tags},
                    },
                    "zones": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["zone_id", "center", "radius"],
                            "properties": {
                                "zone_id": _id, "center": _xy, "radius": _pos,
                                "tags": _tags, "fvu_id": _id,
                            },
                        },
                    },
                    "zone_tags": {"type": "object", "additionalProperties": _tags},
                },
            },
        },
        "policies": {
            "type": "object",
            "additionalProperties": {"type": "array", "items": {"type": "object"}},
        },
        "updates": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["at", "premise_id", "policy"],
                "properties": {"at": {"type": "number", "minimum": 0}, "premise_id": _id,
                               "policy": {"type": "object"}},
            },
        },
        "devices": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["device_id", "waypoints"],
                "properties": {
                    "device_id": _id,
                    "os_integrity": {"enum": ["intact", "rooted"]},
                    "emmd": {"enum": ["present", "absent"]},
                    "behavior": {
                        "oneOf": [
                            {"const": "compliant"},
                            {
                                "type": "object",
                                "additionalProperties": False,
                                "required": ["evasive"],
                                "properties": {"evasive": _pos},
                            },
                        ]
                    },
                    "settings": _settings,
                    "waypoints": {
                        "type": "array",
                        "minItems": 1,
                        "items": {"type": "array", "items": _num, "minItems": 3, "maxItems": 3},
                    },
                },
            },
        },
        "network": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "preset": {"enum": sorted(NETWORK_PRESETS_MS)},
                "latency": {"type": "number", "minimum": 0},
                "jitter": {"type": "number", "minimum": 0},
            },
        },
        "egos": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "sync_period": {"type": "number", "minimum": 0},
                "links": {
                    "type": "array",
                    "items": {"type": "array", "items": _id, "minItems": 2, "maxItems": 2},
                },
            },
        },
        "run": {
            "type": "object",
            "additionalProperties": False,
            "required": ["duration"],
            "properties": {
                "duration": _pos,
                "tick": _pos,
                "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
            },
        },
    },
}

_VALIDATOR = jsonschema.Draft202012Validator(SCENARIO_SCHEMA)


def _error_field(error: jsonschema.ValidationError) -> str:
    parts: list[str] = []
    for p in error.absolute_path:
        if isinstance(p, int):
            parts[-1:] = [f"{parts[-1]}[{p}]"] if parts else [f"[{p}]"]
        else:
            parts.append(str(p))
    if error.validator == "required":
        missing = error.message.split("'")[1]
        parts.append(missing)
    elif error.validator == "additionalProperties":
        extra = error.message.split("'")[1] if "'" in error.message else ""
        if extra:
            parts.append(extra)
    return ".".join(parts) or "<root>"


def _layout_from(raw: Mapping[str, Any]) -> PremiseLayout:
    pid = raw["premise_id"]
    width, height = raw["width"], raw["height"]
    zones: list[Zone] = []
    if "hex" in raw:
        h = raw["hex"]
        zones.extend(hex_layout(width, height, h["pitch"], h["radius"], h.get("tags", ())))
    for z in raw.get("zones", ()):
        zones.append(Zone(z["zone_id"], Point(*z["center"]), z["radius"],
                          frozenset(z.get("tags", ())), z.get("fvu_id", "")))
    overrides = raw.get("zone_tags", {})
    known = {z.zone_id for z in zones}
    for zone_id in overrides:
        if zone_id not in known:
            raise ScenarioError(f"premises.{pid}.zone_tags.{zone_id}", "no such zone")
    zones = [
        Zone(z.zone_id, z.center, z.radius, z.tags | frozenset(overrides.get(z.zone_id, ())), z.fvu_id)
        for z in zones
    ]
    origin = Point(*raw["origin"]) if "origin" in raw else Point(0.0, 0.0)
    return PremiseLayout(pid, width, height, tuple(zones), raw.get("console_id", ""), origin)


def _device_from(raw: Mapping[str, Any]) -> DeviceProfile:
    behavior = raw.get("behavior", "compliant")
    if isinstance(behavior, Mapping):
        behavior = Behavior.evasive(to_ms(behavior["evasive"]))
    else:
        behavior = Behavior()
    settings = PrivacySettings.from_dict(raw["settings"]) if "settings" in raw else PrivacySettings()
    waypoints = tuple((to_ms(t), Point(x, y)) for t, x, y in raw["waypoints"])
    return DeviceProfile(
        device_id=raw["device_id"],
        settings=settings,
        os_integrity=OsIntegrity(raw.get("os_integrity", "intact")),
        emmd=Emmd(raw.get("emmd", "absent")),
        behavior=behavior,
        position=waypoints[0][1],
        waypoints=waypoints,
    )


def scenario_from_dict(doc: Any) -> Scenario:
    errors = sorted(_VALIDATOR.iter_errors(doc), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    if errors:
        err = errors[0]
        raise ScenarioError(_error_field(err), err.message)
    run = doc["run"]
    network = doc.get("network", {})
    latency_ms = NETWORK_PRESETS_MS[network.get("preset", "wifi")]
    if "latency" in network:
        latency_ms = to_ms(network["latency"])
    egos = doc.get("egos", {})
    layouts = []
    for i, raw in enumerate(doc["premises"]):
        try:
            layouts.append(_layout_from(raw))
        except ScenarioError:
            raise
        except DpeError as exc:
            raise ScenarioError(f"premises[{i}]", str(exc)) from None
    policies: dict[str, list[Policy]] = {}
    for pid, docs in doc.get("policies", {}).items():
        for j, pdoc in enumerate(docs):
            try:
                policies.setdefault(pid, []).append(compile_policy(pdoc))
            except DpeError as exc:
                raise ScenarioError(f"policies.{pid}[{j}]", str(exc)) from None
    updates = []
    for j, raw in enumerate(doc.get("updates", [])):
        try:
            policy = compile_policy(raw["policy"])
        except DpeError as exc:
            raise ScenarioError(f"updates[{j}].policy", str(exc)) from None
        updates.append(PolicyUpdate(to_ms(raw["at"]), raw["premise_id"], policy))
    devices = []
    for i, raw in enumerate(doc["devices"]):
        try:
            devices.append(_device_from(raw))
        except DpeError as exc:
            raise ScenarioError(f"devices[{i}]", str(exc)) from None
    scenario = Scenario(
        layouts=tuple(layouts),
        devices=tuple(devices),
        duration_ms=to_ms(run["duration"]),
        policies=policies,
        link_latency_ms=latency_ms,
        tick_ms=to_ms(run.get("tick", 1.0)),
        seed=run.get("seed", 0),
        sync_period_ms=to_ms(egos.get("sync_period", 0)),
        sync_links=tuple(tuple(l) for l in egos["links"]) if "links" in egos else None,
        jitter_ms=to_ms(network.get("jitter", 0)),
        updates=tuple(updates),
        name=doc.get("name", ""),
    )
    scenario.validate()
    return scenario


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioError("<file>", f"not valid JSON: {exc}") from None
    return scenario_from_dict(doc)


COOKBOOK = ("cinema", "hospital_ward", "two_premise_egos", "rooted_fallback", "breach")


def cookbook_path(name: str) -> Path:
    if name not in COOKBOOK:
        raise KeyError(name)
    return Path(str(resources.files("dpe") / "cookbook" / f"{name}.json"))


def load_cookbook(name: str) -> Scenario:
    return load_scenario(cookbook_path(name))
