"""Mobile device model: settings, integrity, EMMD fallback, entry snapshots, motion.

All times are integer milliseconds.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Sequence

from dpe.errors import DpeError
from dpe.geometry import Point
from dpe.policy import Camera, PrivacySettings, SettingsDelta, apply_delta


class DuplicateEntry(DpeError):
    pass


class ExitOrderViolation(DpeError):
    pass


class NotInside(DpeError):
    pass


class EmptyPath(DpeError):
    pass


class OsIntegrity(Enum):
    INTACT = "intact"
    ROOTED = "rooted"


class Emmd(Enum):
    PRESENT = "present"
    ABSENT = "absent"


class EnforcementStatus(Enum):
    APPLIED_VIA_OS = "applied_via_os"
    APPLIED_VIA_EMMD = "applied_via_emmd"
    REJECTED = "rejected"

    @property
    def applied(self) -> bool:
        return self is not EnforcementStatus.REJECTED


@dataclass(frozen=True)
class Behavior:
    """``interval_ms`` of ``None`` is a compliant device; otherwise the device
    re-enables its camera at every positive multiple of the interval."""

    interval_ms: int | None = None

    def __post_init__(self) -> None:
        if self.interval_ms is not None and self.interval_ms <= 0:
            raise ValueError("evasive interval must be > 0")

    @classmethod
    def evasive(cls, interval_ms: int) -> Behavior:
        return cls(interval_ms)

    @property
    def is_evasive(self) -> bool:
        return self.interval_ms is not None


COMPLIANT = Behavior()


@dataclass(frozen=True)
class EnforcementOutcome:
    status: EnforcementStatus
    resulting: PrivacySettings

    def to_dict(self) -> dict:
        return {"status": self.status.value, "resulting": self.resulting.to_dict()}

    @classmethod
    def from_dict(cls, data: dict) -> EnforcementOutcome:
        return cls(EnforcementStatus(data["status"]), PrivacySettings.from_dict(data["resulting"]))


@dataclass(frozen=True)
class DeviceProfile:
    device_id: str
    settings: PrivacySettings = PrivacySettings()
    os_integrity: OsIntegrity = OsIntegrity.INTACT
    emmd: Emmd = Emmd.ABSENT
    behavior: Behavior = COMPLIANT
    snapshots: tuple[tuple[str, PrivacySettings], ...] = ()
    position: Point = Point(0.0, 0.0)
    waypoints: tuple[tuple[int, Point], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "snapshots", tuple(self.snapshots))
        object.__setattr__(self, "waypoints", tuple(self.waypoints))

    def inside(self, premise_id: str) -> bool:
        return any(p == premise_id for p, _ in self.snapshots)


def apply_enforcement(dev: DeviceProfile, required: SettingsDelta) -> EnforcementOutcome:
    if dev.os_integrity is OsIntegrity.INTACT:
        status = EnforcementStatus.APPLIED_VIA_OS
    elif dev.emmd is Emmd.PRESENT:
        status = EnforcementStatus.APPLIED_VIA_EMMD
    else:
        return EnforcementOutcome(EnforcementStatus.REJECTED, dev.settings)
    return EnforcementOutcome(status, apply_delta(dev.settings, required))


def snapshot_on_entry(dev: DeviceProfile, premise_id: str) -> DeviceProfile:
    if dev.inside(premise_id):
        raise DuplicateEntry(f"{dev.device_id} is already inside {premise_id}")
    return replace(dev, snapshots=dev.snapshots + ((premise_id, dev.settings),))


def restore_on_exit(dev: DeviceProfile, premise_id: str) -> DeviceProfile:
    if not dev.inside(premise_id):
        raise NotInside(f"{dev.device_id} is not inside {premise_id}")
    top, saved = dev.snapshots[-1]
    if top != premise_id:
        raise ExitOrderViolation(
            f"{dev.device_id} must leave {top} before {premise_id}"
        )
    return replace(dev, settings=saved, snapshots=dev.snapshots[:-1])


def evasive_tick(dev: DeviceProfile, now_ms: int) -> tuple[DeviceProfile, str | None]:
    """Apply the modeled breach; returns the updated device and the reverted field."""
    k = dev.behavior.interval_ms
    if k is None or now_ms <= 0 or now_ms % k:
        return dev, None
    return replace(dev, settings=replace(dev.settings, camera=Camera.ON)), "camera"


def position_at(
    dev: DeviceProfile | Sequence[tuple[int, Point]], t_ms: int
) -> Point:
    """Piecewise-linear position along time-sorted waypoints, clamped at both ends."""
    waypoints = dev.waypoints if isinstance(dev, DeviceProfile) else dev
    if not waypoints:
        raise EmptyPath("device has no waypoints")
    t0, p0 = waypoints[0]
    if t_ms <= t0:
        return p0
    for t1, p1 in waypoints[1:]:
        if t_ms <= t1:
            if t1 == t0:
                return p1
            f = (t_ms - t0) / (t1 - t0)
            return Point(p0.x + (p1.x - p0.x) * f, p0.y + (p1.y - p0.y) * f)
        t0, p0 = t1, p1
    return p0
