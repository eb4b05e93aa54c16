"""Authenticated binary envelope carried on every link.

Frame layout (big-endian)::

    magic        4  b"DPE1"
    version      1  0x01
    msg_type     1
    seq          4  unsigned
    sender_id   16  UTF-8, zero padded
    payload_len  2  unsigned
    payload      payload_len bytes, canonical JSON of the message body
    auth_tag    32  HMAC-SHA-256(key, every preceding byte)

The tag gives integrity and authenticity only; payloads travel in the clear.
"""

from __future__ import annotations

import hashlib
import hmac
import json
import struct
from dataclasses import dataclass, field
from typing import Any, ClassVar, Iterator, Mapping

from dpe.device import EnforcementOutcome, Emmd, OsIntegrity
from dpe.egos import DirectoryEntry
from dpe.errors import DpeError
from dpe.policy import Policy, PrivacySettings, SettingsDelta, compile_policy

MAGIC = b"DPE1"
PROTO_VERSION = 0x01
HEADER = struct.Struct(">4sBBI16sH")
TAG_LEN = 32
KEY_LEN = 32
MIN_FRAME = HEADER.size + TAG_LEN  # 60
MAX_PAYLOAD = 0xFFFF
SENDER_LEN = 16


class DecodeError(DpeError):
    """Base for frame decoding failures; ``name`` is the stable error name."""

    @property
    def name(self) -> str:
        return type(self).__name__


class BadMagic(DecodeError):
    pass


class UnsupportedVersion(DecodeError):
    pass


class Truncated(DecodeError):
    pass


class LengthMismatch(DecodeError):
    pass


class AuthFailure(DecodeError):
    pass


class UnknownType(DecodeError):
    pass


class MalformedBody(DecodeError):
    """Authenticated payload that is not a valid body for its message type."""


class EncodeError(DpeError):
    pass


class Oversize(EncodeError):
    pass


class BadSender(EncodeError):
    pass


def canonical_json(obj: Any) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def _nonempty(name: str, value: Any) -> None:
    if not isinstance(value, str) or not value:
        raise ValueError(f"{name} must be a non-empty string")


# --- message bodies -------------------------------------------------------

@dataclass(frozen=True)
class Interrogate:
    MSG_TYPE: ClassVar[int] = 0x01
    fvu_id: str

    def to_obj(self) -> dict:
        return {"fvu_id": self.fvu_id}

    @classmethod
    def from_obj(cls, obj: Mapping) -> Interrogate:
        return cls(obj["fvu_id"])


@dataclass(frozen=True)
class StateReport:
    MSG_TYPE: ClassVar[int] = 0x02
    device_id: str
    settings: PrivacySettings
    os_integrity: OsIntegrity
    emmd: Emmd

    def to_obj(self) -> dict:
        return {
            "device_id": self.device_id,
            "settings": self.settings.to_dict(),
            "os_integrity": self.os_integrity.value,
            "emmd": self.emmd.value,
        }

    @classmethod
    def from_obj(cls, obj: Mapping) -> StateReport:
        return cls(
            obj["device_id"],
            PrivacySettings.from_dict(obj["settings"]),
            OsIntegrity(obj["os_integrity"]),
            Emmd(obj["emmd"]),
        )


@dataclass(frozen=True)
class Enforce:
    MSG_TYPE: ClassVar[int] = 0x03
    device_id: str
    delta: SettingsDelta

    def to_obj(self) -> dict:
        return {"device_id": self.device_id, "delta": self.delta.to_dict()}

    @classmethod
    def from_obj(cls, obj: Mapping) -> Enforce:
        return cls(obj["device_id"], SettingsDelta.from_dict(obj["delta"]))


@dataclass(frozen=True)
class EnforceAck:
    MSG_TYPE: ClassVar[int] = 0x04
    device_id: str
    outcome: EnforcementOutcome

    def to_obj(self) -> dict:
        return {"device_id": self.device_id, "outcome": self.outcome.to_dict()}

    @classmethod
    def from_obj(cls, obj: Mapping) -> EnforceAck:
        return cls(obj["device_id"], EnforcementOutcome.from_dict(obj["outcome"]))


@dataclass(frozen=True)
class Restore:
    MSG_TYPE: ClassVar[int] = 0x05
    device_id: str

    def to_obj(self) -> dict:
        return {"device_id": self.device_id}

    @classmethod
    def from_obj(cls, obj: Mapping) -> Restore:
        return cls(obj["device_id"])


@dataclass(frozen=True)
class PolicyPush:
    MSG_TYPE: ClassVar[int] = 0x10
    policy: Policy

    def to_obj(self) -> dict:
        return {"policy": self.policy.to_dict()}

    @classmethod
    def from_obj(cls, obj: Mapping) -> PolicyPush:
        return cls(compile_policy(obj["policy"]))


RESULT_OUTCOMES = ("compliant", "enforced:os", "enforced:emmd", "rejected")


@dataclass(frozen=True)
class ResultReport:
    MSG_TYPE: ClassVar[int] = 0x11
    device_id: str
    zone_id: str
    outcome: str
    timestamp: int
    policy_versions: tuple[tuple[str, int], ...] = ()
    # set when the result itself is the alert (a rejected enforcement)
    alert_reason: str = ""

    def __post_init__(self) -> None:
        if self.outcome not in RESULT_OUTCOMES:
            raise ValueError(f"unknown outcome {self.outcome!r}")
        object.__setattr__(self, "policy_versions", tuple(sorted(
            (str(k), int(v)) for k, v in dict(self.policy_versions).items()
        )))

    def to_obj(self) -> dict:
        obj = {
            "device_id": self.device_id,
            "zone_id": self.zone_id,
            "outcome": self.outcome,
            "timestamp": self.timestamp,
            "policy_versions": dict(self.policy_versions),
        }
        if self.alert_reason:
            obj["alert_reason"] = self.alert_reason
        return obj

    @classmethod
    def from_obj(cls, obj: Mapping) -> ResultReport:
        ts = obj["timestamp"]
        if not isinstance(ts, int) or isinstance(ts, bool):
            raise ValueError("timestamp must be an integer")
        return cls(
            obj["device_id"], obj["zone_id"], obj["outcome"], ts,
            tuple(obj.get("policy_versions", {}).items()), obj.get("alert_reason", ""),
        )


@dataclass(frozen=True)
class Alert:
    MSG_TYPE: ClassVar[int] = 0x12
    device_id: str
    zone_id: str
    reason: str

    def __post_init__(self) -> None:
        _nonempty("reason", self.reason)

    def to_obj(self) -> dict:
        return {"device_id": self.device_id, "zone_id": self.zone_id, "reason": self.reason}

    @classmethod
    def from_obj(cls, obj: Mapping) -> Alert:
        return cls(obj["device_id"], obj["zone_id"], obj["reason"])


@dataclass(frozen=True)
class EgosSync:
    MSG_TYPE: ClassVar[int] = 0x20
    entries: tuple[DirectoryEntry, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(self.entries))

    def to_obj(self) -> dict:
        return {"entries": [e.to_dict() for e in self.entries]}

    @classmethod
    def from_obj(cls, obj: Mapping) -> EgosSync:
        return cls(tuple(DirectoryEntry.from_dict(e) for e in obj["entries"]))


MessageBody = (
    Interrogate | StateReport | Enforce | EnforceAck | Restore
    | PolicyPush | ResultReport | Alert | EgosSync
)

BODY_TYPES: dict[int, type] = {
    cls.MSG_TYPE: cls
    for cls in (Interrogate, StateReport, Enforce, EnforceAck, Restore,
                PolicyPush, ResultReport, Alert, EgosSync)
}
TYPE_NAMES: dict[int, str] = {
    0x01: "INTERROGATE", 0x02: "STATE_REPORT", 0x03: "ENFORCE", 0x04: "ENFORCE_ACK",
    0x05: "RESTORE", 0x10: "POLICY_PUSH", 0x11: "RESULT_REPORT", 0x12: "ALERT",
    0x20: "EGOS_SYNC",
}


# --- framing --------------------------------------------------------------

@dataclass(frozen=True)
class Frame:
    msg_type: int
    seq: int
    sender_id: str
    body: Any
    payload_len: int = 0

    @property
    def type_name(self) -> str:
        return TYPE_NAMES[self.msg_type]

    def header_dict(self) -> dict[str, Any]:
        return {
            "magic": MAGIC.decode(),
            "proto_version": PROTO_VERSION,
            "msg_type": self.msg_type,
            "msg_name": self.type_name,
            "seq": self.seq,
            "sender_id": self.sender_id,
            "payload_len": self.payload_len,
        }


def _check_key(key: bytes) -> None:
    if len(key) != KEY_LEN:
        raise ValueError(f"key must be {KEY_LEN} bytes, got {len(key)}")


def encode(body: Any, seq: int, sender_id: str, key: bytes) -> bytes:
    _check_key(key)
    if type(body) not in BODY_TYPES.values():
        raise TypeError(f"not a message body: {type(body).__name__}")
    sender = sender_id.encode("utf-8")
    if len(sender) > SENDER_LEN or b"\x00" in sender:
        raise BadSender(f"sender_id {sender_id!r} must be <= {SENDER_LEN} UTF-8 bytes without NUL")
    if not 0 <= seq <= 0xFFFFFFFF:
        raise ValueError("seq out of range for u32")
    payload = canonical_json(body.to_obj())
    if len(payload) > MAX_PAYLOAD:
        raise Oversize(f"payload is {len(payload)} bytes (max {MAX_PAYLOAD})")
    head = HEADER.pack(MAGIC, PROTO_VERSION, body.MSG_TYPE, seq, sender.ljust(SENDER_LEN, b"\x00"), len(payload))
    signed = head + payload
    return signed + hmac.new(key, signed, hashlib.sha256).digest()


def decode(data: bytes, key: bytes) -> Frame:
    _check_key(key)
    if len(data) < MIN_FRAME:
        raise Truncated(f"frame is {len(data)} bytes, minimum is {MIN_FRAME}")
    magic, version, msg_type, seq, sender_raw, payload_len = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    if version != PROTO_VERSION:
        raise UnsupportedVersion(f"protocol version {version}")
    expected = MIN_FRAME + payload_len
    if len(data) < expected:
        raise Truncated(f"frame is {len(data)} bytes, header announces {expected}")
    if len(data) > expected:
        raise LengthMismatch(f"frame is {len(data)} bytes, header announces {expected}")
    signed, tag = data[:-TAG_LEN], data[-TAG_LEN:]
    if not hmac.compare_digest(hmac.new(key, signed, hashlib.sha256).digest(), tag):
        raise AuthFailure("authentication tag mismatch")
    body_type = BODY_TYPES.get(msg_type)
    if body_type is None:
        raise UnknownType(f"message type 0x{msg_type:02x}")
    try:
        sender_id = sender_raw.rstrip(b"\x00").decode("utf-8")
        obj = json.loads(data[HEADER.size:HEADER.size + payload_len].decode("utf-8"))
        if not isinstance(obj, dict):
            raise ValueError("payload is not an object")
        body = body_type.from_obj(obj)
    except (ValueError, KeyError, TypeError, DpeError) as exc:
        raise MalformedBody(f"{TYPE_NAMES[msg_type]}: {exc}") from None
    return Frame(msg_type, seq, sender_id, body, payload_len)


def frame_length(buf: bytes, offset: int = 0) -> int:
    """Total length of the frame starting at ``offset``, from its header alone."""
    if len(buf) - offset < HEADER.size:
        raise Truncated("not enough bytes for a frame header")
    (payload_len,) = struct.unpack_from(">H", buf, offset + HEADER.size - 2)
    return MIN_FRAME + payload_len


def split_frames(stream: bytes) -> Iterator[bytes]:
    """Split concatenated frames using each header's payload_len."""
    offset = 0
    while offset < len(stream):
        n = frame_length(stream, offset)
        if offset + n > len(stream):
            raise Truncated(f"stream ends inside a frame at offset {offset}")
        yield stream[offset:offset + n]
        offset += n


def premise_key(premise_id: str) -> bytes:
    """Deterministic pre-shared key for a premise (simulation only)."""
    return hashlib.sha256(b"dpe-premise-key:" + premise_id.encode("utf-8")).digest()
