"""Field verification unit: a pure per-zone session state machine.

Every transition takes the current :class:`FvuState` plus one event and
returns the next state with a list of actions. Actions are plain values
(send a message, arm a timer, raise an alert, report a result); the caller
decides how to carry them out. Nothing here touches a clock or a socket.

Session lifecycle for one device::

    in range ──> AWAIT_REPORT ──compliant──────────────> MONITORING
                      │                                   │   ▲
                      └─non-compliant─> AWAIT_ACK ─applied┘   │
                                           │                  │
                                        rejected ─> ALERTED   probe: back to AWAIT_REPORT

Timeouts resend up to ``MAX_ATTEMPTS`` times before alerting.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Mapping

from dpe.device import EnforcementStatus
from dpe.policy import Policy, SettingsDelta, is_compliant, required_settings
from dpe.protocol import Enforce, EnforceAck, Interrogate, Restore, StateReport

log = logging.getLogger(__name__)

T_REPORT_MS = 2_000
T_ACK_MS = 2_000
T_PROBE_MS = 10_000
MAX_ATTEMPTS = 3

REASON_REJECTED = "emmd-absent-rooted"
REASON_UNRESPONSIVE = "unresponsive"
REASON_ENFORCE_TIMEOUT = "enforce-timeout"


class Phase(Enum):
    DETECTED = "detected"
    AWAIT_REPORT = "await_report"
    EVALUATING = "evaluating"
    AWAIT_ACK = "await_ack"
    MONITORING = "monitoring"
    ALERTED = "alerted"


@dataclass(frozen=True)
class Session:
    phase: Phase
    # report/ack deadline, or the next probe time while MONITORING
    deadline: int | None = None
    attempts: int = 0
    pending: SettingsDelta = SettingsDelta()

    def __post_init__(self) -> None:
        if not 0 <= self.attempts <= MAX_ATTEMPTS:
            raise ValueError(f"attempts out of range: {self.attempts}")


# --- actions --------------------------------------------------------------

@dataclass(frozen=True)
class Send:
    body: Any
    dest: str  # device id


@dataclass(frozen=True)
class SetTimer:
    device_id: str
    at: int


@dataclass(frozen=True)
class RaiseAlert:
    device_id: str
    reason: str


@dataclass(frozen=True)
class ReportResult:
    device_id: str
    outcome: str
    policy_versions: tuple[tuple[str, int], ...] = ()
    alert_reason: str = ""


# --- state ----------------------------------------------------------------

@dataclass(frozen=True)
class FvuState:
    fvu_id: str
    zone_id: str
    zone_tags: frozenset[str] = frozenset()
    premise_id: str = ""
    sessions: Mapping[str, Session] = field(default_factory=dict)
    policies: Mapping[str, Policy] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "zone_tags", frozenset(self.zone_tags))
        object.__setattr__(self, "sessions", dict(self.sessions))
        object.__setattr__(self, "policies", dict(self.policies))

    def required(self) -> SettingsDelta:
        out = SettingsDelta()
        for pid in sorted(self.policies):
            out = out.merge(required_settings(self.policies[pid], self.zone_tags))
        return out

    def policy_versions(self) -> tuple[tuple[str, int], ...]:
        return tuple((pid, p.version) for pid, p in sorted(self.policies.items()))

    def with_session(self, device_id: str, session: Session | None) -> FvuState:
        sessions = dict(self.sessions)
        if session is None:
            sessions.pop(device_id, None)
        else:
            sessions[device_id] = session
        return replace(self, sessions=sessions)


Transition = tuple[FvuState, list]


def _interrogate(fvu: FvuState, device_id: str, now: int, attempts: int) -> Transition:
    deadline = now + T_REPORT_MS
    state = fvu.with_session(device_id, Session(Phase.AWAIT_REPORT, deadline, attempts))
    return state, [Send(Interrogate(fvu.fvu_id), device_id), SetTimer(device_id, deadline)]


def _monitor(fvu: FvuState, device_id: str, now: int) -> tuple[FvuState, SetTimer]:
    probe = now + T_PROBE_MS
    return fvu.with_session(device_id, Session(Phase.MONITORING, probe)), SetTimer(device_id, probe)


def on_device_in_range(fvu: FvuState, device_id: str, now: int) -> Transition:
    if device_id in fvu.sessions:
        return fvu, []
    return _interrogate(fvu, device_id, now, attempts=1)


def on_state_report(fvu: FvuState, report: StateReport, now: int) -> Transition:
    device_id = report.device_id
    session = fvu.sessions.get(device_id)
    if session is None:
        log.info("%s: UnknownSession for state report from %s", fvu.fvu_id, device_id)
        return fvu, []
    if session.phase not in (Phase.DETECTED, Phase.AWAIT_REPORT, Phase.MONITORING):
        log.debug("%s: ignoring report from %s in %s", fvu.fvu_id, device_id, session.phase.value)
        return fvu, []
    required = fvu.required()
    ok, deviating = is_compliant(report.settings, required)
    if ok:
        state, timer = _monitor(fvu, device_id, now)
        return state, [ReportResult(device_id, "compliant", fvu.policy_versions()), timer]
    # only the deviating fields; re-sending satisfied ones could loosen a stricter device
    delta = required.restrict(deviating)
    deadline = now + T_ACK_MS
    state = fvu.with_session(device_id, Session(Phase.AWAIT_ACK, deadline, 1, delta))
    return state, [Send(Enforce(device_id, delta), device_id), SetTimer(device_id, deadline)]


def on_enforce_ack(fvu: FvuState, ack: EnforceAck, now: int) -> Transition:
    device_id = ack.device_id
    session = fvu.sessions.get(device_id)
    if session is None:
        log.info("%s: UnknownSession for ack from %s", fvu.fvu_id, device_id)
        return fvu, []
    if session.phase is not Phase.AWAIT_ACK:
        log.debug("%s: late ack from %s ignored", fvu.fvu_id, device_id)
        return fvu, []
    status = ack.outcome.status
    if status.applied:
        channel = "emmd" if status is EnforcementStatus.APPLIED_VIA_EMMD else "os"
        state, timer = _monitor(fvu, device_id, now)
        return state, [ReportResult(device_id, f"enforced:{channel}", fvu.policy_versions()), timer]
    state = fvu.with_session(device_id, Session(Phase.ALERTED))
    return state, [
        RaiseAlert(device_id, REASON_REJECTED),
        ReportResult(device_id, "rejected", fvu.policy_versions(), alert_reason=REASON_REJECTED),
    ]


def on_timer(fvu: FvuState, device_id: str, now: int) -> Transition:
    session = fvu.sessions.get(device_id)
    if session is None or session.deadline != now:
        return fvu, []  # stale timer
    if session.phase is Phase.AWAIT_REPORT:
        if session.attempts < MAX_ATTEMPTS:
            return _interrogate(fvu, device_id, now, session.attempts + 1)
        return fvu.with_session(device_id, Session(Phase.ALERTED)), [
            RaiseAlert(device_id, REASON_UNRESPONSIVE)
        ]
    if session.phase is Phase.AWAIT_ACK:
        if session.attempts < MAX_ATTEMPTS:
            deadline = now + T_ACK_MS
            nxt = replace(session, deadline=deadline, attempts=session.attempts + 1)
            return fvu.with_session(device_id, nxt), [
                Send(Enforce(device_id, session.pending), device_id),
                SetTimer(device_id, deadline),
            ]
        return fvu.with_session(device_id, Session(Phase.ALERTED)), [
            RaiseAlert(device_id, REASON_ENFORCE_TIMEOUT)
        ]
    if session.phase is Phase.MONITORING:
        return _interrogate(fvu, device_id, now, attempts=1)
    return fvu, []


def on_device_out_of_range(
    fvu: FvuState, device_id: str, now: int, left_premise: bool = False
) -> Transition:
    """Drop the device's session.

    ``left_premise`` is the engine's global view: the device has left the
    premise and this unit was chosen to restore it. Only then is RESTORE
    sent, even if this unit's own session was already gone.
    """
    state = fvu.with_session(device_id, None) if device_id in fvu.sessions else fvu
    actions = [Send(Restore(device_id), device_id)] if left_premise else []
    return state, actions


def on_policy_push(fvu: FvuState, policy: Policy, now: int) -> Transition:
    current = fvu.policies.get(policy.policy_id)
    if current is not None and policy.version < current.version:
        log.warning(
            "%s: StalePolicy %s v%d < active v%d",
            fvu.fvu_id, policy.policy_id, policy.version, current.version,
        )
        return fvu, []
    policies = dict(fvu.policies)
    policies[policy.policy_id] = policy
    state = replace(fvu, policies=policies)
    actions: list = []
    for device_id in sorted(state.sessions):
        if state.sessions[device_id].phase is Phase.MONITORING:
            state, probe = _interrogate(state, device_id, now, attempts=1)
            actions.extend(probe)
    return state, actions
