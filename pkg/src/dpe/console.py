"""Per-premise central management console.

The console owns the premise's policies, fans them out to its field units,
keeps append-only result and alert logs, writes one syslog line per alert,
and maintains the premise's own directory entry for replication. Operations
mutate the state in place and return it; the simulator is the single owner.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Any, Mapping

from dpe.egos import DirectoryEntry, Topology, VersionStamp, results_digest
from dpe.policy import Policy, compile_policy
from dpe.protocol import Alert, EgosSync, PolicyPush, ResultReport


@dataclass(frozen=True)
class ResultRecord:
    timestamp: int
    device_id: str
    zone_id: str
    outcome: str
    policy_versions: tuple[tuple[str, int], ...] = ()

    @property
    def category(self) -> str:
        """``compliant``, ``enforced`` or ``rejected``."""
        return self.outcome.split(":", 1)[0]

    def to_dict(self) -> dict[str, Any]:
        return {
            "timestamp": self.timestamp,
            "device_id": self.device_id,
            "zone_id": self.zone_id,
            "outcome": self.outcome,
            "policy_versions": dict(self.policy_versions),
        }


@dataclass(frozen=True)
class AlertRecord:
    timestamp: int
    device_id: str
    zone_id: str
    reason: str

    def __post_init__(self) -> None:
        if not self.reason:
            raise ValueError("alert reason must be non-empty")

    def to_dict(self) -> dict[str, Any]:
        return {
            "timestamp": self.timestamp,
            "device_id": self.device_id,
            "zone_id": self.zone_id,
            "reason": self.reason,
        }


@dataclass(frozen=True)
class Outgoing:
    """A queued message; ``dest`` is an fvu_id, or ``None`` for the directory service."""

    dest: str | None
    body: Any


@dataclass
class ConsoleState:
    console_id: str
    premise_id: str
    fvu_registry: list[str] = field(default_factory=list)
    topology: Topology = ()
    policies: dict[str, Policy] = field(default_factory=dict)
    results_log: list[ResultRecord] = field(default_factory=list)
    alerts_log: list[AlertRecord] = field(default_factory=list)
    outbox: deque[Outgoing] = field(default_factory=deque)
    syslog: list[str] = field(default_factory=list)
    egos_counter: int = 0
    last_entry: DirectoryEntry | None = None

    def drain(self) -> list[Outgoing]:
        out = list(self.outbox)
        self.outbox.clear()
        return out

    def directory_entry(self) -> DirectoryEntry:
        return DirectoryEntry(
            premise_id=self.premise_id,
            stamp=VersionStamp(self.egos_counter, self.console_id),
            policy_versions=tuple((pid, p.version) for pid, p in self.policies.items()),
            fvu_topology=self.topology,
            results_digest=results_digest(r.to_dict() for r in self.results_log),
        )

    def counts(self) -> dict[str, int]:
        out = {"compliant": 0, "enforced": 0, "rejected": 0}
        for record in self.results_log:
            out[record.category] += 1
        out["alerts"] = len(self.alerts_log)
        return out

    def to_dict(self) -> dict[str, Any]:
        return {
            "console_id": self.console_id,
            "premise_id": self.premise_id,
            "fvu_registry": list(self.fvu_registry),
            "policies": {pid: p.to_dict() for pid, p in sorted(self.policies.items())},
            "results_log": [r.to_dict() for r in self.results_log],
            "alerts_log": [a.to_dict() for a in self.alerts_log],
            "syslog": list(self.syslog),
            "egos_counter": self.egos_counter,
        }


def _append_alert(console: ConsoleState, record: AlertRecord) -> None:
    console.alerts_log.append(record)
    console.syslog.append(
        f"{record.timestamp} ALERT premise={console.premise_id} device={record.device_id} "
        f"zone={record.zone_id} reason={record.reason}"
    )


def refresh_entry(console: ConsoleState) -> DirectoryEntry | None:
    """Bump the own-entry counter if anything changed since the last emission.

    Returns the new entry, or ``None`` when nothing changed.
    """
    candidate = console.directory_entry()
    if console.last_entry is not None and console.last_entry.same_content(candidate):
        return None
    console.egos_counter += 1
    entry = console.directory_entry()
    console.last_entry = entry
    return entry


def publish_policy(console: ConsoleState, policy_body: Policy | str | Mapping[str, Any]) -> ConsoleState:
    policy = policy_body if isinstance(policy_body, Policy) else compile_policy(policy_body)
    previous = console.policies.get(policy.policy_id)
    policy = policy.with_version(previous.version + 1 if previous else 1)
    console.policies[policy.policy_id] = policy
    for fvu_id in console.fvu_registry:
        console.outbox.append(Outgoing(fvu_id, PolicyPush(policy)))
    entry = refresh_entry(console)
    if entry is not None:
        console.outbox.append(Outgoing(None, EgosSync((entry,))))
    return console


def record_result(console: ConsoleState, report: ResultReport) -> ConsoleState:
    record = ResultRecord(
        report.timestamp, report.device_id, report.zone_id, report.outcome, report.policy_versions
    )
    console.results_log.append(record)
    if record.category == "rejected":
        _append_alert(console, AlertRecord(
            report.timestamp, report.device_id, report.zone_id, report.alert_reason or "rejected"
        ))
    return console


def handle_alert(console: ConsoleState, alert: Alert, now: int) -> ConsoleState:
    _append_alert(console, AlertRecord(now, alert.device_id, alert.zone_id, alert.reason))
    return console
