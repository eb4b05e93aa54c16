"""Deterministic discrete-event simulator wiring devices, units, consoles and the directory.

Time is integer milliseconds. Events run in ``(at, n)`` order where ``n`` is
the insertion sequence number, so a scenario value fully determines the
event trace. Every protocol message is framed with the sender premise's key,
queued with the link latency, and decoded on delivery.

The engine owns the global view no single unit has: which zones cover each
device at every motion tick, and whether the device is inside a premise's
bounding rectangle. Entering a rectangle takes the entry snapshot; leaving
it picks exactly one unit to send RESTORE.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import logging
import random
from dataclasses import dataclass, field, replace
from typing import Any, Iterable

from dpe import fvu as fsm
from dpe.console import ConsoleState, handle_alert, publish_policy, record_result, refresh_entry
from dpe.device import (
    DeviceProfile,
    apply_enforcement,
    evasive_tick,
    position_at,
    restore_on_exit,
    snapshot_on_entry,
)
from dpe.egos import EgosDirectory, full_mesh, merge_all, sync_round
from dpe.errors import DpeError, ScenarioError
from dpe.fvu import FvuState
from dpe.geometry import PremiseLayout, zones_covering
from dpe.policy import Camera, PrivacySettings, SettingsDelta
from dpe.protocol import (
    Alert,
    EgosSync,
    Enforce,
    EnforceAck,
    Interrogate,
    PolicyPush,
    Restore,
    ResultReport,
    StateReport,
    TYPE_NAMES,
    decode,
    encode,
    premise_key,
)
from dpe.scenario import Scenario

log = logging.getLogger(__name__)

EGOS_KEY = hashlib.sha256(b"dpe-egos-key").digest()
TRACE_FORMAT = 1

# event kinds
MOVE = "move"
DELIVER = "deliver"
TIMER = "timer"
EVASIVE = "evasive"
SYNC = "sync"
PUBLISH = "publish"


def _addr_dev(device_id: str) -> str:
    return f"dev:{device_id}"


def _addr_fvu(premise_id: str, fvu_id: str) -> str:
    return f"fvu:{premise_id}/{fvu_id}"


def _addr_cms(premise_id: str) -> str:
    return f"cms:{premise_id}"


def breach_bound_ms(scenario: Scenario) -> int:
    """Probe period plus one probe/report/enforce/ack round trip."""
    return fsm.T_PROBE_MS + 4 * scenario.link_latency_ms


def derive_seed(seed: int, stream: str) -> int:
    digest = hashlib.sha256(f"{seed}:{stream}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass
class Breach:
    at: int
    reenforced_at: int | None = None
    excluded: str = ""

    @property
    def latency_ms(self) -> int | None:
        return None if self.reenforced_at is None else self.reenforced_at - self.at

    def to_dict(self) -> dict[str, Any]:
        return {
            "at_ms": self.at,
            "reenforced_at_ms": self.reenforced_at,
            "latency_ms": self.latency_ms,
            "excluded": self.excluded,
        }


@dataclass
class ExitRecord:
    device_id: str
    premise_id: str
    entered_at: int
    exited_at: int
    entry_settings: PrivacySettings
    restored_at: int | None = None
    ok: bool | None = None
    detail: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "device_id": self.device_id,
            "premise_id": self.premise_id,
            "entered_at_ms": self.entered_at,
            "exited_at_ms": self.exited_at,
            "restored_at_ms": self.restored_at,
            "ok": self.ok,
            "detail": self.detail,
        }


@dataclass
class DeviceMetrics:
    first_detected_ms: int | None = None
    first_compliant_ms: int | None = None
    max_unmonitored_ms: int = 0
    breaches: list[Breach] = field(default_factory=list)

    @property
    def compliance_latency_ms(self) -> int | None:
        if self.first_detected_ms is None or self.first_compliant_ms is None:
            return None
        return self.first_compliant_ms - self.first_detected_ms

    def to_dict(self) -> dict[str, Any]:
        return {
            "first_detected_ms": self.first_detected_ms,
            "first_compliant_ms": self.first_compliant_ms,
            "compliance_latency_ms": self.compliance_latency_ms,
            "max_unmonitored_ms": self.max_unmonitored_ms,
            "breaches": [b.to_dict() for b in self.breaches],
        }


@dataclass
class RunReport:
    name: str
    seed: int
    duration_ms: int
    tick_ms: int
    link_latency_ms: int
    breach_bound_ms: int
    devices: dict[str, DeviceMetrics]
    counts: dict[str, int]
    expected_counts: dict[str, int]
    restores: list[ExitRecord]
    egos: dict[str, Any]
    events: int
    trace_hash: str

    @property
    def conservation_ok(self) -> bool:
        return self.counts == self.expected_counts

    @property
    def restores_ok(self) -> bool:
        return all(r.ok is not False for r in self.restores)

    def breach_latencies(self) -> list[int | None]:
        """Latencies of in-coverage breaches; ``None`` marks one never re-enforced."""
        return [
            b.latency_ms
            for m in self.devices.values()
            for b in m.breaches
            if not b.excluded
        ]

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "seed": self.seed,
            "duration_ms": self.duration_ms,
            "tick_ms": self.tick_ms,
            "link_latency_ms": self.link_latency_ms,
            "breach_bound_ms": self.breach_bound_ms,
            "devices": {d: m.to_dict() for d, m in sorted(self.devices.items())},
            "counts": dict(self.counts),
            "expected_counts": dict(self.expected_counts),
            "conservation_ok": self.conservation_ok,
            "restores": [r.to_dict() for r in self.restores],
            "restores_ok": self.restores_ok,
            "egos": self.egos,
            "events": self.events,
            "trace_hash": self.trace_hash,
        }


@dataclass
class RunResult:
    report: RunReport
    trace: bytes
    consoles: dict[str, ConsoleState]
    directories: dict[str, EgosDirectory]
    devices: dict[str, DeviceProfile]
    fvus: dict[tuple[str, str], FvuState]

    def state_snapshot(self) -> dict[str, Any]:
        """Console and directory state as written at the end of a run."""
        return {
            "consoles": {pid: c.to_dict() for pid, c in sorted(self.consoles.items())},
            "directories": {pid: d.to_dict() for pid, d in sorted(self.directories.items())},
        }


class Engine:
    def __init__(self, scenario: Scenario) -> None:
        scenario.validate()
        self.s = scenario
        self.now = 0
        self._queue: list[tuple[int, int, str, tuple]] = []
        self._n = 0
        self._trace: list[bytes] = []
        self._events = 0

        self.layouts: dict[str, PremiseLayout] = {l.premise_id: l for l in scenario.layouts}
        self.devices: dict[str, DeviceProfile] = {d.device_id: d for d in scenario.devices}
        self.fvus: dict[tuple[str, str], FvuState] = {}
        self.zone_of: dict[tuple[str, str], str] = {}
        self.consoles: dict[str, ConsoleState] = {}
        self.directories: dict[str, EgosDirectory] = {}
        for layout in scenario.layouts:
            pid = layout.premise_id
            for zone in layout.zones:
                self.fvus[(pid, zone.fvu_id)] = FvuState(zone.fvu_id, zone.zone_id, zone.tags, pid)
                self.zone_of[(pid, zone.fvu_id)] = zone.zone_id
            self.consoles[pid] = ConsoleState(
                console_id=layout.console_id,
                premise_id=pid,
                fvu_registry=[z.fvu_id for z in layout.zones],
                topology=tuple(
                    (z.fvu_id, z.zone_id, (z.center.x, z.center.y), z.radius) for z in layout.zones
                ),
            )
            self.directories[pid] = EgosDirectory()
        self.keys = {pid: premise_key(pid) for pid in self.layouts}
        self.sync_links = (
            list(scenario.sync_links) if scenario.sync_links is not None else full_mesh(self.layouts)
        )

        self._seq: dict[str, int] = {}
        self._seen: set[tuple[str, str, int]] = set()
        self._last_delivery: dict[tuple[str, str], int] = {}
        self._timers: set[tuple[str, str, str, int]] = set()
        self._rngs: dict[str, random.Random] = {}

        # engine-side ground truth
        self.inside: dict[str, list[str]] = {d: [] for d in self.devices}
        self.entries: dict[tuple[str, str], tuple[int, PrivacySettings]] = {}
        self.in_range: dict[str, set[tuple[str, str]]] = {d: set() for d in self.devices}
        self.last_fvu: dict[tuple[str, str], str] = {}
        self.last_mark: dict[tuple[str, str], int] = {}
        self.pending_exits: dict[tuple[str, str], ExitRecord] = {}
        self.held_restores: dict[tuple[str, str], ExitRecord] = {}
        self.exits: list[ExitRecord] = []
        self.metrics: dict[str, DeviceMetrics] = {d: DeviceMetrics() for d in self.devices}
        self.expected = {"compliant": 0, "enforced": 0, "rejected": 0, "alerts": 0}
        self._last_change_n = -1
        self._last_sync_n = -1
        self._sync_rounds = 0

    # --- queue and trace ----------------------------------------------------

    def _push(self, at: int, kind: str, data: tuple) -> None:
        heapq.heappush(self._queue, (at, self._n, kind, data))
        self._n += 1

    def _emit(self, record: dict[str, Any]) -> None:
        line = json.dumps(record, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
        self._trace.append(line.encode("utf-8") + b"\n")

    def _rng(self, stream: str) -> random.Random:
        if stream not in self._rngs:
            self._rngs[stream] = random.Random(derive_seed(self.s.seed, stream))
        return self._rngs[stream]

    # --- messaging ------------------------------------------------------------

    def _send(self, src: str, sender_id: str, dst: str, body: Any, key: bytes,
              rng_stream: str = "infra") -> int:
        seq = self._seq.get(src, 0)
        self._seq[src] = seq + 1
        frame = encode(body, seq, sender_id, key)
        at = self.now + self.s.link_latency_ms
        if self.s.jitter_ms:
            at += self._rng(rng_stream).randint(0, self.s.jitter_ms)
        # per-link FIFO
        at = max(at, self._last_delivery.get((src, dst), 0))
        self._last_delivery[(src, dst)] = at
        self._push(at, DELIVER, (src, dst, frame, key))
        return at

    def _send_from_fvu(self, pid: str, fvu_id: str, dst: str, body: Any, device_id: str) -> int:
        return self._send(_addr_fvu(pid, fvu_id), fvu_id, dst, body, self.keys[pid], f"dev:{device_id}")

    def _drain_console(self, pid: str) -> list[dict[str, Any]]:
        console = self.consoles[pid]
        sent = []
        for item in console.drain():
            if item.dest is None:
                # the directory replica is co-located with the console
                self.directories[pid] = merge_all(self.directories[pid], item.body.entries)
                self._last_change_n = self._events
                sent.append({"egos": [e.stamp.counter for e in item.body.entries]})
            else:
                self._send(_addr_cms(pid), console.console_id, _addr_fvu(pid, item.dest),
                           item.body, self.keys[pid])
                sent.append({"to": item.dest, "msg": TYPE_NAMES[item.body.MSG_TYPE]})
        return sent

    # --- FVU action execution ---------------------------------------------------

    def _run_fvu(self, pid: str, fvu_id: str, transition: tuple[FvuState, list]) -> list[str]:
        state, actions = transition
        self.fvus[(pid, fvu_id)] = state
        zone_id = self.zone_of[(pid, fvu_id)]
        src = _addr_fvu(pid, fvu_id)
        carried = {
            (a.device_id, a.alert_reason)
            for a in actions
            if isinstance(a, fsm.ReportResult) and a.alert_reason
        }
        summary = []
        for action in actions:
            if isinstance(action, fsm.Send):
                self._send_from_fvu(pid, fvu_id, _addr_dev(action.dest), action.body, action.dest)
                summary.append(f"send:{TYPE_NAMES[action.body.MSG_TYPE]}")
            elif isinstance(action, fsm.SetTimer):
                key = (pid, fvu_id, action.device_id, action.at)
                if key not in self._timers:
                    self._timers.add(key)
                    self._push(action.at, TIMER, key)
                summary.append(f"timer:{action.at}")
            elif isinstance(action, fsm.ReportResult):
                body = ResultReport(action.device_id, zone_id, action.outcome, self.now,
                                    action.policy_versions, action.alert_reason)
                at = self._send(src, fvu_id, _addr_cms(pid), body, self.keys[pid])
                if at <= self.s.duration_ms:
                    self.expected[action.outcome.split(":")[0]] += 1
                    if action.outcome == "rejected":
                        self.expected["alerts"] += 1
                m = self.metrics.get(action.device_id)
                if m is not None and action.outcome != "rejected" and m.first_compliant_ms is None:
                    m.first_compliant_ms = self.now
                summary.append(f"result:{action.outcome}")
            elif isinstance(action, fsm.RaiseAlert):
                if (action.device_id, action.reason) in carried:
                    summary.append(f"alert:{action.reason}:carried")
                    continue
                at = self._send(src, fvu_id, _addr_cms(pid),
                                Alert(action.device_id, zone_id, action.reason), self.keys[pid])
                if at <= self.s.duration_ms:
                    self.expected["alerts"] += 1
                summary.append(f"alert:{action.reason}")
        return summary

    # --- event handlers --------------------------------------------------------

    def _required_camera_off(self, device_id: str) -> bool:
        required = SettingsDelta()
        for key in self.in_range[device_id]:
            required = required.merge(self.fvus[key].required())
        return required.camera is Camera.OFF

    def _on_move(self, device_id: str) -> dict[str, Any]:
        now = self.now
        dev = self.devices[device_id]
        pos = position_at(dev, now)
        dev = replace(dev, position=pos)
        self.devices[device_id] = dev
        rec: dict[str, Any] = {"device": device_id, "x": pos.x, "y": pos.y}
        inside_now = {pid for pid, layout in self.layouts.items() if layout.contains(pos)}

        # exits, innermost first
        for pid in reversed(list(self.inside[device_id])):
            if pid not in inside_now:
                rec.setdefault("exit", []).append(pid)
                self._exit_premise(device_id, pid)

        # entries, outermost first; deferred to a later tick while a restore is pending
        candidates = sorted(
            (pid for pid in inside_now if pid not in self.inside[device_id]),
            key=lambda p: (-self.layouts[p].width * self.layouts[p].height, p),
        )
        # a new snapshot must not land above one whose RESTORE is still in flight
        restoring = any(k[0] == device_id for k in (*self.pending_exits, *self.held_restores))
        for pid in candidates:
            dev = self.devices[device_id]
            if restoring or dev.inside(pid):
                rec.setdefault("entry_deferred", []).append(pid)
                continue
            self.devices[device_id] = snapshot_on_entry(dev, pid)
            self.inside[device_id].append(pid)
            self.entries[(device_id, pid)] = (now, dev.settings)
            self.last_mark[(device_id, pid)] = now
            rec.setdefault("enter", []).append(pid)

        # coverage transitions within premises the device is inside
        covering: set[tuple[str, str]] = set()
        for pid in self.inside[device_id]:
            for zone in zones_covering(self.layouts[pid], pos):
                covering.add((pid, zone.fvu_id))
        before = self.in_range[device_id]
        for key in sorted(before - covering):
            pid, fvu_id = key
            if pid in self.inside[device_id]:
                self._run_fvu(pid, fvu_id, fsm.on_device_out_of_range(
                    self.fvus[key], device_id, now, left_premise=False))
                rec.setdefault("out_of_range", []).append(fvu_id)
        for key in sorted(covering - before):
            pid, fvu_id = key
            self.last_fvu[(device_id, pid)] = fvu_id
            self._run_fvu(pid, fvu_id, fsm.on_device_in_range(self.fvus[key], device_id, now))
            m = self.metrics[device_id]
            if m.first_detected_ms is None:
                m.first_detected_ms = now
            rec.setdefault("in_range", []).append(fvu_id)
        self.in_range[device_id] = covering
        for key in covering:
            self.last_fvu[(device_id, key[0])] = key[1]

        # monitoring gaps
        m = self.metrics[device_id]
        for pid in self.inside[device_id]:
            if any(k[0] == pid for k in covering):
                gap = now - self.last_mark[(device_id, pid)]
                m.max_unmonitored_ms = max(m.max_unmonitored_ms, gap)
                self.last_mark[(device_id, pid)] = now

        # breaches only count while the device stays under a camera-off zone
        open_breaches = [b for b in m.breaches if b.reenforced_at is None and not b.excluded]
        if open_breaches and not (covering and self._required_camera_off(device_id)):
            for b in open_breaches:
                b.excluded = "left-coverage"
        return rec

    def _exit_premise(self, device_id: str, pid: str) -> None:
        now = self.now
        self.inside[device_id].remove(pid)
        m = self.metrics[device_id]
        m.max_unmonitored_ms = max(m.max_unmonitored_ms, now - self.last_mark.pop((device_id, pid)))
        entered_at, entry_settings = self.entries.pop((device_id, pid))
        record = ExitRecord(device_id, pid, entered_at, now, entry_settings)
        self.exits.append(record)

        held = sorted(k for k in self.in_range[device_id] if k[0] == pid)
        self.in_range[device_id] -= set(held)
        designated = held[0][1] if held else self.last_fvu.get((device_id, pid))
        for _, fvu_id in held:
            if fvu_id != designated:
                self._run_fvu(pid, fvu_id, fsm.on_device_out_of_range(
                    self.fvus[(pid, fvu_id)], device_id, now, left_premise=False))
        if designated is None:
            # never covered here, so no unit knows the device: restore locally
            self._restore(device_id, pid, record)
            return
        self.pending_exits[(device_id, pid)] = record
        self._run_fvu(pid, designated, fsm.on_device_out_of_range(
            self.fvus[(pid, designated)], device_id, now, left_premise=True))

    def _restore(self, device_id: str, pid: str, record: ExitRecord | None) -> str:
        dev = self.devices[device_id]
        if dev.inside(pid) and dev.snapshots[-1][0] != pid and record is not None:
            above = [p for p, _ in dev.snapshots[[p for p, _ in dev.snapshots].index(pid) + 1:]]
            if all((device_id, p) in self.pending_exits for p in above):
                # an inner premise's RESTORE is still in flight (jitter); apply after it
                self.held_restores[(device_id, pid)] = record
                return "held"
        try:
            dev = restore_on_exit(dev, pid)
        except DpeError as exc:
            if record is not None:
                record.ok, record.detail = False, type(exc).__name__
            return type(exc).__name__
        self.devices[device_id] = dev
        if dev.settings.camera is Camera.OFF:
            # the restored snapshot, not an enforcement, ended any open breach
            for b in self.metrics[device_id].breaches:
                if b.reenforced_at is None and not b.excluded:
                    b.excluded = "restored-on-exit"
        if record is None:
            return "unexpected-restore"
        record.restored_at = self.now
        record.ok = dev.settings == record.entry_settings
        if not record.ok:
            record.detail = "settings differ from entry snapshot"
        result = "restored" if record.ok else "mismatch"
        if dev.snapshots:
            held = self.held_restores.pop((device_id, dev.snapshots[-1][0]), None)
            if held is not None:
                self._restore(device_id, held.premise_id, held)
        return result

    def _device_receive(self, device_id: str, src: str, frame_body: Any) -> str:
        dev = self.devices[device_id]
        pid, fvu_id = src[len("fvu:"):].split("/", 1)
        if isinstance(frame_body, Interrogate):
            report = StateReport(device_id, dev.settings, dev.os_integrity, dev.emmd)
            self._send(_addr_dev(device_id), device_id, src, report, self.keys[pid], f"dev:{device_id}")
            return "report"
        if isinstance(frame_body, Enforce):
            if not dev.inside(pid):
                return "ignored-left-premise"
            outcome = apply_enforcement(dev, frame_body.delta)
            self.devices[device_id] = replace(dev, settings=outcome.resulting)
            if outcome.status.applied and outcome.resulting.camera is Camera.OFF:
                for b in self.metrics[device_id].breaches:
                    if b.reenforced_at is None and not b.excluded:
                        b.reenforced_at = self.now
            self._send(_addr_dev(device_id), device_id, src, EnforceAck(device_id, outcome),
                       self.keys[pid], f"dev:{device_id}")
            return outcome.status.value
        if isinstance(frame_body, Restore):
            return self._restore(device_id, pid, self.pending_exits.pop((device_id, pid), None))
        return "ignored"

    def _on_deliver(self, src: str, dst: str, frame: bytes, key: bytes) -> dict[str, Any]:
        decoded = decode(frame, key)
        rec: dict[str, Any] = {
            "src": src, "dst": dst, "msg": decoded.type_name, "seq": decoded.seq,
            "body": decoded.body.to_obj(),
        }
        dup = (dst, src, decoded.seq)
        if dup in self._seen:
            rec["result"] = "duplicate"
            return rec
        self._seen.add(dup)
        body = decoded.body
        kind, _, rest = dst.partition(":")
        if kind == "dev":
            rec["result"] = self._device_receive(rest, src, body)
        elif kind == "fvu":
            pid, fvu_id = rest.split("/", 1)
            state = self.fvus[(pid, fvu_id)]
            if isinstance(body, StateReport):
                transition = fsm.on_state_report(state, body, self.now)
            elif isinstance(body, EnforceAck):
                transition = fsm.on_enforce_ack(state, body, self.now)
            elif isinstance(body, PolicyPush):
                transition = fsm.on_policy_push(state, body.policy, self.now)
            else:
                transition = (state, [])
            rec["actions"] = self._run_fvu(pid, fvu_id, transition)
        elif kind == "cms":
            console = self.consoles[rest]
            if isinstance(body, ResultReport):
                record_result(console, body)
            elif isinstance(body, Alert):
                handle_alert(console, body, self.now)
            self._last_change_n = self._events
        return rec

    def _on_timer(self, pid: str, fvu_id: str, device_id: str, at: int) -> dict[str, Any]:
        self._timers.discard((pid, fvu_id, device_id, at))
        actions = self._run_fvu(pid, fvu_id, fsm.on_timer(self.fvus[(pid, fvu_id)], device_id, self.now))
        return {"fvu": fvu_id, "premise": pid, "device": device_id, "actions": actions}

    def _on_evasive(self, device_id: str) -> dict[str, Any]:
        dev = self.devices[device_id]
        before = dev.settings.camera
        dev, reverted = evasive_tick(dev, self.now)
        self.devices[device_id] = dev
        rec: dict[str, Any] = {"device": device_id, "reverted": reverted}
        if reverted and before is Camera.OFF and self.in_range[device_id] \
                and self._required_camera_off(device_id):
            self.metrics[device_id].breaches.append(Breach(self.now))
            rec["breach"] = True
        return rec

    def _on_sync(self) -> dict[str, Any]:
        bumped = []
        for pid in sorted(self.consoles):
            entry = refresh_entry(self.consoles[pid])
            if entry is not None:
                self.directories[pid] = merge_all(self.directories[pid], [entry])
                self._last_change_n = self._events
                bumped.append(pid)
        shipped = []

        def carry(src: str, dst: str, entries: list) -> list:
            console = self.consoles[src]
            frame = encode(EgosSync(tuple(entries)), self._next_seq(_addr_cms(src)),
                           console.console_id, EGOS_KEY)
            shipped.append([src, dst, len(entries)])
            return list(decode(frame, EGOS_KEY).body.entries)

        self.directories = sync_round(self.directories, self.sync_links, carry)
        self._last_sync_n = self._events
        self._sync_rounds += 1
        return {"bumped": bumped, "shipped": shipped}

    def _next_seq(self, src: str) -> int:
        seq = self._seq.get(src, 0)
        self._seq[src] = seq + 1
        return seq

    def _on_publish(self, index: int) -> dict[str, Any]:
        update = self.s.updates[index]
        publish_policy(self.consoles[update.premise_id], update.policy)
        self._last_change_n = self._events
        return {"premise": update.premise_id, "policy": update.policy.policy_id,
                "sent": self._drain_console(update.premise_id)}

    # --- main loop --------------------------------------------------------------

    def _bootstrap(self) -> None:
        """Install the initial policies at t=0 before any device is sampled."""
        for pid in sorted(self.layouts):
            console = self.consoles[pid]
            for policy in self.s.policies.get(pid, ()):
                publish_policy(console, policy)
            installed = []
            for item in console.drain():
                if item.dest is None:
                    self.directories[pid] = merge_all(self.directories[pid], item.body.entries)
                else:
                    key = (pid, item.dest)
                    self.fvus[key], _ = fsm.on_policy_push(self.fvus[key], item.body.policy, 0)
                    installed.append(item.dest)
            if console.last_entry is None:
                entry = refresh_entry(console)
                self.directories[pid] = merge_all(self.directories[pid], [entry])
            self._emit({"at": 0, "kind": "bootstrap", "premise": pid,
                        "policies": {p: v.version for p, v in sorted(console.policies.items())},
                        "fvus": installed})

    def run(self) -> RunResult:
        s = self.s
        self._emit({"meta": {"format": TRACE_FORMAT, "name": s.name, "seed": s.seed,
                             "duration_ms": s.duration_ms, "tick_ms": s.tick_ms,
                             "latency_ms": s.link_latency_ms, "jitter_ms": s.jitter_ms}})
        self._bootstrap()
        for dev in s.devices:
            self._push(0, MOVE, (dev.device_id,))
            if dev.behavior.is_evasive:
                self._push(dev.behavior.interval_ms, EVASIVE, (dev.device_id,))
        if s.sync_period_ms:
            self._push(s.sync_period_ms, SYNC, ())
        for i, update in enumerate(s.updates):
            self._push(update.at_ms, PUBLISH, (i,))

        while self._queue and self._queue[0][0] <= s.duration_ms:
            at, n, kind, data = heapq.heappop(self._queue)
            if at < self.now:
                raise AssertionError("event queue went backwards")
            self.now = at
            self._events += 1
            if kind == MOVE:
                rec = self._on_move(*data)
                if at + s.tick_ms <= s.duration_ms:
                    self._push(at + s.tick_ms, MOVE, data)
            elif kind == DELIVER:
                rec = self._on_deliver(*data)
            elif kind == TIMER:
                rec = self._on_timer(*data)
            elif kind == EVASIVE:
                rec = self._on_evasive(*data)
                nxt = at + self.devices[data[0]].behavior.interval_ms
                if nxt <= s.duration_ms:
                    self._push(nxt, EVASIVE, data)
            elif kind == SYNC:
                rec = self._on_sync()
                if at + s.sync_period_ms <= s.duration_ms:
                    self._push(at + s.sync_period_ms, SYNC, ())
            elif kind == PUBLISH:
                rec = self._on_publish(*data)
            else:  # pragma: no cover
                raise AssertionError(kind)
            rec.update({"at": at, "n": n, "kind": kind})
            self._emit(rec)
        return self._finish()

    def _finish(self) -> RunResult:
        s = self.s
        end = s.duration_ms
        bound = breach_bound_ms(s)
        for m in self.metrics.values():
            for b in m.breaches:
                if b.reenforced_at is None and not b.excluded and end - b.at < bound:
                    b.excluded = "horizon"
        for record in self.exits:
            if record.ok is None:
                if record.exited_at + s.link_latency_ms + s.jitter_ms <= end:
                    record.ok, record.detail = False, "restore never delivered"
                else:
                    record.detail = "pending at horizon"
        for (device_id, pid), (entered_at, _) in sorted(self.entries.items()):
            m = self.metrics[device_id]
            m.max_unmonitored_ms = max(m.max_unmonitored_ms, end - self.last_mark[(device_id, pid)])

        counts = {"compliant": 0, "enforced": 0, "rejected": 0, "alerts": 0}
        for console in self.consoles.values():
            for k, v in console.counts().items():
                counts[k] += v
        dirs = [d.to_dict() for _, d in sorted(self.directories.items())]
        egos = {
            "sync_rounds": self._sync_rounds,
            "converged": all(d == dirs[0] for d in dirs),
            "quiescent": self._last_sync_n > self._last_change_n,
        }
        trace = b"".join(self._trace)
        report = RunReport(
            name=s.name,
            seed=s.seed,
            duration_ms=end,
            tick_ms=s.tick_ms,
            link_latency_ms=s.link_latency_ms,
            breach_bound_ms=bound,
            devices=self.metrics,
            counts=counts,
            expected_counts=dict(self.expected),
            restores=self.exits,
            egos=egos,
            events=self._events,
            trace_hash=hashlib.sha256(trace).hexdigest(),
        )
        return RunResult(report, trace, self.consoles, self.directories, self.devices, self.fvus)


def run_scenario(scenario: Scenario) -> RunResult:
    """Run ``scenario`` to its duration; raises :class:`ScenarioError` if it is invalid."""
    return Engine(scenario).run()


def check_breach_bound(report: RunReport, scenario: Scenario) -> bool:
    bound = breach_bound_ms(scenario)
    return all(lat is not None and lat <= bound for lat in report.breach_latencies())


def check_properties(report: RunReport, scenario: Scenario) -> dict[str, bool]:
    """The acceptance property suite evaluated by ``dpe run --check``."""
    return {
        "restore_correctness": report.restores_ok,
        "breach_bound": check_breach_bound(report, scenario),
        "conservation": report.conservation_ok,
    }


__all__: Iterable[str] = (
    "Engine", "RunReport", "RunResult", "ScenarioError", "breach_bound_ms",
    "check_breach_bound", "check_properties", "run_scenario",
)
