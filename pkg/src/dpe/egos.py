"""Replicated premise directory with last-writer-wins convergence.

Each premise owns exactly one entry and is its only writer, bumping the
entry's counter on every local change. Replicas exchange entries in
anti-entropy rounds (diff, then merge); because merge keeps the entry with
the larger ``(counter, origin_id)`` stamp it is idempotent, commutative and
associative, so any schedule that eventually connects every premise drives
all replicas to the same directory.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping, Sequence

# (fvu_id, zone_id, (x, y), radius)
Topology = tuple[tuple[str, str, tuple[float, float], float], ...]


@dataclass(frozen=True, order=True)
class VersionStamp:
    counter: int
    origin_id: str

    def __post_init__(self) -> None:
        if self.counter < 0:
            raise ValueError("counter must be >= 0")


@dataclass(frozen=True)
class DirectoryEntry:
    premise_id: str
    stamp: VersionStamp
    policy_versions: tuple[tuple[str, int], ...] = ()
    fvu_topology: Topology = ()
    results_digest: bytes = bytes(32)

    def __post_init__(self) -> None:
        object.__setattr__(self, "policy_versions", tuple(sorted(
            (str(k), int(v)) for k, v in dict(self.policy_versions).items()
        )))
        object.__setattr__(self, "fvu_topology", tuple(
            (f, z, (float(c[0]), float(c[1])), float(r)) for f, z, c, r in self.fvu_topology
        ))
        if len(self.results_digest) != 32:
            raise ValueError("results_digest must be 32 bytes")

    def same_content(self, other: DirectoryEntry) -> bool:
        """Equal ignoring the stamp."""
        return (
            self.premise_id == other.premise_id
            and self.policy_versions == other.policy_versions
            and self.fvu_topology == other.fvu_topology
            and self.results_digest == other.results_digest
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "premise_id": self.premise_id,
            "stamp": [self.stamp.counter, self.stamp.origin_id],
            "policy_versions": dict(self.policy_versions),
            "fvu_topology": [[f, z, list(c), r] for f, z, c, r in self.fvu_topology],
            "results_digest": self.results_digest.hex(),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> DirectoryEntry:
        counter, origin = data["stamp"]
        return cls(
            premise_id=data["premise_id"],
            stamp=VersionStamp(int(counter), str(origin)),
            policy_versions=tuple(data["policy_versions"].items()),
            fvu_topology=tuple((f, z, tuple(c), r) for f, z, c, r in data["fvu_topology"]),
            results_digest=bytes.fromhex(data["results_digest"]),
        )


@dataclass(frozen=True)
class EgosDirectory:
    entries: Mapping[str, DirectoryEntry] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", dict(sorted(self.entries.items())))

    def get(self, premise_id: str) -> DirectoryEntry | None:
        return self.entries.get(premise_id)

    def to_dict(self) -> dict[str, Any]:
        return {pid: e.to_dict() for pid, e in self.entries.items()}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> EgosDirectory:
        return cls({pid: DirectoryEntry.from_dict(e) for pid, e in data.items()})


def merge(directory: EgosDirectory, entry: DirectoryEntry) -> EgosDirectory:
    held = directory.entries.get(entry.premise_id)
    if held is not None and held.stamp >= entry.stamp:
        return directory
    entries = dict(directory.entries)
    entries[entry.premise_id] = entry
    return EgosDirectory(entries)


def merge_all(directory: EgosDirectory, entries: Iterable[DirectoryEntry]) -> EgosDirectory:
    for entry in entries:
        directory = merge(directory, entry)
    return directory


def diff(a: EgosDirectory, b: EgosDirectory) -> list[DirectoryEntry]:
    """Entries of ``a`` that are strictly newer than (or missing from) ``b``."""
    out = []
    for pid, entry in a.entries.items():
        other = b.entries.get(pid)
        if other is None or entry.stamp > other.stamp:
            out.append(entry)
    return out


def sync_round(
    directories: Mapping[str, EgosDirectory],
    links: Sequence[tuple[str, str]],
    carry: Callable[[str, str, list[DirectoryEntry]], list[DirectoryEntry]] | None = None,
) -> dict[str, EgosDirectory]:
    """Run one anti-entropy pass over ``links`` in the given order.

    Each ``(src, dst)`` link ships ``diff(src, dst)`` to ``dst``. ``carry`` can
    stand in for the transport (e.g. frame and unframe the entries).
    """
    dirs = dict(directories)
    for src, dst in links:
        entries = diff(dirs[src], dirs[dst])
        if not entries:
            continue
        if carry is not None:
            entries = carry(src, dst, entries)
        dirs[dst] = merge_all(dirs[dst], entries)
    return dirs


def full_mesh(premise_ids: Iterable[str]) -> list[tuple[str, str]]:
    ids = sorted(premise_ids)
    return [(a, b) for a in ids for b in ids if a != b]


def results_digest(records: Iterable[Mapping[str, Any]]) -> bytes:
    h = hashlib.sha256()
    for record in records:
        h.update(json.dumps(record, sort_keys=True, separators=(",", ":")).encode())
        h.update(b"\n")
    return h.digest()
