"""Independent reference computations used by the tests.

Nothing here imports the code under test beyond plain value types, so a
bug in the implementation cannot leak into its own oracle.
"""

from __future__ import annotations

import hashlib
import hmac
import math
from fractions import Fraction

# restrictiveness rank per field, least restrictive first, written out by hand
RANKS = {
    "camera": ["on", "off"],
    "microphone": ["on", "off"],
    "audio_profile": ["normal", "vibrate", "silent"],
    "radio_mode": ["normal", "airplane"],
}


def lattice_oracle(width: float, height: float, pitch: float) -> dict[str, tuple[float, float]]:
    """Brute-force hex lattice: scan a generous index box and keep in-bounds centres."""
    dy = pitch * math.sqrt(3) / 2
    out = {}
    rows = int(height / dy) + 3
    cols = int(width / pitch) + 3
    for i in range(-2, rows):
        for j in range(-2, cols):
            x = j * pitch + (pitch / 2 if i % 2 else 0.0)
            y = i * dy
            if 0 <= x <= width and 0 <= y <= height and i >= 0 and j >= 0:
                out[f"z{i}-{j}"] = (x, y)
    return out


def coverage_oracle(width: float, height: float, pitch: float, radius: float, step: float) -> Fraction:
    """Covered share of grid samples, counted with squared distances."""
    centres = list(lattice_oracle(width, height, pitch).values())
    fw, fh, fs = Fraction(width), Fraction(height), Fraction(step)
    xs = [fs * k for k in range(int(fw / fs) + 1)]
    ys = [fs * k for k in range(int(fh / fs) + 1)]
    if xs[-1] != fw:
        xs.append(fw)
    if ys[-1] != fh:
        ys.append(fh)
    r2 = radius * radius
    covered = 0
    for y in ys:
        for x in xs:
            fx, fy = float(x), float(y)
            if any((fx - cx) ** 2 + (fy - cy) ** 2 <= r2 for cx, cy in centres):
                covered += 1
    return Fraction(covered, len(xs) * len(ys))


def merge_oracle(required_dicts: list[dict[str, str]]) -> dict[str, str]:
    """Per field, the highest-ranked value any rule asks for."""
    out: dict[str, str] = {}
    for req in required_dicts:
        for name, value in req.items():
            if name not in out or RANKS[name].index(value) > RANKS[name].index(out[name]):
                out[name] = value
    return out


def parse_frame_oracle(data: bytes, key: bytes) -> dict:
    """Hand-sliced header parse plus tag check; raises ``ValueError`` on any fault."""
    if len(data) < 60:
        raise ValueError("short")
    magic = data[0:4]
    version = data[4]
    msg_type = data[5]
    seq = int.from_bytes(data[6:10], "big")
    sender = data[10:26].rstrip(b"\x00").decode()
    payload_len = int.from_bytes(data[26:28], "big")
    if len(data) != 28 + payload_len + 32:
        raise ValueError("length")
    tag = hmac.new(key, data[: 28 + payload_len], hashlib.sha256).digest()
    if tag != data[28 + payload_len:]:
        raise ValueError("tag")
    return {
        "magic": magic, "version": version, "msg_type": msg_type, "seq": seq,
        "sender": sender, "payload": data[28: 28 + payload_len],
    }


def lww_oracle(entries) -> dict:
    """Final directory state: the greatest stamp per premise over everything seen."""
    best: dict = {}
    for e in entries:
        key = (e.stamp.counter, e.stamp.origin_id)
        held = best.get(e.premise_id)
        if held is None or key > (held.stamp.counter, held.stamp.origin_id):
            best[e.premise_id] = e
    return best


def interpolate_oracle(waypoints: list[tuple[int, float, float]], t: int) -> tuple[Fraction, Fraction]:
    """Exact rational interpolation, clamped at the ends."""
    if t <= waypoints[0][0]:
        return Fraction(waypoints[0][1]), Fraction(waypoints[0][2])
    for (t0, x0, y0), (t1, x1, y1) in zip(waypoints, waypoints[1:]):
        if t0 <= t <= t1:
            if t1 == t0:
                return Fraction(x1), Fraction(y1)
            f = Fraction(t - t0, t1 - t0)
            return Fraction(x0) + (Fraction(x1) - Fraction(x0)) * f, Fraction(y0) + (Fraction(y1) - Fraction(y0)) * f
    return Fraction(waypoints[-1][1]), Fraction(waypoints[-1][2])


def rect_exits(waypoints, bounds, duration_ms: int, tick_ms: int) -> int:
    """Count inside-to-outside transitions of a closed rectangle at tick samples."""
    xmin, ymin, xmax, ymax = bounds
    exits = 0
    was_inside = False
    for t in range(0, duration_ms + 1, tick_ms):
        x, y = interpolate_oracle(waypoints, t)
        inside = xmin <= float(x) <= xmax and ymin <= float(y) <= ymax
        if was_inside and not inside:
            exits += 1
        was_inside = inside
    return exits
