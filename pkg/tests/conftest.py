from __future__ import annotations

import random
from typing import Any

import pytest

from dpe.scenario import scenario_from_dict

FIELD_VALUES = {
    "camera": ["on", "off"],
    "microphone": ["on", "off"],
    "audio_profile": ["normal", "vibrate", "silent"],
    "radio_mode": ["normal", "airplane"],
}
TAGS = ["screen", "quiet", "ward", "lab"]


def _random_required(rng: random.Random) -> dict[str, str]:
    names = rng.sample(sorted(FIELD_VALUES), rng.randint(1, 4))
    return {n: rng.choice(FIELD_VALUES[n]) for n in names}


def random_scenario_doc(seed: int) -> dict[str, Any]:
    """A random but valid scenario in which every device ends outside every premise."""
    rng = random.Random(seed)
    premises, policies = [], {}
    x0 = 0.0
    for k in range(rng.choice([1, 1, 2])):
        pid = f"p{k}"
        width, height = rng.randint(15, 45), rng.randint(10, 30)
        pitch = rng.randint(7, 14)
        radius = round(pitch * rng.uniform(0.55, 0.95), 2)
        premises.append({
            "premise_id": pid, "origin": [x0, 0], "width": width, "height": height,
            "hex": {"pitch": pitch, "radius": radius},
            "zone_tags": {"z0-0": rng.sample(TAGS, rng.randint(1, 2))},
        })
        rules = []
        for r in range(rng.randint(1, 3)):
            scope = "all" if rng.random() < 0.5 else {"tags": rng.sample(TAGS, rng.randint(1, 2))}
            rules.append({"rule_id": f"r{r}", "scope": scope, "required": _random_required(rng)})
        policies[pid] = [{"policy_id": f"pol-{pid}", "premise_id": pid, "rules": rules}]
        x0 += width + 20
    if rng.random() < 0.3:
        # a premise nested inside the first one
        outer = premises[0]
        premises.append({
            "premise_id": "inner", "origin": [2.0, 2.0],
            "width": max(4, outer["width"] // 3), "height": max(4, outer["height"] // 3),
            "hex": {"pitch": 5, "radius": 4},
        })
        policies["inner"] = [{"policy_id": "pol-inner", "premise_id": "inner", "rules": [
            {"rule_id": "r0", "scope": "all", "required": _random_required(rng)}]}]

    devices = []
    for d in range(rng.randint(1, 5)):
        t = 0.0
        waypoints = [[t, -5.0, rng.uniform(0, 10)]]
        for _ in range(rng.randint(1, 4)):
            p = rng.choice(premises)
            t += rng.uniform(2, 12)
            waypoints.append([round(t, 3), p["origin"][0] + rng.uniform(0, p["width"]),
                              rng.uniform(0, p["height"])])
        t += rng.uniform(2, 10)
        waypoints.append([round(t, 3), -5.0 if rng.random() < 0.5 else x0 + 5.0, rng.uniform(-5, 5)])
        dev: dict[str, Any] = {
            "device_id": f"d{d}",
            "os_integrity": rng.choice(["intact", "intact", "rooted"]),
            "emmd": rng.choice(["present", "absent"]),
            "settings": {n: rng.choice(v) for n, v in FIELD_VALUES.items()},
            "waypoints": waypoints,
        }
        if rng.random() < 0.2:
            dev["behavior"] = {"evasive": rng.randint(3, 15)}
        devices.append(dev)

    end = max(dev["waypoints"][-1][0] for dev in devices)
    return {
        "name": f"random-{seed}",
        "premises": premises,
        "policies": policies,
        "devices": devices,
        "network": {"preset": rng.choice(["wifi", "lte"]), "jitter": rng.choice([0, 0, 0.03])},
        "run": {"duration": int(end) + 15, "tick": 1, "seed": seed},
    }


@pytest.fixture
def random_scenario():
    return lambda seed: scenario_from_dict(random_scenario_doc(seed))


# --- acceptance reporting -----------------------------------------------------

_CRITERIA: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, name): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call" and not report.failed:
        return
    number, name = marker.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    if report.failed:
        _CRITERIA[number] = (name, "FAIL", detail or report.longreprtext.splitlines()[-1][:160])
    elif report.when == "call":
        _CRITERIA[number] = (name, "PASS", detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        name, verdict, detail = _CRITERIA[number]
        terminalreporter.write_line(f"[{verdict}] {number}. {name}" + (f" ({detail})" if detail else ""))
