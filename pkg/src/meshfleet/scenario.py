"""Scenario files: world geometry, fleet, network parameters, and the
timed event script, in a small key-value block format.

    # comment
    seed = 42
    duration = 600
    world {
        width_m = 50
        obstacle {
            kind = boulder
            center = 10, 12
            radius = 1.0
        }
    }
    rover {
        name = leo1
        start = 2, 2, 0
    }
    event {
        at = 100
        kind = blackout
        t0 = 100
        t1 = 160
        links = gs-lander
    }

Parse errors carry the offending line number. All defaults are filled in
and echoed into the run log header.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

from .comms import CommsParams
from .geometry import Pose2
from .meshnet import LinkCurve, NetParams
from .world import ArenaSpec, Obstacle

EVENT_KINDS = {
    "blackout": {"t0": float, "t1": float, "links": str},
    "shutdown_rover": {"name": str},
    "disable_autonomy": {"name": str},
    "reboot_rover": {"name": str},
    "script_goal": {"name": str, "x": float, "y": float},
    "script_teleop": {"name": str, "v": float, "omega": float, "duration": float},
}


class ScenarioError(Exception):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass
class RoverSpec:
    name: str
    start: Pose2
    v_max: float = 0.4


@dataclass
class TimedEvent:
    at: float
    kind: str
    args: dict


@dataclass
class TelemetryRates:
    odom_hz: float = 5.0
    status_hz: float = 1.0
    scan_hz: float = 1.0
    map_period: float = 2.0
    merge_period: float = 10.0
    control_hz: float = 5.0
    metrics_period: float = 10.0


@dataclass
class ScenarioSpec:
    world: ArenaSpec = field(default_factory=ArenaSpec)
    rovers: list[RoverSpec] = field(default_factory=list)
    lander_pos: tuple[float, float] = (3.0, 3.0)
    net: NetParams = field(default_factory=NetParams)
    curve: LinkCurve = field(default_factory=LinkCurve)
    comms: CommsParams = field(default_factory=CommsParams)
    rates: TelemetryRates = field(default_factory=TelemetryRates)
    events: list[TimedEvent] = field(default_factory=list)
    seed: int = 0
    duration: float = 600.0
    lander_scan_range: float = 12.0
    deployment_anchors: bool = True
    name: str = "unnamed"

    def echo(self) -> dict:
        """Canonical dict of every effective setting, defaults included."""
        return {
            "name": self.name,
            "seed": self.seed,
            "duration": self.duration,
            "world": {
                "width_m": self.world.width_m,
                "height_m": self.world.height_m,
                "resolution_m": self.world.resolution_m,
                "obstacles": [
                    {"kind": o.kind, "center": list(o.center), "radius": o.radius,
                     "extent": list(o.extent), "rim_width": o.rim_width}
                    for o in self.world.obstacles],
            },
            "lander": {"pos": list(self.lander_pos),
                       "scan_range": self.lander_scan_range,
                       "deployment_anchors": self.deployment_anchors},
            "rovers": [{"name": r.name, "start": list(r.start), "v_max": r.v_max}
                       for r in self.rovers],
            "net": vars(self.net).copy(),
            "curve": {"breakpoints_m": list(self.curve.breakpoints_m),
                      "rates_bps": list(self.curve.rates_bps),
                      "max_range_m": self.curve.max_range_m,
                      "error_exponent": self.curve.error_exponent,
                      "error_cap": self.curve.error_cap},
            "comms": vars(self.comms).copy(),
            "rates": vars(self.rates).copy(),
            "events": [{"at": e.at, "kind": e.kind, **e.args} for e in self.events],
        }


@dataclass
class _Block:
    name: str
    line: int
    fields: list          # (line, key, value)
    children: list        # _Block


def _tokenize(text: str) -> _Block:
    root = _Block("<root>", 0, [], [])
    stack = [root]
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.endswith("{"):
            name = line[:-1].strip()
            if not name:
                raise ScenarioError("block needs a name before '{'", lineno)
            block = _Block(name, lineno, [], [])
            stack[-1].children.append(block)
            stack.append(block)
        elif line == "}":
            if len(stack) == 1:
                raise ScenarioError("unmatched '}'", lineno)
            stack.pop()
        elif "=" in line:
            key, _, value = line.partition("=")
            stack[-1].fields.append((lineno, key.strip(), value.strip()))
        else:
            raise ScenarioError(f"expected 'key = value', block, or '}}': {line!r}", lineno)
    if len(stack) != 1:
        raise ScenarioError(f"unclosed block {stack[-1].name!r}", stack[-1].line)
    return root


def _floats(value: str, lineno: int, n: Optional[int] = None) -> list[float]:
    parts = [p.strip() for p in value.split(",")]
    try:
        out = [float(p) for p in parts]
    except ValueError:
        raise ScenarioError(f"expected numbers, got {value!r}", lineno) from None
    if n is not None and len(out) != n:
        raise ScenarioError(f"expected {n} numbers, got {len(out)}", lineno)
    return out


def _apply_scalar(obj, allowed: dict, lineno: int, key: str, value: str) -> None:
    if key not in allowed:
        raise ScenarioError(f"unknown field {key!r}", lineno)
    typ = allowed[key]
    try:
        if typ is float:
            setattr(obj, key, float(value))
        elif typ is int:
            setattr(obj, key, int(value))
        elif typ is bool:
            setattr(obj, key, value.lower() in ("1", "true", "yes", "on"))
        else:
            setattr(obj, key, value)
    except ValueError:
        raise ScenarioError(f"bad value for {key}: {value!r}", lineno) from None


_NET_FIELDS = {k: type(v) for k, v in vars(NetParams()).items()}
_COMMS_FIELDS = {k: type(v) for k, v in vars(CommsParams()).items()}
_RATES_FIELDS = {k: type(v) for k, v in vars(TelemetryRates()).items()}


def parse_scenario(text: str, name: str = "unnamed") -> ScenarioSpec:
    spec = ScenarioSpec(name=name)
    root = _tokenize(text)

    for lineno, key, value in root.fields:
        if key == "seed":
            spec.seed = int(_floats(value, lineno, 1)[0])
        elif key == "duration":
            spec.duration = _floats(value, lineno, 1)[0]
        elif key == "name":
            spec.name = value
        elif key == "lander_scan_range":
            spec.lander_scan_range = _floats(value, lineno, 1)[0]
        elif key == "deployment_anchors":
            spec.deployment_anchors = value.lower() in ("1", "true", "yes", "on")
        else:
            raise ScenarioError(f"unknown top-level field {key!r}", lineno)

    for block in root.children:
        if block.name == "world":
            _parse_world(spec, block)
        elif block.name == "rover":
            _parse_rover(spec, block)
        elif block.name == "lander":
            for lineno, key, value in block.fields:
                if key == "pos":
                    spec.lander_pos = tuple(_floats(value, lineno, 2))
                else:
                    raise ScenarioError(f"unknown lander field {key!r}", lineno)
        elif block.name == "net":
            for lineno, key, value in block.fields:
                _apply_scalar(spec.net, _NET_FIELDS, lineno, key, value)
            for child in block.children:
                if child.name != "curve":
                    raise ScenarioError(f"unknown net block {child.name!r}", child.line)
                _parse_curve(spec, child)
        elif block.name == "comms":
            for lineno, key, value in block.fields:
                _apply_scalar(spec.comms, _COMMS_FIELDS, lineno, key, value)
        elif block.name == "rates":
            for lineno, key, value in block.fields:
                _apply_scalar(spec.rates, _RATES_FIELDS, lineno, key, value)
        elif block.name == "event":
            _parse_event(spec, block)
        else:
            raise ScenarioError(f"unknown block {block.name!r}", block.line)

    _validate(spec)
    return spec


def parse_scenario_file(path: str) -> ScenarioSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_scenario(fh.read(), name=path)


def _parse_world(spec: ScenarioSpec, block: _Block) -> None:
    for lineno, key, value in block.fields:
        if key in ("width_m", "height_m", "resolution_m"):
            setattr(spec.world, key, _floats(value, lineno, 1)[0])
        else:
            raise ScenarioError(f"unknown world field {key!r}", lineno)
    for child in block.children:
        if child.name != "obstacle":
            raise ScenarioError(f"unknown world block {child.name!r}", child.line)
        ob = Obstacle(kind="", center=(0.0, 0.0))
        for lineno, key, value in child.fields:
            if key == "kind":
                if value not in ("boulder", "crater", "wall"):
                    raise ScenarioError(f"unknown obstacle kind {value!r}", lineno)
                ob.kind = value
            elif key == "center":
                ob.center = tuple(_floats(value, lineno, 2))
            elif key == "radius":
                ob.radius = _floats(value, lineno, 1)[0]
            elif key == "extent":
                ob.extent = tuple(_floats(value, lineno, 2))
            elif key == "rim_width":
                ob.rim_width = _floats(value, lineno, 1)[0]
            else:
                raise ScenarioError(f"unknown obstacle field {key!r}", lineno)
        if not ob.kind:
            raise ScenarioError("obstacle needs a kind", child.line)
        spec.world.obstacles.append(ob)


def _parse_rover(spec: ScenarioSpec, block: _Block) -> None:
    name = None
    start = None
    v_max = 0.4
    for lineno, key, value in block.fields:
        if key == "name":
            name = value
        elif key == "start":
            vals = _floats(value, lineno, 3)
            start = Pose2(vals[0], vals[1], vals[2])
        elif key == "v_max":
            v_max = _floats(value, lineno, 1)[0]
        else:
            raise ScenarioError(f"unknown rover field {key!r}", lineno)
    if name is None or start is None:
        raise ScenarioError("rover needs name and start", block.line)
    if any(r.name == name for r in spec.rovers):
        raise ScenarioError(f"duplicate rover name {name!r}", block.line)
    if name in ("lander", "ground_station", "global"):
        raise ScenarioError(f"reserved name {name!r}", block.line)
    spec.rovers.append(RoverSpec(name, start, v_max))


def _parse_curve(spec: ScenarioSpec, block: _Block) -> None:
    for lineno, key, value in block.fields:
        if key == "breakpoints_m":
            spec.curve.breakpoints_m = tuple(_floats(value, lineno))
        elif key == "rates_mbps":
            spec.curve.rates_bps = tuple(v * 1e6 for v in _floats(value, lineno))
        elif key == "max_range_m":
            spec.curve.max_range_m = _floats(value, lineno, 1)[0]
        elif key == "error_exponent":
            spec.curve.error_exponent = _floats(value, lineno, 1)[0]
        elif key == "error_cap":
            spec.curve.error_cap = _floats(value, lineno, 1)[0]
        else:
            raise ScenarioError(f"unknown curve field {key!r}", lineno)
    if len(spec.curve.breakpoints_m) != len(spec.curve.rates_bps):
        raise ScenarioError("curve needs one rate per breakpoint", block.line)


def _parse_event(spec: ScenarioSpec, block: _Block) -> None:
    at = None
    kind = None
    raw: dict[str, tuple[int, str]] = {}
    for lineno, key, value in block.fields:
        if key == "at":
            at = _floats(value, lineno, 1)[0]
        elif key == "kind":
            kind = value
        else:
            raw[key] = (lineno, value)
    if at is None or kind is None:
        raise ScenarioError("event needs 'at' and 'kind'", block.line)
    if kind not in EVENT_KINDS:
        raise ScenarioError(f"unknown event kind {kind!r}", block.line)
    schema = EVENT_KINDS[kind]
    args = {}
    for key, (lineno, value) in raw.items():
        if key not in schema:
            raise ScenarioError(f"event {kind} has no field {key!r}", lineno)
        if schema[key] is float:
            args[key] = _floats(value, lineno, 1)[0]
        else:
            args[key] = value
    missing = set(schema) - set(args)
    if missing:
        raise ScenarioError(f"event {kind} missing fields {sorted(missing)}", block.line)
    spec.events.append(TimedEvent(at, kind, args))


def _validate(spec: ScenarioSpec) -> None:
    if not spec.rovers:
        raise ScenarioError("scenario needs at least one rover")
    w, h = spec.world.width_m, spec.world.height_m
    for r in spec.rovers:
        if not (0 < r.start.x < w and 0 < r.start.y < h):
            raise ScenarioError(f"rover {r.name} start {r.start} outside arena")
    lx, ly = spec.lander_pos
    if not (0 < lx < w and 0 < ly < h):
        raise ScenarioError(f"lander position {spec.lander_pos} outside arena")
    rover_names = {r.name for r in spec.rovers}
    for ev in spec.events:
        if not (0 <= ev.at <= spec.duration):
            raise ScenarioError(f"event at {ev.at}s outside duration {spec.duration}s")
        name = ev.args.get("name")
        if name is not None and name not in rover_names:
            raise ScenarioError(f"event {ev.kind} names unknown rover {name!r}")
        if ev.kind == "blackout":
            if ev.args["t1"] < ev.args["t0"]:
                raise ScenarioError("blackout needs t1 >= t0")
            if not math.isfinite(ev.args["t0"]):
                raise ScenarioError("blackout window must be finite")
    spec.events.sort(key=lambda e: (e.at, e.kind))
