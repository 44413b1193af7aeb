"""Operator backend: fleet view assembled from received telemetry, single
robot selection with no-selection safety, command forwarding, passive
bandwidth monitoring, and the TCP session gateway for the operator console.

The backend sees rover state only through envelopes that reached the
ground station node; ground-truth poses never leak into snapshots unless
the development-only omniscient flag is set.
"""

import json
import socket
import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from .comms import (BEST_EFFORT, GROUND_STATION, RELIABLE, Comms, Envelope)

TELEOP_MAX_RATE_HZ = 10.0
COMMAND_TOPICS = {
    "teleop": ("cmd_vel", BEST_EFFORT),
    "lights": ("lights", RELIABLE),
    "reset_odom": ("reset_odom", RELIABLE),
    "reboot": ("reboot", RELIABLE),
    "nav_goal": ("nav_goal", RELIABLE),
}
COMMAND_BYTES = {"teleop": 24, "lights": 16, "reset_odom": 32,
                 "reboot": 16, "nav_goal": 32}


@dataclass
class RoverView:
    namespace: str
    last_seen: float = -1.0
    odom: Optional[dict] = None
    status: Optional[dict] = None
    nav_status: Optional[str] = None
    map_version: int = -1
    map_msg: Optional[dict] = None
    last_path: list = field(default_factory=list)


class GroundStation:
    """Single-operator backend bound to the ground_station comms node."""

    def __init__(self, comms: Comms, monitoring_enabled: bool = True):
        self.comms = comms
        self.kernel = comms.kernel
        self.monitoring_enabled = monitoring_enabled
        self.selected: Optional[str] = None
        self.selection_stale = False
        self.rovers: dict[str, RoverView] = {}
        self.merged_map_msg: Optional[dict] = None
        self.anchors: dict[str, dict] = {}
        self.events: deque = deque(maxlen=200)
        self.commands_sent = 0
        self.cmd_acks: dict[int, float] = {}
        self._cmd_counter = 0
        self._last_teleop_at = -1e9
        self._traffic: deque = deque()    # (t, namespace, bytes, direction)
        self._traffic_horizon = 300.0

        for pattern in ("*/odom", "*/status", "*/nav_status", "*/map",
                        "*/cmd_ack", "global/map", "global/anchors"):
            comms.subscribe(GROUND_STATION, pattern, self._on_envelope)

    # -- telemetry intake -------------------------------------------------------

    def _view(self, ns: str) -> RoverView:
        if ns not in self.rovers:
            self.rovers[ns] = RoverView(ns)
        return self.rovers[ns]

    def _on_envelope(self, env: Envelope) -> None:
        now = self.kernel.now
        self._record_traffic(env.namespace, env.payload_bytes
                             + self.comms.params.overhead_bytes, "in")
        name = env.topic.partition("/")[2]
        if env.namespace == "global":
            if name == "map":
                self.merged_map_msg = env.payload
            elif name == "anchors":
                self.anchors = env.payload or {}
            return
        view = self._view(env.namespace)
        view.last_seen = now
        view.last_path = list(env.path)
        if name == "odom":
            view.odom = env.payload
        elif name == "status":
            view.status = env.payload
        elif name == "nav_status":
            view.nav_status = (env.payload or {}).get("status")
            self.events.append((now, "nav", f"{env.namespace}: {view.nav_status}"))
        elif name == "map":
            if env.seq > view.map_version:
                view.map_version = env.seq
                view.map_msg = env.payload
        elif name == "cmd_ack":
            cmd_id = (env.payload or {}).get("cmd_id")
            if cmd_id is not None:
                self.cmd_acks[cmd_id] = now

    def _record_traffic(self, ns: str, nbytes: int, direction: str) -> None:
        if not self.monitoring_enabled:
            return
        now = self.kernel.now
        self._traffic.append((now, ns, nbytes, direction))
        while self._traffic and self._traffic[0][0] < now - self._traffic_horizon:
            self._traffic.popleft()

    # -- selection and command forwarding ------------------------------------------

    def select_robot(self, name: Optional[str]) -> Optional[str]:
        self.selected = name
        live = self.comms.live_namespaces(GROUND_STATION)
        self.selection_stale = name is not None and name not in live
        if self.selection_stale:
            self.events.append((self.kernel.now, "warn",
                                f"selected unknown namespace {name!r}; commands held"))
        return self.selected

    def forward_command(self, kind: str, args: Optional[dict] = None) -> Optional[dict]:
        """Publish one command on the selected namespace; None when unsent."""
        args = dict(args or {})
        if self.selected is None:
            self.events.append((self.kernel.now, "warn",
                                f"no robot selected; {kind} dropped"))
            return None
        if self.selection_stale and self.selected not in self.comms.live_namespaces(GROUND_STATION):
            self.events.append((self.kernel.now, "warn",
                                f"selection {self.selected!r} not live; {kind} held"))
            return None
        self.selection_stale = False
        if kind not in COMMAND_TOPICS:
            self.events.append((self.kernel.now, "warn", f"unknown command {kind!r}"))
            return None
        topic_name, qos = COMMAND_TOPICS[kind]
        now = self.kernel.now
        if kind == "teleop":
            if now - self._last_teleop_at < 1.0 / TELEOP_MAX_RATE_HZ - 1e-9:
                return None
            self._last_teleop_at = now
        self._cmd_counter += 1
        args["cmd_id"] = self._cmd_counter
        topic = f"{self.selected}/{topic_name}"
        nbytes = COMMAND_BYTES[kind]
        self.comms.publish(GROUND_STATION, topic, nbytes, qos=qos, payload=args)
        self._record_traffic(self.selected, nbytes + self.comms.params.overhead_bytes, "out")
        self.commands_sent += 1
        return {"topic": topic, "qos": qos, "cmd_id": self._cmd_counter}

    # -- passive monitoring -----------------------------------------------------------

    def bandwidth_report(self, window: float = 10.0) -> dict:
        """Per-namespace byte rates over the trailing window; emits nothing."""
        now = self.kernel.now
        t0 = now - window
        out: dict[str, dict] = {}
        for t, ns, nbytes, direction in self._traffic:
            if t < t0:
                continue
            entry = out.setdefault(ns, {"in_bytes": 0, "out_bytes": 0})
            entry["in_bytes" if direction == "in" else "out_bytes"] += nbytes
        for ns, entry in out.items():
            entry["in_bps"] = entry["in_bytes"] * 8.0 / window
            entry["out_bps"] = entry["out_bytes"] * 8.0 / window
        return out

    # -- snapshots -----------------------------------------------------------------------

    def snapshot(self, omniscient_poses: Optional[dict] = None) -> dict:
        now = self.kernel.now
        live = self.comms.live_namespaces(GROUND_STATION)
        snap = {
            "type": "snapshot",
            "sim_time": round(now, 6),
            "namespaces": {ns: round(t, 6) for ns, t in sorted(live.items())},
            "selected": self.selected,
            "commands_sent": self.commands_sent,
            "rovers": {},
            "merged_map": self.merged_map_msg,
            "anchors": self.anchors,
            "bandwidth": self.bandwidth_report(),
            "events": [list(e) for e in list(self.events)[-20:]],
        }
        for ns, view in sorted(self.rovers.items()):
            snap["rovers"][ns] = {
                "last_seen": round(view.last_seen, 6),
                "telemetry_age": round(now - view.last_seen, 6) if view.last_seen >= 0 else None,
                "odom": view.odom,
                "status": view.status,
                "nav_status": view.nav_status,
                "map_version": view.map_version,
                "map": view.map_msg,
                "path_to_gs": view.last_path,
            }
        if omniscient_poses is not None:
            snap["true_poses"] = omniscient_poses
        return snap


# -- gateway wire protocol ------------------------------------------------------

def encode_message(msg: dict) -> bytes:
    """Length-prefixed UTF-8 JSON: ASCII byte count, newline, payload."""
    body = json.dumps(msg, separators=(",", ":"), sort_keys=True).encode("utf-8")
    return str(len(body)).encode("ascii") + b"\n" + body


class MessageDecoder:
    """Incremental decoder for the length-prefixed gateway framing."""

    def __init__(self):
        self._buf = b""

    def feed(self, data: bytes) -> list[dict]:
        self._buf += data
        out = []
        while True:
            nl = self._buf.find(b"\n")
            if nl < 0:
                break
            try:
                length = int(self._buf[:nl].decode("ascii"))
            except ValueError as exc:
                raise ValueError(f"bad length prefix: {self._buf[:nl]!r}") from exc
            if len(self._buf) < nl + 1 + length:
                break
            body = self._buf[nl + 1:nl + 1 + length]
            self._buf = self._buf[nl + 1 + length:]
            out.append(json.loads(body.decode("utf-8")))
        return out


class GatewaySession:
    def __init__(self, sock: socket.socket, addr):
        self.sock = sock
        self.addr = addr
        self.decoder = MessageDecoder()
        self.lock = threading.Lock()
        self.alive = True

    def send(self, msg: dict) -> None:
        data = encode_message(msg)
        with self.lock:
            try:
                self.sock.sendall(data)
            except OSError:
                self.alive = False


class GatewayServer:
    """TCP session gateway: snapshots out, operator commands in.

    Socket I/O runs outside the sim loop; the only shared points are the
    inbound command queue (drained by the sim at loop boundaries) and the
    snapshot fan-out.
    """

    def __init__(self, port: int, on_command: Callable[[dict], None]):
        self.on_command = on_command
        self.sessions: list[GatewaySession] = []
        self._lock = threading.Lock()
        self._server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._server.bind(("127.0.0.1", port))
        self._server.listen(8)
        self.port = self._server.getsockname()[1]
        self._closing = False
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept_thread.start()

    def _accept_loop(self) -> None:
        while not self._closing:
            try:
                sock, addr = self._server.accept()
            except OSError:
                return
            session = GatewaySession(sock, addr)
            with self._lock:
                self.sessions.append(session)
            session.send({"type": "hello", "protocol": 1})
            t = threading.Thread(target=self._read_loop, args=(session,), daemon=True)
            t.start()

    def _read_loop(self, session: GatewaySession) -> None:
        while session.alive and not self._closing:
            try:
                data = session.sock.recv(65536)
            except OSError:
                break
            if not data:
                break
            try:
                for msg in session.decoder.feed(data):
                    if not isinstance(msg, dict) or "type" not in msg:
                        session.send({"type": "error", "error": "messages need a type"})
                        continue
                    self.on_command(msg)
            except (ValueError, json.JSONDecodeError) as exc:
                session.send({"type": "error", "error": str(exc)})
        session.alive = False

    def broadcast(self, msg: dict) -> None:
        with self._lock:
            sessions = [s for s in self.sessions if s.alive]
            self.sessions = sessions
        for s in sessions:
            s.send(msg)

    def close(self) -> None:
        self._closing = True
        try:
            self._server.close()
        except OSError:
            pass
        with self._lock:
            for s in self.sessions:
                try:
                    s.sock.close()
                except OSError:
                    pass
