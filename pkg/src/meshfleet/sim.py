"""Scenario execution: wires the kernel, world, rovers, mesh, comms,
mapping, navigation, and ground station into one deterministic run.

Headless runs execute the scripted event list as fast as the queue allows;
serve mode additionally paces simulated time against the wall clock and
accepts live operator commands through the session gateway.
"""

import math
import queue
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import mapping, navigation
from .comms import (BEST_EFFORT, GROUND_STATION, LANDER, RELIABLE, Comms,
                    Envelope)
from .geometry import Pose2, se2_apply, se2_inverse
from .ground_station import GatewayServer, GroundStation
from .kernel import SimKernel
from .mapping import MergeParams, OccupancyGrid, decode_grid, encode_grid
from .meshnet import MeshNet
from .metrics import MetricsLog
from .rover import Rover
from .scenario import ScenarioSpec, TimedEvent
from .world import coverage_fraction, load_world

TELEOP_DEADMAN_S = 0.5
TELEOP_SCRIPT_RATE_HZ = 4.0
ANCHOR_REFRESH_S = 60.0


class RoverAgent:
    """Glue between one rover plant and its topics."""

    def __init__(self, sim: "Simulation", rover: Rover):
        self.sim = sim
        self.rover = rover
        self.name = rover.name
        self.local_map = OccupancyGrid(resolution=sim.spec.world.resolution_m,
                                       origin=Pose2(rover.state.odom_pose.x - 8.0,
                                                    rover.state.odom_pose.y - 8.0, 0.0),
                                       nx=160, ny=160)
        self.navigator = navigation.Navigator(v_max=rover.v_max)
        self.autonomy_enabled = True
        self.anchor: Optional[Pose2] = None
        self.last_teleop: Optional[tuple[float, float]] = None
        self.last_teleop_at = -1e9
        self.map_dirty = False

        comms = sim.comms
        comms.subscribe(self.name, f"{self.name}/cmd_vel", self.on_cmd_vel)
        comms.subscribe(self.name, f"{self.name}/lights", self.on_lights)
        comms.subscribe(self.name, f"{self.name}/reset_odom", self.on_reset_odom)
        comms.subscribe(self.name, f"{self.name}/reboot", self.on_reboot)
        comms.subscribe(self.name, f"{self.name}/nav_goal", self.on_nav_goal)
        comms.subscribe(self.name, "global/anchors", self.on_anchors)

    # -- command handlers ------------------------------------------------------

    def on_cmd_vel(self, env: Envelope) -> None:
        p = env.payload or {}
        self.last_teleop = (float(p.get("v", 0.0)), float(p.get("omega", 0.0)))
        self.last_teleop_at = self.sim.kernel.now

    def on_lights(self, env: Envelope) -> None:
        if not self.rover.online(self.sim.kernel.now):
            return
        self.rover.set_headlights(bool((env.payload or {}).get("on", True)),
                                  self.sim.kernel.now)
        self._ack(env)

    def on_reset_odom(self, env: Envelope) -> None:
        now = self.sim.kernel.now
        if not self.rover.online(now):
            return
        p = env.payload or {}
        if "x" in p:
            known = Pose2(float(p["x"]), float(p["y"]), float(p.get("theta", 0.0)))
        else:
            known = self.rover.state.true_pose  # surveyed position fallback
        self.rover.reset_odometry(known, now)
        self._ack(env)

    def on_reboot(self, env: Envelope) -> None:
        now = self.sim.kernel.now
        if not self.rover.online(now):
            return
        self._ack(env)  # queued before the radio silence starts
        self.rover.reboot(now)

    def on_nav_goal(self, env: Envelope) -> None:
        now = self.sim.kernel.now
        if not self.rover.online(now):
            return
        p = env.payload or {}
        self._ack(env)
        if not self.autonomy_enabled:
            self.navigator._set_status("no_path", now)
            self._publish_nav_status()
            return
        gx, gy = float(p["x"]), float(p["y"])
        if self.anchor is None:
            self.navigator.reject_frame_unknown(now)
            self._publish_nav_status()
            return
        local = se2_apply(se2_inverse(self.anchor), np.array([gx, gy]))
        self.navigator.set_goal(self.local_map, self.rover.state.odom_pose,
                                navigation.Waypoint((float(local[0]), float(local[1]))),
                                now)
        self._publish_nav_status()

    def on_anchors(self, env: Envelope) -> None:
        entry = (env.payload or {}).get(self.name)
        if entry and entry.get("anchored"):
            self.anchor = Pose2(entry["x"], entry["y"], entry["theta"])

    def _ack(self, env: Envelope) -> None:
        cmd_id = (env.payload or {}).get("cmd_id")
        if cmd_id is None:
            return
        self.sim.comms.publish(self.name, f"{self.name}/cmd_ack", 24,
                               qos=RELIABLE, payload={"cmd_id": cmd_id})

    def _publish_nav_status(self) -> None:
        self.sim.comms.publish(self.name, f"{self.name}/nav_status", 24,
                               qos=RELIABLE,
                               payload={"status": self.navigator.status})

    # -- periodic jobs ------------------------------------------------------------

    def control_tick(self, dt: float) -> None:
        now = self.sim.kernel.now
        if not self.rover.online(now):
            return
        if now - self.last_teleop_at <= TELEOP_DEADMAN_S and self.last_teleop:
            cmd = self.last_teleop
        elif self.navigator.path is not None and self.autonomy_enabled:
            drive = self.navigator.control(self.local_map,
                                           self.rover.state.odom_pose, now)
            if self.navigator.status in ("goal_reached", "no_path", "replan"):
                self._publish_nav_status()
            cmd = (drive.v, drive.omega)
        else:
            cmd = (0.0, 0.0)
        self.rover.apply_drive(cmd, dt, now)

    def scan_tick(self) -> None:
        now = self.sim.kernel.now
        scan = self.rover.sense_scan(self.sim.world, now)
        if scan is None:
            return
        mapping.integrate_scan(self.local_map, self.rover.state.odom_pose, scan)
        self.map_dirty = True
        if self.navigator.path is not None:
            before = self.navigator.status
            self.navigator.replan_on_obstacle(self.local_map,
                                              self.rover.state.odom_pose, now)
            if self.navigator.status != before:
                self._publish_nav_status()

    def publish_odom(self) -> None:
        if not self.rover.online(self.sim.kernel.now):
            return
        op = self.rover.state.odom_pose
        self.sim.comms.publish(self.name, f"{self.name}/odom", 48, qos=BEST_EFFORT,
                               payload={"x": round(op.x, 6), "y": round(op.y, 6),
                                        "theta": round(op.theta, 6),
                                        "degraded": self.rover.odometry_degraded()})

    def publish_status(self) -> None:
        if not self.rover.online(self.sim.kernel.now):
            return
        st = self.rover.state
        self.sim.comms.publish(self.name, f"{self.name}/status", 64, qos=BEST_EFFORT,
                               payload={"powered": st.powered,
                                        "headlights": st.headlights,
                                        "v": round(st.twist[0], 6),
                                        "omega": round(st.twist[1], 6),
                                        "drift_m": round(self.rover.drift_m, 6),
                                        "degraded": self.rover.odometry_degraded(),
                                        "nav": self.navigator.status})

    def publish_map(self) -> None:
        if not self.rover.online(self.sim.kernel.now) or not self.map_dirty:
            return
        self.map_dirty = False
        msg = encode_grid(self.local_map)
        nbytes = len(msg["rle"]) + 32
        self.sim.comms.publish(self.name, f"{self.name}/map", nbytes,
                               qos=RELIABLE, payload=msg)


class LanderAgent:
    """Lander: static sensing, map collection, periodic merging.

    Anchors (rover odom frame -> global) are seeded from the deployment
    poses the lander observed, then refreshed by feature matching once the
    maps carry enough structure. Maps with neither a deployment seed nor
    an accepted feature match stay unanchored and merge at identity.
    """

    def __init__(self, sim: "Simulation"):
        self.sim = sim
        self.pos = sim.spec.lander_pos
        self.local_maps: dict[str, OccupancyGrid] = {}
        self.map_versions: dict[str, int] = {}
        self.attempted_versions: dict[str, int] = {}
        self.anchors: dict[str, mapping.MergeTransform] = {}
        self.anchor_sources: dict[str, str] = {}
        self.anchored_at: dict[str, float] = {}
        self.unanchored: set[str] = set()
        self.merged: Optional[OccupancyGrid] = None
        self.own_map = self._sense_static_map()
        sim.comms.subscribe(LANDER, "*/map", self.on_map)
        if sim.spec.deployment_anchors:
            for rspec in sim.spec.rovers:
                # odom frames start equal to the surveyed deployment pose,
                # so the seed transform is the identity
                self.anchors[rspec.name] = mapping.MergeTransform(
                    Pose2(0.0, 0.0, 0.0), overlap_ratio=1.0, inlier_count=0)
                self.anchor_sources[rspec.name] = "deployment"
                self.anchored_at[rspec.name] = 0.0

    def _sense_static_map(self) -> OccupancyGrid:
        """The lander's survey scan from its known, fixed position."""
        from .world import raycast_many
        spec = self.sim.spec
        grid = OccupancyGrid(resolution=spec.world.resolution_m,
                             origin=Pose2(0.0, 0.0, 0.0), nx=16, ny=16)
        angles = np.arange(720) * (2 * math.pi / 720)
        dists = raycast_many(self.sim.world, self.pos, angles,
                             spec.lander_scan_range)
        scan = mapping.Scan(angles=angles, ranges=dists,
                            max_range=spec.lander_scan_range)
        mapping.integrate_scan(grid, Pose2(self.pos[0], self.pos[1], 0.0), scan)
        return grid

    def on_map(self, env: Envelope) -> None:
        if env.namespace == "global":
            return
        if env.seq <= self.map_versions.get(env.namespace, 0):
            return  # reliable streams may complete out of order; keep latest
        self.local_maps[env.namespace] = decode_grid(env.payload)
        self.map_versions[env.namespace] = env.seq

    def _template(self) -> OccupancyGrid:
        return OccupancyGrid(resolution=self.sim.spec.world.resolution_m,
                             origin=Pose2(0.0, 0.0, 0.0),
                             nx=self.sim.world.nx, ny=self.sim.world.ny)

    def _build_reference(self) -> OccupancyGrid:
        """Trusted content only: never match a map against its own
        unanchored copy."""
        placements: list = [(self.own_map, None)]
        for ns in sorted(self.local_maps):
            mt = self.anchors.get(ns)
            if mt is not None:
                placements.append((self.local_maps[ns], mt.transform))
        return mapping.merge(self._template(), placements)

    def merge_tick(self) -> None:
        now = self.sim.kernel.now
        reference = None
        ref_features = None
        for ns in sorted(self.local_maps):
            grid = self.local_maps[ns]
            fresh = self.anchors.get(ns) is not None and \
                now - self.anchored_at.get(ns, -1e9) < ANCHOR_REFRESH_S
            version = self.map_versions.get(ns, -1)
            if fresh or self.attempted_versions.get(ns) == version:
                continue
            self.attempted_versions[ns] = version
            if int(grid.known_mask().sum()) < 300:
                self.unanchored.add(ns)
                continue
            if reference is None:
                reference = self._build_reference()
                ref_features = mapping.extract_features(reference)
            try:
                mt = mapping.match_and_estimate(reference, grid,
                                                rng=self.sim.rng_merge,
                                                params=self.sim.merge_params,
                                                features_a=ref_features)
                if self._refresh_sane(ns, mt):
                    self.anchors[ns] = mt
                    self.anchor_sources[ns] = "features"
                    self.anchored_at[ns] = now
                    self.unanchored.discard(ns)
            except mapping.MergeError:
                if ns not in self.anchors:
                    self.unanchored.add(ns)

        placements = [(self.own_map, None)]
        for ns in sorted(self.local_maps):
            mt = self.anchors.get(ns)
            placements.append((self.local_maps[ns],
                               mt.transform if mt is not None else None))
        self.merged = mapping.merge(self._template(), placements)
        self._publish()

    def _refresh_sane(self, ns: str, mt: mapping.MergeTransform) -> bool:
        """A feature refresh may correct drift-scale error, not teleport."""
        cur = self.anchors.get(ns)
        if cur is None:
            return True
        dx = mt.transform.x - cur.transform.x
        dy = mt.transform.y - cur.transform.y
        dth = abs(mt.transform.theta - cur.transform.theta)
        if math.hypot(dx, dy) > 3.0 or dth > math.radians(15):
            self.sim.comms.events.append(
                (self.sim.kernel.now, "merge_refresh_rejected",
                 f"{ns}: feature transform far from the current anchor"))
            return False
        return True

    def _publish(self) -> None:
        comms = self.sim.comms
        msg = encode_grid(self.merged)
        comms.publish(LANDER, "global/map", len(msg["rle"]) + 32,
                      qos=RELIABLE, payload=msg)
        anchors = {}
        for ns in sorted(self.local_maps):
            mt = self.anchors.get(ns)
            if mt is not None:
                anchors[ns] = {"anchored": True,
                               "source": self.anchor_sources.get(ns, "features"),
                               "x": round(mt.transform.x, 6),
                               "y": round(mt.transform.y, 6),
                               "theta": round(mt.transform.theta, 6),
                               "overlap": round(mt.overlap_ratio, 4),
                               "inliers": mt.inlier_count}
            else:
                anchors[ns] = {"anchored": False}
        comms.publish(LANDER, "global/anchors", 32 + 48 * len(anchors),
                      qos=RELIABLE, payload=anchors)


@dataclass
class ScriptState:
    """GS-side executor for scripted operator actions."""
    teleop_until: dict = None

    def __post_init__(self):
        self.teleop_until = {}


class Simulation:
    def __init__(self, spec: ScenarioSpec, scenario_text: str = "",
                 monitoring: bool = True, omniscient: bool = False):
        self.spec = spec
        self.kernel = SimKernel(seed=spec.seed)
        self.world = load_world(spec.world)
        self.mesh = MeshNet(self.kernel, params=spec.net, curve=spec.curve)
        self.comms = Comms(self.kernel, self.mesh, params=spec.comms)
        self.rng_merge = self.kernel.fork_rng("merge")
        self.merge_params = MergeParams()
        self.omniscient = omniscient
        self.metrics = MetricsLog(spec.echo(), scenario_text, spec.seed)

        # nodes: rovers are radio nodes; the ground station hangs off the
        # lander on the wired (delay-simulated) ground link
        self.mesh.add_node(LANDER, spec.lander_pos)
        self.mesh.add_node(GROUND_STATION, spec.lander_pos, radio=False)
        self.mesh.add_wired_link(LANDER, GROUND_STATION)
        self.comms.add_node(LANDER)
        self.comms.add_node(GROUND_STATION)
        # the gateway vouches for its ground segment while the ground link
        # is down, so rovers keep sending data for it to the lander
        self.comms.set_gateway_proxy(LANDER, GROUND_STATION)

        self.agents: dict[str, RoverAgent] = {}
        for rspec in spec.rovers:
            rover = Rover(rspec.name, rspec.start,
                          self.kernel.fork_rng(f"rover.{rspec.name}"),
                          v_max=rspec.v_max)
            self.mesh.add_node(rspec.name, (rspec.start.x, rspec.start.y))
            self.comms.add_node(rspec.name,
                                powered_fn=lambda r=rover: r.online(self.kernel.now))
            self.agents[rspec.name] = RoverAgent(self, rover)

        self.gs = GroundStation(self.comms, monitoring_enabled=monitoring)
        self.lander = LanderAgent(self)
        self.script = ScriptState()
        self._schedule_periodics()
        self._schedule_events()
        self._paused = False
        self._ingress: "queue.Queue[dict]" = queue.Queue()

    # -- wiring ------------------------------------------------------------------

    def _schedule_periodics(self) -> None:
        k = self.kernel
        rates = self.spec.rates
        k.every(self.spec.net.sample_period, "sim.link_sample", self._link_sample,
                start=0.0)
        self.comms.start_discovery()
        k.every(1.0, "sim.gateway", self.comms.gateway_tick, start=0.5)
        dt = 1.0 / rates.control_hz
        for name, agent in self.agents.items():
            k.every(dt, f"sim.control.{name}",
                    lambda a=agent, d=dt: a.control_tick(d), start=dt)
            k.every(1.0 / rates.scan_hz, f"sim.scan.{name}",
                    lambda a=agent: a.scan_tick(), start=1.0 / rates.scan_hz)
            k.every(1.0 / rates.odom_hz, f"sim.odom.{name}",
                    lambda a=agent: a.publish_odom(), start=0.2)
            k.every(1.0 / rates.status_hz, f"sim.status.{name}",
                    lambda a=agent: a.publish_status(), start=0.3)
            k.every(rates.map_period, f"sim.map.{name}",
                    lambda a=agent: a.publish_map(), start=rates.map_period)
        k.every(rates.merge_period, "sim.merge", self.lander.merge_tick,
                start=rates.merge_period)
        k.every(rates.metrics_period, "sim.metrics", self._sample_metrics,
                start=rates.metrics_period)

    def _link_sample(self) -> None:
        for name, agent in self.agents.items():
            p = agent.rover.state.true_pose
            self.mesh.set_position(name, (p.x, p.y))
        self.mesh.sample_topology()

    def _schedule_events(self) -> None:
        for ev in self.spec.events:
            if ev.kind == "blackout":
                self.mesh.inject_blackout(ev.args["t0"], ev.args["t1"],
                                          self._blackout_selector(ev.args["links"]))
            else:
                self.kernel.schedule(ev.at, f"sim.event.{ev.kind}",
                                     lambda _, e=ev: self._fire_event(e))

    @staticmethod
    def _blackout_selector(links: str):
        if links in ("gs-lander", "all"):
            return links
        if "-" in links:
            return tuple(links.split("-", 1))
        return links

    def _fire_event(self, ev: TimedEvent) -> None:
        now = self.kernel.now
        name = ev.args.get("name")
        agent = self.agents.get(name) if name else None
        if ev.kind == "shutdown_rover":
            agent.rover.shutdown()
            self.mesh.set_node_power(name, False)
        elif ev.kind == "reboot_rover":
            if agent.rover.online(now):
                agent.rover.reboot(now)
        elif ev.kind == "disable_autonomy":
            agent.autonomy_enabled = False
            agent.navigator.cancel(now)
        elif ev.kind == "script_goal":
            self.gs.select_robot(name)
            self.gs.forward_command("nav_goal",
                                    {"x": ev.args["x"], "y": ev.args["y"]})
        elif ev.kind == "script_teleop":
            self.script.teleop_until[name] = now + ev.args["duration"]
            self._script_teleop_tick(name, ev.args["v"], ev.args["omega"])

    def _script_teleop_tick(self, name: str, v: float, omega: float) -> None:
        now = self.kernel.now
        if now > self.script.teleop_until.get(name, -1.0):
            return
        self.gs.select_robot(name)
        self.gs.forward_command("teleop", {"v": v, "omega": omega})
        self.kernel.schedule_in(1.0 / TELEOP_SCRIPT_RATE_HZ, f"sim.script.{name}",
                                lambda _: self._script_teleop_tick(name, v, omega))

    # -- metrics -------------------------------------------------------------------

    def coverage(self) -> float:
        if self.lander.merged is None:
            return 0.0
        return coverage_fraction(self.lander.merged, self.world)

    def _sample_metrics(self) -> None:
        audit = self.mesh.audit
        cov = self.coverage()
        gs_state = self.comms.nodes[GROUND_STATION]
        by_ns: dict[str, int] = {}
        for topic, nbytes in sorted(gs_state.bytes_in_by_topic.items()):
            ns = topic.partition("/")[0]
            by_ns[ns] = by_ns.get(ns, 0) + nbytes
        self.metrics.append({
            "type": "sample",
            "t": self.kernel.now,
            "coverage": cov,
            "wire": {"payload": audit.payload, "overhead": audit.overhead,
                     "retransmissions": audit.retransmissions, "acks": audit.acks,
                     "discovery": audit.discovery,
                     "routing_control": audit.routing_control,
                     "total": audit.total()},
            "frames": {"sent": self.mesh.frames_sent,
                       "delivered": self.mesh.frames_delivered,
                       "dropped": self.mesh.frames_dropped,
                       "in_flight": self.mesh.frames_in_flight},
            "route_changes": len(self.mesh.route_log),
            "deliveries": {"count": self.comms.delivered_count,
                           "latency_max": self.comms.latency_max},
            "gateway": {"queued": len(self.comms.gateway_queue),
                        "queued_bytes": self.comms.gateway_queued_bytes,
                        "drops_best_effort": self.comms.gateway_drops_best_effort,
                        "drops_reliable": self.comms.gateway_drops_reliable},
            "gs_bytes_by_namespace": by_ns,
            "anchored": {ns: (ns not in self.lander.unanchored
                              and ns in self.lander.anchors)
                         for ns in sorted(self.lander.local_maps)},
        })

    def _final_summary(self) -> None:
        audit = self.mesh.audit
        self.metrics.append({
            "type": "summary",
            "t": self.kernel.now,
            "coverage": self.coverage(),
            "wire_total": audit.total(),
            "frames_sent": self.mesh.frames_sent,
            "frames_delivered": self.mesh.frames_delivered,
            "frames_dropped": self.mesh.frames_dropped,
            "route_changes": len(self.mesh.route_log),
            "events": len(self.comms.events),
            "merged_map": encode_grid(self.lander.merged)
            if self.lander.merged is not None else None,
        })

    # -- run modes --------------------------------------------------------------------

    def run_headless(self) -> MetricsLog:
        self.kernel.run_until(self.spec.duration)
        self._final_summary()
        return self.metrics

    def true_poses(self) -> dict:
        out = {}
        for name, agent in self.agents.items():
            p = agent.rover.state.true_pose
            out[name] = {"x": round(p.x, 6), "y": round(p.y, 6),
                         "theta": round(p.theta, 6)}
        return out

    # -- serve mode ----------------------------------------------------------------------

    def submit_command(self, msg: dict) -> None:
        """Thread-safe ingress from the gateway server."""
        self._ingress.put(msg)

    def _apply_ingress(self, msg: dict) -> None:
        mtype = msg.get("type")
        if mtype == "pause":
            self._paused = True
        elif mtype == "resume":
            self._paused = False
        elif mtype == "set_rate":
            factor = float(msg.get("factor", 1.0))
            self._realtime_factor = max(0.01, factor)
        elif mtype == "command":
            kind = msg.get("kind")
            args = msg.get("args") or {}
            if kind == "select":
                self.gs.select_robot(args.get("name"))
            else:
                self.gs.forward_command(kind, args)

    def run_serve(self, port: int, realtime_factor: float = 1.0,
                  snapshot_hz: float = 5.0,
                  wall_limit: Optional[float] = None) -> MetricsLog:
        self._realtime_factor = realtime_factor
        server = GatewayServer(port, self.submit_command)
        self.gateway_port = server.port
        step_wall = 1.0 / snapshot_hz
        started = time.monotonic()
        try:
            while self.kernel.now < self.spec.duration:
                loop_start = time.monotonic()
                if wall_limit is not None and loop_start - started > wall_limit:
                    break
                while True:
                    try:
                        self._apply_ingress(self._ingress.get_nowait())
                    except queue.Empty:
                        break
                if not self._paused:
                    step_sim = step_wall * self._realtime_factor
                    target = min(self.kernel.now + step_sim, self.spec.duration)
                    self.kernel.run_until(target)
                snap = self.gs.snapshot(self.true_poses() if self.omniscient else None)
                snap["paused"] = self._paused
                server.broadcast(snap)
                elapsed = time.monotonic() - loop_start
                if elapsed < step_wall:
                    time.sleep(step_wall - elapsed)
        finally:
            server.close()
        self._final_summary()
        return self.metrics


def run_scenario(spec: ScenarioSpec, scenario_text: str = "",
                 monitoring: bool = True, omniscient: bool = False) -> MetricsLog:
    sim = Simulation(spec, scenario_text, monitoring=monitoring,
                     omniscient=omniscient)
    return sim.run_headless()
