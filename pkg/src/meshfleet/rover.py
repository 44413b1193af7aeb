"""Rover plant model: drive kinematics, drifting odometry, range sensing,
headlights, and power state.

True pose integrates an exact unicycle model. Odometry integrates the same
commands plus a drift term that accumulates with distance traveled: the
drift direction is fixed per rover (drawn once from its RNG stream) and its
magnitude is rate * distance, doubled above a speed knee. This keeps
|odom - true| exactly equal to the accumulated drift between resets, which
the operator clears with an odometry reset.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import Pose2, wrap_angle
from .kernel import RngStream
from .mapping import Scan
from .world import GroundTruthGrid, raycast_many

V_MAX_DEFAULT = 0.4
REBOOT_DURATION_DEFAULT = 30.0
DARK_FACTOR_DEFAULT = 0.5
LOSS_THRESHOLD_DEFAULT = 1.0


class RoverError(Exception):
    pass


@dataclass
class OdometryModel:
    drift_rate: float = 0.02      # pose error per meter traveled
    speed_knee: float = 0.05      # m/s; above this the drift rate doubles
    loss_threshold: float = LOSS_THRESHOLD_DEFAULT   # m; degraded flag


@dataclass
class ScanConfig:
    beams: int = 360
    max_range: float = 8.0
    range_noise_sigma: float = 0.02
    dark_factor: float = DARK_FACTOR_DEFAULT

    def __post_init__(self):
        if self.beams < 8:
            raise RoverError("scan needs at least 8 beams")
        if self.max_range <= 0:
            raise RoverError("max_range must be positive")


@dataclass
class RoverState:
    name: str
    true_pose: Pose2
    odom_pose: Pose2
    twist: tuple[float, float] = (0.0, 0.0)
    headlights: bool = True
    powered: bool = True


class Rover:
    """One rover: state, actuation and sensing entry points.

    Mutations happen only inside sim event handlers; telemetry consumers
    receive value snapshots.
    """

    def __init__(self, name: str, start: Pose2, rng: RngStream,
                 v_max: float = V_MAX_DEFAULT,
                 odometry: Optional[OdometryModel] = None,
                 scan_config: Optional[ScanConfig] = None,
                 reboot_duration: float = REBOOT_DURATION_DEFAULT):
        self.state = RoverState(name=name, true_pose=start, odom_pose=start)
        self.v_max = v_max
        self.odometry = odometry or OdometryModel()
        self.scan_config = scan_config or ScanConfig()
        self.reboot_duration = reboot_duration
        self.rng = rng
        drift_dir = rng.uniform(0.0, 2 * math.pi)
        self._drift_unit = (math.cos(drift_dir), math.sin(drift_dir))
        self.drift_m = 0.0
        self.rebooting_until: Optional[float] = None
        self.warnings: list[str] = []

    @property
    def name(self) -> str:
        return self.state.name

    def online(self, now: float) -> bool:
        """Powered and not mid-reboot: able to emit frames and act."""
        if not self.state.powered:
            return False
        if self.rebooting_until is not None:
            if now < self.rebooting_until:
                return False
            self.rebooting_until = None
        return True

    def odometry_degraded(self) -> bool:
        return self.drift_m > self.odometry.loss_threshold

    # -- actuation ----------------------------------------------------------

    def apply_drive(self, cmd: tuple[float, float], dt: float, now: float = 0.0) -> RoverState:
        """Integrate a (v, omega) command for dt seconds."""
        if not self.online(now):
            self.warnings.append(f"drive command dropped: {self.name} offline")
            self.state.twist = (0.0, 0.0)
            return self.state
        v = max(-self.v_max, min(self.v_max, cmd[0]))
        omega = cmd[1]
        self.state.twist = (v, omega)
        self.state.true_pose = _integrate_unicycle(self.state.true_pose, v, omega, dt)
        self.state.odom_pose = _integrate_unicycle(self.state.odom_pose, v, omega, dt)
        dist = abs(v) * dt
        if dist > 0:
            rate = self.odometry.drift_rate
            if abs(v) > self.odometry.speed_knee:
                rate *= 2.0
            step = rate * dist * self.rng.uniform(0.6, 1.0)
            self.drift_m += step
            ux, uy = self._drift_unit
            op = self.state.odom_pose
            self.state.odom_pose = Pose2(op.x + ux * step, op.y + uy * step, op.theta)
        return self.state

    def reset_odometry(self, known: Pose2, now: float = 0.0) -> RoverState:
        if not self.online(now):
            raise RoverError(f"{self.name} is offline; cannot reset odometry")
        self.state.odom_pose = known
        self.drift_m = 0.0
        return self.state

    def set_headlights(self, on: bool, now: float = 0.0) -> None:
        if not self.online(now):
            raise RoverError(f"{self.name} is offline; cannot switch lights")
        self.state.headlights = bool(on)

    def reboot(self, now: float) -> None:
        if not self.online(now):
            raise RoverError(f"{self.name} is offline; cannot reboot")
        self.rebooting_until = now + self.reboot_duration
        self.state.twist = (0.0, 0.0)

    def shutdown(self) -> None:
        self.state.powered = False
        self.state.twist = (0.0, 0.0)

    # -- sensing -------------------------------------------------------------

    def sense_scan(self, world: GroundTruthGrid, now: float = 0.0) -> Optional[Scan]:
        """Range sweep from the true pose; None when the rover is offline.

        Headlights off halve the effective range. Gaussian range noise is
        applied to returning beams; readings never exceed the effective
        range (they censor instead).
        """
        if not self.online(now):
            return None
        cfg = self.scan_config
        eff_range = cfg.max_range * (1.0 if self.state.headlights else cfg.dark_factor)
        angles = np.arange(cfg.beams) * (2 * math.pi / cfg.beams)
        pose = self.state.true_pose
        dists = raycast_many(world, (pose.x, pose.y), pose.theta + angles, eff_range)
        if cfg.range_noise_sigma > 0:
            noise = self.rng.normal_array(cfg.range_noise_sigma, cfg.beams)
            hit = np.isfinite(dists)
            dists[hit] = np.clip(dists[hit] + noise[hit], 0.0, eff_range)
        return Scan(angles=angles, ranges=dists, max_range=eff_range)


def _integrate_unicycle(pose: Pose2, v: float, omega: float, dt: float) -> Pose2:
    """Exact unicycle integration over a constant-twist interval."""
    if abs(omega) < 1e-12:
        return Pose2(pose.x + v * dt * math.cos(pose.theta),
                     pose.y + v * dt * math.sin(pose.theta),
                     pose.theta)
    theta_new = pose.theta + omega * dt
    r = v / omega
    return Pose2(pose.x + r * (math.sin(theta_new) - math.sin(pose.theta)),
                 pose.y - r * (math.cos(theta_new) - math.cos(pose.theta)),
                 wrap_angle(theta_new))
