"""Planar rigid-body (SE(2)) helpers shared by mapping and rover models."""

import math
from typing import NamedTuple

import numpy as np


class Pose2(NamedTuple):
    x: float
    y: float
    theta: float


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    a = math.fmod(a + math.pi, 2 * math.pi)
    if a <= 0:
        a += 2 * math.pi
    return a - math.pi


def se2_apply(pose: Pose2, xy: np.ndarray) -> np.ndarray:
    """Apply pose to an (N,2) array of points (or a single (2,) point)."""
    pts = np.atleast_2d(xy)
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    out = np.empty_like(pts, dtype=float)
    out[:, 0] = c * pts[:, 0] - s * pts[:, 1] + pose.x
    out[:, 1] = s * pts[:, 0] + c * pts[:, 1] + pose.y
    return out if xy.ndim == 2 else out[0]


def se2_compose(a: Pose2, b: Pose2) -> Pose2:
    """a then b, i.e. the transform mapping p -> a(b(p))."""
    c, s = math.cos(a.theta), math.sin(a.theta)
    return Pose2(a.x + c * b.x - s * b.y,
                 a.y + s * b.x + c * b.y,
                 wrap_angle(a.theta + b.theta))


def se2_inverse(p: Pose2) -> Pose2:
    c, s = math.cos(p.theta), math.sin(p.theta)
    return Pose2(-(c * p.x + s * p.y), -(-s * p.x + c * p.y), wrap_angle(-p.theta))
