"""Planar frames, fields of view, occlusion and synthetic perception."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .estimator import Measurement, wrap_angle


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "heading", wrap_angle(self.heading))

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class FovSector:
    origin: Pose2D
    range: float
    half_angle: float

    def __post_init__(self):
        if not self.range > 0:
            raise ValueError("field-of-view range must be positive")
        if not 0 < self.half_angle <= math.pi:
            raise ValueError("field-of-view half angle must lie in (0, pi]")


@dataclass(frozen=True)
class Obstacle:
    """Oriented rectangle: ``length`` along ``heading``, ``width`` across it."""

    x: float
    y: float
    length: float
    width: float
    heading: float = 0.0

    def __post_init__(self):
        if not (self.length > 0 and self.width > 0):
            raise ValueError("obstacle length and width must be positive")

    def corners(self) -> np.ndarray:
        pose = Pose2D(self.x, self.y, self.heading)
        hl, hw = self.length / 2, self.width / 2
        return np.array([local_to_global(pose, p) for p in [(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)]])

    def contains(self, p) -> bool:
        lx, ly = global_to_local(Pose2D(self.x, self.y, self.heading), p)
        return abs(lx) <= self.length / 2 and abs(ly) <= self.width / 2


@dataclass(frozen=True)
class TruthObject:
    """Ground-truth road-user as seen by the synthetic sensors."""

    actor_id: int
    pose: Pose2D
    speed: float
    length: float
    width: float
    class_hint: str = "vehicle"


def local_to_global(sender: Pose2D, p) -> tuple[float, float]:
    c, s = math.cos(sender.heading), math.sin(sender.heading)
    px, py = float(p[0]), float(p[1])
    return (c * px - s * py + sender.x, s * px + c * py + sender.y)


def global_to_local(owner: Pose2D, p) -> tuple[float, float]:
    c, s = math.cos(owner.heading), math.sin(owner.heading)
    dx, dy = float(p[0]) - owner.x, float(p[1]) - owner.y
    return (c * dx + s * dy, -s * dx + c * dy)


def reference_offset(sender: Pose2D, ref_point_offset) -> Pose2D:
    """Pose of a point fixed at ``ref_point_offset`` in the sender's body frame."""
    if ref_point_offset[0] == 0 and ref_point_offset[1] == 0:
        return sender
    x, y = local_to_global(sender, ref_point_offset)
    return Pose2D(x, y, sender.heading)


def in_fov(fov: FovSector, p) -> bool:
    dx, dy = float(p[0]) - fov.origin.x, float(p[1]) - fov.origin.y
    dist = math.hypot(dx, dy)
    if dist > fov.range:
        return False
    if dist == 0.0:
        return True
    off = abs(wrap_angle(math.atan2(dy, dx) - fov.origin.heading))
    return off <= fov.half_angle


def _segment_hits_rectangle(a, b, ob: Obstacle) -> bool:
    # Liang-Barsky clipping in the rectangle's own frame
    pose = Pose2D(ob.x, ob.y, ob.heading)
    ax, ay = global_to_local(pose, a)
    bx, by = global_to_local(pose, b)
    dx, dy = bx - ax, by - ay
    t0, t1 = 0.0, 1.0
    for p, q in (
        (-dx, ax + ob.length / 2),
        (dx, ob.length / 2 - ax),
        (-dy, ay + ob.width / 2),
        (dy, ob.width / 2 - ay),
    ):
        if p == 0.0:
            if q < 0.0:
                return False
            continue
        t = q / p
        if p < 0.0:
            t0 = max(t0, t)
        else:
            t1 = min(t1, t)
        if t0 > t1:
            return False
    # the open segment excludes its end points
    if t0 < t1:
        return True
    return 0.0 < t0 < 1.0


def occluded(sensor, target, obstacles) -> bool:
    """True iff the open segment from ``sensor`` to ``target`` meets any obstacle."""
    if sensor[0] == target[0] and sensor[1] == target[1]:
        return False
    return any(_segment_hits_rectangle(sensor, target, ob) for ob in obstacles)


def visible(fov: FovSector, target, obstacles) -> bool:
    return in_fov(fov, target) and not occluded(fov.origin.position, target, obstacles)


def synth_perceive(
    sensor_pose: Pose2D,
    fov: FovSector,
    truth,
    obstacles,
    half_widths,
    rng,
    timestamp: float = 0.0,
    source_id="local",
) -> list[Measurement]:
    """Noisy detections of every visible road-user, in the sensor's frame.

    Positions and heading are relative to ``sensor_pose``; each component's
    error is uniform within ``half_widths``. ``rng`` is a seed or a numpy
    ``Generator``; one noise triple is drawn per visible object in order.
    """
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    r = np.asarray(half_widths, dtype=float)
    out = []
    for obj in truth:
        target = obj.pose.position
        if not visible(fov, target, obstacles):
            continue
        lx, ly = global_to_local(sensor_pose, target)
        noise = rng.uniform(-1.0, 1.0, size=3) * r
        out.append(
            Measurement(
                y=np.array([lx, ly, obj.speed]) + noise,
                heading=wrap_angle(obj.pose.heading - sensor_pose.heading),
                half_widths=r,
                timestamp=timestamp,
                source_id=source_id,
                object_id=obj.actor_id,
                class_hint=obj.class_hint,
                length=obj.length,
                width=obj.width,
            )
        )
    return out


def measurement_to_global(m: Measurement, sensor_pose: Pose2D) -> Measurement:
    """Re-express a sensor-frame measurement in the global frame.

    The noise box keeps its orientation, so the measurement axes become the
    sensor's axes (``axes_angle = sensor heading``).
    """
    gx, gy = local_to_global(sensor_pose, m.y[:2])
    return Measurement(
        y=np.array([gx, gy, m.y[2]]),
        heading=wrap_angle(m.heading + sensor_pose.heading),
        half_widths=m.half_widths,
        timestamp=m.timestamp,
        source_id=m.source_id,
        object_id=m.object_id,
        class_hint=m.class_hint,
        length=m.length,
        width=m.width,
        axes_angle=wrap_angle(m.axes_angle + sensor_pose.heading),
    )
