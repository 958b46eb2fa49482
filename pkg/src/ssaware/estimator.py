"""Per-road-user set-membership filter.

State is ``(x, y, speed)`` in the fixed global frame. Prediction uses the
heading-dependent constant-speed model; correction intersects the predicted
set with one strip per measured component.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import zonoset as zs
from .zonoset import Zonotope

STATE_DIM = 3

DEFAULT_PROCESS = (0.05, 0.05, 0.02)
DEFAULT_LOCAL_HALF_WIDTHS = (0.3, 0.3, 0.2)
DEFAULT_EXTERNAL_HALF_WIDTHS = (0.5, 0.5, 0.3)
DEFAULT_STEP = 0.1

INITIAL_RADII = {
    "vehicle": (2.0, 2.0, 1.0),
    "pedestrian": (1.0, 1.0, 0.8),
    "unknown": (2.0, 2.0, 1.0),
}

CLASSES = ("vehicle", "pedestrian", "unknown")
PROVENANCES = ("local", "external", "fused")


class OutOfOrderMeasurement(ValueError):
    """A measurement is older than the track it was meant to update."""


def wrap_angle(theta: float) -> float:
    """Wrap an angle into ``(-pi, pi]``; values already inside are returned as-is."""
    theta = float(theta)
    if -math.pi < theta <= math.pi:
        return theta
    wrapped = math.remainder(theta, 2.0 * math.pi)
    return math.pi if wrapped == -math.pi else wrapped


@dataclass(frozen=True)
class NoiseBound:
    """Process box ``Q`` (per nominal ``step`` seconds) and measurement half-widths ``r``."""

    process: tuple = DEFAULT_PROCESS
    measurement: tuple = DEFAULT_LOCAL_HALF_WIDTHS
    step: float = DEFAULT_STEP

    def __post_init__(self):
        object.__setattr__(self, "process", tuple(float(v) for v in self.process))
        object.__setattr__(self, "measurement", tuple(float(v) for v in self.measurement))
        if min(self.process) < 0 or min(self.measurement) < 0:
            raise ValueError("noise bounds must be nonnegative")
        if not self.step > 0:
            raise ValueError("nominal step must be positive")

    @property
    def Q(self) -> np.ndarray:
        return np.diag(self.process)

    def process_zonotope(self) -> Zonotope:
        return zs.box(np.zeros(STATE_DIM), self.process)


@dataclass(frozen=True)
class Measurement:
    """One perceived road-user in the working (global) frame.

    ``half_widths`` bound the noise along the measurement axes, which are the
    global axes rotated by ``axes_angle`` (the sensor's heading for data that
    was perceived in a rotated local frame).
    """

    y: np.ndarray
    heading: float
    half_widths: np.ndarray
    timestamp: float
    source_id: object = "local"
    object_id: int | None = None
    class_hint: str = "unknown"
    length: float = 0.0
    width: float = 0.0
    axes_angle: float = 0.0

    def __post_init__(self):
        y = np.array(self.y, dtype=float).reshape(STATE_DIM)
        r = np.array(self.half_widths, dtype=float).reshape(STATE_DIM)
        if np.any(r < 0):
            raise ValueError("measurement half-widths must be >= 0")
        y.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "half_widths", r)
        object.__setattr__(self, "heading", wrap_angle(self.heading))

    def rows(self) -> np.ndarray:
        """Measurement matrix: identity, rotated onto the measurement axes."""
        if self.axes_angle == 0.0:
            return np.eye(STATE_DIM)
        c, s = math.cos(self.axes_angle), math.sin(self.axes_angle)
        return np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])

    def strips(self) -> list[zs.Strip]:
        H = self.rows()
        values = H @ self.y
        return [zs.Strip(H[i], values[i], self.half_widths[i]) for i in range(STATE_DIM)]

    def region(self) -> Zonotope:
        """The box of states consistent with this measurement."""
        H = self.rows()
        return zs.prune(Zonotope(self.y, H.T @ np.diag(self.half_widths)))


@dataclass(frozen=True)
class RoadUserTrack:
    track_id: object
    corrected_set: Zonotope
    heading: float
    last_update: float
    provenance: str = "local"
    source: object = "local"
    class_hint: str = "unknown"
    length: float = 0.0
    width: float = 0.0
    object_id: int | None = None
    updates: int = field(default=1, compare=False)

    def __post_init__(self):
        if self.corrected_set.dim != STATE_DIM:
            raise ValueError("track sets must be three-dimensional")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        object.__setattr__(self, "heading", wrap_angle(self.heading))


def state_matrix(heading: float, dt: float) -> np.ndarray:
    if not dt > 0:
        raise ValueError(f"time step must be positive, got {dt}")
    return np.array(
        [
            [1.0, 0.0, dt * math.cos(heading)],
            [0.0, 1.0, dt * math.sin(heading)],
            [0.0, 0.0, 1.0],
        ]
    )


def substeps(dt: float, step: float) -> tuple[int, float]:
    """Split ``dt`` into ``n`` sub-steps of length at most ``step``."""
    n = max(1, round(dt / step))
    if abs(dt - n * step) <= 1e-9 * max(1.0, dt):
        return n, step
    n = math.ceil(dt / step - 1e-12)
    return n, dt / n


def propagate(z: Zonotope, heading: float, dt: float, noise: NoiseBound) -> Zonotope:
    """Predicted set after ``dt`` seconds, adding the process box once per nominal step."""
    n, sub = substeps(dt, noise.step)
    F = state_matrix(heading, sub)
    W = noise.process_zonotope()
    for _ in range(n):
        z = zs.minkowski_sum(zs.linear_map(F, z), W)
    return z


def predict(track: RoadUserTrack, dt: float, noise: NoiseBound) -> Zonotope:
    return propagate(track.corrected_set, track.heading, dt, noise)


def correct(predicted: Zonotope, m: Measurement, max_generators: int = zs.DEFAULT_MAX_GENERATORS) -> Zonotope:
    z = predicted
    for strip in m.strips():
        z = zs.intersect_strip(z, strip, zs.optimal_lambda(z, strip))
    return zs.reduce_order(z, max_generators)


def init_track(
    m: Measurement,
    initial_radii=None,
    track_id=None,
    provenance: str = "local",
) -> RoadUserTrack:
    radii = np.asarray(
        INITIAL_RADII.get(m.class_hint, INITIAL_RADII["unknown"]) if initial_radii is None else initial_radii,
        dtype=float,
    )
    if np.any(radii < m.half_widths):
        raise ValueError(f"initial radii {radii.tolist()} are smaller than the measurement half-widths")
    G = m.rows().T @ np.diag(radii)
    return RoadUserTrack(
        track_id=m.object_id if track_id is None else track_id,
        corrected_set=zs.prune(Zonotope(m.y, G)),
        heading=m.heading,
        last_update=m.timestamp,
        provenance=provenance,
        source=m.source_id,
        class_hint=m.class_hint,
        length=m.length,
        width=m.width,
        object_id=m.object_id,
    )


def step_track(
    track: RoadUserTrack,
    m: Measurement,
    noise: NoiseBound,
    max_generators: int = zs.DEFAULT_MAX_GENERATORS,
) -> RoadUserTrack:
    if m.timestamp < track.last_update:
        raise OutOfOrderMeasurement(
            f"measurement at t={m.timestamp} is older than track {track.track_id!r} (t={track.last_update})"
        )
    dt = m.timestamp - track.last_update
    predicted = track.corrected_set if dt == 0 else predict(track, dt, noise)
    return replace(
        track,
        corrected_set=correct(predicted, m, max_generators),
        heading=m.heading,
        last_update=m.timestamp,
        length=m.length,
        width=m.width,
        updates=track.updates + 1,
    )
