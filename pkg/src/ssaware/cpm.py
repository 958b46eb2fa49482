"""Simplified Collaborative Perception Messages and their binary codec.

Two message kinds share one framing: a 4-byte magic, a 1-byte version and a
little-endian body of fixed-width fields in declaration order.

``CPM1`` (:class:`CpmMessage`)::

    magic "CPM1" | version u8
    management:     station_id u32 | station_type u8 | ref_x f64 | ref_y f64
    station data:   heading f64 | speed f64 | offset_x f64 | offset_y f64
    objects:        count u16, then per object
                    object_id u16 | x f64 | y f64 | speed f64 | theta f64 |
                    length f64 | width f64 | r_x f64 | r_y f64 | r_s f64 |
                    class u8
    generation_time u64 (ms since scenario start)

``EST1`` (:class:`EstimateShare`)::

    magic "EST1" | version u8 | station_id u32 | track_id u32 |
    rows u16 | cols u16 | center rows*f64 | generators rows*cols*f64 (row-major) |
    heading f64 | generation_time u64

Angles are radians, lengths meters, speeds m/s.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .estimator import Measurement, wrap_angle
from .frames import Pose2D, local_to_global, reference_offset
from .zonoset import Zonotope

VERSION = 1
CPM_MAGIC = b"CPM1"
EST_MAGIC = b"EST1"
MAX_OBJECTS = 128
MAX_ROWS = 16
MAX_COLS = 1024

STATION_TYPES = ("vehicle", "rsu")
CLASS_HINTS = ("vehicle", "pedestrian", "unknown")

_HEADER = struct.Struct("<4sB")
_MC = struct.Struct("<IBdd")
_SDC = struct.Struct("<dddd")
_COUNT = struct.Struct("<H")
_OBJ = struct.Struct("<H9dB")
_TIME = struct.Struct("<Q")
_EST_HEAD = struct.Struct("<IIHH")
_EST_TAIL = struct.Struct("<dQ")


class WireError(ValueError):
    """Base class for codec failures."""


class FormatError(WireError):
    """Unknown magic, enum value out of range or an invalid field value."""


class VersionError(WireError):
    pass


class TruncatedError(WireError):
    pass


class LengthOverrunError(WireError):
    """A declared length exceeds its limit, or bytes remain after the message."""


@dataclass(frozen=True)
class PerceivedObject:
    object_id: int
    x: float
    y: float
    speed: float
    theta: float
    length: float
    width: float
    half_widths: tuple = (0.0, 0.0, 0.0)
    class_hint: str = "unknown"


@dataclass(frozen=True)
class CpmMessage:
    station_id: int
    station_type: str
    reference_position: tuple
    heading: float
    speed: float
    ref_point_offset: tuple = (0.0, 0.0)
    perceived_objects: tuple = field(default_factory=tuple)
    generation_time: int = 0

    def sender_pose(self) -> Pose2D:
        return Pose2D(self.reference_position[0], self.reference_position[1], self.heading)


@dataclass(frozen=True)
class EstimateShare:
    station_id: int
    track_id: int
    center: tuple
    generators: tuple  # row-major rows of the generator matrix
    heading: float
    generation_time: int

    @classmethod
    def from_zonotope(cls, station_id, track_id, z: Zonotope, heading, generation_time):
        return cls(
            station_id,
            track_id,
            tuple(z.c.tolist()),
            tuple(tuple(row) for row in z.G.tolist()),
            float(heading),
            int(generation_time),
        )

    def zonotope(self) -> Zonotope:
        n = len(self.center)
        G = np.array(self.generators, dtype=float).reshape(n, -1) if n else None
        return Zonotope(self.center, G)


def _uint(value, bits, name):
    if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or not 0 <= value < (1 << bits):
        raise FormatError(f"{name} must be an unsigned {bits}-bit integer, got {value!r}")
    return int(value)


def _finite(values, name):
    for v in values:
        if not math.isfinite(v):
            raise FormatError(f"{name} must be finite, got {v!r}")


def _enum(value, options, name):
    try:
        return options.index(value)
    except ValueError:
        raise FormatError(f"{name} must be one of {options}, got {value!r}") from None


def _check_object(o: PerceivedObject):
    _uint(o.object_id, 16, "object_id")
    if len(o.half_widths) != 3:
        raise FormatError("half_widths must have three entries")
    _finite((o.x, o.y, o.speed, o.theta, o.length, o.width, *o.half_widths), "perceived object field")
    if min(o.half_widths) < 0:
        raise FormatError("half_widths must be nonnegative")
    _enum(o.class_hint, CLASS_HINTS, "class_hint")


def _check_cpm(msg: CpmMessage):
    if len(msg.perceived_objects) > MAX_OBJECTS:
        raise LengthOverrunError(f"{len(msg.perceived_objects)} perceived objects exceed the limit of {MAX_OBJECTS}")
    _uint(msg.station_id, 32, "station_id")
    _uint(msg.generation_time, 64, "generation_time")
    _enum(msg.station_type, STATION_TYPES, "station_type")
    _finite((*msg.reference_position, msg.heading, msg.speed, *msg.ref_point_offset), "station field")
    for o in msg.perceived_objects:
        _check_object(o)


def _encode_cpm(msg: CpmMessage) -> bytes:
    _check_cpm(msg)
    parts = [
        _HEADER.pack(CPM_MAGIC, VERSION),
        _MC.pack(msg.station_id, STATION_TYPES.index(msg.station_type), *map(float, msg.reference_position)),
        _SDC.pack(float(msg.heading), float(msg.speed), *map(float, msg.ref_point_offset)),
        _COUNT.pack(len(msg.perceived_objects)),
    ]
    for o in msg.perceived_objects:
        parts.append(
            _OBJ.pack(
                o.object_id,
                *(float(v) for v in (o.x, o.y, o.speed, o.theta, o.length, o.width, *o.half_widths)),
                CLASS_HINTS.index(o.class_hint),
            )
        )
    parts.append(_TIME.pack(msg.generation_time))
    return b"".join(parts)


def _encode_est(msg: EstimateShare) -> bytes:
    _uint(msg.station_id, 32, "station_id")
    _uint(msg.track_id, 32, "track_id")
    _uint(msg.generation_time, 64, "generation_time")
    rows = len(msg.center)
    cols = len(msg.generators[0]) if msg.generators else 0
    if rows > MAX_ROWS or cols > MAX_COLS:
        raise LengthOverrunError(f"generator matrix {rows}x{cols} exceeds {MAX_ROWS}x{MAX_COLS}")
    if len(msg.generators) != rows or any(len(r) != cols for r in msg.generators):
        raise FormatError("generator matrix dimensions are inconsistent with the center")
    flat = [float(v) for row in msg.generators for v in row]
    _finite((*msg.center, *flat, msg.heading), "estimate field")
    return b"".join(
        [
            _HEADER.pack(EST_MAGIC, VERSION),
            _EST_HEAD.pack(msg.station_id, msg.track_id, rows, cols),
            struct.pack(f"<{rows}d", *map(float, msg.center)),
            struct.pack(f"<{rows * cols}d", *flat),
            _EST_TAIL.pack(float(msg.heading), msg.generation_time),
        ]
    )


def encode(msg) -> bytes:
    if isinstance(msg, CpmMessage):
        return _encode_cpm(msg)
    if isinstance(msg, EstimateShare):
        return _encode_est(msg)
    raise TypeError(f"cannot encode {type(msg).__name__}")


class _Reader:
    def __init__(self, data: bytes):
        self.data = memoryview(data)
        self.pos = 0

    def take(self, st: struct.Struct):
        end = self.pos + st.size
        if end > len(self.data):
            raise TruncatedError(f"need {st.size} bytes at offset {self.pos}, only {len(self.data) - self.pos} left")
        out = st.unpack_from(self.data, self.pos)
        self.pos = end
        return out

    def finish(self):
        if self.pos != len(self.data):
            raise LengthOverrunError(f"{len(self.data) - self.pos} unexpected trailing bytes")


def _decode_cpm(r: _Reader) -> CpmMessage:
    station_id, stype, rx, ry = r.take(_MC)
    heading, speed, ox, oy = r.take(_SDC)
    (count,) = r.take(_COUNT)
    if count > MAX_OBJECTS:
        raise LengthOverrunError(f"declared {count} perceived objects, limit is {MAX_OBJECTS}")
    if stype >= len(STATION_TYPES):
        raise FormatError(f"unknown station type {stype}")
    objects = []
    for _ in range(count):
        oid, x, y, s, th, length, width, hx, hy, hs, cls = r.take(_OBJ)
        if cls >= len(CLASS_HINTS):
            raise FormatError(f"unknown class hint {cls}")
        objects.append(PerceivedObject(oid, x, y, s, th, length, width, (hx, hy, hs), CLASS_HINTS[cls]))
    (gen,) = r.take(_TIME)
    r.finish()
    msg = CpmMessage(station_id, STATION_TYPES[stype], (rx, ry), heading, speed, (ox, oy), tuple(objects), gen)
    _check_cpm(msg)
    return msg


def _decode_est(r: _Reader) -> EstimateShare:
    station_id, track_id, rows, cols = r.take(_EST_HEAD)
    if rows > MAX_ROWS or cols > MAX_COLS:
        raise LengthOverrunError(f"declared generator matrix {rows}x{cols} exceeds {MAX_ROWS}x{MAX_COLS}")
    center = r.take(struct.Struct(f"<{rows}d"))
    flat = r.take(struct.Struct(f"<{rows * cols}d"))
    heading, gen = r.take(_EST_TAIL)
    r.finish()
    _finite((*center, *flat, heading), "estimate field")
    gens = tuple(tuple(flat[i * cols : (i + 1) * cols]) for i in range(rows))
    return EstimateShare(station_id, track_id, tuple(center), gens, heading, gen)


def decode(data: bytes):
    r = _Reader(bytes(data))
    magic, version = r.take(_HEADER)
    if magic not in (CPM_MAGIC, EST_MAGIC):
        raise FormatError(f"bad magic {bytes(magic)!r}")
    if version != VERSION:
        raise VersionError(f"unsupported version {version}")
    return _decode_cpm(r) if magic == CPM_MAGIC else _decode_est(r)


def build_cpm(
    station_id: int,
    station_type: str,
    pose: Pose2D,
    speed: float,
    ref_point_offset,
    detections,
    generation_time: int,
) -> CpmMessage:
    """Pack sensor-frame measurements (see ``frames.synth_perceive``) into a CPM."""
    objects = tuple(
        PerceivedObject(
            object_id=int(m.object_id),
            x=float(m.y[0]),
            y=float(m.y[1]),
            speed=float(m.y[2]),
            theta=float(m.heading),
            length=float(m.length),
            width=float(m.width),
            half_widths=tuple(float(v) for v in m.half_widths),
            class_hint=m.class_hint,
        )
        for m in detections
    )
    return CpmMessage(
        station_id=station_id,
        station_type=station_type,
        reference_position=pose.position,
        heading=pose.heading,
        speed=float(speed),
        ref_point_offset=tuple(float(v) for v in ref_point_offset),
        perceived_objects=objects,
        generation_time=int(generation_time),
    )


def poc_to_measurements(msg: CpmMessage) -> list[Measurement]:
    """Global-frame measurements for every perceived object of a CPM.

    Object positions are relative to the sender's perception reference point,
    which sits at ``ref_point_offset`` in the sender's body frame.
    """
    sensor = reference_offset(msg.sender_pose(), msg.ref_point_offset)
    out = []
    for o in msg.perceived_objects:
        gx, gy = local_to_global(sensor, (o.x, o.y))
        out.append(
            Measurement(
                y=np.array([gx, gy, o.speed]),
                heading=wrap_angle(o.theta + sensor.heading),
                half_widths=np.array(o.half_widths),
                timestamp=msg.generation_time / 1000.0,
                source_id=msg.station_id,
                object_id=o.object_id,
                class_hint=o.class_hint,
                length=o.length,
                width=o.width,
                axes_angle=sensor.heading,
            )
        )
    return out
