"""Random message generation and decoder fuzzing."""

from __future__ import annotations

import numpy as np

from . import cpm


def _f(rng, scale=100.0) -> float:
    return float(rng.uniform(-scale, scale))


def random_object(rng: np.random.Generator) -> cpm.PerceivedObject:
    return cpm.PerceivedObject(
        object_id=int(rng.integers(0, 1 << 16)),
        x=_f(rng),
        y=_f(rng),
        speed=float(rng.uniform(0, 40)),
        theta=_f(rng, np.pi),
        length=float(rng.uniform(0.1, 20)),
        width=float(rng.uniform(0.1, 4)),
        half_widths=tuple(float(v) for v in rng.uniform(0, 2, size=3)),
        class_hint=cpm.CLASS_HINTS[int(rng.integers(len(cpm.CLASS_HINTS)))],
    )


def random_cpm(rng: np.random.Generator, max_objects: int = 8) -> cpm.CpmMessage:
    return cpm.CpmMessage(
        station_id=int(rng.integers(0, 1 << 32)),
        station_type=cpm.STATION_TYPES[int(rng.integers(2))],
        reference_position=(_f(rng, 1e4), _f(rng, 1e4)),
        heading=_f(rng, np.pi),
        speed=float(rng.uniform(0, 40)),
        ref_point_offset=(_f(rng, 5), _f(rng, 5)),
        perceived_objects=tuple(random_object(rng) for _ in range(int(rng.integers(0, max_objects + 1)))),
        generation_time=int(rng.integers(0, 1 << 63)),
    )


def random_share(rng: np.random.Generator) -> cpm.EstimateShare:
    rows = int(rng.integers(1, 4))
    cols = int(rng.integers(0, 6))
    return cpm.EstimateShare(
        station_id=int(rng.integers(0, 1 << 32)),
        track_id=int(rng.integers(0, 1 << 32)),
        center=tuple(_f(rng) for _ in range(rows)),
        generators=tuple(tuple(_f(rng, 5) for _ in range(cols)) for _ in range(rows)),
        heading=_f(rng, np.pi),
        generation_time=int(rng.integers(0, 1 << 63)),
    )


def random_message(rng: np.random.Generator):
    return random_cpm(rng) if rng.random() < 0.7 else random_share(rng)


def mutate(data: bytes, rng: np.random.Generator) -> bytes:
    """Flip, truncate, extend or splice a valid encoding."""
    buf = bytearray(data)
    kind = int(rng.integers(4))
    if kind == 0 and buf:
        for _ in range(int(rng.integers(1, 4))):
            buf[int(rng.integers(len(buf)))] ^= 1 << int(rng.integers(8))
    elif kind == 1:
        del buf[int(rng.integers(len(buf) + 1)) :]
    elif kind == 2:
        buf += rng.bytes(int(rng.integers(1, 16)))
    else:
        at = int(rng.integers(len(buf) + 1))
        buf[at:at] = rng.bytes(int(rng.integers(1, 8)))
    return bytes(buf)


def fuzz(iterations: int, seed: int = 0) -> dict:
    """Round-trip random messages and decode mutated or random buffers.

    Any exception other than :class:`cpm.WireError` propagates to the caller.
    """
    rng = np.random.default_rng(seed)
    stats = {"iterations": iterations, "roundtrip_mismatches": 0, "decoded": 0, "rejected": {}}
    for _ in range(iterations):
        msg = random_message(rng)
        data = cpm.encode(msg)
        if cpm.decode(data) != msg:
            stats["roundtrip_mismatches"] += 1
        pick = rng.random()
        if pick < 0.4:
            buf = mutate(data, rng)
        elif pick < 0.7:
            buf = rng.bytes(int(rng.integers(0, 128)))
        else:
            buf = rng.choice([cpm.CPM_MAGIC, cpm.EST_MAGIC]) + bytes([1]) + rng.bytes(int(rng.integers(0, 256)))
        try:
            cpm.decode(buf)
            stats["decoded"] += 1
        except cpm.WireError as exc:
            name = type(exc).__name__
            stats["rejected"][name] = stats["rejected"].get(name, 0) + 1
    return stats
