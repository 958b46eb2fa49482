"""Simulated broadcast radio: range cut-off, i.i.d. drops and uniform latency."""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass

import numpy as np

from . import cpm


@dataclass(frozen=True)
class ChannelConfig:
    drop_probability: float = 0.1
    latency_min: float = 10.0  # ms
    latency_max: float = 50.0  # ms
    range: float = 300.0  # m
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.drop_probability <= 1.0:
            raise ValueError("drop_probability must lie in [0, 1]")
        if not 0.0 <= self.latency_min <= self.latency_max:
            raise ValueError("latency bounds must satisfy 0 <= latency_min <= latency_max")
        if not self.range >= 0:
            raise ValueError("range must be nonnegative")


def _payload(msg) -> bytes:
    return bytes(msg) if isinstance(msg, (bytes, bytearray, memoryview)) else cpm.encode(msg)


def channel_send(cfg: ChannelConfig, sender_pose, receiver_pose, msg, now: float, seq: int = 0):
    """Fate of one transmission: ``None`` if lost, else ``(delivery_time_ms, payload)``.

    The random draws depend only on ``(cfg.seed, seq)``.
    """
    payload = _payload(msg)
    rng = np.random.default_rng([cfg.seed, seq])
    drop_draw = rng.random()
    latency = rng.uniform(cfg.latency_min, cfg.latency_max)
    dist = math.hypot(sender_pose.x - receiver_pose.x, sender_pose.y - receiver_pose.y)
    if dist > cfg.range or drop_draw < cfg.drop_probability:
        return None
    return now + latency, payload


@dataclass(frozen=True, order=True)
class Delivery:
    delivery_time: float
    seq: int
    send_time: float
    sender: int
    receiver: str
    payload: bytes

    def record(self) -> dict:
        return {
            "deliveryTime": self.delivery_time,
            "seq": self.seq,
            "sendTime": self.send_time,
            "sender": self.sender,
            "receiver": self.receiver,
            "magic": self.payload[:4].decode("ascii", "replace"),
            "length": len(self.payload),
            "hex": self.payload.hex(),
        }


class V2XChannel:
    """Single logical event queue ordered by ``(delivery_time, seq)``."""

    def __init__(self, cfg: ChannelConfig, log=None):
        self.cfg = cfg
        self._queue: list[Delivery] = []
        self._seq = 0
        self.sent = 0
        self.dropped = 0
        self._log = log

    def send(self, sender_id, sender_pose, receiver_id, receiver_pose, msg, now: float) -> Delivery | None:
        seq = self._seq
        self._seq += 1
        self.sent += 1
        fate = channel_send(self.cfg, sender_pose, receiver_pose, msg, now, seq)
        if fate is None:
            self.dropped += 1
            return None
        delivery = Delivery(fate[0], seq, now, sender_id, receiver_id, fate[1])
        heapq.heappush(self._queue, delivery)
        return delivery

    def deliver_until(self, t: float) -> list[Delivery]:
        out = []
        while self._queue and self._queue[0].delivery_time <= t:
            d = heapq.heappop(self._queue)
            if self._log is not None:
                self._log.write(json.dumps(d.record(), sort_keys=True) + "\n")
            out.append(d)
        return out

    def pending(self) -> int:
        return len(self._queue)
