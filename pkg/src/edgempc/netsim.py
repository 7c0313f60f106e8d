"""Topic message bus with per-direction stochastic delay injection.

Delays are drawn in milliseconds; bus timestamps are seconds. Delivery on a
topic is FIFO: a message never overtakes one published before it.
"""
from __future__ import annotations

import math
import threading
from collections import deque
from dataclasses import dataclass, replace
from typing import Any

import numpy as np

TOPICS = ("odometry", "reference", "command")
DISTRIBUTIONS = ("degenerate", "lognormal-with-spikes")


class BusClosedError(RuntimeError):
    pass


@dataclass(frozen=True)
class LatencyProfile:
    mean: float                 # ms
    jitter_std: float = 0.0     # ms
    spike_prob: float = 0.0
    spike_scale: float = 1.0
    floor: float = 0.0          # ms
    distribution: str = "degenerate"

    def __post_init__(self):
        if self.distribution not in DISTRIBUTIONS:
            raise ValueError(f"distribution must be one of {DISTRIBUTIONS}")
        if not (math.isfinite(self.mean) and self.mean >= self.floor >= 0):
            raise ValueError(f"need mean >= floor >= 0, got mean={self.mean} floor={self.floor}")
        if self.jitter_std < 0:
            raise ValueError("jitter_std must be >= 0")
        if not 0 <= self.spike_prob <= 1:
            raise ValueError("spike_prob must lie in [0, 1]")
        if self.spike_scale < 1:
            raise ValueError("spike_scale must be >= 1")

    @classmethod
    def stochastic(cls, mean: float, **kw) -> "LatencyProfile":
        """Lognormal body with rare multiplicative spikes (default shape)."""
        kw.setdefault("jitter_std", 0.25 * mean)
        kw.setdefault("spike_prob", 0.01)
        kw.setdefault("spike_scale", 5.0)
        return cls(mean, distribution="lognormal-with-spikes", **kw)

    def degenerate(self) -> "LatencyProfile":
        return replace(self, jitter_std=0.0, spike_prob=0.0, spike_scale=1.0,
                       distribution="degenerate")


# robot->edge, edge->robot means in ms
PRESET_MEANS = {
    "profile-A": (14.2, 17.6),
    "profile-B": (9.5, 13.1),
    "ideal": (0.0, 0.0),
}


def preset(name: str, degenerate: bool = False) -> tuple[LatencyProfile, LatencyProfile]:
    """(robot->edge, edge->robot) profiles for a named preset."""
    try:
        up, down = PRESET_MEANS[name]
    except KeyError:
        raise ValueError(f"unknown profile {name!r}; known: {sorted(PRESET_MEANS)}") from None
    if degenerate or name == "ideal":
        return LatencyProfile(up), LatencyProfile(down)
    return LatencyProfile.stochastic(up), LatencyProfile.stochastic(down)


class LinkRng:
    """Seeded random stream for one link direction."""

    def __init__(self, seed):
        self.seed = seed
        self.gen = np.random.default_rng(seed)


def sample_delay(profile: LatencyProfile, rng: LinkRng) -> float:
    """One-way delay in ms, never below ``profile.floor``."""
    if profile.distribution == "degenerate":
        return profile.mean
    m, s = profile.mean, profile.jitter_std
    if m <= 0:
        d = 0.0
    elif s == 0:
        d = m
    else:
        # parameters of the underlying normal so the lognormal has mean m, std s
        sig2 = math.log1p((s / m) ** 2)
        d = float(rng.gen.lognormal(math.log(m) - 0.5 * sig2, math.sqrt(sig2)))
    if profile.spike_prob > 0 and rng.gen.random() < profile.spike_prob:
        d *= profile.spike_scale
    return max(d, profile.floor)


@dataclass(frozen=True)
class StampedMessage:
    seq: int
    topic: str
    t_published: float     # s
    t_deliver: float       # s
    delay_ms: float        # effective one-way delay after FIFO adjustment
    payload: Any


class MessageBus:
    """In-process pub/sub bus. All mutations hold an internal lock."""

    def __init__(self, topics=TOPICS):
        self._queues = {t: deque() for t in topics}
        self._seq = {t: 0 for t in topics}
        self._last_deliver = {t: -math.inf for t in topics}
        self._lock = threading.Lock()
        self.closed = False
        self.published = {t: 0 for t in topics}
        self.delivered = {t: 0 for t in topics}
        self._sent = {t: {} for t in topics}

    def close(self):
        with self._lock:
            self.closed = True

    def publish(self, topic: str, payload, now: float, profile: LatencyProfile,
                rng: LinkRng) -> int:
        delay = sample_delay(profile, rng)
        with self._lock:
            if self.closed:
                raise BusClosedError("publish on a closed bus")
            t_deliver = now + delay / 1000.0
            if t_deliver < self._last_deliver[topic]:
                t_deliver = self._last_deliver[topic]
                delay = (t_deliver - now) * 1000.0
            self._last_deliver[topic] = t_deliver
            self._seq[topic] += 1
            seq = self._seq[topic]
            self._queues[topic].append(
                StampedMessage(seq, topic, now, t_deliver, delay, payload))
            self.published[topic] += 1
            self._sent[topic][seq] = delay
        return seq

    def poll(self, topic: str, now: float) -> list[StampedMessage]:
        """Remove and return every message due by ``now`` (inclusive), in seq order."""
        out = []
        with self._lock:
            q = self._queues[topic]
            # FIFO delivery times are non-decreasing, so the due messages are a prefix
            while q and q[0].t_deliver <= now:
                out.append(q.popleft())
            self.delivered[topic] += len(out)
        return out

    def sent_delays(self, topic: str) -> dict[int, float]:
        """seq -> effective delay (ms) of every message published on ``topic``."""
        with self._lock:
            return dict(self._sent[topic])

    def in_flight(self, topic: str) -> int:
        with self._lock:
            return len(self._queues[topic])

    def next_delivery(self, topic: str) -> float | None:
        with self._lock:
            q = self._queues[topic]
            return q[0].t_deliver if q else None


def publish(bus: MessageBus, topic: str, payload, now: float, profile: LatencyProfile,
            rng: LinkRng) -> int:
    return bus.publish(topic, payload, now, profile, rng)


def poll_deliveries(bus: MessageBus, topic: str, now: float) -> list[StampedMessage]:
    return bus.poll(topic, now)
