"""Reference trajectories r(k): setpoint, circle and helix."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .mpc import ReferencePoint

KINDS = ("setpoint", "circular", "helical")


@dataclass(frozen=True, eq=False)
class TrajectorySpec:
    kind: str = "circular"
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))
    radius: float = 2.0
    angular_rate: float = 2 * math.pi / 40
    climb_rate: float = 0.0
    start_altitude: float = 2.0
    duration: float = 80.0
    phase: float = 0.0

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).reshape(3).copy()
        c.setflags(write=False)
        object.__setattr__(self, "center", c)
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.radius < 0:
            raise ValueError("radius must be >= 0")
        if not self.duration > 0:
            raise ValueError("duration must be > 0")
        if not math.isfinite(self.angular_rate):
            raise ValueError("angular_rate must be finite")

    def __eq__(self, other):
        if not isinstance(other, TrajectorySpec):
            return NotImplemented
        return (self.kind, self.radius, self.angular_rate, self.climb_rate,
                self.start_altitude, self.duration, self.phase) == (
                other.kind, other.radius, other.angular_rate, other.climb_rate,
                other.start_altitude, other.duration, other.phase) and \
            np.array_equal(self.center, other.center)


def sample_reference(spec: TrajectorySpec, t: float) -> ReferencePoint:
    if not 0 <= t <= spec.duration:
        raise ValueError(f"t={t} outside [0, {spec.duration}]")
    cx, cy, cz = spec.center
    if spec.kind == "setpoint":
        return ReferencePoint(np.array([cx, cy, cz + spec.start_altitude]))
    R, w = spec.radius, spec.angular_rate
    a = w * t + spec.phase
    ca, sa = math.cos(a), math.sin(a)
    climb = spec.climb_rate if spec.kind == "helical" else 0.0
    p = np.array([cx + R * ca, cy + R * sa, cz + spec.start_altitude + climb * t])
    v = np.array([-R * w * sa, R * w * ca, climb])
    return ReferencePoint(p, v)


def reference_window(spec: TrajectorySpec, t: float, n: int, dt: float) -> list[ReferencePoint]:
    """N-step preview starting at t; samples past the end repeat the final point."""
    return [sample_reference(spec, min(t + j * dt, spec.duration)) for j in range(n)]


def reference_array(spec: TrajectorySpec, t: float, n: int, dt: float) -> np.ndarray:
    """Vectorized :func:`reference_window` as an (n, 8) array."""
    if not 0 <= t <= spec.duration:
        raise ValueError(f"t={t} outside [0, {spec.duration}]")
    ts = np.minimum(t + np.arange(n) * dt, spec.duration)
    out = np.zeros((n, 8))
    cx, cy, cz = spec.center
    if spec.kind == "setpoint":
        out[:, 0:3] = (cx, cy, cz + spec.start_altitude)
        return out
    R, w = spec.radius, spec.angular_rate
    a = w * ts + spec.phase
    climb = spec.climb_rate if spec.kind == "helical" else 0.0
    out[:, 0] = cx + R * np.cos(a)
    out[:, 1] = cy + R * np.sin(a)
    out[:, 2] = cz + spec.start_altitude + climb * ts
    out[:, 3] = -R * w * np.sin(a)
    out[:, 4] = R * w * np.cos(a)
    out[:, 5] = climb
    return out
