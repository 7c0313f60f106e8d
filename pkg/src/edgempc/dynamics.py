"""Quadrotor kinematic model with first-order roll/pitch response.

State layout used by the array-level helpers::

    x = [px, py, pz, vx, vy, vz, roll, pitch]
    u = [thrust, roll_ref, pitch_ref]

Thrust is mass-normalized (m/s^2). The rotation is yaw-free ZYX, so the
thrust direction in the world frame is
``[sin(pitch) cos(roll), -sin(roll), cos(pitch) cos(roll)]``.
Damping acts on velocity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

STATE_DIM = 8
INPUT_DIM = 3


class ModelDomainError(ValueError):
    """Raised for non-finite or otherwise invalid model inputs."""


@dataclass(frozen=True)
class ModelParams:
    g: float = 9.81
    damping: tuple[float, float, float] = (0.1, 0.1, 0.2)
    k_roll: float = 1.0
    k_pitch: float = 1.0
    tau_roll: float = 0.5
    tau_pitch: float = 0.5
    # plant clamps |roll|, |pitch| to pi/2 - angle_margin
    angle_margin: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "damping", tuple(float(a) for a in self.damping))
        if len(self.damping) != 3:
            raise ValueError("damping needs three coefficients (Ax, Ay, Az)")
        if not self.g > 0:
            raise ValueError(f"g must be positive, got {self.g}")
        if any(a < 0 for a in self.damping):
            raise ValueError(f"damping coefficients must be >= 0, got {self.damping}")
        if not (self.tau_roll > 0 and self.tau_pitch > 0):
            raise ValueError("attitude time constants must be strictly positive")
        if not 0 <= self.angle_margin < math.pi / 2:
            raise ValueError("angle_margin must lie in [0, pi/2)")

    @property
    def angle_limit(self) -> float:
        return math.pi / 2 - self.angle_margin

    def as_tuple(self) -> tuple[float, ...]:
        """Flat float tuple consumed by the compiled kernels."""
        ax, ay, az = self.damping
        return (self.g, ax, ay, az, self.k_roll, self.k_pitch, self.tau_roll, self.tau_pitch)


def _vec3(a) -> np.ndarray:
    out = np.asarray(a, dtype=float).reshape(3).copy()
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class UavState:
    p: np.ndarray = field(default_factory=lambda: np.zeros(3))
    v: np.ndarray = field(default_factory=lambda: np.zeros(3))
    roll: float = 0.0
    pitch: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "p", _vec3(self.p))
        object.__setattr__(self, "v", _vec3(self.v))
        object.__setattr__(self, "roll", float(self.roll))
        object.__setattr__(self, "pitch", float(self.pitch))

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.p, self.v, [self.roll, self.pitch]])

    @classmethod
    def from_array(cls, x) -> "UavState":
        x = np.asarray(x, dtype=float)
        return cls(x[0:3], x[3:6], x[6], x[7])

    def __eq__(self, other):
        if not isinstance(other, UavState):
            return NotImplemented
        return bool(np.array_equal(self.as_array(), other.as_array()))

    def __repr__(self):
        return (f"UavState(p={self.p.tolist()}, v={self.v.tolist()}, "
                f"roll={self.roll!r}, pitch={self.pitch!r})")


@dataclass(frozen=True)
class ControlInput:
    thrust: float
    roll_ref: float = 0.0
    pitch_ref: float = 0.0

    def __post_init__(self):
        for name in ("thrust", "roll_ref", "pitch_ref"):
            object.__setattr__(self, name, float(getattr(self, name)))

    def as_array(self) -> np.ndarray:
        return np.array([self.thrust, self.roll_ref, self.pitch_ref])

    @classmethod
    def from_array(cls, u) -> "ControlInput":
        return cls(float(u[0]), float(u[1]), float(u[2]))

    @classmethod
    def hover(cls, params: ModelParams) -> "ControlInput":
        return cls(params.g, 0.0, 0.0)


@dataclass(frozen=True, eq=False)
class StateDerivative:
    dp: np.ndarray
    dv: np.ndarray
    droll: float
    dpitch: float

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.dp, self.dv, [self.droll, self.dpitch]])


def thrust_direction(roll: float, pitch: float) -> tuple[float, float, float]:
    cr = math.cos(roll)
    return (math.sin(pitch) * cr, -math.sin(roll), math.cos(pitch) * cr)


def derivative_array(x: np.ndarray, u: np.ndarray, params: ModelParams) -> np.ndarray:
    """Right-hand side of the model on flat arrays (no validation)."""
    g = params.g
    ax, ay, az = params.damping
    roll, pitch = x[6], x[7]
    thrust = u[0]
    bx, by, bz = thrust_direction(roll, pitch)
    return np.array([
        x[3], x[4], x[5],
        thrust * bx - ax * x[3],
        thrust * by - ay * x[4],
        thrust * bz - g - az * x[5],
        (params.k_roll * u[1] - roll) / params.tau_roll,
        (params.k_pitch * u[2] - pitch) / params.tau_pitch,
    ])


def _check_inputs(x: np.ndarray, u: np.ndarray):
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(u))):
        raise ModelDomainError("state and input must be finite")
    if u[0] < 0:
        raise ModelDomainError(f"thrust must be >= 0, got {u[0]}")


def state_derivative(x: UavState, u: ControlInput, params: ModelParams) -> StateDerivative:
    xa, ua = x.as_array(), u.as_array()
    _check_inputs(xa, ua)
    d = derivative_array(xa, ua, params)
    return StateDerivative(d[0:3], d[3:6], float(d[6]), float(d[7]))


def clamp_attitude(x: np.ndarray, params: ModelParams) -> np.ndarray:
    lim = params.angle_limit
    x[6] = min(max(x[6], -lim), lim)
    x[7] = min(max(x[7], -lim), lim)
    return x


def euler_array(x: np.ndarray, u: np.ndarray, params: ModelParams, dt: float) -> np.ndarray:
    """One unclamped forward-Euler step, as used inside the MPC prediction."""
    return x + dt * derivative_array(x, u, params)


def rk4_array(x: np.ndarray, u: np.ndarray, params: ModelParams, dt: float) -> np.ndarray:
    """One unclamped classical RK4 step with the input held constant."""
    k1 = derivative_array(x, u, params)
    k2 = derivative_array(x + 0.5 * dt * k1, u, params)
    k3 = derivative_array(x + 0.5 * dt * k2, u, params)
    k4 = derivative_array(x + dt * k3, u, params)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _step(integrator, x: UavState, u: ControlInput, params: ModelParams, dt: float) -> UavState:
    if dt < 0:
        raise ValueError(f"dt must be >= 0, got {dt}")
    xa, ua = x.as_array(), u.as_array()
    _check_inputs(xa, ua)
    if dt == 0:
        return x
    return UavState.from_array(clamp_attitude(integrator(xa, ua, params, dt), params))


def step_euler(x: UavState, u: ControlInput, params: ModelParams, dt: float) -> UavState:
    """Forward-Euler plant step with attitude clamping."""
    return _step(euler_array, x, u, params, dt)


def step_rk4(x: UavState, u: ControlInput, params: ModelParams, dt: float) -> UavState:
    """RK4 plant step (zero-order-hold input) with attitude clamping."""
    return _step(rk4_array, x, u, params, dt)
