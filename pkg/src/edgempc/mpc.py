"""Finite-horizon nonlinear MPC over the Euler-discretized quadrotor model.

The cost over an N-step horizon is

    J = sum_j (x_d,j - x_j)' Qx (x_d,j - x_j)
            + (u_d - u_{j-1})' Qu (u_d - u_{j-1})
            + (u_{j-1} - u_{j-2})' Qdu (u_{j-1} - u_{j-2}),   j = 1..N

with x_j the j-th Euler prediction (driven by u_{j-1}) and u_{-1} the
previously applied command. It is minimized by projected gradient descent
over the input box, with the gradient computed by an adjoint sweep.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .dynamics import INPUT_DIM, STATE_DIM, ControlInput, ModelParams, UavState


class SolverDivergenceError(RuntimeError):
    """The cost became non-finite; ``last_iterate`` is the last finite input sequence."""

    def __init__(self, message, last_iterate):
        super().__init__(message)
        self.last_iterate = last_iterate


def _weight(w, n, name) -> np.ndarray:
    a = np.asarray(w, dtype=float)
    if a.ndim == 1:
        a = np.diag(a)
    if a.shape != (n, n):
        raise ValueError(f"{name} must be {n}x{n} or a length-{n} diagonal")
    if not np.allclose(a, a.T):
        raise ValueError(f"{name} must be symmetric")
    if np.any(np.diag(a) < 0):
        raise ValueError(f"{name} diagonal entries must be >= 0")
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MpcConfig:
    horizon: int = 100
    dt: float = 0.01
    Qx: np.ndarray = field(default_factory=lambda: np.diag([8.0, 8, 8, 1, 1, 1, 1, 1]))
    Qu: np.ndarray = field(default_factory=lambda: np.diag([1.0, 5, 5]))
    Qdu: np.ndarray = field(default_factory=lambda: np.diag([2.0, 10, 10]))
    # hover input; None means (g, 0, 0) of whatever model the solve uses
    u_d: tuple[float, float, float] | None = None
    thrust_max: float = 20.0
    roll_max: float = 0.4
    pitch_max: float = 0.4
    max_iters: int = 60
    tol: float = 1e-4
    initial_step: float = 1.0
    backtrack: float = 0.5
    armijo: float = 1e-4
    max_backtracks: int = 40

    def __post_init__(self):
        object.__setattr__(self, "Qx", _weight(self.Qx, STATE_DIM, "Qx"))
        object.__setattr__(self, "Qu", _weight(self.Qu, INPUT_DIM, "Qu"))
        object.__setattr__(self, "Qdu", _weight(self.Qdu, INPUT_DIM, "Qdu"))
        if self.u_d is not None:
            object.__setattr__(self, "u_d", tuple(float(v) for v in self.u_d))
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ValueError(f"horizon must be an integer >= 1, got {self.horizon}")
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        for name in ("roll_max", "pitch_max"):
            if not 0 < getattr(self, name) < math.pi / 2:
                raise ValueError(f"{name} must lie in (0, pi/2)")
        if self.max_iters < 0 or self.tol <= 0:
            raise ValueError("max_iters must be >= 0 and tol > 0")
        if not (self.initial_step > 0 and 0 < self.backtrack < 1):
            raise ValueError("initial_step must be > 0 and backtrack in (0, 1)")

    def validate_for(self, params: ModelParams):
        if not self.thrust_max > params.g:
            raise ValueError(f"thrust_max ({self.thrust_max}) must exceed g ({params.g})")

    def hover_input(self, params: ModelParams) -> np.ndarray:
        return np.array(self.u_d if self.u_d is not None else (params.g, 0.0, 0.0))

    @property
    def lower(self) -> np.ndarray:
        return np.array([0.0, -self.roll_max, -self.pitch_max])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.thrust_max, self.roll_max, self.pitch_max])


@dataclass(frozen=True, eq=False)
class ReferencePoint:
    """Desired state: position and velocity, roll/pitch zero by default."""
    p: np.ndarray
    v: np.ndarray = field(default_factory=lambda: np.zeros(3))
    roll: float = 0.0
    pitch: float = 0.0

    def __post_init__(self):
        arr = np.concatenate([np.asarray(self.p, float).reshape(3),
                              np.asarray(self.v, float).reshape(3),
                              [float(self.roll), float(self.pitch)]])
        if not np.all(np.isfinite(arr)):
            raise ValueError("reference must be finite")
        object.__setattr__(self, "p", arr[0:3].copy())
        object.__setattr__(self, "v", arr[3:6].copy())
        object.__setattr__(self, "roll", float(arr[6]))
        object.__setattr__(self, "pitch", float(arr[7]))

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.p, self.v, [self.roll, self.pitch]])

    @classmethod
    def from_state(cls, x: UavState) -> "ReferencePoint":
        return cls(x.p, x.v, x.roll, x.pitch)


@dataclass(eq=False)
class MpcSolution:
    u_seq: np.ndarray            # (N, 3)
    first_input: ControlInput
    cost: float
    iterations: int
    solve_time: float            # seconds, wall clock
    converged: bool
    cost_history: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))


# -- argument coercion -------------------------------------------------------

def _inputs(u_seq, n: int) -> np.ndarray:
    if isinstance(u_seq, np.ndarray):
        U = np.array(u_seq, dtype=float)
    else:
        U = np.array([u.as_array() if isinstance(u, ControlInput) else u for u in u_seq],
                     dtype=float)
    if U.ndim != 2 or U.shape[1] != INPUT_DIM:
        raise ValueError(f"input sequence must have shape (N, 3), got {U.shape}")
    if U.shape[0] != n:
        raise ValueError(f"input sequence length {U.shape[0]} != horizon {n}")
    return U


def _refs(ref, n: int) -> np.ndarray:
    if isinstance(ref, np.ndarray):
        R = np.array(ref, dtype=float)
    else:
        R = np.array([r.as_array() for r in ref], dtype=float)
    if R.shape != (n, STATE_DIM):
        raise ValueError(f"reference must have {n} points, got shape {R.shape}")
    return R


def _arr(x) -> np.ndarray:
    return np.asarray(x.as_array() if hasattr(x, "as_array") else x, dtype=float)


def _problem(x0, u_seq, ref, u_prev, cfg: MpcConfig, params: ModelParams):
    n = cfg.horizon
    return (_arr(x0), _inputs(u_seq, n), _refs(ref, n), _arr(u_prev))


# -- public operations -------------------------------------------------------

def predict(x0: UavState, u_seq, cfg: MpcConfig, params: ModelParams) -> list[UavState]:
    """Euler rollout x_{k+1|k} .. x_{k+N|k}; no attitude clamping."""
    U = _inputs(u_seq, cfg.horizon)
    X = _kernels.rollout(_arr(x0), U, cfg.dt, params.as_tuple())
    return [UavState.from_array(row) for row in X[1:]]


def total_cost(x0, u_seq, ref, u_prev, cfg: MpcConfig, params: ModelParams) -> float:
    x, U, R, up = _problem(x0, u_seq, ref, u_prev, cfg, params)
    return float(_kernels.cost(x, U, R, up, cfg.dt, params.as_tuple(),
                               cfg.Qx, cfg.Qu, cfg.Qdu, cfg.hover_input(params)))


def cost_gradient(x0, u_seq, ref, u_prev, cfg: MpcConfig, params: ModelParams) -> np.ndarray:
    """Exact gradient of :func:`total_cost` w.r.t. the (N, 3) input sequence."""
    x, U, R, up = _problem(x0, u_seq, ref, u_prev, cfg, params)
    _, G = _kernels.cost_and_gradient(x, U, R, up, cfg.dt, params.as_tuple(),
                                      cfg.Qx, cfg.Qu, cfg.Qdu, cfg.hover_input(params))
    return G


def project(u_seq, cfg: MpcConfig) -> np.ndarray:
    return _kernels.project(np.asarray(u_seq, dtype=float), cfg.lower, cfg.upper)


def shift_warm_start(u_seq: np.ndarray) -> np.ndarray:
    """Drop the applied first input and repeat the last one."""
    return np.vstack([u_seq[1:], u_seq[-1:]])


def solve(x0, ref, warm_start, u_prev, cfg: MpcConfig, params: ModelParams) -> MpcSolution:
    cfg.validate_for(params)
    n = cfg.horizon
    ud = cfg.hover_input(params)
    if warm_start is None:
        U0 = np.tile(ud, (n, 1))
    else:
        U0 = _inputs(warm_start, n)
    x, R, up = _arr(x0), _refs(ref, n), _arr(u_prev)
    t0 = time.perf_counter()
    U, J, iters, status, hist = _kernels.projected_gradient(
        x, U0, R, up, cfg.dt, params.as_tuple(), cfg.Qx, cfg.Qu, cfg.Qdu, ud,
        cfg.lower, cfg.upper, cfg.max_iters, cfg.tol, cfg.initial_step,
        cfg.backtrack, cfg.armijo, cfg.max_backtracks)
    elapsed = time.perf_counter() - t0
    if status == 3:
        raise SolverDivergenceError(f"non-finite cost after {iters} iterations", U)
    return MpcSolution(
        u_seq=U,
        first_input=ControlInput.from_array(U[0]),
        cost=float(J),
        iterations=int(iters),
        solve_time=elapsed,
        converged=status == 0,
        cost_history=hist.copy(),
    )


def warmup(params: ModelParams | None = None):
    """Trigger JIT compilation so the first timed solve is not skewed."""
    params = params or ModelParams()
    cfg = MpcConfig(horizon=2, max_iters=2)
    hover = UavState()
    ref = [ReferencePoint(np.ones(3))] * 2
    solve(hover, ref, None, ControlInput.hover(params), cfg, params)
