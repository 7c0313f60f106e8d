"""Closed loop between the simulated vehicle and the remote MPC.

The vehicle publishes odometry at the control rate over the robot->edge link,
the controller solves on arrival and publishes its first input over the
edge->robot link, and the vehicle holds the latest delivered command between
arrivals. Each controller activation yields a :class:`CycleRecord` whose
round trip is the sum of uplink delay, execution time and downlink delay.
"""
from __future__ import annotations

import logging
import math
import threading
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import mpc
from .dynamics import ControlInput, ModelParams, UavState, clamp_attitude, rk4_array
from .mpc import MpcConfig, ReferencePoint, SolverDivergenceError
from .netsim import LatencyProfile, LinkRng, MessageBus, preset
from .reference import TrajectorySpec, reference_array

log = logging.getLogger(__name__)

MODES = ("deterministic", "realtime")


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    trajectory: TrajectorySpec = field(default_factory=TrajectorySpec)
    uplink: LatencyProfile = field(default_factory=lambda: preset("profile-A")[0])
    downlink: LatencyProfile = field(default_factory=lambda: preset("profile-A")[1])
    control_rate: float = 100.0
    plant_rate: float = 500.0
    mpc: MpcConfig = field(default_factory=MpcConfig)
    model: ModelParams = field(default_factory=ModelParams)
    mode: str = "deterministic"
    # None -> measured solve time, otherwise a simulated execution delay in ms
    exec_ms: float | None = 16.1
    seed: int = 0
    duration: float = 80.0
    transient: float = 5.0
    # None -> start hovering at the reference position at t = 0
    initial_state: UavState | None = None

    def __post_init__(self):
        if not self.control_rate > 0:
            raise ValueError("control_rate must be > 0")
        if not self.plant_rate >= self.control_rate:
            raise ValueError("plant_rate must be >= control_rate")
        ratio = self.plant_rate / self.control_rate
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("plant_rate must be an integer multiple of control_rate")
        if not self.duration > 0:
            raise ValueError("duration must be > 0")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.exec_ms is not None and not self.exec_ms >= 0:
            raise ValueError("simulated execution time must be >= 0")
        if self.transient < 0:
            raise ValueError("transient must be >= 0")
        self.mpc.validate_for(self.model)

    @property
    def oversample(self) -> int:
        return int(round(self.plant_rate / self.control_rate))


@dataclass(frozen=True, eq=False)
class CycleRecord:
    k: int
    t: float                    # odometry publish time, s
    T_ttre: float               # ms
    T_exec: float               # ms
    T_tter: float               # ms
    T_rtt: float                # ms
    state_at_send: UavState
    applied_input: ControlInput
    reference: ReferencePoint
    tracking_error: float       # m
    degraded: bool = False
    iterations: int = 0
    cost: float = 0.0


@dataclass(frozen=True)
class Stat:
    mean: float
    std: float
    max: float
    min: float

    @classmethod
    def of(cls, values) -> "Stat":
        a = np.asarray(values, dtype=float)
        if a.size == 0:
            return cls(math.nan, math.nan, math.nan, math.nan)
        return cls(float(np.mean(a)), float(np.std(a)), float(np.max(a)), float(np.min(a)))


@dataclass(frozen=True, eq=False)
class EpisodeSummary:
    ttre: Stat
    exec: Stat
    tter: Stat
    rtt: Stat
    error: Stat                 # post-transient tracking error
    cycles: int
    degraded: int
    transient: float
    config: ScenarioConfig | None = None


def compute_rtt(record: CycleRecord) -> float:
    return record.T_ttre + record.T_exec + record.T_tter


def euclidean_error(p, p_ref) -> float:
    return float(np.linalg.norm(np.asarray(p, float) - np.asarray(p_ref, float)))


def summarize(records, transient: float = 5.0, config: ScenarioConfig | None = None) -> EpisodeSummary:
    if not records:
        raise ValueError("cannot summarize an empty record list")
    return EpisodeSummary(
        ttre=Stat.of([r.T_ttre for r in records]),
        exec=Stat.of([r.T_exec for r in records]),
        tter=Stat.of([r.T_tter for r in records]),
        rtt=Stat.of([r.T_rtt for r in records]),
        error=Stat.of([r.tracking_error for r in records if r.t >= transient]),
        cycles=len(records),
        degraded=sum(r.degraded for r in records),
        transient=transient,
        config=config,
    )


@dataclass(frozen=True)
class Application:
    """A command taking effect on the vehicle (for causality checks)."""
    t: float
    seq: int
    t_published: float
    t_deliver: float


class _Controller:
    """Edge-side MPC node: consumes odometry, emits commands."""

    def __init__(self, cfg: ScenarioConfig, solve_fn, on_solve):
        self.cfg = cfg
        self.solve_fn = solve_fn
        self.on_solve = on_solve
        self.ud = cfg.mpc.hover_input(cfg.model)
        self.u_prev = self.ud.copy()
        self.warm = None
        self.k = 0

    def handle(self, msg) -> tuple[np.ndarray, float, CycleRecord]:
        """Solve for one odometry message; returns (command, exec_ms, partial record)."""
        cfg = self.cfg
        x = msg.payload
        t = min(msg.t_published, cfg.trajectory.duration)
        R = reference_array(cfg.trajectory, t, cfg.mpc.horizon, cfg.mpc.dt)
        degraded = False
        try:
            sol = self.solve_fn(x, R, self.warm, self.u_prev, cfg.mpc, cfg.model)
        except SolverDivergenceError as exc:
            log.warning("cycle %d: %s; holding previous command", self.k, exc)
            sol = None
            degraded = True
        if sol is not None:
            if self.on_solve is not None:
                self.on_solve(sol)
            u = sol.u_seq[0].copy()
            self.warm = mpc.shift_warm_start(sol.u_seq)
            exec_ms = sol.solve_time * 1000.0 if cfg.exec_ms is None else cfg.exec_ms
            iters, J = sol.iterations, sol.cost
        else:
            u = self.u_prev.copy()
            exec_ms = 0.0 if cfg.exec_ms is None else cfg.exec_ms
            iters, J = 0, math.nan
        self.u_prev = u
        ref = ReferencePoint(R[0, 0:3], R[0, 3:6], R[0, 6], R[0, 7])
        state = UavState.from_array(x)
        rec = CycleRecord(
            k=self.k, t=msg.t_published, T_ttre=msg.delay_ms, T_exec=exec_ms,
            T_tter=0.0, T_rtt=0.0, state_at_send=state,
            applied_input=ControlInput.from_array(u), reference=ref,
            tracking_error=euclidean_error(x[0:3], R[0, 0:3]),
            degraded=degraded, iterations=iters, cost=J)
        self.k += 1
        return u, exec_ms, rec


def _finish(rec: CycleRecord, tter: float) -> CycleRecord:
    return CycleRecord(
        k=rec.k, t=rec.t, T_ttre=rec.T_ttre, T_exec=rec.T_exec, T_tter=tter,
        T_rtt=rec.T_ttre + rec.T_exec + tter, state_at_send=rec.state_at_send,
        applied_input=rec.applied_input, reference=rec.reference,
        tracking_error=rec.tracking_error, degraded=rec.degraded,
        iterations=rec.iterations, cost=rec.cost)


def initial_state(cfg: ScenarioConfig) -> np.ndarray:
    if cfg.initial_state is not None:
        return cfg.initial_state.as_array()
    x = np.zeros(8)
    x[0:3] = reference_array(cfg.trajectory, 0.0, 1, cfg.mpc.dt)[0, 0:3]
    return x


def run_episode(cfg: ScenarioConfig, *, solve_fn: Callable = mpc.solve,
                on_solve: Callable | None = None,
                applications: list | None = None):
    """Run one closed-loop episode; returns ``(records, summary)``.

    ``on_solve`` sees every :class:`~edgempc.mpc.MpcSolution`;
    ``applications`` (if given) collects an :class:`Application` per command
    taking effect on the vehicle.
    """
    if cfg.mode == "realtime":
        records = _run_realtime(cfg, solve_fn, on_solve, applications)
    else:
        records = _run_deterministic(cfg, solve_fn, on_solve, applications)
    if not records:
        raise RuntimeError("episode produced no controller activations")
    return records, summarize(records, cfg.transient, cfg)


def _run_deterministic(cfg, solve_fn, on_solve, applications):
    bus = MessageBus()
    up_rng, down_rng = LinkRng([cfg.seed, 0]), LinkRng([cfg.seed, 1])
    ctrl = _Controller(cfg, solve_fn, on_solve)
    params = cfg.model
    h = 1.0 / cfg.plant_rate
    n_ticks = int(round(cfg.duration * cfg.plant_rate))
    over = cfg.oversample
    x = initial_state(cfg)
    u = ctrl.ud.copy()
    records = []
    for i in range(n_ticks):
        now = i / cfg.plant_rate
        if i % over == 0:
            bus.publish("odometry", x.copy(), now, cfg.uplink, up_rng)
        # activations are processed lazily at the tick clock but stamped at
        # their own event times, so the delay chain is exact
        for msg in bus.poll("odometry", now):
            cmd, exec_ms, rec = ctrl.handle(msg)
            t_pub = msg.t_deliver + exec_ms / 1000.0
            seq = bus.publish("command", cmd, t_pub, cfg.downlink, down_rng)
            records.append((rec, seq))
        for msg in bus.poll("command", now):
            u = msg.payload
            if applications is not None:
                applications.append(Application(now, msg.seq, msg.t_published, msg.t_deliver))
        x = clamp_attitude(rk4_array(x, u, params, h), params)
    # odometry sent inside the episode but still in flight: solve it anyway so
    # every control period gets exactly one record
    for msg in bus.poll("odometry", math.inf):
        cmd, exec_ms, rec = ctrl.handle(msg)
        seq = bus.publish("command", cmd, msg.t_deliver + exec_ms / 1000.0, cfg.downlink, down_rng)
        records.append((rec, seq))
    return _attach_downlink(records, bus)


def _attach_downlink(records, bus):
    # downlink delay is fixed at publish time; read it back from the bus log
    delays = bus.sent_delays("command")
    return [_finish(rec, delays[seq]) for rec, seq in records]


def _run_realtime(cfg, solve_fn, on_solve, applications):
    bus = MessageBus()
    up_rng, down_rng = LinkRng([cfg.seed, 0]), LinkRng([cfg.seed, 1])
    ctrl = _Controller(cfg, solve_fn, on_solve)
    params = cfg.model
    h = 1.0 / cfg.plant_rate
    n_ticks = int(round(cfg.duration * cfg.plant_rate))
    over = cfg.oversample
    records = []
    rec_lock = threading.Lock()
    stop = threading.Event()
    t0 = time.perf_counter()

    def clock():
        return time.perf_counter() - t0

    def plant():
        x = initial_state(cfg)
        u = ctrl.ud.copy()
        for i in range(n_ticks):
            target = i * h
            lag = target - clock()
            if lag > 0:
                time.sleep(lag)
            if i % over == 0:
                bus.publish("odometry", x.copy(), clock(), cfg.uplink, up_rng)
            now = clock()
            for msg in bus.poll("command", now):
                u = msg.payload
                if applications is not None:
                    applications.append(Application(now, msg.seq, msg.t_published, msg.t_deliver))
            x = clamp_attitude(rk4_array(x, u, params, h), params)
        stop.set()

    def controller():
        while not stop.is_set():
            msgs = bus.poll("odometry", clock())
            if not msgs:
                time.sleep(2e-4)
                continue
            for msg in msgs:
                cmd, exec_ms, rec = ctrl.handle(msg)
                if cfg.exec_ms is not None:
                    time.sleep(cfg.exec_ms / 1000.0)
                seq = bus.publish("command", cmd, clock(), cfg.downlink, down_rng)
                with rec_lock:
                    records.append((rec, seq))

    mpc.warmup(params)
    threads = [threading.Thread(target=plant, name="plant"),
               threading.Thread(target=controller, name="controller")]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    bus.close()
    return _attach_downlink(records, bus)
