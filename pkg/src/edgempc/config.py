"""YAML scenario files: parsing with line-anchored errors, defaults, emission."""
from __future__ import annotations

import copy
import math
import re
from pathlib import Path

import numpy as np
import yaml

from .dynamics import ModelParams, UavState
from .mpc import MpcConfig
from .netsim import LatencyProfile, PRESET_MEANS, preset
from .reference import TrajectorySpec
from .runtime import ScenarioConfig


class ConfigError(Exception):
    """Configuration problem; ``line`` is 1-based when known."""

    def __init__(self, message, path=None, line=None):
        self.path, self.line = path, line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


SCENARIOS = ("circular-profile-A", "circular-profile-B",
             "helical-profile-A", "helical-profile-B", "hover-ideal")
DEFAULT_SCENARIO = "helical-profile-A"
# mean execution times reported alongside each latency preset, ms
PRESET_EXEC_MS = {"profile-A": 16.1, "profile-B": 16.9, "ideal": 0.0}

TOP_KEYS = {"scenario", "seed", "duration", "mode", "control_rate", "plant_rate",
            "exec_model", "transient", "profile", "trajectory", "mpc", "model",
            "initial_state", "manifest"}
TRAJ_KEYS = {"kind", "center", "radius", "angular_rate", "climb_rate",
             "start_altitude", "duration", "phase"}
LINK_KEYS = {"mean", "jitter_std", "spike_prob", "spike_scale", "floor", "distribution"}
PROFILE_KEYS = {"name", "uplink", "downlink"}
MPC_KEYS = {"horizon", "dt", "Qx", "Qu", "Qdu", "u_d", "thrust_max", "roll_max",
            "pitch_max", "max_iters", "tol", "initial_step", "backtrack", "armijo",
            "max_backtracks"}
MODEL_KEYS = {"g", "damping", "k_roll", "k_pitch", "tau_roll", "tau_pitch", "angle_margin"}
STATE_KEYS = {"p", "v", "roll", "pitch"}


# -- scenario presets ----------------------------------------------------------

def parse_profile_name(name: str) -> tuple[str, bool]:
    """``profile-A`` or ``profile-A:degenerate`` -> (preset, degenerate)."""
    base, _, flavour = str(name).partition(":")
    if base not in PRESET_MEANS:
        raise ValueError(f"unknown profile {base!r}; known: {sorted(PRESET_MEANS)}")
    if flavour not in ("", "degenerate", "stochastic"):
        raise ValueError(f"unknown profile flavour {flavour!r} (use :degenerate or :stochastic)")
    return base, flavour == "degenerate"


def scenario_defaults(name: str) -> dict:
    """Fully populated raw config for a built-in scenario."""
    if name not in SCENARIOS:
        raise ValueError(f"unknown scenario {name!r}; known: {', '.join(SCENARIOS)}")
    raw = {
        "scenario": name,
        "seed": 0,
        "mode": "deterministic",
        "control_rate": 100.0,
        "transient": 5.0,
        "initial_state": None,
    }
    if name == "hover-ideal":
        raw.update(duration=10.0, profile="ideal", exec_model="simulated:0",
                   trajectory={"kind": "setpoint", "center": [0.0, 0.0, 0.0],
                               "start_altitude": 2.0, "duration": 10.0})
        return raw
    kind, prof = name.split("-", 1)
    traj = {"kind": kind, "center": [0.0, 0.0, 0.0], "radius": 2.0,
            "angular_rate": 2 * math.pi / 40, "start_altitude": 2.0,
            "duration": 80.0, "phase": 0.0,
            "climb_rate": 0.05 if kind == "helical" else 0.0}
    raw.update(duration=80.0, profile=prof, trajectory=traj,
               exec_model=f"simulated:{PRESET_EXEC_MS[prof]}")
    return raw


# -- line map ------------------------------------------------------------------

def _line_map(text: str) -> dict[tuple, int]:
    """Key path -> 1-based line of the key in the YAML source."""
    root = yaml.compose(text, Loader=yaml.SafeLoader)
    lines = {}

    def walk(node, path):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                p = path + (k.value,)
                lines[p] = k.start_mark.line + 1
                walk(v, p)

    if root is not None:
        walk(root, ())
    return lines


class _Ctx:
    def __init__(self, path, lines):
        self.path, self.lines = path, lines

    def line(self, keypath):
        keypath = tuple(keypath)
        while keypath:
            if keypath in self.lines:
                return self.lines[keypath]
            keypath = keypath[:-1]
        return None

    def fail(self, keypath, msg):
        name = ".".join(keypath) if keypath else "<root>"
        raise ConfigError(f"field '{name}': {msg}", self.path, self.line(keypath))

    def check_keys(self, section, allowed, keypath):
        if not isinstance(section, dict):
            self.fail(keypath, f"expected a mapping, got {type(section).__name__}")
        for k in section:
            if k not in allowed:
                self.fail(tuple(keypath) + (str(k),), "unknown key")

    def build(self, factory, kwargs, keypath, keys):
        """Construct ``factory(**kwargs)``, attributing ValueErrors to a field."""
        try:
            return factory(**kwargs)
        except (ValueError, TypeError) as exc:
            msg = str(exc)
            m = re.match(r"\s*(\w+)", msg)
            field = m.group(1) if m and m.group(1) in keys else None
            self.fail(tuple(keypath) + ((field,) if field else ()), msg)


def _num(ctx, raw, key, keypath, cast=float):
    v = raw[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        ctx.fail(tuple(keypath) + (key,), f"expected a number, got {v!r}")
    if cast is int and int(v) != v:
        ctx.fail(tuple(keypath) + (key,), f"expected an integer, got {v!r}")
    return cast(v)


def _floats(ctx, raw, key, keypath, section_keys):
    """Coerce the numeric scalar entries of ``raw``."""
    out = {}
    for k, v in raw.items():
        if isinstance(v, (list, tuple, str)) or v is None:
            out[k] = v
        else:
            out[k] = _num(ctx, raw, k, keypath, int if k in section_keys else float)
    return out


# -- parse ---------------------------------------------------------------------

def _deep_update(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_update(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def parse_config(path=None, *, text: str | None = None, overrides: dict | None = None,
                 scenario: str | None = None) -> ScenarioConfig:
    """Load and validate a scenario file.

    ``scenario`` picks the built-in base when the file does not name one;
    ``overrides`` (already-typed raw values, e.g. from CLI flags) are merged
    on top of the file before validation.
    """
    label = str(path) if path is not None else "<config>"
    if text is None:
        if path is None:
            text = ""
        else:
            p = Path(path)
            if not p.is_file():
                raise ConfigError(f"config file not found: {p}")
            text = p.read_text()
    try:
        data = yaml.safe_load(text)
        lines = _line_map(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigError(f"malformed YAML: {problem}", label, line) from None
    if data is None:
        data = {}
    ctx = _Ctx(label, lines)
    ctx.check_keys(data, TOP_KEYS, ())
    data = {k: v for k, v in data.items() if k != "manifest"}
    if overrides:
        data = _deep_update(data, overrides)
    name = data.get("scenario") or scenario or DEFAULT_SCENARIO
    try:
        base = scenario_defaults(name)
    except ValueError as exc:
        ctx.fail(("scenario",), str(exc))
    if isinstance(data.get("profile"), str) and "exec_model" not in data:
        # a preset latency profile brings its reported execution time along
        try:
            prof, _ = parse_profile_name(data["profile"])
            data["exec_model"] = f"simulated:{PRESET_EXEC_MS[prof]}"
        except ValueError:
            pass
    raw = _deep_update(base, data)
    return _build(ctx, raw)


def _parse_exec(ctx, value):
    s = str(value).strip()
    if s == "measured":
        return None
    kind, _, ms = s.partition(":")
    if kind == "simulated":
        try:
            v = float(ms)
        except ValueError:
            v = math.nan
        if math.isfinite(v) and v >= 0:
            return v
    ctx.fail(("exec_model",), f"expected 'measured' or 'simulated:MS' with MS >= 0, got {value!r}")


def _build_link(ctx, raw, keypath):
    ctx.check_keys(raw, LINK_KEYS, keypath)
    if "mean" not in raw:
        ctx.fail(keypath, "missing 'mean'")
    kw = _floats(ctx, {k: v for k, v in raw.items() if k != "distribution"}, None, keypath, ())
    dist = raw.get("distribution", "lognormal-with-spikes")
    if dist == "lognormal-with-spikes":
        return ctx.build(LatencyProfile.stochastic, kw, keypath, LINK_KEYS)
    return ctx.build(LatencyProfile, dict(kw, distribution=dist), keypath, LINK_KEYS)


def _build_profile(ctx, raw):
    if isinstance(raw, str):
        try:
            base, degenerate = parse_profile_name(raw)
        except ValueError as exc:
            ctx.fail(("profile",), str(exc))
        return preset(base, degenerate)
    ctx.check_keys(raw, PROFILE_KEYS, ("profile",))
    up = dn = None
    if "name" in raw:
        try:
            up, dn = preset(*parse_profile_name(raw["name"]))
        except ValueError as exc:
            ctx.fail(("profile", "name"), str(exc))
    if "uplink" in raw:
        up = _build_link(ctx, raw["uplink"], ("profile", "uplink"))
    if "downlink" in raw:
        dn = _build_link(ctx, raw["downlink"], ("profile", "downlink"))
    if up is None or dn is None:
        ctx.fail(("profile",), "needs 'name' or both 'uplink' and 'downlink'")
    return up, dn


def _build(ctx, raw) -> ScenarioConfig:
    traj_raw = raw["trajectory"]
    ctx.check_keys(traj_raw, TRAJ_KEYS, ("trajectory",))
    traj = ctx.build(TrajectorySpec, _floats(ctx, traj_raw, None, ("trajectory",), ()),
                     ("trajectory",), TRAJ_KEYS)

    model_raw = raw.get("model") or {}
    ctx.check_keys(model_raw, MODEL_KEYS, ("model",))
    model = ctx.build(ModelParams, _floats(ctx, model_raw, None, ("model",), ()),
                      ("model",), MODEL_KEYS)

    control_rate = _num(ctx, raw, "control_rate", ())
    if not control_rate > 0:
        ctx.fail(("control_rate",), f"must be > 0, got {control_rate}")
    mpc_raw = dict(raw.get("mpc") or {})
    ctx.check_keys(mpc_raw, MPC_KEYS, ("mpc",))
    mpc_raw.setdefault("dt", 1.0 / control_rate)
    mpc_kw = _floats(ctx, mpc_raw, None, ("mpc",), {"horizon", "max_iters", "max_backtracks"})
    mpc_cfg = ctx.build(MpcConfig, mpc_kw, ("mpc",), MPC_KEYS)
    try:
        mpc_cfg.validate_for(model)
    except ValueError as exc:
        ctx.fail(("mpc", "thrust_max"), str(exc))

    up, dn = _build_profile(ctx, raw["profile"])

    init = raw.get("initial_state")
    if init is not None:
        ctx.check_keys(init, STATE_KEYS, ("initial_state",))
        init = ctx.build(UavState, _floats(ctx, init, None, ("initial_state",), ()),
                         ("initial_state",), STATE_KEYS)

    plant_rate = raw.get("plant_rate", 5 * control_rate)
    raw = dict(raw, plant_rate=plant_rate)
    kw = dict(
        trajectory=traj, uplink=up, downlink=dn,
        control_rate=control_rate,
        plant_rate=_num(ctx, raw, "plant_rate", ()),
        mpc=mpc_cfg, model=model,
        mode=raw["mode"],
        exec_ms=_parse_exec(ctx, raw["exec_model"]),
        seed=_num(ctx, raw, "seed", (), int),
        duration=_num(ctx, raw, "duration", ()),
        transient=_num(ctx, raw, "transient", ()),
        initial_state=init,
    )
    return ctx.build(ScenarioConfig, kw, (), TOP_KEYS)


# -- emit ----------------------------------------------------------------------

def _matrix(a: np.ndarray):
    if np.array_equal(a, np.diag(np.diag(a))):
        return [float(v) for v in np.diag(a)]
    return [[float(v) for v in row] for row in a]


def _link(p: LatencyProfile) -> dict:
    return {"mean": p.mean, "jitter_std": p.jitter_std, "spike_prob": p.spike_prob,
            "spike_scale": p.spike_scale, "floor": p.floor, "distribution": p.distribution}


def config_to_dict(cfg: ScenarioConfig) -> dict:
    """Fully resolved, re-parseable raw form of ``cfg``."""
    t, m, c = cfg.trajectory, cfg.mpc, cfg.model
    d = {
        "seed": cfg.seed,
        "duration": cfg.duration,
        "mode": cfg.mode,
        "control_rate": cfg.control_rate,
        "plant_rate": cfg.plant_rate,
        "exec_model": "measured" if cfg.exec_ms is None else f"simulated:{cfg.exec_ms!r}",
        "transient": cfg.transient,
        "profile": {"uplink": _link(cfg.uplink), "downlink": _link(cfg.downlink)},
        "trajectory": {"kind": t.kind, "center": [float(v) for v in t.center],
                       "radius": t.radius, "angular_rate": t.angular_rate,
                       "climb_rate": t.climb_rate, "start_altitude": t.start_altitude,
                       "duration": t.duration, "phase": t.phase},
        "mpc": {"horizon": m.horizon, "dt": m.dt, "Qx": _matrix(m.Qx), "Qu": _matrix(m.Qu),
                "Qdu": _matrix(m.Qdu), "u_d": list(m.u_d) if m.u_d is not None else None,
                "thrust_max": m.thrust_max, "roll_max": m.roll_max, "pitch_max": m.pitch_max,
                "max_iters": m.max_iters, "tol": m.tol, "initial_step": m.initial_step,
                "backtrack": m.backtrack, "armijo": m.armijo,
                "max_backtracks": m.max_backtracks},
        "model": {"g": c.g, "damping": list(c.damping), "k_roll": c.k_roll,
                  "k_pitch": c.k_pitch, "tau_roll": c.tau_roll, "tau_pitch": c.tau_pitch,
                  "angle_margin": c.angle_margin},
        "initial_state": None,
    }
    if cfg.initial_state is not None:
        s = cfg.initial_state
        d["initial_state"] = {"p": [float(v) for v in s.p], "v": [float(v) for v in s.v],
                              "roll": s.roll, "pitch": s.pitch}
    return d


def dump_config(cfg: ScenarioConfig, scenario: str | None = None, manifest: dict | None = None) -> str:
    d = config_to_dict(cfg)
    if scenario is not None:
        d = {"scenario": scenario, **d}
    if manifest is not None:
        d["manifest"] = manifest
    return yaml.safe_dump(d, sort_keys=False)
