"""Command-line driver: ``edgempc --scenario helical-profile-A --out runs/a``."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .config import SCENARIOS, ConfigError, dump_config, parse_config
from .runtime import ScenarioConfig, run_episode
from .traces import format_summary, write_plot_files, write_trace

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("edgempc")


@dataclass
class RunManifest:
    config_path: str | None
    config: ScenarioConfig
    out_dir: Path
    scenario: str | None
    version: str = __version__

    @property
    def seed(self) -> int:
        return self.config.seed

    def dump(self) -> str:
        meta = {"tool_version": self.version, "config_path": self.config_path,
                "output_dir": str(self.out_dir), "seed": self.seed}
        return dump_config(self.config, scenario=self.scenario, manifest=meta)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="edgempc", description=__doc__)
    p.add_argument("--config", help="YAML scenario file")
    p.add_argument("--scenario", choices=SCENARIOS, help="built-in scenario used as the base")
    p.add_argument("--seed", type=int)
    p.add_argument("--duration", type=float, help="episode length in seconds")
    p.add_argument("--rate", type=float, help="control rate in Hz")
    p.add_argument("--horizon", type=int, help="MPC prediction horizon (steps)")
    p.add_argument("--profile", help="latency preset, e.g. profile-A or profile-B:degenerate")
    p.add_argument("--exec-model", help="'measured' or 'simulated:MS'")
    p.add_argument("--mode", choices=("deterministic", "realtime"))
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--print-config", action="store_true",
                   help="print the resolved configuration and exit")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def overrides_from_args(args) -> dict:
    o = {}
    if args.scenario:
        o["scenario"] = args.scenario
    for key in ("seed", "duration", "mode", "profile"):
        v = getattr(args, key)
        if v is not None:
            o[key] = v
    if args.exec_model is not None:
        o["exec_model"] = args.exec_model
    if args.rate is not None:
        o["control_rate"] = args.rate
    if args.horizon is not None:
        o.setdefault("mpc", {})["horizon"] = args.horizon
    return o


def run_scenario(manifest: RunManifest) -> int:
    out = manifest.out_dir
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "manifest.yaml").write_text(manifest.dump())
    except OSError as exc:
        print(f"error: cannot write to {out}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    try:
        records, summary = run_episode(manifest.config)
    except Exception as exc:  # any failure mid-episode is a runtime error
        log.exception("episode failed")
        print(f"error: episode failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    text = format_summary(summary)
    try:
        write_trace(out / "trace.csv", records)
        write_plot_files(out, records)
        (out / "summary.txt").write_text(text)
    except OSError as exc:
        print(f"error: writing outputs failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(text, end="")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    overrides = overrides_from_args(args)
    try:
        cfg = parse_config(args.config, overrides=overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    scenario = overrides.get("scenario")
    manifest = RunManifest(args.config, cfg, Path(args.out), scenario)
    if args.print_config:
        print(manifest.dump(), end="")
        return EXIT_OK
    return run_scenario(manifest)


if __name__ == "__main__":
    sys.exit(main())
