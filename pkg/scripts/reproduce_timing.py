"""Round-trip timing table for the two latency presets.

Runs each built-in helical scenario twice: once with degenerate delays
(means reproduced exactly) and once with the stochastic link model, then
prints the one-way, execution and round-trip means side by side.

    python3 scripts/reproduce_timing.py --duration 80 --seed 3
"""
import argparse
import time

from edgempc.config import parse_config
from edgempc.runtime import run_episode


def row(label, s, wall):
    return (f"{label:<28}{s.ttre.mean:>8.1f}{s.exec.mean:>8.1f}{s.tter.mean:>8.1f}"
            f"{s.rtt.mean:>8.1f}{s.rtt.max:>8.1f}{wall:>8.1f}")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--duration", type=float, default=80.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--measured", action="store_true",
                    help="use measured solve time instead of the preset execution time")
    args = ap.parse_args(argv)

    print(f"{'run':<28}{'ttre':>8}{'exec':>8}{'tter':>8}{'rtt':>8}{'rtt max':>8}{'wall s':>8}")
    for prof in ("A", "B"):
        for kind in ("degenerate", "stochastic"):
            over = {"profile": f"profile-{prof}:{kind}", "duration": args.duration,
                    "seed": args.seed}
            if args.measured:
                over["exec_model"] = "measured"
            cfg = parse_config(None, scenario=f"helical-profile-{prof}", overrides=over)
            t0 = time.perf_counter()
            _, s = run_episode(cfg)
            print(row(f"profile-{prof} {kind}", s, time.perf_counter() - t0))


if __name__ == "__main__":
    main()
