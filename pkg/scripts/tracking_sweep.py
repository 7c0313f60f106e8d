"""Tracking error versus link latency.

Scales both one-way means of a stochastic link from 0 up to several times
the profile-A values and reports the post-transient tracking error of the
helical scenario for each scale. Optionally writes a whitespace table for
plotting.

    python3 scripts/tracking_sweep.py --scales 0 1 2 4 8 --duration 40
"""
import argparse
from pathlib import Path

from edgempc.config import parse_config
from edgempc.runtime import run_episode

UP, DOWN = 14.2, 17.6


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scales", type=float, nargs="+", default=[0, 0.5, 1, 2, 4, 8])
    ap.add_argument("--duration", type=float, default=40.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--scenario", default="helical-profile-A")
    ap.add_argument("--out", type=Path, help="write sweep.dat here")
    args = ap.parse_args(argv)

    rows = []
    print(f"{'scale':>6}{'rtt ms':>10}{'err mean m':>12}{'err max m':>12}{'degraded':>10}")
    for k in args.scales:
        links = {d: {"mean": k * m, "jitter_std": 0.25 * k * m, "spike_prob": 0.01 if k else 0.0}
                 for d, m in (("uplink", UP), ("downlink", DOWN))}
        cfg = parse_config(None, scenario=args.scenario,
                           overrides={"profile": links, "duration": args.duration,
                                      "seed": args.seed})
        _, s = run_episode(cfg)
        rows.append((k, s.rtt.mean, s.error.mean, s.error.max, s.degraded))
        print(f"{k:>6g}{s.rtt.mean:>10.1f}{s.error.mean:>12.4f}{s.error.max:>12.4f}"
              f"{s.degraded:>10d}")
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        with open(args.out / "sweep.dat", "w") as fh:
            fh.write("# scale rtt_ms err_mean err_max degraded\n")
            for r in rows:
                fh.write(" ".join(repr(v) for v in r) + "\n")


if __name__ == "__main__":
    main()
