"""Episode output files: CSV trace, plot-ready .dat columns and summary text."""
from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .dynamics import ControlInput, UavState
from .mpc import ReferencePoint
from .runtime import CycleRecord, EpisodeSummary

SCHEMA_VERSION = 1
TRACE_COLUMNS = (
    "k", "t", "T_ttre", "T_exec", "T_tter", "T_rtt",
    "px", "py", "pz", "vx", "vy", "vz", "roll", "pitch",
    "thrust", "roll_ref", "pitch_ref",
    "ref_px", "ref_py", "ref_pz", "ref_vx", "ref_vy", "ref_vz", "ref_roll", "ref_pitch",
    "tracking_error", "degraded", "iterations", "cost",
)


def _f(v: float) -> str:
    # repr round-trips exactly
    return repr(float(v))


def record_row(r: CycleRecord) -> list[str]:
    s, u, ref = r.state_at_send, r.applied_input, r.reference
    return ([str(r.k)] + [_f(v) for v in (r.t, r.T_ttre, r.T_exec, r.T_tter, r.T_rtt)]
            + [_f(v) for v in s.as_array()]
            + [_f(v) for v in u.as_array()]
            + [_f(v) for v in ref.as_array()]
            + [_f(r.tracking_error), str(int(r.degraded)), str(r.iterations), _f(r.cost)])


def row_record(row: dict) -> CycleRecord:
    g = lambda *keys: [float(row[k]) for k in keys]  # noqa: E731
    return CycleRecord(
        k=int(row["k"]), t=float(row["t"]),
        T_ttre=float(row["T_ttre"]), T_exec=float(row["T_exec"]),
        T_tter=float(row["T_tter"]), T_rtt=float(row["T_rtt"]),
        state_at_send=UavState.from_array(g("px", "py", "pz", "vx", "vy", "vz", "roll", "pitch")),
        applied_input=ControlInput(*g("thrust", "roll_ref", "pitch_ref")),
        reference=ReferencePoint(g("ref_px", "ref_py", "ref_pz"), g("ref_vx", "ref_vy", "ref_vz"),
                                 float(row["ref_roll"]), float(row["ref_pitch"])),
        tracking_error=float(row["tracking_error"]),
        degraded=bool(int(row["degraded"])),
        iterations=int(row["iterations"]),
        cost=float(row["cost"]),
    )


def write_trace(path, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in records:
            w.writerow(record_row(r))


def read_trace(path) -> list[CycleRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != TRACE_COLUMNS:
            raise ValueError(f"{path}: trace header does not match schema v{SCHEMA_VERSION}")
        return [row_record(row) for row in reader]


def _write_dat(path, header, rows) -> None:
    with open(path, "w") as fh:
        fh.write("# " + " ".join(header) + "\n")
        for row in rows:
            fh.write(" ".join(_f(v) if isinstance(v, float) else str(v) for v in row) + "\n")


def write_plot_files(out_dir, records) -> None:
    out = Path(out_dir)
    _write_dat(out / "trajectory3d.dat", ("t", "x", "y", "z", "x_ref", "y_ref", "z_ref"),
               [(r.t, *map(float, r.state_at_send.p), *map(float, r.reference.p)) for r in records])
    _write_dat(out / "delays.dat", ("k", "t", "ttre", "exec", "tter", "rtt"),
               [(r.k, r.t, r.T_ttre, r.T_exec, r.T_tter, r.T_rtt) for r in records])
    _write_dat(out / "error.dat", ("t", "euclidean_error"),
               [(r.t, r.tracking_error) for r in records])


def format_summary(s: EpisodeSummary) -> str:
    lines = [
        f"cycles: {s.cycles}  degraded: {s.degraded}",
        f"{'quantity':<14}{'mean':>10}{'std':>10}{'max':>10}   (ms)",
    ]
    for label, st in (("robot->edge", s.ttre), ("execution", s.exec),
                      ("edge->robot", s.tter), ("round trip", s.rtt)):
        lines.append(f"{label:<14}{st.mean:>10.1f}{st.std:>10.1f}{st.max:>10.1f}")
    e = s.error
    if math.isnan(e.mean):
        lines.append(f"tracking error: no cycles after the {s.transient:g} s transient")
    else:
        lines.append(f"tracking error after {s.transient:g} s: "
                     f"mean {e.mean:.4f} m  max {e.max:.4f} m")
    return "\n".join(lines) + "\n"
