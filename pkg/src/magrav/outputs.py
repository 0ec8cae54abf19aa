"""Deterministic artifact serialization: CSV trajectories, JSONL events, manifests.

Floats go out with 17 significant digits so CSV reparses reproduce the
in-memory values exactly; all files use UNIX newlines; no locale-dependent
formatting anywhere. Identical inputs yield byte-identical bundles.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .clouds import Trajectory

__all__ = [
    "Bundle",
    "format_float",
    "trajectory_csv",
    "parse_trajectory_csv",
    "events_jsonl",
    "summary_csv",
    "write_outputs",
]


def format_float(x: float) -> str:
    return format(float(x), ".17g")


@dataclass
class Bundle:
    """In-memory artifact set: file name -> text. Written in one pass."""

    manifest: dict
    files: dict[str, str] = field(default_factory=dict)
    paths: list[Path] = field(default_factory=list)

    def add(self, name: str, content: str) -> None:
        self.files[name] = content


def trajectory_csv(traj: Trajectory) -> str:
    if traj.dim != 1:
        raise ValueError("trajectory files are defined for d = 1 output only")
    label = "theta" if traj.gauge == "theta" else "t"
    n = traj.n_particles
    header = label + "," + ",".join(f"z_{i}" for i in range(1, n + 1))
    lines = [header]
    states = traj.states1d()
    for k, t in enumerate(traj.grid):
        lines.append(",".join([format_float(t)] + [format_float(v) for v in states[k]]))
    return "\n".join(lines) + "\n"


def parse_trajectory_csv(text: str) -> tuple[str, np.ndarray, np.ndarray]:
    """Inverse of ``trajectory_csv``: (gauge, grid, states)."""
    lines = text.strip().split("\n")
    label = lines[0].split(",")[0]
    gauge = "theta" if label == "theta" else "t"
    rows = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    return gauge, rows[:, 0], rows[:, 1:]


def events_jsonl(events) -> str:
    lines = []
    for ev in events:
        lines.append(json.dumps({
            "time": ev.time,
            "position": ev.position,
            "members": [int(i) for i in ev.members],
            "incoming_masses": [int(k) for k in ev.incoming_masses],
            "incoming_velocities": list(ev.incoming_velocities),
            "outgoing_velocity": ev.outgoing_velocity,
            "kinetic_loss": ev.kinetic_loss,
        }, sort_keys=True))
    return "\n".join(lines) + ("\n" if lines else "")


def summary_csv(rows) -> str:
    """Sweep summary, sorted by decreasing epsilon, fixed column order.

    Rows are (epsilon, min_value, limit_value, sup_dist_oracle or None).
    """
    rows = sorted(rows, key=lambda r: -r[0])
    lines = ["epsilon,min_value,limit_value,sup_dist_oracle"]
    for eps, min_value, limit_value, sup_dist in rows:
        cells = [format_float(eps), format_float(min_value), format_float(limit_value)]
        cells.append("" if sup_dist is None else format_float(sup_dist))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def write_outputs(bundle: Bundle, out_dir) -> list[Path]:
    """Serialize the bundle: every artifact, then the manifest listing them."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    digests = {}
    for name in sorted(bundle.files):
        path = out / name
        path.write_text(bundle.files[name], encoding="utf-8", newline="\n")
        digests[name] = hashlib.sha256(bundle.files[name].encode("utf-8")).hexdigest()
        paths.append(path)
    manifest = dict(bundle.manifest)
    manifest["artifacts"] = digests
    manifest_path = out / "manifest.json"
    manifest_path.write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n"
    )
    paths.append(manifest_path)
    bundle.paths = paths
    return paths
