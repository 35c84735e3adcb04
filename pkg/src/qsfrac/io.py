"""Versioned output files: trajectory JSON, report CSV, check summary JSON."""

from __future__ import annotations

import csv
import json
from pathlib import Path

from .crack import crack_measure
from .linearize import REPORT_COLUMNS, ConvergenceReport

SCHEMA_VERSION = 1


def trajectory_to_dict(traj) -> dict:
    spec = traj.mesh.spec
    p = traj.params
    steps = []
    for n, t in enumerate(traj.times):
        f = traj.fields[n]
        steps.append(
            {
                "time": float(t),
                "energy": traj.energies[n].as_dict(),
                "crack_length": crack_measure(traj.mesh, traj.cumulative[n]),
                "broken": sorted(traj.cumulative[n].broken),
                "new_broken": sorted(traj.increments[n].broken),
                "field_kind": f.kind,
                "slot_dof": f.dofs.slot_dof.ravel().tolist(),
                "values": f.values.ravel().tolist(),
            }
        )
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "trajectory",
        "model": traj.model,
        "grid": {
            "width": spec.width,
            "height": spec.height,
            "cells_x": spec.cells_x,
            "cells_y": spec.cells_y,
            "margin": spec.margin,
        },
        "params": {"epsilon": p.epsilon, "beta": p.beta, "gamma": p.gamma, "kappa": p.kappa, "r": p.r},
        "density": traj.density,
        "partition_level": traj.partition.level,
        "boundary": traj.program.describe(),
        "initial_crack": sorted(traj.initial_crack),
        "steps": steps,
    }


def write_trajectory(traj, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(trajectory_to_dict(traj), separators=(",", ":"))
    path.write_text(text + "\n", encoding="utf-8")
    return path


def read_json(path) -> dict:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"{path}: unsupported schema_version {data.get('schema_version')}")
    return data


REPORT_HEADER = f"# qsfrac convergence report schema_version={SCHEMA_VERSION}"


def write_report(report: ConvergenceReport, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(REPORT_HEADER + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for row in report.rows:
            w.writerow([repr(float(row[c])) for c in REPORT_COLUMNS])
    return path


def read_report(path) -> ConvergenceReport:
    with open(path, encoding="utf-8", newline="") as fh:
        first = fh.readline().strip()
        if first != REPORT_HEADER:
            raise ValueError(f"{path}: missing or unsupported schema header")
        rows = list(csv.DictReader(fh))
    return ConvergenceReport([{k: float(v) for k, v in r.items()} for r in rows])


def write_summary(results, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = {
        "schema_version": SCHEMA_VERSION,
        "kind": "check",
        "all_passed": all(r.passed for r in results),
        "criteria": [r.as_dict() for r in results],
    }
    path.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")
    return path
