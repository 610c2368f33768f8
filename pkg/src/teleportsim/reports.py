"""Result records and plot-ready exports.

A teleport report is a JSON document that is byte-identical for a given
(config, seed) pair apart from its ``wall_clock`` section.  The figure
export turns a set of reports into the summary bar-plot table: received
states against scenarios with the classical measure-and-prepare bound
alongside.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .sources import ConfigError
from .tomography import CLASSICAL_BOUND

REPORT_FORMAT = "teleportsim-report/1"


def _complex_matrix(m: np.ndarray) -> list:
    return [[[float(v.real), float(v.imag)] for v in row] for row in np.asarray(m)]


def build_report(
    cfg,
    evaluation: dict,
    diagnostics: dict,
    hom: dict | None = None,
    fast: bool = False,
    wall_clock: dict | None = None,
) -> dict:
    """Assemble the persisted run record."""
    per_input = {}
    for label, res in evaluation["per_input"].items():
        per_input[label] = {
            "counts": {
                "H": int(res.counts.c_h),
                "V": int(res.counts.c_v),
                "D": int(res.counts.c_d),
                "A": int(res.counts.c_a),
                "R": int(res.counts.c_r),
                "L": int(res.counts.c_l),
            },
            "stokes": [res.stokes.s_x, res.stokes.s_y, res.stokes.s_z],
            "rho": _complex_matrix(res.rho.matrix),
            "physicality_flag": bool(res.physicality_flag),
            "fidelity": res.fidelity,
            "fidelity_sigma": res.fidelity_sigma,
            "target": res.target_label,
        }
    report = {
        "format": REPORT_FORMAT,
        "scenario": cfg.scenario,
        "seed": cfg.seed,
        "fast": bool(fast),
        "results": {
            "per_input": per_input,
            "average_fidelity": evaluation["average_fidelity"],
            "average_sigma": evaluation["average_sigma"],
            "beats_classical_bound": evaluation["beats_classical_bound"],
            "classical_bound": evaluation["classical_bound"],
        },
        "hom": hom,
        "diagnostics": diagnostics,
        "config_echo": cfg.to_dict(),
        "wall_clock": wall_clock or {},
    }
    return report


def report_body_bytes(report: dict) -> bytes:
    """Deterministic serialization with wall-clock metadata excluded."""
    body = {k: v for k, v in report.items() if k != "wall_clock"}
    return json.dumps(body, sort_keys=True, indent=1).encode()


def write_report(path, report: dict) -> None:
    doc = dict(report)
    Path(path).write_text(
        json.dumps(doc, sort_keys=True, indent=1) + "\n"
    )


def read_report(path) -> dict:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != REPORT_FORMAT:
        raise ConfigError(f"{path}: not a teleport report (format field)")
    return doc


def export_figure_data(reports: list[dict], out=None) -> str:
    """Bar-plot table: received states x scenarios, fidelity with sigma.

    Rows are the received states {V, A, R} plus the average; one column
    pair (fidelity, sigma) per scenario; the last column carries the
    constant classical bound 2/3.
    """
    if not reports:
        raise ConfigError("no reports to export")
    scenarios = [r["scenario"] for r in reports]
    buf = io.StringIO()
    writer = csv.writer(buf)
    header = ["received_state"]
    for s in scenarios:
        header += [f"{s}_fidelity", f"{s}_sigma"]
    header.append("classical_bound")
    writer.writerow(header)

    input_for_received = {"V": "H", "A": "D", "R": "R"}
    for received, inp in input_for_received.items():
        row = [received]
        for rep in reports:
            res = rep["results"]["per_input"][inp]
            row += [f"{res['fidelity']:.6f}", f"{res['fidelity_sigma']:.6f}"]
        row.append(f"{CLASSICAL_BOUND:.6f}")
        writer.writerow(row)
    row = ["average"]
    for rep in reports:
        row += [
            f"{rep['results']['average_fidelity']:.6f}",
            f"{rep['results']['average_sigma']:.6f}",
        ]
    row.append(f"{CLASSICAL_BOUND:.6f}")
    writer.writerow(row)

    text = buf.getvalue()
    if out is not None:
        Path(out).write_text(text)
    return text
