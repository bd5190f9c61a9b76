"""CSV, summary JSON and SVG outputs of a convergence report."""
from __future__ import annotations

import json
import logging
import os
from typing import Dict, Iterable

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402
from jsonschema import validate  # noqa: E402

from src.floatlab.convergence_lab import ConvergenceReport  # noqa: E402

log = logging.getLogger(__name__)

CSV_COLUMNS = ["delta", "deficit", "ratio", "ratio_err"]
FORMATS = ("csv", "json", "svg")

# fixed ids and no timestamp keep the SVG byte-stable
plt.rcParams["svg.hashsalt"] = "floatlab"
plt.rcParams["svg.fonttype"] = "path"

SUMMARY_SCHEMA = {
    "type": "object",
    "required": [
        "experiment", "label", "exponent", "target", "limit", "slope", "beta", "residual",
        "relative_error", "uncertainty", "tolerance", "passed", "monotone", "points", "budgets",
    ],
    "properties": {
        "experiment": {"type": "string"},
        "label": {"type": "string"},
        "exponent": {"type": "number", "exclusiveMinimum": 0},
        "target": {"type": "number", "minimum": 0},
        "limit": {"type": "number"},
        "slope": {"type": "number"},
        "beta": {"type": ["number", "null"]},
        "residual": {"type": "number", "minimum": 0},
        "relative_error": {"type": "number", "minimum": 0},
        "uncertainty": {"type": "number", "minimum": 0},
        "tolerance": {"type": "number", "exclusiveMinimum": 0},
        "passed": {"type": "boolean"},
        "monotone": {"type": "boolean"},
        "points": {"type": "integer", "minimum": 1},
        "budgets": {"type": "object"},
    },
    "additionalProperties": False,
}


def report_frame(report: ConvergenceReport) -> pd.DataFrame:
    return pd.DataFrame([p.model_dump() for p in report.points], columns=CSV_COLUMNS)


def summary_document(report: ConvergenceReport) -> Dict:
    doc = report.model_dump(exclude={"points", "wall_clock"})
    doc["points"] = len(report.points)
    validate(instance=doc, schema=SUMMARY_SCHEMA)
    return doc


def _write_csv(report: ConvergenceReport, path: str) -> None:
    report_frame(report).to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def _write_json(report: ConvergenceReport, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(summary_document(report), f, sort_keys=True, indent=2)
        f.write("\n")


def _write_svg(report: ConvergenceReport, path: str) -> None:
    df = report_frame(report).sort_values("delta")
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    ax.errorbar(df["delta"], df["ratio"], yerr=df["ratio_err"], fmt="o", ms=4, color="C0",
                label="deficit ratio")
    if report.beta is not None:
        xs = np.geomspace(df["delta"].min(), df["delta"].max(), 64)
        ax.plot(xs, report.limit + report.slope * xs ** report.beta, "-", lw=1, color="C0", alpha=0.6,
                label=f"fit, beta={report.beta:.3f}")
    ax.axhline(report.target, color="C3", ls="--", lw=1, label=f"target {report.target:.6g}")
    ax.axhline(report.limit, color="C2", ls=":", lw=1, label=f"limit {report.limit:.6g}")
    ax.set_xscale("log")
    ax.set_xlabel("delta")
    ax.set_ylabel("deficit / delta^{:.4g}".format(report.exponent))
    ax.set_title(f"{report.experiment} {report.label}".strip(), fontsize=9)
    ax.legend(fontsize=7, frameon=False)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


WRITERS = {"csv": _write_csv, "json": _write_json, "svg": _write_svg}
EXTENSIONS = {"csv": "csv", "json": "summary.json", "svg": "svg"}


def emit_report(report: ConvergenceReport, formats: Iterable[str], out_dir: str,
                stem: str = "report") -> Dict[str, str]:
    """Write the requested formats under out_dir; returns format -> path."""
    if not report.points:
        raise ValueError("no data")
    formats = list(dict.fromkeys(formats))
    unknown = [f for f in formats if f not in FORMATS]
    if unknown:
        raise ValueError(f"unknown report format(s): {', '.join(unknown)}")
    os.makedirs(out_dir, exist_ok=True)
    written = {}
    for fmt in formats:
        path = os.path.join(out_dir, f"{stem}.{EXTENSIONS[fmt]}")
        WRITERS[fmt](report, path)
        written[fmt] = path
        log.info("wrote %s", path)
    return written
