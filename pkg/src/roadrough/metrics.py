"""Correlation metrics and the per-device method comparison table."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

RMS = "RMS"
ML_PARTIAL = "ML_partial_train"
ML_FULL = "ML_full_train"

REPORT_HEADER = ("method", "device", "r", "r_squared", "n_pairs")


class UndefinedCorrelationError(ValueError):
    pass


def pearson_r(x, y) -> float:
    """Pearson correlation coefficient, clipped into [-1, 1].

    Raises if either sequence is constant; a zero there would look like a
    real measurement of "no correlation".
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    if len(x) < 2:
        raise ValueError("need at least two points")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise UndefinedCorrelationError("correlation undefined for a constant sequence")
    dx = x - x.mean()
    dy = y - y.mean()
    r = float(np.dot(dx, dy) / math.sqrt(float(np.dot(dx, dx)) * float(np.dot(dy, dy))))
    return min(1.0, max(-1.0, r))


def r_squared(x, y) -> float:
    return pearson_r(x, y) ** 2


@dataclass(frozen=True)
class ReportRow:
    method: str
    device: str
    r: float
    r_squared: float
    n_pairs: int


@dataclass
class CorrelationReport:
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def extend(self, other: "CorrelationReport") -> "CorrelationReport":
        self.rows.extend(other.rows)
        for k, v in other.metadata.items():
            self.metadata.setdefault(k, v)
        return self

    def get(self, method: str, device: str) -> ReportRow:
        for row in self.rows:
            if row.method == method and row.device == device:
                return row
        raise KeyError((method, device))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for row in self.rows:
            w.writerow([row.method, row.device, repr(row.r), repr(row.r_squared), row.n_pairs])
        return buf.getvalue()

    def to_text(self) -> str:
        """Aligned table with methods as rows and devices as columns (r²)."""
        devices = list(dict.fromkeys(r.device for r in self.rows))
        methods = list(dict.fromkeys(r.method for r in self.rows))
        cells = {(r.method, r.device): f"{r.r_squared:.3f}" for r in self.rows}
        width = max([len("method")] + [len(m) for m in methods])
        col = max([8] + [len(d) for d in devices])
        lines = ["method".ljust(width) + "".join("  " + d.rjust(col) for d in devices)]
        for m in methods:
            lines.append(m.ljust(width) + "".join("  " + cells.get((m, d), "-").rjust(col) for d in devices))
        for k in sorted(self.metadata):
            lines.append(f"# {k}: {self.metadata[k]}")
        return "\n".join(lines) + "\n"


def read_report_csv(path) -> CorrelationReport:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = [
            ReportRow(d["method"], d["device"], float(d["r"]), float(d["r_squared"]), int(d["n_pairs"]))
            for d in reader
        ]
    return CorrelationReport(rows)


def build_report(
    pairs,
    predictions: Mapping[str, Sequence[float]],
    device_label: str,
    include_rms: bool = True,
    metadata: dict | None = None,
) -> CorrelationReport:
    """Correlate each method's output with the paired IRI.

    ``predictions`` maps a method name to a sequence aligned index-for-index
    with ``pairs``; NaN marks seconds outside that method's evaluation span.
    The RMS row correlates the acceleration feature itself with IRI.
    """
    pairs = list(pairs)
    iri = np.array([p.iri_mean for p in pairs])
    rows = []
    if include_rms:
        accel = np.array([p.accel_feature for p in pairs])
        r = pearson_r(accel, iri)
        rows.append(ReportRow(RMS, device_label, r, r * r, len(pairs)))
    for method, pred in predictions.items():
        pred = np.asarray(pred, dtype=float)
        if pred.shape != iri.shape:
            raise ValueError(f"{method}: {len(pred)} predictions for {len(iri)} pairs")
        keep = ~np.isnan(pred)
        if keep.sum() < 2:
            raise ValueError(f"{method}: fewer than two predictions to correlate")
        r = pearson_r(pred[keep], iri[keep])
        rows.append(ReportRow(method, device_label, r, r * r, int(keep.sum())))
    return CorrelationReport(rows, dict(metadata or {}))


def write_scatter(pairs, out_dir, device_label: str) -> list[Path]:
    """Dump acceleration-vs-IRI scatter data as CSV and an SVG plot."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"scatter_{device_label or 'device'}"
    csv_path = out_dir / f"{stem}.csv"
    svg_path = out_dir / f"{stem}.svg"
    pairs = list(pairs)
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["second_index", "accel_feature", "iri_mean"])
        for p in pairs:
            w.writerow([p.second_index, repr(p.accel_feature), repr(p.iri_mean)])

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.scatter([p.accel_feature for p in pairs], [p.iri_mean for p in pairs], s=6)
    ax.set_xlabel("acceleration from vibration (m/s²)")
    ax.set_ylabel("IRI (m/km)")
    ax.set_title(device_label)
    fig.tight_layout()
    # fixed hash salt and no date keep the SVG reproducible
    with matplotlib.rc_context({"svg.hashsalt": "roadrough"}):
        fig.savefig(svg_path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return [csv_path, svg_path]
