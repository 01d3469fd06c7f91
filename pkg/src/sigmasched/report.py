"""Delimited outputs: provenance headers, curves.csv, auc.csv and the AUC table."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from . import __version__
from .evaluation import Method, TradeoffCurve, TradeoffPoint, auc

CURVE_COLUMNS = ("predictor", "method", "threshold", "parameter", "mean_delay_hours",
                 "proportion_meeting")
AUC_COLUMNS = ("predictor", "method", "threshold", "auc_pp_hours")
TABLE_LABELS = {"fixed": "status_quo", "sigma": "sigma"}


def header_lines(command: str, config: Mapping[str, Any]) -> list[str]:
    return [
        f"sigmasched {__version__} {command}",
        "run_config: " + json.dumps(config, sort_keys=True, default=str),
    ]


def num(x: float) -> str:
    """Shortest exact text for a float, so files round-trip and stay byte-stable."""
    return repr(float(x))


def write_csv(path: str | Path, header: Sequence[str], columns: Sequence[str],
              rows: Iterable[Sequence[Any]]) -> None:
    buf = io.StringIO()
    for line in header:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue())


def read_csv(path: str | Path) -> list[dict[str, str]]:
    with Path(path).open(newline="") as f:
        lines = [line for line in f if not line.startswith("#")]
    return list(csv.DictReader(lines))


def curve_rows(predictor: str, curves: Iterable[TradeoffCurve]) -> list[list[str]]:
    rows = []
    for curve in curves:
        for p in curve.points:
            rows.append([predictor, curve.method.value, num(curve.threshold), num(p.parameter),
                         num(p.mean_delay_hours), num(p.proportion_meeting)])
    return rows


def read_curves(path: str | Path) -> dict[tuple[str, str, float], TradeoffCurve]:
    """Curves keyed by (predictor, method, threshold), points in file order."""
    grouped: dict[tuple[str, str, float], list[TradeoffPoint]] = {}
    for row in read_csv(path):
        key = (row["predictor"], row["method"], float(row["threshold"]))
        grouped.setdefault(key, []).append(
            TradeoffPoint(float(row["parameter"]), float(row["mean_delay_hours"]),
                          float(row["proportion_meeting"]))
        )
    return {
        key: TradeoffCurve(Method(key[1]), key[2], tuple(points))
        for key, points in grouped.items()
    }


def auc_rows(curves: Mapping[tuple[str, str, float], TradeoffCurve]) -> list[list[str]]:
    return [
        [pred, method, num(th), num(auc(curve))]
        for (pred, method, th), curve in curves.items()
    ]


def auc_table_rows(
    curves: Mapping[tuple[str, str, float], TradeoffCurve],
    predictors: Sequence[str],
    thresholds: Sequence[float],
) -> tuple[list[str], list[list[str]]]:
    """Threshold rows by (predictor x method) columns, status quo before sigma."""
    columns = ["desired_coverage"] + [
        f"{pred}_{TABLE_LABELS[m]}" for pred in predictors for m in ("fixed", "sigma")
    ]
    rows = []
    for th in thresholds:
        row = [f"{th:.2f}"]
        for pred in predictors:
            for m in ("fixed", "sigma"):
                row.append(f"{auc(curves[(pred, m, th)]):.2f}")
        rows.append(row)
    return columns, rows
