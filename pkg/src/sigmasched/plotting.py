"""Tradeoff-curve figures rendered from curves.csv.

Figures are written as SVG with a fixed hash salt and no date stamp so the
same curves always produce the same bytes.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .evaluation import AUC_FLOOR_PCT, AUC_MAX_DELAY_H, TradeoffCurve, auc  # noqa: E402

PREDICTOR_TITLES = {
    "residual": "User-provided times",
    "blr": "Model-predicted times",
    "constant": "Constant uncertainty",
}
STYLE = {
    "fixed": dict(color="0.35", ls="--", marker="s", label="Status quo"),
    "sigma": dict(color="C0", ls="-", marker="o", label="Sigma"),
}
GRID_THRESHOLDS = (0.70, 0.80, 0.90)

RC = {
    "svg.hashsalt": "sigmasched",
    "font.size": 9,
    "axes.titlesize": 9,
    "legend.fontsize": 7,
    "axes.spines.top": False,
    "axes.spines.right": False,
}

Curves = Mapping[tuple[str, str, float], TradeoffCurve]


def _draw(ax, curves: Curves, predictor: str, threshold: float) -> None:
    for method in ("fixed", "sigma"):
        curve = curves.get((predictor, method, threshold))
        if curve is None:
            continue
        xs = [p.mean_delay_hours for p in curve.points]
        ys = [100.0 * p.proportion_meeting for p in curve.points]
        style = dict(STYLE[method])
        style["label"] = f"{style['label']} (AUC {auc(curve):.1f})"
        ax.plot(xs, ys, ms=3, lw=1.2, **style)
    ax.axhline(AUC_FLOOR_PCT, color="0.75", lw=0.8)
    ax.axvline(AUC_MAX_DELAY_H, color="0.75", lw=0.8)
    ax.set_ylim(-2, 102)
    ax.set_xlim(left=0)
    ax.set_xlabel("Mean delay to behavior (h)")
    ax.set_ylabel("Participants with desired coverage (%)")
    ax.set_title(f"{PREDICTOR_TITLES.get(predictor, predictor)}, coverage >= {threshold:.2f}")
    ax.legend(loc="lower right", frameon=False)


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_threshold(curves: Curves, predictors: Sequence[str], threshold: float,
                   path: str | Path) -> Path:
    """One panel per predictor for a single desired-coverage threshold."""
    with plt.rc_context(RC):
        fig, axes = plt.subplots(1, len(predictors), figsize=(4.2 * len(predictors), 3.4),
                                 squeeze=False)
        for ax, pred in zip(axes[0], predictors):
            _draw(ax, curves, pred, threshold)
        return _save(fig, Path(path))


def plot_grid(curves: Curves, predictors: Sequence[str], thresholds: Sequence[float],
              path: str | Path) -> Path:
    """Predictors as rows, thresholds as columns."""
    with plt.rc_context(RC):
        fig, axes = plt.subplots(len(predictors), len(thresholds),
                                 figsize=(3.6 * len(thresholds), 3.0 * len(predictors)),
                                 squeeze=False)
        for row, pred in zip(axes, predictors):
            for ax, th in zip(row, thresholds):
                _draw(ax, curves, pred, th)
        return _save(fig, Path(path))


def plot_all(curves: Curves, out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    predictors = sorted({k[0] for k in curves}, key=lambda p: (p != "residual", p))
    thresholds = sorted({k[2] for k in curves})
    written = [
        plot_threshold(curves, predictors, th, out_dir / f"tradeoff_{th:.2f}.svg")
        for th in thresholds
    ]
    grid = [th for th in thresholds if any(abs(th - g) < 1e-12 for g in GRID_THRESHOLDS)]
    if grid:
        written.append(plot_grid(curves, predictors, grid, out_dir / "tradeoff_grid.svg"))
    return written
