"""Depth-map evaluation: range-masked error metrics and report tables."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class DepthEvalConfig:
    min_depth: float = 0.3
    max_depth: float = 10.0
    median_scaling: bool = False

    def __post_init__(self):
        if not 0 < self.min_depth < self.max_depth:
            raise ValueError("need 0 < min_depth < max_depth")


@dataclass
class DepthMetrics:
    mae: float
    mre: float
    rmse: float
    d1: float
    d2: float
    d3: float
    excluded_nonpositive: int = 0

    def as_row(self):
        return (self.mae, self.mre, self.rmse, self.d1, self.d2, self.d3)


def depth_metrics(pred, gt, cfg: DepthEvalConfig = DepthEvalConfig()) -> DepthMetrics:
    """Error statistics of a predicted depth map over the evaluated range.

    Pixels with gt outside [min_depth, max_depth] are ignored; non-positive
    gt values that slip inside the range test are excluded and counted.
    delta_i is the fraction of pixels with max(p/g, g/p) < 1.25^i.

    Raises:
        ValueError: on shape mismatch or when no pixel survives the mask.
    """
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(gt, dtype=np.float64)
    if p.shape != g.shape:
        raise ValueError("pred and gt shapes differ")
    excluded = int((g <= 0).sum())  # invalid gt (holes) are never evaluated
    mask = (g >= cfg.min_depth) & (g <= cfg.max_depth) & (g > 0)
    if not mask.any():
        raise ValueError("no ground-truth pixel inside the evaluated range")
    p = p[mask]
    g = g[mask]
    if cfg.median_scaling:
        med_p = np.median(p)
        if med_p <= 0:
            raise ValueError("median scaling impossible: non-positive predicted median")
        p = p * (np.median(g) / med_p)
    err = np.abs(p - g)
    with np.errstate(divide="ignore"):
        ratio = np.where(p > 0, np.maximum(p / g, g / p), np.inf)
    deltas = [float(np.mean(ratio < 1.25**i)) for i in (1, 2, 3)]
    return DepthMetrics(
        mae=float(err.mean()),
        mre=float((err / g).mean()),
        rmse=float(np.sqrt((err * err).mean())),
        d1=deltas[0],
        d2=deltas[1],
        d3=deltas[2],
        excluded_nonpositive=excluded,
    )


_COLUMNS = ("scene", "MAE", "MRE", "RMSE", "d1", "d2", "d3")


def metrics_report(rows) -> tuple[str, str]:
    """Aligned text table and CSV for (scene_name, DepthMetrics) rows.

    A trailing "mean" row aggregates the per-metric averages.
    """
    rows = list(rows)
    if not rows:
        raise ValueError("nothing to report")
    data = [(name, *m.as_row()) for name, m in rows]
    means = np.mean(np.array([r[1:] for r in data], dtype=np.float64), axis=0)
    data.append(("mean", *means.tolist()))

    csv_buf = io.StringIO()
    csv_buf.write(",".join(_COLUMNS) + "\n")
    for row in data:
        csv_buf.write(row[0] + "," + ",".join(f"{v:.6f}" for v in row[1:]) + "\n")

    widths = [max(len(_COLUMNS[0]), max(len(r[0]) for r in data))] + [10] * 6
    lines = ["  ".join(name.ljust(w) for name, w in zip(_COLUMNS, widths))]
    for row in data:
        cells = [row[0].ljust(widths[0])] + [f"{v:10.4f}" for v in row[1:]]
        lines.append("  ".join(cells))
    return "\n".join(lines) + "\n", csv_buf.getvalue()
