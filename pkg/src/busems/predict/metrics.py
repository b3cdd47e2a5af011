"""Error metrics and the held-out-week evaluation table."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import LoadDataset
from .models import Predictor


def rmse(y_true: Sequence[float], y_pred: Sequence[float]) -> float:
    a = np.asarray(y_true, dtype=float).ravel()
    b = np.asarray(y_pred, dtype=float).ravel()
    if a.size != b.size:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    if a.size == 0:
        raise ValueError("rmse of an empty sequence")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def rmse_variance(daily_rmse: Sequence[float]) -> float:
    """Unbiased sample variance (divisor N-1) of per-day RMSE values."""
    v = np.asarray(daily_rmse, dtype=float).ravel()
    if v.size < 2:
        raise ValueError("need at least two values for a sample variance")
    return float(np.sum((v - v.mean()) ** 2) / (v.size - 1))


@dataclass(frozen=True)
class RmseRow:
    model: str
    days: tuple            # (date, rmse) pairs in calendar order
    weekly: float
    variance: float


def evaluate_by_day(model: Predictor, name: str, test: LoadDataset, scale: float = 1.0) -> RmseRow:
    """Per-day RMSE, RMSE over the whole held-out set, and the variance of the
    per-day values.  ``scale`` multiplies every error (100 gives percent)."""
    if not test.dates:
        raise ValueError("held-out dataset carries no dates")
    pred = model.predict_many(test.features)
    dates = np.asarray(test.dates, dtype=object)
    days = []
    for day in sorted(set(test.dates)):
        m = dates == day
        days.append((day, scale * rmse(test.targets[m], pred[m])))
    weekly = scale * rmse(test.targets, pred)
    var = rmse_variance([r for _, r in days]) if len(days) >= 2 else 0.0
    return RmseRow(name, tuple(days), weekly, var)


def format_rmse_table(rows: Sequence[RmseRow]) -> str:
    """CSV text: one row per model, one column per held-out day, then total and variance."""
    if not rows:
        raise ValueError("no rows to format")
    days: list[dt.date] = [d for d, _ in rows[0].days]
    head = ["model"] + [d.isoformat() for d in days] + ["total", "variance"]
    lines = [",".join(head)]
    for r in rows:
        vals = [f"{v:.4f}" for _, v in r.days] + [f"{r.weekly:.4f}", f"{r.variance:.4f}"]
        lines.append(",".join([r.model] + vals))
    return "\n".join(lines) + "\n"
