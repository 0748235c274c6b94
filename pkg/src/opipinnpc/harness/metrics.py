"""Tracking-error statistics over an evaluation window."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class MetricsReport:
    t: np.ndarray
    error: np.ndarray          # (n, 6) position then orientation error
    position_norm: np.ndarray
    orientation_norm: np.ndarray
    rmse_axis: np.ndarray      # (6,) over the window
    rmse_position: float       # sqrt(mean ||e_pos||^2) over the window
    rmse_orientation: float
    window: tuple

    def as_row(self) -> list[float]:
        return [self.rmse_position, self.rmse_orientation, *self.rmse_axis]


def compute_metrics(t, x, reference, window_start: float = 1.0, window_end: float | None = None) -> MetricsReport:
    """Pose errors, their norms and RMSE on ``window_start <= t <= window_end``.

    ``x`` and ``reference`` are time-aligned rows (at least the 6 pose
    columns). A window that starts after the last sample, or one that holds
    no samples, is an error.
    """
    t = np.asarray(t, dtype=float).reshape(-1)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    reference = np.atleast_2d(np.asarray(reference, dtype=float))
    if not (x.shape[0] == reference.shape[0] == t.size):
        raise ValueError(f"log and reference are not aligned ({x.shape[0]}, {reference.shape[0]}, {t.size} rows)")
    if t.size == 0:
        raise ValueError("empty log")
    end = t[-1] if window_end is None else float(window_end)
    if window_start > t[-1] or end > t[-1] + 1e-12 or end < window_start:
        raise ValueError(f"evaluation window [{window_start}, {end}] exceeds the log span [{t[0]}, {t[-1]}]")
    e = x[:, 0:6] - reference[:, 0:6]
    mask = (t >= window_start - 1e-12) & (t <= end + 1e-12)
    if not mask.any():
        raise ValueError("evaluation window holds no samples")
    w = e[mask]
    pos_norm = np.linalg.norm(e[:, 0:3], axis=1)
    ori_norm = np.linalg.norm(e[:, 3:6], axis=1)
    return MetricsReport(
        t=t, error=e, position_norm=pos_norm, orientation_norm=ori_norm,
        rmse_axis=np.sqrt(np.mean(w * w, axis=0)),
        rmse_position=float(np.sqrt(np.mean(np.sum(w[:, 0:3] ** 2, axis=1)))),
        rmse_orientation=float(np.sqrt(np.mean(np.sum(w[:, 3:6] ** 2, axis=1)))),
        window=(float(window_start), float(end)),
    )


def improvement(ours: float, baseline: float) -> float:
    """``1 - ours / baseline``; positive when ours is better."""
    if not baseline > 0:
        raise ValueError("baseline RMSE must be positive")
    return 1.0 - ours / baseline
