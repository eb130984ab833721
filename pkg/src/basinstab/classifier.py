"""Steady-state attractor classification from per-period trajectory summaries."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .harvesters import WellGeometry
from .ode_core import STATUS_DIVERGED, STATUS_UNDERFLOW, Trajectory

__all__ = [
    "Label",
    "Outcome",
    "ClassifierSettings",
    "InsufficientData",
    "classify",
    "classify_extrema",
    "stroboscopic_period",
]


class InsufficientData(ValueError):
    pass


class Label(str, Enum):
    CROSS_WELL = "cross_well"
    INTRA_WELL = "intra_well"
    UNDETERMINED = "undetermined"
    DIVERGED = "diverged"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class Outcome:
    label: Label
    periodic: bool | None = None
    period_multiple: int | None = None

    def __post_init__(self):
        has_motion = self.label in (Label.CROSS_WELL, Label.INTRA_WELL)
        if not has_motion and (self.periodic is not None or self.period_multiple is not None):
            raise ValueError(f"{self.label.value} outcomes carry no periodicity")
        if self.period_multiple is not None and not self.periodic:
            raise ValueError("period_multiple requires periodic=True")


@dataclass(frozen=True)
class ClassifierSettings:
    transient_periods: int = 500
    observation_periods: int = 200
    window_periods: int = 20
    periodicity_tol: float = 1e-3
    max_period_multiple: int = 16

    def __post_init__(self):
        for name in ("transient_periods", "observation_periods", "window_periods",
                     "max_period_multiple"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not self.periodicity_tol > 0:
            raise ValueError("periodicity_tol must be positive")
        if self.observation_periods < 2 * self.window_periods:
            raise ValueError("observation_periods must be >= 2 * window_periods")

    @property
    def total_periods(self) -> int:
        return self.transient_periods + self.observation_periods


def stroboscopic_period(states, tol: float, max_multiple: int) -> int | None:
    """Smallest k <= max_multiple with ||s[i+k] - s[i]||_inf < tol over the whole tail."""
    s = np.asarray(states, dtype=np.float64)
    if s.ndim == 1:
        s = s[:, None]
    if len(s) < 2 * max_multiple:
        raise InsufficientData(f"need >= {2 * max_multiple} states, got {len(s)}")
    for k in range(1, max_multiple + 1):
        if np.all(np.max(np.abs(s[k:] - s[:-k]), axis=1) < tol):
            return k
    return None


def classify_extrema(xmin, xmax, wells: WellGeometry, window: int) -> Label:
    """Label from per-period extrema of the observation span alone."""
    xmin = np.asarray(xmin, dtype=np.float64)
    xmax = np.asarray(xmax, dtype=np.float64)
    u = wells.unstable_point
    if np.all(xmin > u) or np.all(xmax < u):
        return Label.INTRA_WELL
    left = xmin < wells.left_bound
    right = xmax > wells.right_bound
    # a window spans when both thresholds are exceeded somewhere inside it
    c_l = np.concatenate(([0], np.cumsum(left, dtype=np.int64)))
    c_r = np.concatenate(([0], np.cumsum(right, dtype=np.int64)))
    spans = ((c_l[window:] - c_l[:-window]) > 0) & ((c_r[window:] - c_r[:-window]) > 0)
    if spans.all():
        return Label.CROSS_WELL
    if not spans.any():
        return Label.INTRA_WELL
    return Label.UNDETERMINED


def classify(traj: Trajectory, wells: WellGeometry, s: ClassifierSettings | None = None) -> Outcome:
    """Classify the steady state reached after the transient.

    Cross-well means every window of ``window_periods`` consecutive
    periods in the observation span drives the well coordinate past both
    thresholds.  Spanning in only some windows is undetermined.
    """
    s = s or ClassifierSettings()
    if traj.status == STATUS_DIVERGED:
        return Outcome(Label.DIVERGED)
    if traj.status == STATUS_UNDERFLOW:
        return Outcome(Label.UNDETERMINED)
    need = s.total_periods
    if traj.periods_done < need or len(traj.xmin) < need:
        raise InsufficientData(f"trajectory covers {traj.periods_done} periods, need {need}")

    obs = slice(s.transient_periods, need)
    label = classify_extrema(traj.xmin[obs], traj.xmax[obs], wells, s.window_periods)
    if label is Label.UNDETERMINED:
        return Outcome(label)
    tail = max(s.window_periods, 2 * s.max_period_multiple)
    tail = min(tail, s.observation_periods)
    k = stroboscopic_period(traj.strobe[need - tail:need], s.periodicity_tol,
                            min(s.max_period_multiple, tail // 2))
    return Outcome(label, k is not None, k)
