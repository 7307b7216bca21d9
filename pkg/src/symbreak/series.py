"""Sampled scalar series over a strictly increasing coordinate axis.

Used for trace-distance and entropy trajectories (axis = time), but also
for parameter scans (axis = coupling strength or angle).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidSpecError


@dataclass
class TimeSeries:
    """Real-valued samples on a strictly increasing axis.

    Parameters
    ----------
    times : array_like
        Sample coordinates, strictly increasing. Gaps are allowed, so a
        series may cover disjoint windows (e.g. an early and a late one).
    values : array_like
        Finite samples, one per coordinate.
    label : str
        Free-form tag, e.g. ``"trace_distance"``.
    """

    times: np.ndarray
    values: np.ndarray
    label: str = field(default="")

    def __post_init__(self) -> None:
        self.times = np.asarray(self.times, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.times.ndim != 1 or self.times.shape != self.values.shape:
            raise InvalidSpecError(
                f"series '{self.label}': times and values must be 1d and "
                f"congruent, got {self.times.shape} vs {self.values.shape}"
            )
        if self.times.size == 0:
            raise InvalidSpecError(f"series '{self.label}': empty")
        if not np.all(np.diff(self.times) > 0):
            raise InvalidSpecError(
                f"series '{self.label}': times must be strictly increasing"
            )
        if not np.all(np.isfinite(self.times)) or not np.all(np.isfinite(self.values)):
            raise InvalidSpecError(f"series '{self.label}': non-finite entries")

    def __len__(self) -> int:
        return self.times.size

    def window(self, t_start: float, t_stop: float) -> "TimeSeries":
        """Samples with t_start <= t <= t_stop (inclusive both ends)."""
        if t_stop <= t_start:
            raise InvalidSpecError("window: t_stop must exceed t_start")
        mask = (self.times >= t_start) & (self.times <= t_stop)
        if not np.any(mask):
            raise InvalidSpecError(
                f"window [{t_start}, {t_stop}] contains no samples of "
                f"series '{self.label}'"
            )
        return TimeSeries(self.times[mask], self.values[mask], self.label)
