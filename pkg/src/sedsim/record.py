"""Sampled trajectory history and the offline ionisation scan."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels as K

COLUMNS = ("t", "energy", "L", "eps", "r", "flags")

FLAG_NAMES = {
    K.FL_REGULAR: "regular",
    K.FL_CROSS: "threshold_crossing",
    K.FL_FINAL: "final",
    K.FL_INITIAL: "initial",
    K.FL_PUSH: "push",
    K.FL_SWITCH: "switch",
}


@dataclass
class TrajectoryRecord:
    """Element snapshots ``(t, E, L, eps, r)`` with flag bits, plus an event log.

    Regular samples are taken on a fixed time interval; extra samples mark
    the start, threshold crossings, pushes, window switches and the end.
    """

    t: np.ndarray
    energy: np.ndarray
    L: np.ndarray
    eps: np.ndarray
    r: np.ndarray
    flags: np.ndarray
    events: list = field(default_factory=list)
    status: str = "running"
    ionisation_time: Optional[float] = None
    orbits: int = 0
    meta: dict = field(default_factory=dict)

    @classmethod
    def empty(cls) -> "TrajectoryRecord":
        z = np.zeros(0)
        return cls(z, z.copy(), z.copy(), z.copy(), z.copy(), np.zeros(0, dtype=np.int64))

    @classmethod
    def from_table(cls, table: np.ndarray, **kw) -> "TrajectoryRecord":
        table = np.asarray(table, dtype=np.float64).reshape(-1, 6)
        return cls(*(table[:, i].copy() for i in range(5)), table[:, 5].astype(np.int64), **kw)

    def table(self) -> np.ndarray:
        return np.column_stack([self.t, self.energy, self.L, self.eps, self.r,
                                self.flags.astype(np.float64)])

    def __len__(self) -> int:
        return len(self.t)

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0]) if len(self.t) else 0.0

    def regular(self) -> "TrajectoryRecord":
        """Only the fixed-interval samples (unbiased time averages)."""
        return self._subset((self.flags & (K.FL_REGULAR | K.FL_INITIAL)) != 0)

    def truncated(self) -> "TrajectoryRecord":
        """Samples before the ionisation time; the whole record if none."""
        if self.ionisation_time is None:
            return self
        return self._subset(self.t < self.ionisation_time)

    def _subset(self, mask) -> "TrajectoryRecord":
        return TrajectoryRecord(self.t[mask], self.energy[mask], self.L[mask], self.eps[mask],
                                self.r[mask], self.flags[mask], list(self.events), self.status,
                                self.ionisation_time, self.orbits, dict(self.meta))

    def __eq__(self, other) -> bool:
        if not isinstance(other, TrajectoryRecord):
            return NotImplemented
        arrays = all(np.array_equal(getattr(self, c), getattr(other, c), equal_nan=True)
                     for c in ("t", "energy", "L", "eps", "r", "flags"))
        return (arrays and self.events == other.events and self.status == other.status
                and self.ionisation_time == other.ionisation_time and self.orbits == other.orbits
                and self.meta == other.meta)


def detect_ionisation(times, energies=None, threshold: float = -0.05,
                      dwell: float = 1e7) -> Optional[float]:
    """Earliest start of a run of samples above ``threshold`` lasting ``dwell``.

    A run begins at its first sample above the threshold and ends at the next
    sample at or below it. Accepts a :class:`TrajectoryRecord` as ``times``.
    """
    if isinstance(times, TrajectoryRecord):
        times, energies = times.t, times.energy
    t = np.asarray(times, dtype=np.float64)
    e = np.asarray(energies, dtype=np.float64)
    if t.shape != e.shape:
        raise ValueError("times and energies must have equal length")
    start = math.nan
    for ti, ei in zip(t, e):
        if ei > threshold:
            if math.isnan(start):
                start = ti
            if ti - start >= dwell:
                return float(start)
        else:
            start = math.nan
    return None
