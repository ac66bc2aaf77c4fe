"""Event-stream containers.

Timestamps are integer picoseconds end to end: detection times at the
nanosecond-to-millisecond scales involved are exactly representable, the
dead-time spacing invariant becomes an exact integer comparison, and file
round-trips cannot drift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

PS_PER_SECOND = 10**12

# Largest supported timestamp: keeps all int64 arithmetic overflow-safe
# (one gap-clamped increment beyond it still fits in int64).
MAX_TIME_PS = 2**61


def seconds_to_ps(t: float) -> int:
    """Durations enter the library at picosecond resolution."""
    if not math.isfinite(t) or t < 0.0:
        raise ValueError(f"duration must be finite and >= 0, got {t!r}")
    ps = int(math.floor(t * PS_PER_SECOND + 0.5))
    if ps > MAX_TIME_PS:
        raise ValueError(f"duration {t} s exceeds the supported range")
    return ps


def ps_to_seconds(ps) -> float:
    return ps * 1e-12


@dataclass(frozen=True)
class EventStream:
    """One pixel's measurement: ordered detection times under dead time.

    ``exposure_ps`` is None for fixed-count acquisitions, where the sensor
    runs until a target number of detections instead of a fixed window.
    """

    dead_ps: int
    times_ps: np.ndarray
    exposure_ps: int | None

    def __post_init__(self):
        object.__setattr__(
            self, "times_ps", np.ascontiguousarray(self.times_ps, dtype=np.int64)
        )
        self.validate()

    @classmethod
    def from_seconds(cls, times, exposure, dead_time) -> "EventStream":
        times_ps = np.array(
            [seconds_to_ps(float(t)) for t in times], dtype=np.int64
        )
        exposure_ps = None if exposure is None else seconds_to_ps(exposure)
        return cls(
            dead_ps=seconds_to_ps(dead_time),
            times_ps=times_ps,
            exposure_ps=exposure_ps,
        )

    @property
    def n(self) -> int:
        return int(self.times_ps.shape[0])

    @property
    def bounded(self) -> bool:
        return self.exposure_ps is not None

    @property
    def exposure(self) -> float:
        return math.inf if self.exposure_ps is None else ps_to_seconds(self.exposure_ps)

    @property
    def dead_time(self) -> float:
        return ps_to_seconds(self.dead_ps)

    @property
    def times(self) -> np.ndarray:
        return self.times_ps * 1e-12

    @property
    def last_time_ps(self) -> int:
        if self.n == 0:
            raise ValueError("empty stream has no last detection")
        return int(self.times_ps[-1])

    def validate(self) -> None:
        t = self.times_ps
        if t.ndim != 1:
            raise ValueError("times must be one-dimensional")
        if self.dead_ps < 0:
            raise ValueError("dead time must be >= 0")
        if self.exposure_ps is not None and not (0 < self.exposure_ps <= MAX_TIME_PS):
            raise ValueError("bounded exposure must be positive")
        if t.shape[0] == 0:
            return
        if t[0] < 0:
            raise ValueError("first detection time is negative")
        if t[-1] > MAX_TIME_PS:
            raise ValueError("timestamp exceeds the supported range")
        gaps = np.diff(t)
        if gaps.size and gaps.min() < max(self.dead_ps, 1):
            raise ValueError("detection times violate dead-time spacing")
        if self.exposure_ps is not None:
            if t[-1] > self.exposure_ps:
                raise ValueError("detection recorded after the exposure ended")
            if self.dead_ps > 0:
                cap = self.exposure_ps // self.dead_ps + 1
                if t.shape[0] > cap:
                    raise ValueError("more detections than the dead time allows")


@dataclass
class StreamCollection:
    """Per-pixel event streams over a field of view, stored CSR-style."""

    height: int
    width: int
    dead_ps: int
    exposure_ps: int | None
    counts: np.ndarray  # int64 (height, width)
    times_ps: np.ndarray  # int64, all pixels concatenated row-major
    offsets: np.ndarray = field(init=False)  # int64 (height, width)

    def __post_init__(self):
        self.counts = np.ascontiguousarray(self.counts, dtype=np.int64)
        self.times_ps = np.ascontiguousarray(self.times_ps, dtype=np.int64)
        if self.counts.shape != (self.height, self.width):
            raise ValueError("counts shape does not match height x width")
        starts = np.concatenate(([0], np.cumsum(self.counts.ravel())[:-1]))
        self.offsets = starts.reshape(self.height, self.width).astype(np.int64)
        if int(self.counts.sum()) != self.times_ps.shape[0]:
            raise ValueError("counts do not match the number of stored times")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def bounded(self) -> bool:
        return self.exposure_ps is not None

    @property
    def total_events(self) -> int:
        return int(self.times_ps.shape[0])

    def stream_at(self, row: int, col: int) -> EventStream:
        start = int(self.offsets[row, col])
        stop = start + int(self.counts[row, col])
        return EventStream(
            dead_ps=self.dead_ps,
            times_ps=self.times_ps[start:stop].copy(),
            exposure_ps=self.exposure_ps,
        )

    def last_times_ps(self) -> np.ndarray:
        """Per-pixel last detection time; -1 where a pixel saw nothing."""
        out = np.full((self.height, self.width), -1, dtype=np.int64)
        has = self.counts > 0
        idx = self.offsets[has] + self.counts[has] - 1
        out[has] = self.times_ps[idx]
        return out

    def validate(self) -> None:
        for row in range(self.height):
            for col in range(self.width):
                self.stream_at(row, col)  # EventStream validates on build


@dataclass
class FluxMap:
    """Per-pixel photon detection rates (events per second) over the FOV."""

    flux: np.ndarray

    def __post_init__(self):
        self.flux = np.ascontiguousarray(self.flux, dtype=np.float64)
        if self.flux.ndim != 2 or self.flux.size == 0:
            raise ValueError("flux map must be a non-empty 2-D array")
        if not np.all(np.isfinite(self.flux)) or np.any(self.flux < 0):
            raise ValueError("flux values must be finite and >= 0")

    @property
    def height(self) -> int:
        return self.flux.shape[0]

    @property
    def width(self) -> int:
        return self.flux.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.flux.shape
