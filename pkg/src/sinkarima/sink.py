"""Sink-side plumbing: ingest readings, put them on the sampling grid, run each node's detector."""
from __future__ import annotations

import csv
import io
import math
import threading
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from .anomaly import DetectorConfig, NodeStreamState, Verdict, process_reading
from .errors import (
    DataError,
    DuplicateTimestamp,
    EmptyGroup,
    IndexOutOfBounds,
    OverlappingSegments,
    ParseError,
    SinkArimaError,
)
from .series import TimeSeries

CHANNELS = ("temperature", "light")
CSV_HEADER = ("node_id", "timestamp", "channel", "value")
NOMINAL_INTERVAL = 2.0
SNAP_TOLERANCE = 0.25


@dataclass(frozen=True)
class SensorReading:
    node_id: int
    timestamp: float
    channel: str
    value: Optional[float]  # None: delivered but empty

    def __post_init__(self):
        if self.value is not None and not math.isfinite(self.value):
            raise ValueError("reading value must be finite")


def parse_csv(source) -> List[SensorReading]:
    """Parse ``node_id,timestamp,channel,value`` rows; ``source`` is a path, text or a file object."""
    if isinstance(source, Path):
        text = source.read_text(encoding="utf-8")
    elif isinstance(source, str):
        text = source
    else:
        text = source.read()
    rows = csv.reader(io.StringIO(text))
    out = []
    header_seen = False
    for lineno, row in enumerate(rows, start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if not header_seen:
            if tuple(c.strip() for c in row) != CSV_HEADER:
                raise ParseError(f"expected header {','.join(CSV_HEADER)}", lineno)
            header_seen = True
            continue
        if len(row) != 4:
            raise ParseError(f"expected 4 fields, got {len(row)}", lineno)
        node, ts, channel, value = (c.strip() for c in row)
        try:
            node_id = int(node)
            timestamp = float(ts)
            val = float(value) if value != "" else None
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
        if not math.isfinite(timestamp) or (val is not None and not math.isfinite(val)):
            raise ParseError("non-finite number", lineno)
        if channel not in CHANNELS:
            raise ParseError(f"unknown channel {channel!r}", lineno)
        out.append(SensorReading(node_id, timestamp, channel, val))
    # a completely empty source (no header either) is an empty batch
    return out


def read_readings(path) -> List[SensorReading]:
    return parse_csv(Path(path))


def write_readings(readings: Iterable[SensorReading], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in readings:
        w.writerow([r.node_id, _fmt(r.timestamp), r.channel, "" if r.value is None else _fmt(r.value)])


def _fmt(x: float) -> str:
    return repr(float(x))


Key = Tuple[int, str]


@dataclass
class IngestResult:
    groups: Dict[Key, List[SensorReading]]
    duplicates: List[SensorReading] = field(default_factory=list)

    def __len__(self):
        return len(self.groups)


def ingest(readings: Iterable[SensorReading], strict: bool = False) -> IngestResult:
    """Group by (node, channel) and sort by time; repeated timestamps keep the first copy."""
    groups: Dict[Key, List[SensorReading]] = defaultdict(list)
    seen = set()
    dups = []
    for r in readings:
        ident = (r.node_id, r.channel, r.timestamp)
        if ident in seen:
            if strict:
                raise DuplicateTimestamp(f"node {r.node_id} {r.channel}: duplicate timestamp {r.timestamp}")
            dups.append(r)
            continue
        seen.add(ident)
        groups[(r.node_id, r.channel)].append(r)
    ordered = {k: sorted(v, key=lambda r: r.timestamp) for k, v in sorted(groups.items())}
    return IngestResult(ordered, dups)


@dataclass(eq=False)
class GridSeries:
    """Readings placed on a fixed grid; NaN marks slots with no usable value."""

    origin: float
    interval: float
    values: np.ndarray
    timestamps: np.ndarray  # original timestamp of the slotted reading, NaN for gaps
    off_grid: List[SensorReading] = field(default_factory=list)
    collisions: List[SensorReading] = field(default_factory=list)
    node_id: Optional[int] = None
    channel: Optional[str] = None

    def __len__(self):
        return len(self.values)

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.values)

    @property
    def slotted(self) -> int:
        return int(np.sum(~np.isnan(self.timestamps)))

    def grid_times(self) -> np.ndarray:
        return self.origin + self.interval * np.arange(len(self.values))

    def slot_timestamps(self) -> np.ndarray:
        return np.where(np.isnan(self.timestamps), self.grid_times(), self.timestamps)

    def to_readings(self) -> List[SensorReading]:
        """Slotted readings re-stamped at their grid times."""
        out = []
        for i, (t, v) in enumerate(zip(self.timestamps, self.values)):
            if not np.isnan(t):
                out.append(SensorReading(self.node_id, self.origin + i * self.interval, self.channel,
                                         None if np.isnan(v) else float(v)))
        return out

    def filled(self) -> TimeSeries:
        """Linear interpolation over missing slots."""
        x = self.values
        ok = ~np.isnan(x)
        if not ok.any():
            raise DataError("no values to interpolate from")
        idx = np.arange(len(x))
        return TimeSeries(np.interp(idx, idx[ok], x[ok]), self.interval, self.origin)

    def same_grid(self, other: "GridSeries") -> bool:
        return (
            self.origin == other.origin
            and self.interval == other.interval
            and np.array_equal(self.values, other.values, equal_nan=True)
        )


def regularize(readings: List[SensorReading], interval: float = NOMINAL_INTERVAL,
               tolerance: float = SNAP_TOLERANCE) -> GridSeries:
    """Snap time-sorted readings onto ``origin + k * interval`` with origin at the first reading."""
    if not readings:
        raise EmptyGroup("no readings to regularize")
    if not interval > 0:
        raise ValueError("interval must be positive")
    if not 0 <= tolerance < 0.5:
        raise ValueError("tolerance must lie in [0, 0.5)")
    origin = readings[0].timestamp
    slots: Dict[int, SensorReading] = {}
    off_grid, collisions = [], []
    for r in readings:
        pos = (r.timestamp - origin) / interval
        k = int(math.floor(pos + 0.5))
        if k < 0 or abs(pos - k) > tolerance + 1e-12:
            off_grid.append(r)
            continue
        held = slots.get(k)
        if held is None:
            slots[k] = r
        elif abs(pos - k) < abs((held.timestamp - origin) / interval - k):
            collisions.append(held)
            slots[k] = r
        else:
            collisions.append(r)
    n = max(slots) + 1
    values = np.full(n, np.nan)
    stamps = np.full(n, np.nan)
    for k, r in slots.items():
        stamps[k] = r.timestamp
        if r.value is not None:
            values[k] = r.value
    first = readings[0]
    return GridSeries(origin, interval, values, stamps, off_grid, collisions, first.node_id, first.channel)


@dataclass(frozen=True)
class Segment:
    label: str
    start: int  # 0-based, inclusive
    end: int  # inclusive

    def __post_init__(self):
        if self.start < 0 or self.start > self.end:
            raise ValueError(f"segment {self.label!r}: need 0 <= start <= end")

    @classmethod
    def parse(cls, text: str) -> "Segment":
        """``label:start:end``"""
        try:
            label, start, end = text.split(":")
            return cls(label, int(start), int(end))
        except ValueError:
            raise ValueError(f"bad segment {text!r}, expected label:start:end") from None


# samples 1-1000 and 1500-4000 of the mote-7 trace, as 0-based inclusive ranges
DEPLOYMENT_GROUPS = (Segment("group1", 0, 999), Segment("group2", 1499, 3999))


def segment(series: TimeSeries, segments) -> List[Tuple[str, TimeSeries]]:
    n = len(series)
    for s in segments:
        if s.end >= n:
            raise IndexOutOfBounds(f"segment {s.label!r} ends at {s.end}, series has {n} samples")
    ordered = sorted(segments, key=lambda s: s.start)
    for a, b in zip(ordered, ordered[1:]):
        if b.start <= a.end:
            raise OverlappingSegments(f"segments {a.label!r} and {b.label!r} overlap")
    return [
        (s.label, TimeSeries(series.values[s.start : s.end + 1], series.interval,
                             series.origin + s.start * series.interval))
        for s in segments
    ]


@dataclass
class NodeRegistry:
    config: DetectorConfig = field(default_factory=DetectorConfig)
    nominal_interval: float = NOMINAL_INTERVAL
    tolerance: float = SNAP_TOLERANCE
    states: Dict[Key, NodeStreamState] = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def get(self, key: Key) -> Optional[NodeStreamState]:
        with self._lock:
            return self.states.get(key)

    def register(self, key: Key, state: NodeStreamState) -> None:
        with self._lock:
            if key in self.states:
                raise ValueError(f"{key} already has a state")
            self.states[key] = state


@dataclass
class NodeOutcome:
    key: Key
    status: str  # "ok", "untrained" or "error"
    verdicts: List[Verdict] = field(default_factory=list)
    timestamps: List[float] = field(default_factory=list)
    fault_flags: List[bool] = field(default_factory=list)
    grid: Optional[GridSeries] = None
    message: str = ""
    trained_here: bool = False

    def counts(self) -> Dict[str, int]:
        c = {"accepted": 0, "rejected": 0, "substituted_missing": 0}
        for v in self.verdicts:
            c[v.decision] += 1
        return c


def _run_node(registry: NodeRegistry, key: Key, readings: List[SensorReading]) -> NodeOutcome:
    cfg = registry.config
    grid = regularize(readings, registry.nominal_interval, registry.tolerance)
    out = NodeOutcome(key, "ok", grid=grid)
    state = registry.get(key)
    start = 0
    if state is None:
        if len(grid) < cfg.min_train:
            out.status = "untrained"
            out.message = f"{len(grid)} samples on the grid, {cfg.min_train} needed to train"
            return out
        training = grid.filled().values[: cfg.min_train]
        state = NodeStreamState.train(key[0], training, cfg)
        registry.register(key, state)
        out.trained_here = True
        start = cfg.min_train
    stamps = grid.slot_timestamps()
    for i in range(start, len(grid)):
        v = grid.values[i]
        verdict, state = process_reading(state, None if np.isnan(v) else float(v), index=i)
        out.verdicts.append(verdict)
        out.timestamps.append(float(stamps[i]))
        out.fault_flags.append(state.fault_flagged)
    return out


def run_pipeline(registry: NodeRegistry, batch) -> Dict[Key, NodeOutcome]:
    """Train nodes that need it, then stream the rest of each node's grid through the detector.

    ``batch`` is an ``IngestResult`` or an iterable of readings. Each node
    is handled on its own; a failure is recorded on that node's outcome.
    """
    if not isinstance(batch, IngestResult):
        batch = ingest(batch)
    results = {}
    for key, readings in batch.groups.items():
        try:
            results[key] = _run_node(registry, key, readings)
        except SinkArimaError as exc:
            results[key] = NodeOutcome(key, "error", message=f"{type(exc).__name__}: {exc}")
    return results
