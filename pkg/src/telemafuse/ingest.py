"""Telemetry trip ingestion: CSV parsing, validation and 1 Hz downsampling."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from enum import IntEnum
from pathlib import Path
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

from .errors import EmptyInputError, ParseError, ValidationError

log = logging.getLogger(__name__)

CHANNELS = ("speed", "accel_x", "accel_y", "yaw_rate", "pitch_rate", "roll_rate", "heading")
HEADER = ("trip_id", "driver_id", "gender", "t") + CHANNELS
HEADING = CHANNELS.index("heading")
SPEED = CHANNELS.index("speed")


class BinaryLabel(IntEnum):
    """Binary target. FEMALE (class 1) is the positive class for AUC."""

    MALE = 0
    FEMALE = 1

    @property
    def text(self) -> str:
        return self.name.lower()

    @property
    def code(self) -> str:
        return "M" if self is BinaryLabel.MALE else "F"

    @classmethod
    def from_code(cls, code: str) -> Optional["BinaryLabel"]:
        if code == "M":
            return cls.MALE
        if code == "F":
            return cls.FEMALE
        if code == "?":
            return None
        raise ValueError(f"gender must be one of M, F, ? (got {code!r})")


class RawSample(NamedTuple):
    t: float
    speed: float
    accel_x: float
    accel_y: float
    yaw_rate: float
    pitch_rate: float
    roll_rate: float
    heading: float


@dataclass(frozen=True)
class TripStream:
    """One trip. ``values`` has one column per entry of ``CHANNELS``."""

    trip_id: str
    driver_id: str
    label: Optional[BinaryLabel]
    rate_hz: int
    t: np.ndarray
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        t = np.asarray(self.t, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64).reshape(len(t), len(CHANNELS))
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.t)

    @property
    def samples(self) -> list[RawSample]:
        return [RawSample(float(ti), *map(float, row)) for ti, row in zip(self.t, self.values)]

    def channel(self, name: str) -> np.ndarray:
        return self.values[:, CHANNELS.index(name)]

    @classmethod
    def from_samples(cls, trip_id, driver_id, label, rate_hz, samples: Sequence[RawSample]):
        arr = np.array([tuple(s) for s in samples], dtype=np.float64).reshape(-1, 1 + len(CHANNELS))
        return cls(trip_id, driver_id, label, rate_hz, arr[:, 0], arr[:, 1:])


def _infer_rate(t: np.ndarray) -> int:
    if len(t) < 2:
        return 1
    gap = float(np.median(np.diff(t)))
    rate = max(1, int(round(1.0 / gap))) if gap > 0 else 1
    if rate not in (1, 15):
        log.warning("inferred sample rate %d Hz is neither 1 nor 15", rate)
    return rate


def parse_trip_csv(path) -> list[TripStream]:
    """Read a trip CSV (one row per raw sample) into one stream per trip_id.

    Trips come back in order of first appearance. Timestamps must be
    strictly increasing within a trip in file order.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyInputError(f"{path}: empty file") from None
        if tuple(h.strip() for h in header) != HEADER:
            raise ParseError(f"bad header, expected {','.join(HEADER)}", line=1)

        rows: dict[str, list] = {}
        meta: dict[str, tuple] = {}
        ncol = len(HEADER)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != ncol:
                raise ParseError(f"expected {ncol} columns, got {len(row)}", line=lineno)
            trip_id, driver_id, gender = row[0], row[1], row[2]
            try:
                label = BinaryLabel.from_code(gender)
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from None
            try:
                nums = [float(v) for v in row[3:]]
            except ValueError:
                bad = next(v for v in row[3:] if not _is_float(v))
                raise ParseError(f"non-numeric value {bad!r}", line=lineno) from None
            if nums[0] < 0:
                raise ParseError(f"negative timestamp {nums[0]!r}", line=lineno)
            heading = nums[1 + HEADING]
            if math.isfinite(heading) and not 0.0 <= heading < 360.0:
                raise ParseError(f"heading {heading!r} outside [0, 360)", line=lineno)
            known = meta.get(trip_id)
            if known is None:
                meta[trip_id] = (driver_id, label, lineno)
                rows[trip_id] = []
            elif known[:2] != (driver_id, label):
                raise ParseError(
                    f"trip {trip_id!r} changes driver_id/gender (first seen on line {known[2]})",
                    line=lineno,
                )
            rows[trip_id].append(nums)

    if not rows:
        raise EmptyInputError(f"{path}: no data rows")

    streams = []
    for trip_id, data in rows.items():
        arr = np.asarray(data, dtype=np.float64)
        t = arr[:, 0]
        if len(t) > 1 and not np.all(np.diff(t) > 0):
            bad = int(np.argmin(np.diff(t) > 0)) + 1
            raise ValidationError(
                f"trip {trip_id!r}: timestamps not strictly increasing at sample {bad}"
            )
        driver_id, label, _ = meta[trip_id]
        streams.append(TripStream(trip_id, driver_id, label, _infer_rate(t), t, arr[:, 1:]))
    return streams


def _is_float(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def write_trip_csv(streams: Iterable[TripStream], path) -> None:
    """Serialize streams with ``repr`` floats so a re-parse is bit-identical."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(HEADER) + "\n")
        for s in streams:
            prefix = f"{s.trip_id},{s.driver_id},{s.label.code if s.label is not None else '?'},"
            lines = [
                prefix + ",".join(map(repr, row))
                for row in np.column_stack([s.t, s.values]).tolist()
            ]
            if lines:
                fh.write("\n".join(lines) + "\n")


def downsample_to_1hz(stream: TripStream) -> TripStream:
    """Average each whole-second bucket [k, k+1) into one sample stamped t=k.

    Linear channels use the arithmetic mean, heading the circular mean.
    Empty buckets produce no output sample.
    """
    if stream.rate_hz == 1:
        log.warning("trip %s is already at 1 Hz; returned unchanged", stream.trip_id)
        return stream
    n = len(stream)
    if n == 0 or (stream.t[-1] - stream.t[0]) < 1.0 - 1.0 / stream.rate_hz - 1e-9:
        raise EmptyInputError(f"trip {stream.trip_id!r} is shorter than one second")

    bucket = np.floor(stream.t)
    starts = np.flatnonzero(np.r_[True, bucket[1:] != bucket[:-1]])
    counts = np.diff(np.r_[starts, n])
    sums = np.add.reduceat(stream.values, starts, axis=0)
    out = sums / counts[:, None]

    rad = np.deg2rad(stream.values[:, HEADING])
    s = np.add.reduceat(np.sin(rad), starts) / counts
    c = np.add.reduceat(np.cos(rad), starts) / counts
    heading = np.degrees(np.arctan2(s, c)) % 360.0
    heading[heading >= 360.0] = 0.0
    out[:, HEADING] = heading
    return replace(stream, rate_hz=1, t=bucket[starts].copy(), values=out)


class Violation(NamedTuple):
    index: int
    channel: str
    kind: str

    def __str__(self):
        return f"sample {self.index}: {self.kind} ({self.channel})"


@dataclass
class ValidationReport:
    trip_id: str
    violations: list[Violation]

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_stream(stream: TripStream) -> ValidationReport:
    """List every invariant violation in ``stream`` without modifying it."""
    found: list[Violation] = []
    t = stream.t
    for i in np.flatnonzero(~np.isfinite(t)):
        found.append(Violation(int(i), "t", "non-finite value"))
    if len(t) > 1:
        for i in np.flatnonzero(~(np.diff(t) > 0)) + 1:
            found.append(Violation(int(i), "t", "timestamp regression"))
    vals = stream.values
    for i, j in zip(*np.nonzero(~np.isfinite(vals))):
        found.append(Violation(int(i), CHANNELS[j], "non-finite value"))
    with np.errstate(invalid="ignore"):
        for i in np.flatnonzero(vals[:, SPEED] < 0):
            found.append(Violation(int(i), "speed", "negative speed"))
        h = vals[:, HEADING]
        for i in np.flatnonzero((h < 0) | (h >= 360)):
            found.append(Violation(int(i), "heading", "heading out of range"))
    found.sort(key=lambda v: (v.index, v.channel))
    return ValidationReport(stream.trip_id, found)
