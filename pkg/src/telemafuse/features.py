"""Windowing, per-window statistics and feature selection."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import ConfigError, DataError, ParseError, SchemaError, ValidationError
from .ingest import CHANNELS, HEADING, BinaryLabel, TripStream

log = logging.getLogger(__name__)

STATS = (
    "min", "max", "mean", "median", "q1", "q3", "std", "aad",
    "skewness", "entropy", "kurtosis", "autocorr", "zero_crossing", "energy",
)
FEATURE_NAMES = tuple(f"{ch}_{st}" for ch in CHANNELS for st in STATS)


@dataclass(frozen=True)
class WindowSpec:
    length_s: int = 256
    stride_s: int = 256

    def __post_init__(self):
        if int(self.length_s) < 2 or int(self.stride_s) < 1:
            raise ConfigError(f"invalid window spec {self.length_s}/{self.stride_s}")


@dataclass(frozen=True)
class FeatureOptions:
    entropy_bins: int = 16
    autocorr_lag: int = 1
    heading_mode: str = "raw"

    def __post_init__(self):
        if self.heading_mode not in ("raw", "delta"):
            raise ConfigError(f"heading_mode must be raw or delta, got {self.heading_mode!r}")
        if self.entropy_bins < 1 or self.autocorr_lag < 1:
            raise ConfigError("entropy_bins and autocorr_lag must be positive")


@dataclass
class RawWindow:
    trip_id: str
    driver_id: str
    label: Optional[BinaryLabel]
    offset: int
    data: np.ndarray  # (length, n_channels)


@dataclass
class FeatureWindow:
    trip_id: str
    driver_id: str
    label: Optional[BinaryLabel]
    features: dict[str, float]
    offset: int = 0


def segment_windows(stream: TripStream, spec: WindowSpec = WindowSpec()) -> list[RawWindow]:
    """Cut a 1 Hz stream into windows of ``spec.length_s`` consecutive seconds.

    Offsets are measured from the first sample. Windows that would include a
    missing second, and the incomplete tail, are dropped.
    """
    if stream.rate_hz != 1:
        raise ValidationError(f"trip {stream.trip_id!r} must be downsampled to 1 Hz first")
    if len(stream) < spec.length_s:
        return []
    t0 = stream.t[0]
    sec = np.rint(stream.t - t0).astype(np.int64)
    span = int(sec[-1]) + 1
    row_of = np.full(span, -1, dtype=np.int64)
    row_of[sec] = np.arange(len(sec))

    out = []
    for start in range(0, span - spec.length_s + 1, spec.stride_s):
        rows = row_of[start:start + spec.length_s]
        if (rows < 0).any():
            continue
        out.append(RawWindow(
            stream.trip_id, stream.driver_id, stream.label,
            int(round(t0)) + start, stream.values[rows],
        ))
    return out


def _wrap_delta(h: np.ndarray) -> np.ndarray:
    d = np.diff(h, axis=-1)
    return (d + 180.0) % 360.0 - 180.0


def channel_stats(a: np.ndarray, bins: int = 16, lag: int = 1) -> np.ndarray:
    """The 14 statistics along the last axis of ``a``; output shape (..., 14).

    Constant rows get 0 for every shape statistic (skewness, kurtosis,
    entropy, autocorr, zero_crossing) and for std/aad.
    """
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[-1]
    if n < 2:
        raise DataError(f"degenerate window of length {n}")
    if not np.isfinite(a).all():
        raise ValidationError("window contains non-finite values")

    lo = a.min(axis=-1)
    hi = a.max(axis=-1)
    const = hi == lo
    mean = a.mean(axis=-1)
    q1, median, q3 = np.quantile(a, [0.25, 0.5, 0.75], axis=-1)
    d = a - mean[..., None]
    d[const] = 0.0
    m2 = (d * d).mean(axis=-1)
    safe_m2 = np.where(const, 1.0, m2)
    std = np.sqrt(m2 * n / (n - 1))
    aad = np.abs(d).mean(axis=-1)
    skew = np.where(const, 0.0, (d ** 3).mean(axis=-1) / safe_m2 ** 1.5)
    kurt = np.where(const, 0.0, (d ** 4).mean(axis=-1) / safe_m2 ** 2 - 3.0)

    # equal-width histogram over [min, max], top edge inclusive
    width = np.where(const, 1.0, hi - lo)
    idx = ((a - lo[..., None]) * (bins / width)[..., None]).astype(np.int64)
    np.clip(idx, 0, bins - 1, out=idx)
    flat = idx.reshape(-1, n) + (np.arange(idx.size // n) * bins)[:, None]
    counts = np.bincount(flat.ravel(), minlength=flat.shape[0] * bins).reshape(*a.shape[:-1], bins)
    p = counts / n
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = -np.where(p > 0, p * np.log2(p), 0.0).sum(axis=-1)
    ent = np.where(const, 0.0, ent)

    denom = (d * d).sum(axis=-1)
    num = (d[..., :-lag] * d[..., lag:]).sum(axis=-1) if lag < n else np.zeros_like(denom)
    acf = np.where(const, 0.0, num / np.where(const, 1.0, denom))

    # zero entries inherit the previous nonzero sign
    s = np.sign(d)
    pos = np.where(s != 0, np.arange(n), 0)
    np.maximum.accumulate(pos, axis=-1, out=pos)
    filled = np.take_along_axis(s, pos, axis=-1)
    zc = (filled[..., 1:] * filled[..., :-1] < 0).sum(axis=-1).astype(np.float64)

    energy = (a * a).mean(axis=-1)
    return np.stack(
        [lo, hi, mean, median, q1, q3, std, aad, skew, ent, kurt, acf, zc, energy], axis=-1
    )


def _window_block(data: np.ndarray, opts: FeatureOptions) -> np.ndarray:
    """(W, n, C) windows -> (W, C*14) feature rows."""
    per_channel = np.swapaxes(data, -1, -2)  # (W, C, n)
    if opts.heading_mode == "delta":
        heading = _wrap_delta(per_channel[:, HEADING, :])
        others = np.delete(per_channel, HEADING, axis=1)
        stats_other = channel_stats(others, opts.entropy_bins, opts.autocorr_lag)
        stats_head = channel_stats(heading, opts.entropy_bins, opts.autocorr_lag)
        stats = np.insert(stats_other, HEADING, stats_head, axis=1)
    else:
        stats = channel_stats(per_channel, opts.entropy_bins, opts.autocorr_lag)
    return stats.reshape(stats.shape[0], -1)


def compute_window_features(window, opts: FeatureOptions = FeatureOptions()) -> FeatureWindow:
    """Feature row for a single window (a RawWindow or an (n, 7) array)."""
    if isinstance(window, RawWindow):
        data, meta = window.data, (window.trip_id, window.driver_id, window.label)
        offset = window.offset
    else:
        data, meta, offset = np.asarray(window, dtype=np.float64), ("", "", None), 0
    if data.ndim != 2 or data.shape[1] != len(CHANNELS):
        raise DataError(f"window must have shape (n, {len(CHANNELS)}), got {data.shape}")
    row = _window_block(data[None], opts)[0]
    return FeatureWindow(*meta, features=dict(zip(FEATURE_NAMES, row.tolist())), offset=offset)


@dataclass
class FeatureMatrix:
    """Row-aligned feature table: X is (n_windows, n_features)."""

    X: np.ndarray
    y: np.ndarray  # int, -1 where unlabeled
    feature_names: list[str]
    trip_ids: np.ndarray
    driver_ids: np.ndarray
    offsets: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=np.int64)
        self.feature_names = list(self.feature_names)
        X = np.ascontiguousarray(self.X, dtype=np.float64)
        if X.size != len(self.y) * len(self.feature_names):
            raise SchemaError("feature matrix size does not match its rows and feature names")
        self.X = X.reshape(len(self.y), len(self.feature_names))
        self.trip_ids = np.asarray(self.trip_ids, dtype=object)
        self.driver_ids = np.asarray(self.driver_ids, dtype=object)
        if self.X.shape[1] != len(self.feature_names):
            raise SchemaError("feature matrix width does not match its feature names")

    def __len__(self):
        return len(self.y)

    @property
    def labeled(self) -> bool:
        return bool(len(self.y)) and bool((self.y >= 0).all())

    def column(self, name: str) -> np.ndarray:
        try:
            return self.X[:, self.feature_names.index(name)]
        except ValueError:
            raise SchemaError(f"missing feature column {name!r}") from None

    def project(self, names: Sequence[str]) -> "FeatureMatrix":
        index = {n: i for i, n in enumerate(self.feature_names)}
        missing = [n for n in names if n not in index]
        if missing:
            raise SchemaError(f"missing feature column {missing[0]!r}")
        cols = [index[n] for n in names]
        return FeatureMatrix(self.X[:, cols], self.y, list(names), self.trip_ids,
                             self.driver_ids, self.offsets)

    def rows(self, idx) -> "FeatureMatrix":
        idx = np.asarray(idx)
        return FeatureMatrix(
            self.X[idx], self.y[idx], self.feature_names, self.trip_ids[idx],
            self.driver_ids[idx], None if self.offsets is None else self.offsets[idx],
        )

    def with_labels(self, y) -> "FeatureMatrix":
        return FeatureMatrix(self.X, y, self.feature_names, self.trip_ids, self.driver_ids,
                             self.offsets)

    @classmethod
    def from_windows(cls, windows: Sequence[FeatureWindow]) -> "FeatureMatrix":
        if not windows:
            return cls(np.empty((0, len(FEATURE_NAMES))), np.empty(0, np.int64),
                       list(FEATURE_NAMES), [], [])
        names = list(windows[0].features)
        for w in windows:
            if list(w.features) != names:
                raise SchemaError(f"window of trip {w.trip_id!r} has a different feature set")
        return cls(
            np.array([[w.features[n] for n in names] for w in windows]),
            [-1 if w.label is None else int(w.label) for w in windows],
            names,
            [w.trip_id for w in windows],
            [w.driver_id for w in windows],
            np.array([w.offset for w in windows]),
        )

    def to_windows(self) -> list[FeatureWindow]:
        offsets = self.offsets if self.offsets is not None else np.zeros(len(self), int)
        return [
            FeatureWindow(self.trip_ids[i], self.driver_ids[i],
                          None if self.y[i] < 0 else BinaryLabel(int(self.y[i])),
                          dict(zip(self.feature_names, self.X[i].tolist())), int(offsets[i]))
            for i in range(len(self))
        ]


def extract_features(streams: Iterable[TripStream], spec: WindowSpec = WindowSpec(),
                     opts: FeatureOptions = FeatureOptions()) -> FeatureMatrix:
    """Window every 1 Hz stream and stack the feature rows."""
    rows, y, trips, drivers, offsets = [], [], [], [], []
    for stream in streams:
        windows = segment_windows(stream, spec)
        if not windows:
            continue
        rows.append(_window_block(np.stack([w.data for w in windows]), opts))
        for w in windows:
            y.append(-1 if w.label is None else int(w.label))
            trips.append(w.trip_id)
            drivers.append(w.driver_id)
            offsets.append(w.offset)
    X = np.vstack(rows) if rows else np.empty((0, len(FEATURE_NAMES)))
    return FeatureMatrix(X, y, list(FEATURE_NAMES), trips, drivers, np.array(offsets, int))


def _as_matrix(dataset) -> FeatureMatrix:
    if isinstance(dataset, FeatureMatrix):
        return dataset
    return FeatureMatrix.from_windows(list(dataset))


def low_variance_filter(dataset, threshold: float = 1e-12) -> list[str]:
    """Names of features whose population variance across windows is below threshold."""
    fm = _as_matrix(dataset)
    if len(fm) == 0:
        raise DataError("variance filter needs a non-empty dataset")
    var = fm.X.var(axis=0)
    return [n for n, v in zip(fm.feature_names, var) if v < threshold]


@dataclass
class SelectionReport:
    variance_dropped: list[str]
    correlations: dict[str, float]
    selected: list[str]

    def ranked(self) -> list[str]:
        """All correlated features by descending |r| (selected ones first)."""
        return sorted(self.correlations, key=lambda n: -abs(self.correlations[n]))


def point_biserial_select(dataset, threshold: float = 0.1) -> SelectionReport:
    """Correlate each feature with the 0/1 label and keep those with |r| >= threshold.

    Constant features have no defined correlation and are left out of the
    report; run ``low_variance_filter`` first.
    """
    fm = _as_matrix(dataset)
    if not fm.labeled:
        raise DataError("correlation selection needs every window labeled")
    y = fm.y.astype(np.float64)
    if y.min() == y.max():
        raise DataError("correlation is undefined for a single-class dataset")
    yc = y - y.mean()
    Xc = fm.X - fm.X.mean(axis=0)
    sx = np.sqrt((Xc * Xc).sum(axis=0))
    sy = np.sqrt((yc * yc).sum())
    corr: dict[str, float] = {}
    for j, name in enumerate(fm.feature_names):
        if sx[j] == 0:
            log.debug("feature %s is constant; no correlation", name)
            continue
        r = float(Xc[:, j] @ yc / (sx[j] * sy))
        corr[name] = max(-1.0, min(1.0, r))
    selected = [n for n in corr if abs(corr[n]) >= threshold]
    selected.sort(key=lambda n: -abs(corr[n]))
    return SelectionReport([], corr, selected)


def select_features(dataset, variance_threshold: float = 1e-12,
                    corr_threshold: float = 0.1) -> SelectionReport:
    """Variance filter followed by correlation selection."""
    fm = _as_matrix(dataset)
    dropped = low_variance_filter(fm, variance_threshold)
    keep = [n for n in fm.feature_names if n not in set(dropped)]
    report = point_biserial_select(fm.project(keep), corr_threshold)
    report.variance_dropped = dropped
    return report


def write_feature_csv(fm: FeatureMatrix, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(["trip_id", "driver_id", "label", *fm.feature_names]) + "\n")
        codes = {-1: "?", 0: "M", 1: "F"}
        for i, row in enumerate(fm.X.tolist()):
            head = f"{fm.trip_ids[i]},{fm.driver_ids[i]},{codes[int(fm.y[i])]},"
            fh.write(head + ",".join(map(repr, row)) + "\n")


def read_feature_csv(path) -> FeatureMatrix:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        if header[:3] != ["trip_id", "driver_id", "label"]:
            raise ParseError("feature CSV must start with trip_id,driver_id,label", line=1)
        names = header[3:]
        X, y, trips, drivers = [], [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} columns, got {len(row)}", line=lineno)
            try:
                label = BinaryLabel.from_code(row[2])
                X.append([float(v) for v in row[3:]])
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from None
            y.append(-1 if label is None else int(label))
            trips.append(row[0])
            drivers.append(row[1])
    return FeatureMatrix(np.array(X, dtype=np.float64).reshape(len(y), len(names)), y, names,
                         trips, drivers)


def write_selection_report(report: SelectionReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("feature,correlation\n")
        for name in report.selected:
            fh.write(f"{name},{report.correlations[name]!r}\n")


def feature_vector(values: Mapping[str, float], names: Sequence[str]) -> np.ndarray:
    """Order a name->value mapping by ``names``; raises SchemaError on a gap."""
    try:
        return np.array([values[n] for n in names], dtype=np.float64)
    except KeyError as exc:
        raise SchemaError(f"missing feature {exc.args[0]!r}") from None
