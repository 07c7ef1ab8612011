"""Hourly frames, calendar features, scaling, windowing and feature sets."""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

HOUR = timedelta(hours=1)
ENERGY = "E"
TEMPERATURE = "T"


class MissingColumnError(KeyError):
    pass


class InsufficientDataError(ValueError):
    pass


def to_utc_hour(ts) -> datetime:
    """Parse/normalise a timestamp to an aware UTC datetime at the top of the hour."""
    if isinstance(ts, str):
        ts = datetime.fromisoformat(ts.replace("Z", "+00:00"))
    if not isinstance(ts, datetime):
        raise TypeError(f"not a timestamp: {ts!r}")
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    ts = ts.astimezone(timezone.utc)
    if ts.minute or ts.second or ts.microsecond:
        raise ValueError(f"timestamp {ts.isoformat()} is not on the hour")
    return ts


def iso(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class TimeFrame:
    """Dense hourly matrix of named real columns.

    Row ``i`` is the hour ``start + i h``. Columns are stored as read-only
    float64 arrays of a common length.
    """

    start: datetime
    columns: Mapping[str, np.ndarray]
    units: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "start", to_utc_hour(self.start))
        cols = {}
        length = None
        for name, values in self.columns.items():
            arr = np.array(values, dtype=np.float64)
            if arr.ndim != 1:
                raise ValueError(f"column {name!r} is not one-dimensional")
            if length is None:
                length = arr.size
            elif arr.size != length:
                raise ValueError(f"column {name!r} has length {arr.size}, expected {length}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"column {name!r} has non-finite values")
            arr.flags.writeable = False
            cols[name] = arr
        if not cols or length == 0:
            raise ValueError("a TimeFrame needs at least one column and one row")
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "units", {n: self.units.get(n, "") for n in cols})

    def __len__(self) -> int:
        return next(iter(self.columns.values())).size

    @property
    def names(self) -> list[str]:
        return list(self.columns)

    @property
    def end(self) -> datetime:
        """Exclusive end timestamp."""
        return self.start + len(self) * HOUR

    def timestamp(self, i: int) -> datetime:
        return self.start + i * HOUR

    def index_of(self, ts) -> int:
        delta = to_utc_hour(ts) - self.start
        return int(delta.total_seconds() // 3600)

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.columns[name]
        except KeyError:
            raise MissingColumnError(f"missing column {name!r}") from None

    def values(self, names: Sequence[str] | None = None) -> np.ndarray:
        """(L, k) matrix of the given columns (all columns by default)."""
        names = self.names if names is None else list(names)
        return np.column_stack([self[n] for n in names])

    def slice(self, lo: int, hi: int) -> "TimeFrame":
        lo, hi = max(lo, 0), min(hi, len(self))
        if hi <= lo:
            raise InsufficientDataError(f"empty slice [{lo}, {hi})")
        return TimeFrame(self.timestamp(lo), {n: v[lo:hi] for n, v in self.columns.items()}, self.units)

    def with_columns(self, columns: Mapping[str, np.ndarray], units: Mapping[str, str] | None = None) -> "TimeFrame":
        merged = dict(self.columns)
        merged.update(columns)
        u = dict(self.units)
        u.update(units or {})
        return TimeFrame(self.start, merged, u)

    def equals(self, other: "TimeFrame") -> bool:
        return (
            self.start == other.start
            and self.names == other.names
            and all(np.array_equal(self[n], other[n]) for n in self.names)
        )


def calendar_features(start, length: int) -> tuple[np.ndarray, np.ndarray]:
    """Hour-of-day (0..23) and day-of-week (Monday=0) for ``length`` hours."""
    if length < 1:
        raise ValueError("length must be >= 1")
    start = to_utc_hour(start)
    hours = np.arange(length)
    hod = (start.hour + hours) % 24
    dow = (start.weekday() + (start.hour + hours) // 24) % 7
    return hod.astype(np.float64), dow.astype(np.float64)


def _stack(counters: Iterable[Sequence[float]]) -> np.ndarray:
    arrs = [np.asarray(c, dtype=np.float64) for c in counters]
    if not arrs:
        raise ValueError("need at least one counter series")
    if len({a.shape for a in arrs}) != 1:
        raise ValueError("counter series must have equal lengths")
    return np.vstack(arrs)


def micro_average(counters: Iterable[Sequence[float]]) -> np.ndarray:
    return _stack(counters).mean(axis=0)


def macro_average(counters: Iterable[Sequence[float]]) -> np.ndarray:
    """Mean of the per-series min-max normalised counters.

    A flat series normalises to all zeros.
    """
    m = _stack(counters)
    lo = m.min(axis=1, keepdims=True)
    span = m.max(axis=1, keepdims=True) - lo
    safe = np.where(span > 0, span, 1.0)
    norm = np.where(span > 0, (m - lo) / safe, 0.0)
    return norm.mean(axis=0)


class FeatureKind(str, Enum):
    E = "E"
    EM = "EM"
    ET = "ET"
    ETM = "ETM"

    @property
    def mobility(self) -> bool:
        return "M" in self.value

    @property
    def temperature(self) -> bool:
        return "T" in self.value


@dataclass(frozen=True)
class FeatureSpec:
    kind: FeatureKind
    counter_names: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", FeatureKind(self.kind))
        object.__setattr__(self, "counter_names", tuple(self.counter_names))
        if not self.kind.mobility and self.counter_names:
            raise ValueError(f"feature set {self.kind.value} takes no counters")
        if self.kind.mobility and not self.counter_names:
            raise ValueError(f"feature set {self.kind.value} needs counter names")

    @property
    def width(self) -> int:
        n = len(self.counter_names)
        return 3 + (n + 2 if self.kind.mobility else 0) + (1 if self.kind.temperature else 0)


def assemble(frame: TimeFrame, spec: FeatureSpec) -> TimeFrame:
    """Build the model input columns for a feature set.

    Order: E, HoD, DoW, then counters + micro + macro averages (mobility
    sets), then T (temperature sets).
    """
    hod, dow = calendar_features(frame.start, len(frame))
    cols: dict[str, np.ndarray] = {ENERGY: frame[ENERGY], "HoD": hod, "DoW": dow}
    units = {ENERGY: frame.units.get(ENERGY, "kWh"), "HoD": "h", "DoW": "d"}
    if spec.kind.mobility:
        counters = [frame[n] for n in spec.counter_names]
        for n, c in zip(spec.counter_names, counters):
            cols[n] = c
            units[n] = frame.units.get(n, "count")
        cols["M_micro"] = micro_average(counters)
        cols["M_macro"] = macro_average(counters)
        units["M_micro"] = "count"
        units["M_macro"] = ""
    if spec.kind.temperature:
        cols[TEMPERATURE] = frame[TEMPERATURE]
        units[TEMPERATURE] = frame.units.get(TEMPERATURE, "degC")
    if len(cols) != spec.width:
        raise ValueError("duplicate column names among counters")
    return TimeFrame(frame.start, cols, units)


@dataclass(frozen=True)
class WindowBatch:
    X: np.ndarray  # (N, W, F)
    Y: np.ndarray  # (N, H)

    @property
    def W(self) -> int:
        return self.X.shape[1]

    @property
    def H(self) -> int:
        return self.Y.shape[1]

    def __len__(self) -> int:
        return self.X.shape[0]


def window_arrays(features: np.ndarray, target: np.ndarray, W: int, H: int) -> WindowBatch:
    """Windowing on raw arrays; see :func:`make_windows`."""
    if W < 1 or H < 1:
        raise ValueError("W and H must be >= 1")
    L = features.shape[0]
    if L < W + H:
        raise InsufficientDataError(f"need at least W+H={W + H} rows, have {L}")
    n = L - W - H + 1
    X = np.lib.stride_tricks.sliding_window_view(features, W, axis=0)[:n]  # (n, F, W)
    Y = np.lib.stride_tricks.sliding_window_view(target[W:], H)[:n]
    return WindowBatch(np.ascontiguousarray(X.transpose(0, 2, 1)), np.ascontiguousarray(Y))


def make_windows(features: TimeFrame, target_column: str, W: int, H: int) -> WindowBatch:
    """Supervised pairs: X = rows [i, i+W), Y = target rows [i+W, i+W+H)."""
    return window_arrays(features.values(), features[target_column], W, H)


@dataclass(frozen=True)
class Scaler:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - self.mean) / self.std

    def invert(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=np.float64) * self.std + self.mean

    def column(self, j: int) -> "Scaler":
        return Scaler(self.mean[j : j + 1], self.std[j : j + 1])


def scaler_fit(values: np.ndarray, fit_range: slice | tuple[int, int]) -> Scaler:
    """Per-column mean and population std over the rows in ``fit_range``."""
    if isinstance(fit_range, tuple):
        fit_range = slice(*fit_range)
    rows = np.asarray(values, dtype=np.float64)
    if rows.ndim == 1:
        rows = rows[:, None]
    rows = rows[fit_range]
    if rows.shape[0] == 0:
        raise ValueError("empty fit range")
    mean = rows.mean(axis=0)
    std = rows.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    return Scaler(mean, std)


def scaler_apply(scaler: Scaler, values: np.ndarray) -> np.ndarray:
    return scaler.apply(values)


def scaler_invert(scaler: Scaler, values: np.ndarray) -> np.ndarray:
    return scaler.invert(values)
