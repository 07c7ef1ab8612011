"""CSV ingestion, the lockdown period schedule and a synthetic regime-shift generator."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from datetime import datetime
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .timebase import ENERGY, HOUR, TEMPERATURE, TimeFrame, iso, to_utc_hour


class IngestionError(ValueError):
    pass


class ScheduleError(ValueError):
    pass


# ------------------------------------------------------------------ loaders


def _read(path, columns: Sequence[str]) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"{path}: no such file")
    text_columns = {c: str for c in columns if c != columns[-1]}
    df = pd.read_csv(path, dtype=text_columns, keep_default_na=True, float_precision="round_trip")
    if list(df.columns) != list(columns):
        raise IngestionError(f"{path}: expected header {','.join(columns)}, got {','.join(map(str, df.columns))}")
    if df.empty:
        raise IngestionError(f"{path}: no rows")
    try:
        df["timestamp"] = pd.to_datetime(df["timestamp"], utc=True, format="ISO8601")
    except (ValueError, TypeError) as exc:
        raise IngestionError(f"{path}: bad timestamp ({exc})") from None
    value = columns[-1]
    df[value] = pd.to_numeric(df[value], errors="coerce")
    bad = ~np.isfinite(df[value].to_numpy(dtype=np.float64))
    if bad.any():
        first = df.loc[bad, "timestamp"].iloc[0]
        raise IngestionError(f"{path}: non-finite value at {iso(first.to_pydatetime())}")
    off_hour = (df["timestamp"].dt.minute != 0) | (df["timestamp"].dt.second != 0)
    if off_hour.any():
        raise IngestionError(f"{path}: timestamp not on the hour: {df.loc[off_hour, 'timestamp'].iloc[0]}")
    return df


def _dense_series(path, ts: pd.Series, what: str) -> tuple[datetime, np.ndarray]:
    """Check a sorted timestamp column is a gap-free, duplicate-free hourly index."""
    hours = ((ts - ts.iloc[0]) // pd.Timedelta(hours=1)).to_numpy(dtype=np.int64)
    steps = np.diff(hours)
    if (steps == 0).any():
        i = int(np.argmax(steps == 0)) + 1
        raise IngestionError(f"{path}: duplicate timestamp {iso(ts.iloc[i].to_pydatetime())}{what}")
    if (steps > 1).any():
        i = int(np.argmax(steps > 1))
        missing = ts.iloc[i].to_pydatetime() + HOUR
        raise IngestionError(f"{path}: gap at {iso(missing)}{what}")
    return ts.iloc[0].to_pydatetime(), hours


def _load_single(path, header: tuple[str, str], name: str, unit: str) -> TimeFrame:
    df = _read(path, header).sort_values("timestamp", kind="stable").reset_index(drop=True)
    start, _ = _dense_series(path, df["timestamp"], "")
    return TimeFrame(start, {name: df[header[1]].to_numpy(dtype=np.float64)}, {name: unit})


def load_energy_csv(path) -> TimeFrame:
    """Read ``timestamp,kwh`` into a one-column frame named ``E``."""
    return _load_single(path, ("timestamp", "kwh"), ENERGY, "kWh")


def load_temperature_csv(path) -> TimeFrame:
    """Read ``timestamp,celsius`` into a one-column frame named ``T``."""
    return _load_single(path, ("timestamp", "celsius"), TEMPERATURE, "degC")


def load_counters_csv(path) -> TimeFrame:
    """Read long-form ``timestamp,sensor_id,count`` and pivot to one column per sensor.

    Every sensor must report every hour between the first and last
    timestamp in the file; a sensor with holes is rejected, not imputed.
    """
    df = _read(path, ("timestamp", "sensor_id", "count"))
    df["sensor_id"] = df["sensor_id"].astype(str).str.strip()
    t0, t1 = df["timestamp"].min(), df["timestamp"].max()
    index = pd.date_range(t0, t1, freq="h")
    columns, units = {}, {}
    for sensor, group in sorted(df.groupby("sensor_id", sort=False), key=lambda kv: kv[0]):
        group = group.sort_values("timestamp", kind="stable")
        dup = group["timestamp"].duplicated()
        if dup.any():
            raise IngestionError(
                f"{path}: duplicate timestamp {iso(group.loc[dup, 'timestamp'].iloc[0].to_pydatetime())} for sensor {sensor}"
            )
        if len(group) != len(index):
            have = pd.DatetimeIndex(group["timestamp"])
            missing = index.difference(have)
            raise IngestionError(
                f"{path}: sensor {sensor} does not cover the index (first missing hour {iso(missing[0].to_pydatetime())})"
            )
        columns[sensor] = group["count"].to_numpy(dtype=np.float64)
        units[sensor] = "count"
    return TimeFrame(t0.to_pydatetime(), columns, units)


def _timestamps(frame: TimeFrame) -> list[str]:
    return [iso(frame.timestamp(i)) for i in range(len(frame))]


def _fmt(values: np.ndarray) -> list[str]:
    return [repr(float(v)) for v in values]


def write_energy_csv(frame: TimeFrame, path) -> None:
    _write_single(frame, ENERGY, ("timestamp", "kwh"), path)


def write_temperature_csv(frame: TimeFrame, path) -> None:
    _write_single(frame, TEMPERATURE, ("timestamp", "celsius"), path)


def _write_single(frame: TimeFrame, column: str, header, path) -> None:
    lines = [",".join(header)]
    lines += [f"{t},{v}" for t, v in zip(_timestamps(frame), _fmt(frame[column]))]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_counters_csv(frame: TimeFrame, path, sensors: Sequence[str] | None = None) -> None:
    sensors = list(sensors) if sensors is not None else frame.names
    stamps = _timestamps(frame)
    lines = ["timestamp,sensor_id,count"]
    for s in sensors:
        lines += [f"{t},{s},{v}" for t, v in zip(stamps, _fmt(frame[s]))]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def align(frames: Sequence[TimeFrame]) -> TimeFrame:
    """Concatenate columns over the common hourly index of all frames."""
    if not frames:
        raise IngestionError("nothing to align")
    start = max(f.start for f in frames)
    end = min(f.end for f in frames)
    if end <= start:
        raise IngestionError("frames share no common hours")
    columns, units = {}, {}
    for f in frames:
        lo = f.index_of(start)
        hi = f.index_of(end)
        for name in f.names:
            if name in columns:
                raise IngestionError(f"column {name!r} appears in more than one frame")
            columns[name] = f[name][lo:hi]
            units[name] = f.units.get(name, "")
    return TimeFrame(start, columns, units)


# ----------------------------------------------------------------- schedule


@dataclass(frozen=True)
class Period:
    name: str
    start: datetime
    end: datetime  # exclusive


@dataclass(frozen=True)
class PeriodSchedule:
    periods: tuple[Period, ...]

    def __post_init__(self):
        periods = tuple(
            Period(p.name, to_utc_hour(p.start), to_utc_hour(p.end)) for p in self.periods
        )
        if not periods:
            raise ScheduleError("schedule has no periods")
        names = [p.name for p in periods]
        if len(set(names)) != len(names):
            raise ScheduleError(f"duplicate period names: {names}")
        for p in periods:
            if p.end <= p.start:
                raise ScheduleError(f"period {p.name} is empty")
        for a, b in zip(periods, periods[1:]):
            if a.end != b.start:
                raise ScheduleError(f"periods {a.name} and {b.name} are not contiguous")
        object.__setattr__(self, "periods", periods)

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.periods]

    @property
    def start(self) -> datetime:
        return self.periods[0].start

    @property
    def end(self) -> datetime:
        return self.periods[-1].end

    def locate(self, ts: datetime) -> int:
        """Index of the period containing ``ts``, or -1."""
        for i, p in enumerate(self.periods):
            if p.start <= ts < p.end:
                return i
        return -1

    def clip(self, start, end) -> "PeriodSchedule":
        start, end = to_utc_hour(start), to_utc_hour(end)
        kept = [
            Period(p.name, max(p.start, start), min(p.end, end))
            for p in self.periods
            if p.start < end and p.end > start
        ]
        if not kept:
            raise ScheduleError(f"no period intersects [{iso(start)}, {iso(end)})")
        return PeriodSchedule(tuple(kept))

    def to_lines(self) -> str:
        return "".join(f"{p.name},{iso(p.start)},{iso(p.end)}\n" for p in self.periods)


MELBOURNE_BOUNDARIES = ("2020-03-23", "2020-05-30", "2020-08-02", "2020-10-27")
MELBOURNE_NAMES = ("PLD", "LD1", "IL1", "LD2", "IL2")


def default_melbourne_schedule(stream_start, stream_end) -> PeriodSchedule:
    """The five lockdown periods, clipped to ``[stream_start, stream_end)``.

    PLD opens at the stream start and IL2 closes at the stream end.
    """
    stream_start, stream_end = to_utc_hour(stream_start), to_utc_hour(stream_end)
    cuts = [to_utc_hour(f"{d}T00:00:00Z") for d in MELBOURNE_BOUNDARIES]
    lo = min(stream_start, cuts[0] - HOUR)
    hi = max(stream_end, cuts[-1] + HOUR)
    edges = [lo, *cuts, hi]
    full = PeriodSchedule(tuple(Period(n, a, b) for n, a, b in zip(MELBOURNE_NAMES, edges, edges[1:])))
    return full.clip(stream_start, stream_end)


def load_schedule(path) -> PeriodSchedule:
    """Parse ``name,start_iso,end_iso`` lines (blank lines and ``#`` comments ignored)."""
    periods = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3:
            raise ScheduleError(f"{path}:{lineno}: expected name,start_iso,end_iso")
        try:
            periods.append(Period(parts[0], to_utc_hour(parts[1]), to_utc_hour(parts[2])))
        except ValueError as exc:
            raise ScheduleError(f"{path}:{lineno}: {exc}") from None
    return PeriodSchedule(tuple(periods))


def regime_schedule(start, length: int, boundaries: Sequence[int], names: Sequence[str] | None = None) -> PeriodSchedule:
    """Periods cut at hour offsets, named R0, R1, ... unless names are given."""
    start = to_utc_hour(start)
    edges = [0, *boundaries, length]
    names = list(names) if names is not None else [f"R{i}" for i in range(len(edges) - 1)]
    if len(names) != len(edges) - 1:
        raise ScheduleError("one name per regime required")
    return PeriodSchedule(
        tuple(Period(n, start + a * HOUR, start + b * HOUR) for n, a, b in zip(names, edges, edges[1:]))
    )


# ---------------------------------------------------------------- synthetic


@dataclass(frozen=True)
class SynthConfig:
    length: int = 6000
    base_level: float = 200.0
    daily_amp: float = 60.0
    weekly_amp: float = 30.0
    ar_coeff: float = 0.8
    noise_std: float = 5.0
    regime_boundaries: tuple[int, ...] = (4000,)
    regime_level_factors: tuple[float, ...] = (1.0, 0.5)
    regime_amp_factors: tuple[float, ...] = (1.0, 0.5)
    mobility_coupling: float = 0.8
    n_counters: int = 4
    seed: int = 0
    start: str = "2019-01-01T00:00:00Z"
    temperature_noise_std: float = 0.5

    def __post_init__(self):
        for name in ("regime_boundaries", "regime_level_factors", "regime_amp_factors"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        self.validate()

    def validate(self) -> None:
        if self.length < 1:
            raise ValueError("length must be >= 1")
        b = self.regime_boundaries
        if any(x >= y for x, y in zip(b, b[1:])) or any(x <= 0 or x >= self.length for x in b):
            raise ValueError("regime boundaries must be strictly increasing and inside (0, length)")
        n = len(b) + 1
        for name in ("regime_level_factors", "regime_amp_factors"):
            f = getattr(self, name)
            if len(f) != n:
                raise ValueError(f"{name} needs {n} entries, one per regime")
            if not all(np.isfinite(x) and x > 0 for x in f):
                raise ValueError(f"{name} must be finite and positive")
        if not 0.0 <= self.ar_coeff < 1.0:
            raise ValueError("ar_coeff must be in [0, 1)")
        if not 0.0 <= self.mobility_coupling <= 1.0:
            raise ValueError("mobility_coupling must be in [0, 1]")
        if self.noise_std < 0 or self.temperature_noise_std < 0:
            raise ValueError("noise std must be >= 0")
        if self.n_counters < 0:
            raise ValueError("n_counters must be >= 0")
        to_utc_hour(self.start)

    def to_dict(self) -> dict:
        return asdict(self)

    def regime_of(self) -> np.ndarray:
        return np.searchsorted(np.asarray(self.regime_boundaries), np.arange(self.length), side="right")


def counter_name(j: int) -> str:
    return f"C{j:02d}"


def _minmax(x: np.ndarray) -> np.ndarray:
    span = x.max() - x.min()
    return (x - x.min()) / span if span > 0 else np.zeros_like(x)


def synth_generate(cfg: SynthConfig) -> TimeFrame:
    """Regime-switching hourly load with coupled pedestrian counters and temperature.

    Each regime multiplies the base level and the daily/weekly amplitude by
    its own factor. The result is a pure function of ``cfg``.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    t = np.arange(cfg.length, dtype=np.float64)
    regime = cfg.regime_of()
    level = np.asarray(cfg.regime_level_factors)[regime]
    amp = np.asarray(cfg.regime_amp_factors)[regime]
    seasonal = cfg.daily_amp * np.sin(2 * np.pi * t / 24) + cfg.weekly_amp * np.sin(2 * np.pi * t / 168)
    deterministic = level * cfg.base_level + amp * seasonal

    innovations = rng.standard_normal(cfg.length) * cfg.noise_std
    noise = np.empty(cfg.length)
    acc = 0.0
    for i in range(cfg.length):
        acc = cfg.ar_coeff * acc + innovations[i]
        noise[i] = acc
    energy = deterministic + noise

    columns = {ENERGY: energy}
    units = {ENERGY: "kWh"}

    annual = 15.0 + 7.0 * np.cos(2 * np.pi * t / 8766.0)
    daily = 4.0 * np.sin(2 * np.pi * (t - 9.0) / 24.0)
    columns[TEMPERATURE] = annual + daily + rng.standard_normal(cfg.length) * cfg.temperature_noise_std
    units[TEMPERATURE] = "degC"

    driver = _minmax(deterministic)
    kernel = np.ones(12) / 12.0
    for j in range(cfg.n_counters):
        raw = rng.standard_normal(cfg.length + kernel.size - 1)
        smooth = _minmax(np.convolve(raw, kernel, mode="valid"))
        scale = rng.uniform(50.0, 500.0)
        offset = rng.uniform(0.0, 20.0)
        mix = cfg.mobility_coupling * driver + (1.0 - cfg.mobility_coupling) * smooth
        columns[counter_name(j)] = offset + scale * mix
        units[counter_name(j)] = "count"
    return TimeFrame(cfg.start, columns, units)


def write_synth_csvs(frame: TimeFrame, directory) -> dict[str, Path]:
    """Write a synthetic frame as the three ingestion CSVs."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {
        "energy": directory / "energy.csv",
        "temperature": directory / "temperature.csv",
        "counters": directory / "counters.csv",
    }
    write_energy_csv(frame, paths["energy"])
    write_temperature_csv(frame, paths["temperature"])
    sensors = [n for n in frame.names if n not in (ENERGY, TEMPERATURE)]
    write_counters_csv(frame, paths["counters"], sensors)
    return paths
