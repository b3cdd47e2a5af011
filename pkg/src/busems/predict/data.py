"""Ridership records, weather covariates and the normalised training set."""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

WEATHER_CARDINALITY = 4
FEATURE_NAMES = ("day_of_week", "hour", "weather_code", "temp_high", "temp_low",
                 "wind_level", "is_holiday")
N_FEATURES = len(FEATURE_NAMES)
MAX_WIND_LEVEL = 12
# upper clamp applied before a prediction reaches the EMS (standees allowed)
LOAD_FACTOR_CAP = 1.2


@dataclass(frozen=True)
class LoadRecord:
    date: dt.date
    hour: int
    passenger_count: int

    def __post_init__(self):
        if not 0 <= self.hour <= 23:
            raise ValueError(f"hour must be in 0..23, got {self.hour}")
        if self.passenger_count < 0:
            raise ValueError("passenger_count must be non-negative")


@dataclass(frozen=True)
class WeatherDay:
    date: dt.date
    weather_code: int
    temp_high_c: float
    temp_low_c: float
    wind_level: int
    is_holiday: bool


# covariates used when no weather file is supplied
NEUTRAL_WEATHER = dict(weather_code=0, temp_high_c=25.0, temp_low_c=18.0, wind_level=1, is_holiday=False)


@dataclass(frozen=True)
class FeatureVector:
    day_of_week: int     # 0 = Monday
    hour: int
    weather_code: int
    temp_high: float
    temp_low: float
    wind_level: int
    is_holiday: bool

    def __post_init__(self):
        check_features(np.array([self.as_array()]))

    def as_array(self) -> np.ndarray:
        return np.array([self.day_of_week, self.hour, self.weather_code, self.temp_high,
                         self.temp_low, self.wind_level, float(self.is_holiday)], dtype=float)

    @classmethod
    def from_array(cls, row) -> "FeatureVector":
        d, h, w, th, tl, wl, hol = (float(v) for v in row)
        return cls(int(d), int(h), int(w), th, tl, int(wl), bool(hol))


def check_features(X: np.ndarray, weather_cardinality: int = WEATHER_CARDINALITY) -> None:
    """Raise ``ValueError`` if any row has an out-of-range categorical field."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != N_FEATURES:
        raise ValueError(f"feature matrix must have shape (n, {N_FEATURES})")
    if not np.all(np.isfinite(X)):
        raise ValueError("features must be finite")
    ranges = {0: (0, 6), 1: (0, 23), 2: (0, weather_cardinality - 1), 5: (0, MAX_WIND_LEVEL), 6: (0, 1)}
    for k, (lo, hi) in ranges.items():
        col = X[:, k]
        if np.any((col < lo) | (col > hi) | (col != np.round(col))):
            raise ValueError(f"{FEATURE_NAMES[k]} outside {lo}..{hi}")
    if np.any(X[:, 3] < X[:, 4]):
        raise ValueError("temp_high must not be below temp_low")


@dataclass(frozen=True)
class LoadDataset:
    """Feature matrix (columns as :data:`FEATURE_NAMES`) with load-factor targets."""

    features: np.ndarray
    targets: np.ndarray
    normalization_max: float
    dates: tuple = ()

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.features, dtype=float))
        y = np.asarray(self.targets, dtype=float).ravel()
        if X.shape[0] != y.size:
            raise ValueError("features and targets differ in length")
        if y.size:
            check_features(X)
        if not self.normalization_max > 0:
            raise ValueError("normalization_max must be positive")
        if np.any(y < 0) or np.any(y > LOAD_FACTOR_CAP):
            raise ValueError(f"load factors must lie in [0, {LOAD_FACTOR_CAP}]")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "targets", y)
        object.__setattr__(self, "dates", tuple(self.dates))

    def __len__(self) -> int:
        return self.targets.size

    @classmethod
    def from_rows(cls, rows: Sequence[tuple[FeatureVector, float]], normalization_max: float = 1.0):
        X = np.array([fv.as_array() for fv, _ in rows], dtype=float).reshape(-1, N_FEATURES)
        return cls(X, np.array([y for _, y in rows], dtype=float), normalization_max)

    def subset(self, mask) -> "LoadDataset":
        mask = np.asarray(mask)
        dates = tuple(np.asarray(self.dates, dtype=object)[mask]) if self.dates else ()
        return LoadDataset(self.features[mask], self.targets[mask], self.normalization_max, dates)


def feature_vector(record_date: dt.date, hour: int, weather: WeatherDay | None) -> FeatureVector:
    w = NEUTRAL_WEATHER if weather is None else dict(
        weather_code=weather.weather_code, temp_high_c=weather.temp_high_c,
        temp_low_c=weather.temp_low_c, wind_level=weather.wind_level, is_holiday=weather.is_holiday)
    return FeatureVector(record_date.weekday(), hour, w["weather_code"], w["temp_high_c"],
                         w["temp_low_c"], w["wind_level"], bool(w["is_holiday"]))


def normalize(records: Sequence[LoadRecord], weather: Mapping[dt.date, WeatherDay] | None = None,
              normalization_max: float | None = None) -> LoadDataset:
    """Join records with daily weather and divide counts by the maximum count.

    Pass ``normalization_max`` to scale a held-out set by the training maximum.
    """
    if not records:
        raise ValueError("no passenger records to normalize")
    counts = np.array([r.passenger_count for r in records], dtype=float)
    peak = float(counts.max()) if normalization_max is None else float(normalization_max)
    if not peak > 0:
        raise ValueError("maximum passenger count must be positive")
    if weather is not None:
        missing = sorted({r.date for r in records} - set(weather))
        if missing:
            raise ValueError(f"no weather row for {missing[0].isoformat()}")
    X = np.array([feature_vector(r.date, r.hour, None if weather is None else weather[r.date]).as_array()
                  for r in records])
    return LoadDataset(X, counts / peak, peak, tuple(r.date for r in records))


def split_final_days(records: Sequence[LoadRecord], n_days: int = 7):
    """Hold out the last ``n_days`` calendar dates present in ``records``."""
    days = sorted({r.date for r in records})
    if len(days) <= n_days:
        raise ValueError(f"need more than {n_days} distinct dates to hold out {n_days}")
    cut = days[-n_days]
    return [r for r in records if r.date < cut], [r for r in records if r.date >= cut]


# ---------------------------------------------------------------------------
# CSV I/O

PASSENGER_HEADER = ("date", "hour", "passenger_count")
WEATHER_HEADER = ("date", "weather_code", "temp_high_c", "temp_low_c", "wind_level", "is_holiday")


def _read_rows(path, header: tuple) -> list[list[str]]:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        got = tuple(h.strip() for h in next(reader, ()))
        if got != header:
            raise ValueError(f"{path}: expected header {','.join(header)}")
        return [r for r in reader if r]


def read_passenger_csv(path) -> list[LoadRecord]:
    out = []
    for n, row in enumerate(_read_rows(path, PASSENGER_HEADER), start=2):
        try:
            out.append(LoadRecord(dt.date.fromisoformat(row[0]), int(row[1]), int(row[2])))
        except (ValueError, IndexError) as exc:
            raise ValueError(f"{path}:{n}: {exc}") from None
    return out


def write_passenger_csv(records: Iterable[LoadRecord], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PASSENGER_HEADER)
        for r in records:
            w.writerow((r.date.isoformat(), r.hour, r.passenger_count))


def read_weather_csv(path) -> dict[dt.date, WeatherDay]:
    out = {}
    for n, row in enumerate(_read_rows(path, WEATHER_HEADER), start=2):
        try:
            day = WeatherDay(dt.date.fromisoformat(row[0]), int(row[1]), float(row[2]), float(row[3]),
                             int(row[4]), bool(int(row[5])))
        except (ValueError, IndexError) as exc:
            raise ValueError(f"{path}:{n}: {exc}") from None
        if day.temp_high_c < day.temp_low_c:
            raise ValueError(f"{path}:{n}: temp_high_c below temp_low_c")
        out[day.date] = day
    return out


def write_weather_csv(days: Iterable[WeatherDay], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(WEATHER_HEADER)
        for d in days:
            w.writerow((d.date.isoformat(), d.weather_code, repr(float(d.temp_high_c)),
                        repr(float(d.temp_low_c)), d.wind_level, int(d.is_holiday)))
