"""Deterministic synthetic stand-ins for the drive cycle and ridership data."""

from __future__ import annotations

import datetime as dt

import numpy as np

from .predict.data import LoadRecord, WeatherDay
from .vehicle import DriveCycle

MAX_ACCEL = 1.5     # m/s^2
MAX_DECEL = 2.5     # m/s^2 (magnitude)


def synth_cycle(seed: int, duration: int = 1200, max_speed: float = 15.0,
                cycle_id: str | None = None) -> DriveCycle:
    """Stop-and-go urban bus cycle sampled at 1 Hz.

    Alternates dwell (10-40 s), acceleration, cruise and braking phases.
    Starts and ends at rest; speed never exceeds ``max_speed``.
    """
    if duration < 60:
        raise ValueError("duration must be at least 60 s")
    if max_speed <= 0:
        raise ValueError("max_speed must be positive")
    rng = np.random.default_rng(seed)
    v: list[float] = [0.0]
    while len(v) < duration + 1:
        v.extend([0.0] * int(rng.integers(10, 41)))
        target = max_speed * rng.uniform(0.45, 0.97)
        accel = rng.uniform(0.6, 1.2)
        cur = 0.0
        while cur < target:
            cur = min(target, cur + accel)
            accel = max(0.3, accel * 0.97)   # traction tapers with speed
            v.append(cur)
        for _ in range(int(rng.integers(5, 60))):
            cur = float(np.clip(cur + rng.uniform(-0.3, 0.3), 0.6 * target, min(target * 1.05, max_speed)))
            v.append(cur)
        decel = rng.uniform(0.8, 1.6)
        while cur > 0:
            cur = max(0.0, cur - decel)
            v.append(cur)
    speed = np.array(v[:duration])
    # taper into a stop at the end without exceeding the braking limit
    ramp = 2.0 * np.arange(duration)[::-1]
    speed = np.minimum(speed, ramp)
    speed = np.round(speed, 6)
    return DriveCycle.from_speed(speed, 1.0, cycle_id=cycle_id or f"synth-{seed}")


# ---------------------------------------------------------------------------
# ridership

WEATHER_CODES = 4          # 0 clear, 1 cloudy, 2 rain, 3 storm
_WEATHER_FACTOR = np.array([1.0, 0.98, 0.88, 0.72])
_WEATHER_TRANSITION = np.array([
    [0.60, 0.25, 0.12, 0.03],
    [0.35, 0.35, 0.25, 0.05],
    [0.25, 0.30, 0.35, 0.10],
    [0.20, 0.30, 0.35, 0.15],
])


def _fixed_holidays(year: int) -> set[dt.date]:
    days = {dt.date(year, 1, 1), dt.date(year, 5, 1)}
    days |= {dt.date(year, 10, d) for d in range(1, 8)}
    return days


def _hour_shape(weekday: bool) -> np.ndarray:
    h = np.arange(24, dtype=float)
    service = ((h >= 6) & (h <= 22)).astype(float)
    if weekday:
        shape = (0.30 + 0.70 * np.exp(-0.5 * ((h - 8.0) / 1.0) ** 2)
                 + 0.55 * np.exp(-0.5 * ((h - 18.0) / 1.2) ** 2)
                 + 0.08 * np.exp(-0.5 * ((h - 13.0) / 2.5) ** 2))
    else:
        shape = 0.22 + 0.30 * np.exp(-0.5 * ((h - 14.0) / 3.5) ** 2)
    return shape * service + 0.02 * (1 - service)


def synth_passengers(seed: int, start: dt.date, end: dt.date, peak_count: float = 900.0):
    """Hourly ridership plus daily weather covariates for ``start..end`` inclusive.

    Returns ``(records, weather)``: a list of :class:`LoadRecord` and a list
    of :class:`WeatherDay`, one per date.
    """
    n_days = (end - start).days + 1
    if n_days < 14:
        raise ValueError("date range must cover at least 14 days")
    rng = np.random.default_rng(seed)
    holidays = set().union(*(_fixed_holidays(y) for y in range(start.year, end.year + 1)))
    weekday_shape, weekend_shape = _hour_shape(True), _hour_shape(False)

    passengers, weather = [], []
    code = 0
    for d in range(n_days):
        day = start + dt.timedelta(days=d)
        code = int(rng.choice(WEATHER_CODES, p=_WEATHER_TRANSITION[code]))
        season = np.cos(2 * np.pi * (day.timetuple().tm_yday - 200) / 365.0)
        t_high = round(float(24.0 + 9.0 * season + rng.normal(0, 1.5) - 2.0 * (code >= 2)), 1)
        t_low = round(t_high - float(rng.uniform(5.0, 9.0)), 1)
        wind = int(np.clip(rng.poisson(1.5) + 1 + (code == 3) * 2, 1, 8))
        holiday = day in holidays
        weather.append(WeatherDay(day, code, t_high, t_low, wind, holiday))

        workday = day.weekday() < 5 and not holiday
        shape = weekday_shape if workday else weekend_shape
        factor = _WEATHER_FACTOR[code] * (1.0 - 0.012 * max(0.0, t_high - 32.0)) * (1.0 - 0.02 * max(0, wind - 4))
        if holiday:
            factor *= 0.8
        noise = rng.lognormal(0.0, 0.06, size=24)
        counts = np.maximum(0, np.round(peak_count * shape * factor * noise)).astype(int)
        passengers.extend(LoadRecord(day, h, int(c)) for h, c in enumerate(counts))
    return passengers, weather
