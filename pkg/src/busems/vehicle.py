"""Longitudinal bus dynamics: drive cycle -> power demand at the HESS bus bar."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

# Powers handed to the EMS are snapped to this resolution (W) so that
# p_bat = p_demand - p_sc and p_bat + p_sc == p_demand hold exactly in float64.
POWER_QUANTUM = 1.0 / 1024.0


def quantize_power(p):
    """Round a power (scalar or array) to the EMS power resolution."""
    return np.round(np.asarray(p, dtype=float) / POWER_QUANTUM) * POWER_QUANTUM


@dataclass(frozen=True)
class VehicleParams:
    empty_mass: float = 13500.0
    person_mass: float = 70.0
    max_passengers: int = 145
    gravity: float = 9.8
    frontal_area: float = 7.5
    rolling_coeff: float = 0.018
    drag_coeff: float = 0.7
    air_density: float = 1.29
    eta_transmission: float = 0.90
    eta_machine: float = 0.85
    eta_regen: float = 0.65

    def __post_init__(self):
        for name in ("empty_mass", "person_mass", "max_passengers", "gravity",
                     "frontal_area", "rolling_coeff", "drag_coeff", "air_density"):
            if not getattr(self, name) > 0:
                raise ValueError(f"vehicle.{name} must be positive")
        for name in ("eta_transmission", "eta_machine", "eta_regen"):
            eta = getattr(self, name)
            if not 0.0 < eta <= 1.0:
                raise ValueError(f"vehicle.{name} must be in (0, 1], got {eta}")


@dataclass(frozen=True)
class DriveCycle:
    time: np.ndarray
    speed: np.ndarray
    grade: np.ndarray
    sample_period: float = 1.0
    cycle_id: str = "cycle"

    def __post_init__(self):
        t = np.asarray(self.time, dtype=float)
        v = np.asarray(self.speed, dtype=float)
        g = np.zeros_like(v) if self.grade is None else np.asarray(self.grade, dtype=float)
        if not (t.shape == v.shape == g.shape) or t.ndim != 1:
            raise ValueError("time, speed and grade must be 1-D arrays of equal length")
        if np.any(v < 0):
            raise ValueError("drive cycle speed must be non-negative")
        if self.sample_period <= 0:
            raise ValueError("sample_period must be positive")
        if t.size > 1 and not np.allclose(np.diff(t), self.sample_period, rtol=0, atol=1e-9):
            raise ValueError("drive cycle time must increase at the fixed sample period")
        object.__setattr__(self, "time", t)
        object.__setattr__(self, "speed", v)
        object.__setattr__(self, "grade", g)

    def __len__(self) -> int:
        return self.speed.size

    @classmethod
    def from_speed(cls, speed, sample_period: float = 1.0, grade=None, cycle_id: str = "cycle"):
        v = np.asarray(speed, dtype=float)
        t = np.arange(v.size) * sample_period
        return cls(t, v, grade, sample_period, cycle_id)

    def reversed(self) -> "DriveCycle":
        return DriveCycle(self.time, self.speed[::-1].copy(), self.grade[::-1].copy(),
                          self.sample_period, self.cycle_id + "-rev")


@dataclass(frozen=True)
class PowerProfile:
    demands: np.ndarray
    load_factor: float
    source_cycle_id: str = "cycle"
    sample_period: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "demands", np.asarray(self.demands, dtype=float))

    def __len__(self) -> int:
        return self.demands.size

    def scaled(self, factor: float) -> "PowerProfile":
        return PowerProfile(quantize_power(self.demands * factor), self.load_factor,
                            self.source_cycle_id, self.sample_period)


def effective_mass(params: VehicleParams, load_factor: float) -> float:
    """Empty mass plus the passenger mass at the given load factor."""
    if not 0.0 <= load_factor <= 1.0:
        raise ValueError(f"load_factor must be in [0, 1], got {load_factor}")
    return params.empty_mass + params.person_mass * params.max_passengers * load_factor


def _wheel_power(params: VehicleParams, mass, speed, accel, grade):
    rolling = mass * params.gravity * params.rolling_coeff * speed * np.cos(grade)
    aero = 0.5 * params.drag_coeff * params.frontal_area * params.air_density * speed ** 3
    inertial = mass * speed * accel
    climbing = mass * params.gravity * speed * np.sin(grade)
    return rolling + aero + inertial + climbing


def _to_bus(params: VehicleParams, wheel):
    # Branching on wheel power is equivalent to branching on P_demand:
    # both efficiency maps preserve sign.
    drive = params.eta_transmission * params.eta_machine
    return np.where(wheel > 0, wheel / drive, wheel * params.eta_regen)


def power_demand(params: VehicleParams, speed: float, accel: float, grade: float,
                 load_factor: float) -> float:
    """Electrical power (W) the storage must deliver for one operating point.

    Positive values are traction, negative values regenerated braking power.
    """
    if speed < 0:
        raise ValueError("speed must be non-negative")
    mass = effective_mass(params, load_factor)
    wheel = _wheel_power(params, mass, float(speed), float(accel), float(grade))
    return float(_to_bus(params, wheel))


def cycle_to_profile(cycle: DriveCycle, params: VehicleParams, load_factor: float) -> PowerProfile:
    if len(cycle) == 0:
        raise ValueError("drive cycle is empty")
    mass = effective_mass(params, load_factor)
    v = cycle.speed
    accel = np.zeros_like(v)
    accel[1:] = np.diff(v) / cycle.sample_period
    wheel = _wheel_power(params, mass, v, accel, cycle.grade)
    demands = quantize_power(_to_bus(params, wheel))
    return PowerProfile(demands, load_factor, cycle.cycle_id, cycle.sample_period)


CYCLE_HEADER = ("t_s", "v_mps", "grade_rad")


def read_cycle_csv(path, cycle_id: str | None = None) -> DriveCycle:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(h.strip() for h in next(reader))
        if header not in (CYCLE_HEADER, CYCLE_HEADER[:2]):
            raise ValueError(f"{path}: expected header 't_s,v_mps[,grade_rad]', got {','.join(header)}")
        rows = [r for r in reader if r and any(c.strip() for c in r)]
    if not rows:
        raise ValueError(f"{path}: no samples")
    data = np.array([[float(c) for c in r] for r in rows])
    t, v = data[:, 0], data[:, 1]
    grade = data[:, 2] if data.shape[1] > 2 else np.zeros_like(v)
    period = float(t[1] - t[0]) if t.size > 1 else 1.0
    return DriveCycle(t, v, grade, period, cycle_id or path.stem)


def write_cycle_csv(cycle: DriveCycle, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CYCLE_HEADER)
        for t, v, g in zip(cycle.time, cycle.speed, cycle.grade):
            w.writerow((repr(float(t)), repr(float(v)), repr(float(g))))


def wheel_force_terms(params: VehicleParams, speed: float, accel: float, grade: float,
                      load_factor: float) -> dict[str, float]:
    """Break the wheel power into its four physical contributions (W)."""
    mass = effective_mass(params, load_factor)
    return {
        "rolling": mass * params.gravity * params.rolling_coeff * speed * math.cos(grade),
        "aero": 0.5 * params.drag_coeff * params.frontal_area * params.air_density * speed ** 3,
        "inertial": mass * speed * accel,
        "grade": mass * params.gravity * speed * math.sin(grade),
    }
