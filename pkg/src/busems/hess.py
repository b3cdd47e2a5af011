"""Battery / supercapacitor cell models and the semi-empirical capacity-fade law.

Sign convention for both devices: positive current discharges.
All current arguments are per cell (equivalently per series string).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

# q_loss at which the pack is considered end-of-life (SOH = 0)
EOL_Q_LOSS = 0.20


def _as_tuple(x) -> tuple:
    return tuple(float(v) for v in x)


@dataclass(frozen=True)
class BatteryParams:
    capacity_cell: float = 60.0            # Ah
    stored_energy_cell: float = 0.192      # kWh
    soc_window: tuple = (0.10, 0.90)
    curve_soc: tuple = (0.0, 1.0)
    curve_ocv: tuple = (3.0, 3.4)          # V
    curve_r: tuple = (1.5e-3, 1.5e-3)      # ohm
    series_count: int = 217
    parallel_count: int = 7
    current_bounds_cell: tuple = (-180.0, 180.0)  # A, +/-3 C

    def __post_init__(self):
        for name in ("curve_soc", "curve_ocv", "curve_r", "soc_window", "current_bounds_cell"):
            object.__setattr__(self, name, _as_tuple(getattr(self, name)))
        soc, ocv, r = map(np.asarray, (self.curve_soc, self.curve_ocv, self.curve_r))
        if not (soc.size == ocv.size == r.size) or soc.size < 2:
            raise ValueError("battery curve tables need >= 2 rows of equal length")
        if np.any(np.diff(soc) <= 0):
            raise ValueError("battery curve soc must be strictly increasing")
        if np.any(np.diff(ocv) <= 0):
            raise ValueError("battery OCV curve must be strictly increasing in SOC")
        if np.any(r <= 0):
            raise ValueError("battery resistance must be positive")
        lo, hi = self.soc_window
        if not 0.0 <= lo < hi <= 1.0:
            raise ValueError(f"battery soc_window must lie within [0, 1], got {self.soc_window}")
        if self.capacity_cell <= 0 or self.series_count < 1 or self.parallel_count < 1:
            raise ValueError("battery capacity and cell counts must be positive")
        if not self.current_bounds_cell[0] <= 0 <= self.current_bounds_cell[1]:
            raise ValueError("battery current bounds must bracket zero")

    @property
    def n_cells(self) -> int:
        return self.series_count * self.parallel_count

    @property
    def pack_capacity(self) -> float:
        return self.capacity_cell * self.parallel_count

    def resistance(self, soc: float) -> float:
        return float(np.interp(soc, self.curve_soc, self.curve_r))

    def with_curves(self, soc, ocv, r) -> "BatteryParams":
        return replace(self, curve_soc=_as_tuple(soc), curve_ocv=_as_tuple(ocv), curve_r=_as_tuple(r))


@dataclass(frozen=True)
class SupercapParams:
    max_voltage_cell: float = 27.0         # V
    capacitance_cell: float = 140.0        # F
    stored_energy_cell: float = 0.0142     # kWh
    soc_window: tuple = (0.50, 0.99)
    resistance_cell: float = 15e-3         # ohm
    series_count: int = 20
    parallel_count: int = 6
    current_bounds_cell: tuple = (-150.0, 150.0)

    def __post_init__(self):
        object.__setattr__(self, "soc_window", _as_tuple(self.soc_window))
        object.__setattr__(self, "current_bounds_cell", _as_tuple(self.current_bounds_cell))
        if min(self.max_voltage_cell, self.capacitance_cell, self.resistance_cell) <= 0:
            raise ValueError("supercapacitor voltage, capacitance and resistance must be positive")
        lo, hi = self.soc_window
        if not 0.0 <= lo < hi <= 1.0:
            raise ValueError(f"supercap soc_window must lie within [0, 1], got {self.soc_window}")
        if self.series_count < 1 or self.parallel_count < 1:
            raise ValueError("supercap cell counts must be positive")
        if not self.current_bounds_cell[0] <= 0 <= self.current_bounds_cell[1]:
            raise ValueError("supercap current bounds must bracket zero")

    @property
    def n_cells(self) -> int:
        return self.series_count * self.parallel_count

    @property
    def charge_capacity(self) -> float:
        """Coulombs moved per unit SOC for one cell."""
        return self.capacitance_cell * self.max_voltage_cell


@dataclass(frozen=True)
class AgingParams:
    prefactor: float = 0.0032
    activation_base: float = 15162.0       # J/mol
    crate_coeff: float = 1516.0            # J/mol per C
    gas_constant: float = 8.3145
    power_exponent_z: float = 0.824
    temperature: float = 298.15            # K

    def __post_init__(self):
        for name in ("prefactor", "activation_base", "crate_coeff", "gas_constant", "temperature"):
            if not getattr(self, name) > 0:
                raise ValueError(f"aging.{name} must be positive")
        if not 0.0 < self.power_exponent_z < 1.0:
            raise ValueError("aging.power_exponent_z must be in (0, 1)")


@dataclass(frozen=True)
class HessParams:
    battery: BatteryParams = field(default_factory=BatteryParams)
    supercap: SupercapParams = field(default_factory=SupercapParams)
    aging: AgingParams = field(default_factory=AgingParams)


@dataclass(frozen=True)
class HessState:
    soc_bat: float = 0.6
    soc_sc: float = 0.8
    q_loss: float = 0.0
    ah_throughput: float = 0.0

    def __post_init__(self):
        if self.q_loss < 0 or self.ah_throughput < 0:
            raise ValueError("q_loss and ah_throughput must be non-negative")

    @property
    def soh(self) -> float:
        return soh_from_q_loss(self.q_loss)


def _check_soc(soc: float) -> None:
    if not 0.0 <= soc <= 1.0:
        raise ValueError(f"soc must be in [0, 1], got {soc}")


def battery_ocv(params: BatteryParams, soc: float) -> float:
    """Cell open-circuit voltage, linear in the curve table and clamped at its ends."""
    _check_soc(soc)
    return float(np.interp(soc, params.curve_soc, params.curve_ocv))


def supercap_ocv(params: SupercapParams, soc: float) -> float:
    _check_soc(soc)
    return soc * params.max_voltage_cell


class InfeasiblePowerError(ValueError):
    """Requested terminal power exceeds what the source can deliver."""


def current_for_terminal_power(ocv: float, resistance: float, power: float) -> float:
    """Current drawing ``power`` at the terminals of an OCV + series-R source.

    Solves ``P = OCV*I - R*I**2`` for the root of smaller magnitude.
    """
    if resistance <= 0:
        raise ValueError("resistance must be positive")
    disc = ocv * ocv - 4.0 * resistance * power
    if disc < 0:
        raise InfeasiblePowerError(
            f"power {power:.6g} W exceeds the maximum {ocv * ocv / (4 * resistance):.6g} W")
    denom = ocv + math.sqrt(disc)
    if denom == 0.0:
        return 0.0
    # 2P / (OCV + sqrt(.)) is the small root without cancellation
    return 2.0 * power / denom


def terminal_power(ocv: float, resistance: float, current: float) -> float:
    return ocv * current - current * current * resistance


def step_battery(state: HessState, params: BatteryParams, current_cell: float, dt: float) -> HessState:
    if dt <= 0:
        raise ValueError("dt must be positive")
    soc = state.soc_bat - current_cell * dt / (3600.0 * params.capacity_cell)
    ah = state.ah_throughput + abs(current_cell) * dt / 3600.0
    return replace(state, soc_bat=soc, ah_throughput=ah)


def step_supercap(state: HessState, params: SupercapParams, current_cell: float, dt: float) -> HessState:
    if dt <= 0:
        raise ValueError("dt must be positive")
    soc = state.soc_sc - current_cell * dt / params.charge_capacity
    return replace(state, soc_sc=soc)


def electric_loss_energy(i_bat_string: float, r_bat_series: float, i_sc_string: float,
                         r_sc_series: float, dt: float) -> float:
    """Resistive energy (J) dissipated in one battery string and one supercap string."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if r_bat_series < 0 or r_sc_series < 0:
        raise ValueError("resistances must be non-negative")
    return (i_bat_string ** 2 * r_bat_series + i_sc_string ** 2 * r_sc_series) * dt


def _severity(params: AgingParams, c_rate: float) -> float:
    return params.prefactor * math.exp(
        -(params.activation_base - params.crate_coeff * c_rate) / (params.gas_constant * params.temperature))


def closed_form_q_loss(ah_throughput: float, c_rate: float, params: AgingParams) -> float:
    """Capacity loss after ``ah_throughput`` Ah cycled at a constant C-rate."""
    if ah_throughput < 0:
        raise ValueError("ah_throughput must be non-negative")
    if ah_throughput == 0:
        return 0.0
    return _severity(params, c_rate) * ah_throughput ** params.power_exponent_z


def delta_q_loss(q_loss: float, current_cell: float, params: AgingParams, capacity: float,
                 dt: float) -> float:
    """Capacity-loss increment over one step of constant cell current.

    The incremental law is singular at ``q_loss == 0``; a fresh cell is seeded
    with the closed-form loss of the step's own throughput instead.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if q_loss < 0:
        raise ValueError("q_loss must be non-negative")
    if current_cell == 0:
        return 0.0
    amps = abs(current_cell)
    ah = amps * dt / 3600.0
    sev = _severity(params, amps / capacity)
    z = params.power_exponent_z
    if q_loss == 0.0:
        return sev * ah ** z
    return sev ** (1.0 / z) * q_loss ** ((z - 1.0) / z) * z * ah


def soh_from_q_loss(q_loss: float) -> float:
    if q_loss < 0:
        raise ValueError("q_loss must be non-negative")
    return max(0.0, 1.0 - q_loss / EOL_Q_LOSS)


def q_loss_from_soh(soh: float) -> float:
    if not 0.0 <= soh <= 1.0:
        raise ValueError("soh must be in [0, 1]")
    return (1.0 - soh) * EOL_Q_LOSS


def read_curve_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Load an OCV/resistance table with header ``soc,ocv_v,r_ohm``."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        if header != ["soc", "ocv_v", "r_ohm"]:
            raise ValueError(f"{path}: expected header 'soc,ocv_v,r_ohm'")
        rows = [[float(c) for c in r] for r in reader if r]
    data = np.array(rows, dtype=float)
    if data.ndim != 2 or data.shape[0] < 2:
        raise ValueError(f"{path}: need at least two curve rows")
    soc, ocv, r = data.T
    if np.any(np.diff(soc) <= 0):
        raise ValueError(f"{path}: soc column must be strictly increasing")
    if soc[0] < 0 or soc[-1] > 1:
        raise ValueError(f"{path}: soc column must lie within [0, 1]")
    if np.any(r <= 0):
        raise ValueError(f"{path}: resistances must be positive")
    return soc, ocv, r
