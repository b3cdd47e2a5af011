"""Data containers for the DP energy-management problem."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..hess import HessParams, HessState
from ..vehicle import quantize_power


class InfeasibleProblemError(RuntimeError):
    """No admissible control sequence exists from the requested initial state."""


class RolloutInfeasibleError(RuntimeError):
    def __init__(self, step: int, message: str):
        super().__init__(f"step {step}: {message}")
        self.step = step


@dataclass(frozen=True)
class CostParams:
    price_capacity_loss: float = 694.4     # USD per pack Ah of capacity lost
    price_electricity: float = 0.1685      # USD/kWh
    slack_weight_bat: float = 1e4          # USD per unit SOC violation per step
    slack_weight_sc: float = 1e4
    sample_period: float = 1.0             # s

    def __post_init__(self):
        if self.price_capacity_loss < 0 or self.price_electricity < 0:
            raise ValueError("prices must be non-negative")
        if self.slack_weight_bat <= 0 or self.slack_weight_sc <= 0:
            raise ValueError("slack weights must be positive")
        if self.sample_period <= 0:
            raise ValueError("sample_period must be positive")


def sc_power_limit(hess: HessParams) -> float:
    """Pack power the supercapacitor delivers at full voltage and maximum current."""
    sc = hess.supercap
    i = sc.current_bounds_cell[1]
    return sc.n_cells * (sc.max_voltage_cell * i - sc.resistance_cell * i * i)


@dataclass(frozen=True)
class Grid:
    soc_bat_axis: np.ndarray
    soc_sc_axis: np.ndarray
    control_axis: np.ndarray   # pack-level supercap power, W

    def __post_init__(self):
        for name in ("soc_bat_axis", "soc_sc_axis", "control_axis"):
            a = np.asarray(getattr(self, name), dtype=float)
            if a.ndim != 1 or a.size < 2 or np.any(np.diff(a) <= 0):
                raise ValueError(f"grid {name} needs >= 2 strictly ascending points")
            object.__setattr__(self, name, a)
        object.__setattr__(self, "control_axis", quantize_power(self.control_axis))
        # smallest |p_sc| first; ties between +/-p resolved toward charging
        order = np.lexsort((self.control_axis, np.abs(self.control_axis)))
        object.__setattr__(self, "_order", order.astype(np.int64))

    @property
    def order(self) -> np.ndarray:
        return self._order

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.soc_bat_axis.size, self.soc_sc_axis.size, self.control_axis.size

    @classmethod
    def build(cls, hess: HessParams, bat_range=(0.08, 0.92), bat_step=0.005,
              sc_range=(0.45, 1.00), sc_step=0.01, n_controls=101,
              control_limit: float | None = None) -> "Grid":
        def axis(lo, hi, step):
            n = int(round((hi - lo) / step)) + 1
            return np.round(np.linspace(lo, hi, n), 12)

        if n_controls < 2:
            raise ValueError("need at least two control levels")
        p = sc_power_limit(hess) if control_limit is None else control_limit
        return cls(axis(*bat_range, bat_step), axis(*sc_range, sc_step),
                   np.linspace(-p, p, n_controls))


@dataclass(frozen=True)
class CostBreakdown:
    aging_cost: float
    electric_cost: float
    penalty_cost: float

    @property
    def total(self) -> float:
        return self.aging_cost + self.electric_cost + self.penalty_cost

    def pct_over(self, reference: "CostBreakdown") -> float:
        if reference.total == 0.0:
            return 0.0 if self.total == 0.0 else float("inf")
        return 100.0 * (self.total - reference.total) / reference.total


TRAJECTORY_COLUMNS = ("t_s", "p_demand_w", "p_bat_w", "p_sc_w", "i_bat_a", "i_sc_a",
                      "soc_bat", "soc_sc", "dq_loss", "de_loss_j", "step_cost_usd")


@dataclass
class Trajectory:
    """Per-step record of a simulated run; SOCs are post-step values."""

    t_s: np.ndarray
    p_demand_w: np.ndarray
    p_bat_w: np.ndarray
    p_sc_w: np.ndarray
    i_bat_a: np.ndarray
    i_sc_a: np.ndarray
    soc_bat: np.ndarray
    soc_sc: np.ndarray
    dq_loss: np.ndarray
    de_loss_j: np.ndarray
    step_cost_usd: np.ndarray
    aging_usd: np.ndarray
    electric_usd: np.ndarray
    penalty_usd: np.ndarray
    final_state: HessState | None = None
    notes: list = field(default_factory=list)

    def __len__(self) -> int:
        return self.t_s.size

    @property
    def totals(self) -> CostBreakdown:
        return CostBreakdown(float(np.sum(self.aging_usd)), float(np.sum(self.electric_usd)),
                             float(np.sum(self.penalty_usd)))

    @property
    def total_cost(self) -> float:
        return float(np.sum(self.step_cost_usd))

    def slice(self, start: int, stop: int) -> "Trajectory":
        kw = {name: getattr(self, name)[start:stop] for name in _ARRAY_FIELDS}
        return Trajectory(**kw)

    @classmethod
    def concatenate(cls, parts: list["Trajectory"]) -> "Trajectory":
        kw = {name: np.concatenate([getattr(p, name) for p in parts]) for name in _ARRAY_FIELDS}
        out = cls(**kw)
        out.final_state = parts[-1].final_state if parts else None
        for p in parts:
            out.notes.extend(p.notes)
        return out

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRAJECTORY_COLUMNS)
            cols = [getattr(self, c) for c in TRAJECTORY_COLUMNS]
            for row in zip(*cols):
                w.writerow([f"{float(x):.9g}" for x in row])


_ARRAY_FIELDS = TRAJECTORY_COLUMNS + ("aging_usd", "electric_usd", "penalty_usd")


class TrajectoryBuilder:
    def __init__(self):
        self._rows = {name: [] for name in _ARRAY_FIELDS}

    def append(self, **values) -> None:
        for name in _ARRAY_FIELDS:
            self._rows[name].append(values[name])

    def build(self, final_state: HessState | None = None) -> Trajectory:
        traj = Trajectory(**{k: np.asarray(v, dtype=float) for k, v in self._rows.items()})
        traj.final_state = final_state
        return traj


def read_trajectory_csv(path) -> dict[str, np.ndarray]:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != TRAJECTORY_COLUMNS:
            raise ValueError(f"{path}: unexpected trajectory header")
        data = np.array([[float(c) for c in r] for r in reader if r])
    return {name: data[:, i] for i, name in enumerate(TRAJECTORY_COLUMNS)}


@dataclass(frozen=True)
class DPSolution:
    value: np.ndarray          # (horizon, n_bat, n_sc) cost-to-go in USD
    policy: np.ndarray         # (horizon, n_bat, n_sc) control index, -1 where infeasible
    grid: Grid
    demands: np.ndarray
    frozen_q_loss: float
    profile_id: str
    hess: HessParams
    cost: CostParams

    @property
    def horizon(self) -> int:
        return self.value.shape[0]

    def dump_csv(self, directory) -> None:
        """Debug export: one CSV per stage with value and policy on the grid."""
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        ctrl = self.grid.control_axis
        for k in range(self.horizon):
            with (out / f"stage_{k:05d}.csv").open("w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(("soc_bat", "soc_sc", "value_usd", "p_sc_w"))
                for i, sb in enumerate(self.grid.soc_bat_axis):
                    for j, ss in enumerate(self.grid.soc_sc_axis):
                        u = self.policy[k, i, j]
                        w.writerow((f"{sb:.9g}", f"{ss:.9g}", f"{self.value[k, i, j]:.9g}",
                                    f"{ctrl[u]:.9g}" if u >= 0 else "nan"))
