"""Rule extraction, the buffer-zone rule controller, the receding-horizon
cloud planner and the strategy comparison harness."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dp import (CostBreakdown, CostParams, Grid, InfeasibleProblemError, RolloutInfeasibleError,
                 Trajectory, rollout, sc_power_range, solve_backward, stage_cost)
from .dp.core import StepOutcome, _record
from .dp.model import TrajectoryBuilder
from .hess import HessParams, HessState
from .predict import FeatureVector, Predictor, clamp_load_factor
from .vehicle import DriveCycle, PowerProfile, VehicleParams, cycle_to_profile, quantize_power

log = logging.getLogger(__name__)

STRATEGIES = ("dp_oracle", "pure_rule", "cloud")


class DegenerateFitError(ValueError):
    """Rule fit needs at least two distinct demand values."""


@dataclass(frozen=True)
class LinearRule:
    """``p_sc = slope * p_demand + intercept`` at pack level (W)."""

    slope: float
    intercept: float
    fit_r2: float = 1.0
    source_load_factor: float = float("nan")

    def __post_init__(self):
        if not (np.isfinite(self.slope) and np.isfinite(self.intercept)):
            raise ValueError("rule coefficients must be finite")

    def __call__(self, p_demand):
        return self.slope * np.asarray(p_demand, dtype=float) + self.intercept


@dataclass(frozen=True)
class EmsConfig:
    strategy: str = "cloud"
    horizon: int = 1200          # s
    replan_period: int = 60      # s
    apply_fraction: float = 0.05
    sc_buffer: float = 0.01

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {', '.join(STRATEGIES)}")
        if self.horizon <= 0 or self.replan_period <= 0:
            raise ValueError("horizon and replan_period must be positive")
        if self.horizon % self.replan_period:
            raise ValueError("replan_period must divide horizon")
        if abs(self.apply_fraction * self.horizon - self.replan_period) > 1e-9 * self.horizon:
            raise ValueError("apply_fraction * horizon must equal replan_period")
        if not 0.0 < self.sc_buffer < 0.5:
            raise ValueError("sc_buffer must be in (0, 0.5)")


@dataclass(frozen=True)
class ModelSetup:
    """Everything a strategy needs besides the scenario itself.

    ``plant_hess`` lets the simulated vehicle differ from the planner's model.
    """

    vehicle: VehicleParams = field(default_factory=VehicleParams)
    hess: HessParams = field(default_factory=HessParams)
    cost: CostParams = field(default_factory=CostParams)
    grid: Grid | None = None
    plant_hess: HessParams | None = None

    def __post_init__(self):
        if self.grid is None:
            object.__setattr__(self, "grid", Grid.build(self.hess))

    @property
    def plant(self) -> HessParams:
        return self.plant_hess or self.hess


@dataclass
class StrategyResult:
    strategy: str
    trajectory: Trajectory
    load_prediction_error: float | None = None
    fallback_blocks: list = field(default_factory=list)
    rules: list = field(default_factory=list)

    @property
    def totals(self) -> CostBreakdown:
        return self.trajectory.totals


# ---------------------------------------------------------------------------
# rules

def extract_rule(trajectory: Trajectory, load_factor: float = float("nan")) -> LinearRule:
    """Least-squares line of supercap power against demand, with R²."""
    x = np.asarray(trajectory.p_demand_w, dtype=float)
    y = np.asarray(trajectory.p_sc_w, dtype=float)
    return fit_rule(x, y, load_factor)


def fit_rule(p_demand, p_sc, load_factor: float = float("nan")) -> LinearRule:
    x = np.asarray(p_demand, dtype=float)
    y = np.asarray(p_sc, dtype=float)
    if x.size != y.size:
        raise ValueError("demand and supercap series differ in length")
    if np.unique(x).size < 2:
        raise DegenerateFitError("need at least two distinct demand values")
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    slope = np.sum((x - xm) * (y - ym)) / sxx
    intercept = ym - slope * xm
    ss_tot = np.sum((y - ym) ** 2)
    ss_res = np.sum((y - (slope * x + intercept)) ** 2)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return LinearRule(float(slope), float(intercept), float(r2), float(load_factor))


def _buffer(p_sc: float, soc_sc: float, hess: HessParams, config: EmsConfig) -> float:
    lo, hi = hess.supercap.soc_window
    if soc_sc < lo + config.sc_buffer:
        return min(p_sc, 0.0)       # too empty: no further discharge
    if soc_sc > hi:
        return max(p_sc, 0.0)       # too full: no further charge
    return p_sc


def hard_limits(state: HessState, hess: HessParams, config: EmsConfig, dt: float) -> tuple[float, float]:
    """Supercap power range that keeps the next SOC within the hard band."""
    lo, hi = hess.supercap.soc_window
    return sc_power_range(state, hess, dt, (lo, min(1.0, hi + config.sc_buffer)))


def rule_step(rule: LinearRule, p_demand: float, soc_sc: float, config: EmsConfig,
              limits: tuple[float, float], hess: HessParams | None = None) -> tuple[float, float]:
    """Rule output with buffer zones, clamped to ``limits``; returns ``(p_sc, p_bat)``.

    Zero demand gives zero supercap power rather than the rule's intercept.
    """
    hess = hess or HessParams()
    # parked bus: no shuffling between packs
    p = 0.0 if p_demand == 0 else _buffer(float(rule(p_demand)), soc_sc, hess, config)
    p = float(quantize_power(min(max(p, limits[0]), limits[1])))
    return p, p_demand - p


def correction_step(rule: LinearRule, p_demand: float, p_demand_ref: float, p_sc_ref: float,
                    soc_sc: float | None = None, config: EmsConfig | None = None,
                    limits: tuple[float, float] | None = None,
                    hess: HessParams | None = None) -> tuple[float, float]:
    """Shift the reference split by the rule's response to the demand error.

    Buffer zones act on the correction only, so a zero demand error returns
    the reference exactly; ``limits`` then clamp the sum.
    """
    delta = float(rule(p_demand) - rule(p_demand_ref))
    if soc_sc is not None:
        delta = _buffer(delta, soc_sc, hess or HessParams(), config or EmsConfig())
    p = p_sc_ref + delta
    if limits is not None:
        p = min(max(p, limits[0]), limits[1])
    p = float(quantize_power(p))
    return p, p_demand - p


def _apply(state: HessState, p_sc: float, p_demand: float, setup: ModelSetup,
           limits: tuple[float, float], step: int) -> StepOutcome:
    out = stage_cost(state, p_sc, p_demand, setup.cost, setup.plant)
    if out.feasible:
        return out
    # battery cannot take the remainder: nearest admissible split within limits
    cand = quantize_power(np.linspace(limits[0], limits[1], 401))
    for p in cand[np.argsort(np.abs(cand - p_sc), kind="stable")]:
        out = stage_cost(state, float(p), p_demand, setup.cost, setup.plant)
        if out.feasible:
            return out
    raise RolloutInfeasibleError(step, f"no admissible split for demand {p_demand:.6g} W")


# ---------------------------------------------------------------------------
# strategies

def _profile(cycle: DriveCycle, setup: ModelSetup, load: float) -> PowerProfile:
    return cycle_to_profile(cycle, setup.vehicle, load)


def run_dp_oracle(cycle: DriveCycle, true_load: float, init: HessState, setup: ModelSetup) -> StrategyResult:
    """One full-horizon solve on the true-load profile, then a rollout."""
    prof = _profile(cycle, setup, true_load)
    sol = solve_backward(prof, setup.grid, init, setup.cost, setup.hess)
    if setup.plant_hess is None:
        traj = rollout(sol, prof, init)
    else:
        traj = _rollout_on_plant(sol, prof, init, setup)
    return StrategyResult("dp_oracle", traj)


def _rollout_on_plant(sol, prof: PowerProfile, init: HessState, setup: ModelSetup) -> Trajectory:
    # planner model picks the control; the plant model decides what it costs
    return rollout(replace(sol, hess=setup.plant), prof, init)


def run_transferred_policy(cycle: DriveCycle, plan_load: float, plan_state: HessState, true_load: float,
                          init: HessState, setup: ModelSetup) -> StrategyResult:
    """Replay a DP policy generated under one load/aging condition on another.

    The policy table is solved for ``plan_load`` with capacity loss frozen at
    ``plan_state.q_loss`` and then followed, interpolated at the measured
    state, on a plant carrying ``true_load`` from ``init``.  Passing matching
    conditions gives the reference cost.
    """
    plan_prof = _profile(cycle, setup, plan_load)
    sol = solve_backward(plan_prof, setup.grid, replace(init, q_loss=plan_state.q_loss),
                         setup.cost, setup.hess)
    sol = replace(sol, hess=setup.plant)
    return StrategyResult("dp_transfer", rollout(sol, _profile(cycle, setup, true_load), init, mode="policy"))


def run_pure_rule(cycle: DriveCycle, true_load: float, fixed_rule: LinearRule, init: HessState,
                  setup: ModelSetup, config: EmsConfig = EmsConfig(strategy="pure_rule")) -> StrategyResult:
    prof = _profile(cycle, setup, true_load)
    dt = setup.cost.sample_period
    builder = TrajectoryBuilder()
    state = init
    for k, d in enumerate(prof.demands):
        lim = hard_limits(state, setup.plant, config, dt)
        p, _ = rule_step(fixed_rule, d, state.soc_sc, config, lim, setup.plant)
        out = _apply(state, p, d, setup, lim, k)
        _record(builder, k * dt, d, out)
        state = out.next_state
    return StrategyResult("pure_rule", builder.build(state), rules=[fixed_rule])


class ConstantPredictor(Predictor):
    """Returns one fixed load factor; with the true load it is an oracle predictor."""

    kind = "constant"

    def __init__(self, value: float):
        self.value = float(value)

    def _forward(self, X):
        return np.full(X.shape[0], self.value)


def run_cloud(cycle: DriveCycle, true_load: float, predictor: Predictor, features: FeatureVector,
              init: HessState, setup: ModelSetup, config: EmsConfig = EmsConfig()) -> StrategyResult:
    """Receding-horizon DP on predicted demand with on-board correction.

    Every ``replan_period`` seconds the planner solves the next ``horizon``
    seconds (cut at the end of the run) from the measured state, using the
    predicted load factor.  The vehicle follows the first block of that plan,
    corrected per step for the gap between actual and predicted demand.
    """
    # the vehicle model accepts load factors up to 1 only
    predicted = float(min(clamp_load_factor(predictor.predict(features)), 1.0))
    true_prof = _profile(cycle, setup, true_load)
    pred_prof = _profile(cycle, setup, predicted)
    n = len(true_prof)
    dt = setup.cost.sample_period
    err = abs(predicted - true_load) / true_load if true_load > 0 else abs(predicted - true_load)
    result = StrategyResult("cloud", None, load_prediction_error=err)
    builder = TrajectoryBuilder()
    state = init
    rule = None
    for start in range(0, n, config.replan_period):
        stop = min(n, start + config.replan_period)
        end = min(n, start + config.horizon)
        window = PowerProfile(pred_prof.demands[start:end], predicted, pred_prof.source_cycle_id,
                              pred_prof.sample_period)
        refs = None
        try:
            sol = solve_backward(window, setup.grid, state, setup.cost, setup.hess)
            plan = rollout(sol, window, state)
            refs = plan.p_sc_w
            try:
                rule = extract_rule(plan, predicted)
                result.rules.append(rule)
            except DegenerateFitError:
                pass
        except (InfeasibleProblemError, RolloutInfeasibleError) as exc:
            log.warning("planner failed at t=%d s (%s); falling back to the last rule", start, exc)
            result.fallback_blocks.append(start)
        for k in range(start, stop):
            d = float(true_prof.demands[k])
            lim = hard_limits(state, setup.plant, config, dt)
            if refs is not None:
                p, _ = correction_step(rule or LinearRule(0.0, 0.0), d, float(pred_prof.demands[k]),
                                       float(refs[k - start]), state.soc_sc, config, lim, setup.plant)
            elif rule is not None:
                p, _ = rule_step(rule, d, state.soc_sc, config, lim, setup.plant)
            else:
                p = float(quantize_power(min(max(0.0, lim[0]), lim[1])))
            out = _apply(state, p, d, setup, lim, k)
            _record(builder, k * dt, d, out)
            state = out.next_state
    result.trajectory = builder.build(state)
    return result


# ---------------------------------------------------------------------------
# comparison

REPORT_HEADER = ("strategy", "total_usd", "aging_usd", "electric_usd", "penalty_usd", "pct_vs_oracle")


@dataclass
class ComparisonReport:
    results: dict

    def rows(self) -> list[tuple]:
        ref = self.results["dp_oracle"].totals
        out = []
        for name in STRATEGIES:
            if name not in self.results:
                continue
            t = self.results[name].totals
            out.append((name, t.total, t.aging_cost, t.electric_cost, t.penalty_cost, t.pct_over(ref)))
        return out

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(REPORT_HEADER)
            for name, *vals in self.rows():
                w.writerow([name] + [f"{v:.9g}" for v in vals])

    def write(self, directory) -> None:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        self.to_csv(out / "comparison.csv")
        for name, res in self.results.items():
            res.trajectory.to_csv(out / f"trajectory_{name}.csv")


def compare_strategies(cycle: DriveCycle, true_load: float, predictor: Predictor,
                       features: FeatureVector, fixed_rule: LinearRule, init: HessState,
                       setup: ModelSetup, config: EmsConfig = EmsConfig()) -> ComparisonReport:
    results = {
        "dp_oracle": run_dp_oracle(cycle, true_load, init, setup),
        "pure_rule": run_pure_rule(cycle, true_load, fixed_rule, init, setup, config),
        "cloud": run_cloud(cycle, true_load, predictor, features, init, setup, config),
    }
    return ComparisonReport(results)
