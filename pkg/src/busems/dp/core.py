"""Backward DP over (SOC_bat, SOC_sc), policy rollout and a brute-force oracle."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from ..hess import HessParams, HessState
from ..vehicle import PowerProfile, quantize_power, POWER_QUANTUM
from . import kernels
from .kernels import battery_side, supercap_side, locate, bilinear
from .model import (CostParams, DPSolution, Grid, InfeasibleProblemError, RolloutInfeasibleError,
                    Trajectory, TrajectoryBuilder)

log = logging.getLogger(__name__)

ORACLE_LIMIT = 10 ** 7


@dataclass(frozen=True)
class StepOutcome:
    """Everything one control application does to the plant."""

    cost: float
    next_state: HessState
    p_bat: float
    p_sc: float
    i_bat: float
    i_sc: float
    dq_loss: float
    de_loss_j: float
    aging_usd: float
    electric_usd: float
    penalty_usd: float
    feasible: bool


def _evaluate(state: HessState, p_sc, p_demand: float, hess: HessParams, cost: CostParams):
    p_sc = np.asarray(p_sc, dtype=float)
    bat = battery_side(state.soc_bat, p_demand - p_sc, state.q_loss, hess, cost)
    sc = supercap_side(state.soc_sc, p_sc, hess, cost)
    return bat, sc, bat.cost + sc.cost


def stage_cost(state: HessState, p_sc: float, p_demand: float, cost: CostParams,
               hess: HessParams) -> StepOutcome:
    """Apply one split decision for one sample period.

    The cost is ``inf`` (and ``feasible`` False) when either device cannot
    deliver its share within its current bounds.
    """
    bat, sc, total = _evaluate(state, p_sc, p_demand, hess, cost)
    feasible = bool(bat.feasible & sc.feasible)
    i_bat = float(bat.current)
    dt = cost.sample_period
    nxt = HessState(
        soc_bat=float(bat.soc_next),
        soc_sc=float(sc.soc_next),
        q_loss=state.q_loss + float(bat.dq_loss),
        ah_throughput=state.ah_throughput + abs(i_bat) * dt / 3600.0,
    )
    return StepOutcome(
        cost=float(total) if feasible else np.inf,
        next_state=nxt,
        p_bat=p_demand - float(p_sc),
        p_sc=float(p_sc),
        i_bat=i_bat,
        i_sc=float(sc.current),
        dq_loss=float(bat.dq_loss),
        de_loss_j=float(bat.loss_j + sc.loss_j),
        aging_usd=float(bat.aging_usd),
        electric_usd=float(bat.electric_usd + sc.electric_usd),
        penalty_usd=float(bat.penalty_usd + sc.penalty_usd),
        feasible=feasible,
    )


def solve_backward(profile: PowerProfile, grid: Grid, init: HessState, cost: CostParams,
                   hess: HessParams, check_init: bool = True) -> DPSolution:
    """Cost-to-go tables for every stage of ``profile``.

    Capacity loss is frozen at ``init.q_loss`` for the whole sweep.  Terminal
    cost is zero.
    """
    demands = np.asarray(profile.demands, dtype=float)
    if demands.size == 0:
        raise ValueError("power profile is empty")
    if not np.isfinite(init.q_loss):
        raise ValueError("initial q_loss must be finite")
    nb, ns, nu = grid.shape
    horizon = demands.size
    order = grid.order
    # work in tie-break column order throughout; map back when storing the policy
    ctrl = grid.control_axis[order]
    q = init.q_loss

    sc = supercap_side(grid.soc_sc_axis[:, None], ctrl[None, :], hess, cost)
    sc_idx, sc_w = locate(grid.soc_sc_axis, sc.soc_next)
    sc_cost = np.ascontiguousarray(sc.cost)

    value = np.empty((horizon, nb, ns))
    policy = np.empty((horizon, nb, ns), dtype=np.int16)
    order16 = np.append(order, -1).astype(np.int16)   # column -1 -> policy -1
    v_next = np.zeros((nb, ns))
    bat_soc = grid.soc_bat_axis[:, None]
    for k in range(horizon - 1, -1, -1):
        bat = battery_side(bat_soc, demands[k] - ctrl[None, :], q, hess, cost)
        bat_idx, bat_w = locate(grid.soc_bat_axis, bat.soc_next)
        v, col = kernels.min_over_controls(np.ascontiguousarray(bat.cost), bat_idx, bat_w,
                                           sc_cost, sc_idx, sc_w, v_next)
        value[k] = v
        policy[k] = order16[col]
        v_next = value[k]

    sol = DPSolution(value, policy, grid, demands.copy(), q, profile.source_cycle_id, hess, cost)
    if check_init and not np.isfinite(initial_value(sol, init)):
        raise InfeasibleProblemError("no feasible control sequence from the initial state")
    return sol


def initial_value(sol: DPSolution, state: HessState, stage: int = 0) -> float:
    ib, wb = locate(sol.grid.soc_bat_axis, state.soc_bat)
    js, ws = locate(sol.grid.soc_sc_axis, state.soc_sc)
    return float(bilinear(sol.value[stage], ib, wb, js, ws))


def _record(builder: TrajectoryBuilder, t: float, p_demand: float, out: StepOutcome) -> None:
    builder.append(t_s=t, p_demand_w=p_demand, p_bat_w=out.p_bat, p_sc_w=out.p_sc,
                   i_bat_a=out.i_bat, i_sc_a=out.i_sc, soc_bat=out.next_state.soc_bat,
                   soc_sc=out.next_state.soc_sc, dq_loss=out.dq_loss, de_loss_j=out.de_loss_j,
                   step_cost_usd=out.cost, aging_usd=out.aging_usd,
                   electric_usd=out.electric_usd, penalty_usd=out.penalty_usd)


def greedy_control(sol: DPSolution, k: int, state: HessState, p_demand: float) -> int:
    """Control index minimising actual stage cost plus interpolated cost-to-go."""
    grid = sol.grid
    ctrl = grid.control_axis
    bat, sc, step = _evaluate(state, ctrl, p_demand, sol.hess, sol.cost)
    if k + 1 < sol.horizon:
        ib, wb = locate(grid.soc_bat_axis, bat.soc_next)
        js, ws = locate(grid.soc_sc_axis, sc.soc_next)
        with np.errstate(invalid="ignore"):
            total = step + bilinear(sol.value[k + 1], ib, wb, js, ws)
    else:
        total = step
    total = np.where(np.isfinite(step), total, np.inf)
    ordered = total[grid.order]
    o = int(np.argmin(ordered))
    if not np.isfinite(ordered[o]):
        return -1
    return int(grid.order[o])


def _policy_target(sol: DPSolution, k: int, state: HessState) -> float | None:
    grid = sol.grid
    ib, wb = locate(grid.soc_bat_axis, state.soc_bat)
    js, ws = locate(grid.soc_sc_axis, state.soc_sc)
    ib, js = int(ib), int(js)
    corners = ((ib, js, (1 - wb) * (1 - ws)), (ib + 1, js, wb * (1 - ws)),
               (ib, js + 1, (1 - wb) * ws), (ib + 1, js + 1, wb * ws))
    num = den = 0.0
    for i, j, w in corners:
        u = sol.policy[k, i, j]
        if w > 0 and u >= 0:
            num += w * grid.control_axis[u]
            den += w
    return None if den == 0 else num / den


def sc_power_range(state: HessState, hess: HessParams, dt: float,
                   soc_bounds: tuple[float, float] | None = None) -> tuple[float, float]:
    """Admissible pack supercap power for one step.

    Respects the cell current bounds and keeps the post-step SOC inside
    ``soc_bounds`` (default: the physical range [window low, 1.0]).
    """
    sc = hess.supercap
    lo_soc, hi_soc = soc_bounds if soc_bounds is not None else (sc.soc_window[0], 1.0)
    qc = sc.charge_capacity
    i_hi = min(sc.current_bounds_cell[1], (state.soc_sc - lo_soc) * qc / dt)
    i_lo = max(sc.current_bounds_cell[0], (state.soc_sc - hi_soc) * qc / dt)
    if i_lo > i_hi:
        # SOC too far outside the band to recover in one step: push back as hard as allowed
        if state.soc_sc < lo_soc:
            i_hi = i_lo
        else:
            i_lo = i_hi
    ocv = min(max(state.soc_sc, 0.0), 1.0) * sc.max_voltage_cell
    r = sc.resistance_cell

    def power(i):
        return sc.n_cells * (ocv * i - r * i * i)

    p_lo = np.ceil(power(i_lo) / POWER_QUANTUM) * POWER_QUANTUM
    p_hi = np.floor(power(i_hi) / POWER_QUANTUM) * POWER_QUANTUM
    if p_lo > p_hi:
        p_lo = p_hi = float(quantize_power(0.5 * (p_lo + p_hi)))
    return float(p_lo), float(p_hi)


def rollout(sol: DPSolution, profile: PowerProfile, init: HessState, mode: str = "value",
            t0: float = 0.0) -> Trajectory:
    """Forward-simulate the plant under the stored solution.

    ``mode="value"`` re-optimises each step against the cost-to-go from the
    actual (off-grid) state.  ``mode="policy"`` replays the stored policy
    table, interpolated at the actual state, as a fixed strategy; it is used
    to test a strategy generated under different conditions.  Capacity loss
    evolves during the rollout.
    """
    demands = np.asarray(profile.demands, dtype=float)
    if demands.size > sol.horizon:
        raise ValueError("profile is longer than the solved horizon")
    dt = sol.cost.sample_period
    ctrl = sol.grid.control_axis
    builder = TrajectoryBuilder()
    state = init
    for k, d in enumerate(demands):
        if mode == "value":
            u = greedy_control(sol, k, state, d)
            if u < 0:
                raise RolloutInfeasibleError(k, "no admissible control at the actual state")
            out = stage_cost(state, ctrl[u], d, sol.cost, sol.hess)
        elif mode == "policy":
            out = _apply_policy(sol, k, state, d)
            if out is None:
                raise RolloutInfeasibleError(k, "stored policy has no admissible control here")
        else:
            raise ValueError(f"unknown rollout mode {mode!r}")
        _record(builder, t0 + k * dt, d, out)
        state = out.next_state
    return builder.build(state)


def _apply_policy(sol: DPSolution, k: int, state: HessState, d: float) -> StepOutcome | None:
    target = _policy_target(sol, k, state)
    dt = sol.cost.sample_period
    lo, hi = sc_power_range(state, sol.hess, dt)
    if target is not None:
        p = float(quantize_power(min(max(target, lo), hi)))
        out = stage_cost(state, p, d, sol.cost, sol.hess)
        if out.feasible:
            return out
    else:
        target = 0.0
    # fall back to the admissible grid control nearest the target
    ctrl = sol.grid.control_axis
    for u in np.argsort(np.abs(ctrl - target), kind="stable"):
        out = stage_cost(state, ctrl[u], d, sol.cost, sol.hess)
        if out.feasible:
            return out
    return None


def simulate_controls(profile: PowerProfile, controls, init: HessState, cost: CostParams,
                      hess: HessParams, t0: float = 0.0) -> Trajectory:
    """Apply an explicit sequence of supercap powers to the plant."""
    builder = TrajectoryBuilder()
    state = init
    dt = cost.sample_period
    for k, (d, p) in enumerate(zip(profile.demands, controls)):
        out = stage_cost(state, float(p), float(d), cost, hess)
        if not out.feasible:
            raise RolloutInfeasibleError(k, f"p_sc={p:.6g} W infeasible")
        _record(builder, t0 + k * dt, float(d), out)
        state = out.next_state
    return builder.build(state)


def exhaustive_oracle(profile: PowerProfile, grid: Grid, init: HessState, cost: CostParams,
                      hess: HessParams) -> tuple[float, list[float]]:
    """Minimum total cost over every control sequence drawn from the grid's
    control axis, simulating the exact (off-grid) plant state.

    Only meant for tiny instances.  Returns the cost and the minimising
    sequence of supercap powers.
    """
    demands = np.asarray(profile.demands, dtype=float)
    ctrl = grid.control_axis
    nu, horizon = ctrl.size, demands.size
    if nu ** horizon > ORACLE_LIMIT:
        raise ValueError(f"instance too large for enumeration: {nu}^{horizon} sequences")

    best = [np.inf, None]
    infeasible_at = []

    def descend(k: int, state: HessState, acc: float, seq: list[int]) -> None:
        if k == horizon:
            if acc < best[0]:
                best[0], best[1] = acc, list(seq)
            return
        bat, sc, step = _evaluate(state, ctrl, demands[k], hess, cost)
        any_ok = False
        for u in grid.order:
            c = step[u]
            if not np.isfinite(c):
                continue
            any_ok = True
            nxt = HessState(soc_bat=float(bat.soc_next[u]), soc_sc=float(sc.soc_next[u]),
                            q_loss=state.q_loss + float(bat.dq_loss[u]),
                            ah_throughput=state.ah_throughput
                            + abs(float(bat.current[u])) * cost.sample_period / 3600.0)
            seq.append(int(u))
            descend(k + 1, nxt, acc + float(c), seq)
            seq.pop()
        if not any_ok:
            infeasible_at.append(k)

    descend(0, init, 0.0, [])
    if best[1] is None:
        first = min(infeasible_at) if infeasible_at else 0
        raise InfeasibleProblemError(
            f"every control sequence is infeasible (earliest dead end at step {first})")
    return float(best[0]), [float(ctrl[u]) for u in best[1]]


def _scalar_interp(axis: np.ndarray, x: float) -> tuple[int, float]:
    n = axis.size
    i = 0
    while i < n - 2 and axis[i + 1] <= x:
        i += 1
    w = (x - axis[i]) / (axis[i + 1] - axis[i])
    return i, min(1.0, max(0.0, w))


def interpolated_oracle(profile: PowerProfile, grid: Grid, init: HessState, cost: CostParams,
                        hess: HessParams) -> float:
    """Cost-to-go at ``init`` under the grid's bilinear interpolation rule.

    A scalar, loop-by-loop recomputation of the recursion :func:`solve_backward`
    vectorises: every grid node tries every control, successor values come
    from the four bracketing nodes (zero-weight corners ignored) and capacity
    loss stays frozen at ``init.q_loss``.  It shares only :func:`stage_cost`
    with the solver, so it checks the sweep, the kernel and the tie-break.
    """
    demands = [float(d) for d in profile.demands]
    horizon = len(demands)
    if grid.control_axis.size ** min(horizon, 3) * grid.shape[0] * grid.shape[1] * horizon > ORACLE_LIMIT:
        raise ValueError("instance too large for the interpolated oracle")
    ctrl = [float(c) for c in grid.control_axis]
    memo: dict[tuple[int, int, int], float] = {}

    def interp(k: int, soc_b: float, soc_s: float) -> float:
        if k == horizon:
            return 0.0
        i, wb = _scalar_interp(grid.soc_bat_axis, soc_b)
        j, ws = _scalar_interp(grid.soc_sc_axis, soc_s)
        acc = 0.0
        for di, dj, w in ((0, 0, (1 - wb) * (1 - ws)), (1, 0, wb * (1 - ws)),
                          (0, 1, (1 - wb) * ws), (1, 1, wb * ws)):
            if w > 0.0:
                acc += w * node(k, i + di, j + dj)
        return acc

    def node(k: int, i: int, j: int) -> float:
        key = (k, i, j)
        if key not in memo:
            state = HessState(float(grid.soc_bat_axis[i]), float(grid.soc_sc_axis[j]), init.q_loss)
            best = math.inf
            for u in ctrl:
                out = stage_cost(state, u, demands[k], cost, hess)
                if not out.feasible:
                    continue
                best = min(best, out.cost + interp(k + 1, out.next_state.soc_bat,
                                                   out.next_state.soc_sc))
            memo[key] = best
        return memo[key]

    return interp(0, init.soc_bat, init.soc_sc)
