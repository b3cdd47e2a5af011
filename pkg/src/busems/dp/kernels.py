"""Numeric kernels for the DP sweep.

The per-(state, control) physics lives in :func:`battery_side` and
:func:`supercap_side`; both are plain vectorised numpy and are shared by the
backward sweep, the rollout and the brute-force oracle so that all three see
bit-identical stage costs.

The hot loop -- minimising stage cost plus bilinearly interpolated
cost-to-go over every grid node and control -- has two implementations:
a numba loop (:func:`min_over_controls_jit`) and a broadcast numpy version
(:func:`min_over_controls_numpy`).  :func:`min_over_controls` dispatches on
the ``BUSEMS_DISABLE_JIT`` flag.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .._accel import HAVE_NUMBA, njit
from ..hess import HessParams
from .model import CostParams

J_PER_KWH = 3.6e6


@dataclass(frozen=True)
class SideResult:
    cost: np.ndarray        # USD, inf where infeasible
    current: np.ndarray     # cell current, A
    soc_next: np.ndarray
    aging_usd: np.ndarray
    electric_usd: np.ndarray
    penalty_usd: np.ndarray
    dq_loss: np.ndarray
    loss_j: np.ndarray
    feasible: np.ndarray


def _cell_current(ocv, r, p_cell):
    disc = ocv * ocv - 4.0 * r * p_cell
    ok = disc >= 0.0
    denom = ocv + np.sqrt(np.where(ok, disc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        i = np.where(denom > 0.0, 2.0 * p_cell / np.where(denom > 0.0, denom, 1.0), 0.0)
    return i, ok


def aging_increment(q_loss: float, current, hess: HessParams, dt: float):
    """Vectorised capacity-loss increment; mirrors :func:`busems.hess.delta_q_loss`."""
    ag = hess.aging
    amps = np.abs(current)
    ah = amps * dt / 3600.0
    sev = ag.prefactor * np.exp(-(ag.activation_base - ag.crate_coeff * (amps / hess.battery.capacity_cell))
                                / (ag.gas_constant * ag.temperature))
    z = ag.power_exponent_z
    if q_loss > 0.0:
        dq = sev ** (1.0 / z) * q_loss ** ((z - 1.0) / z) * z * ah
    else:
        dq = sev * ah ** z
    return np.where(amps > 0.0, dq, 0.0)


def _slack(soc, window):
    lo, hi = window
    return np.maximum(lo - soc, 0.0) + np.maximum(soc - hi, 0.0)


def battery_side(soc, p_pack, q_loss: float, hess: HessParams, cost: CostParams) -> SideResult:
    bat = hess.battery
    dt = cost.sample_period
    s = np.clip(soc, 0.0, 1.0)
    ocv = np.interp(s, bat.curve_soc, bat.curve_ocv)
    r = np.interp(s, bat.curve_soc, bat.curve_r)
    i, ok = _cell_current(ocv, r, p_pack / bat.n_cells)
    ok = ok & (i >= bat.current_bounds_cell[0]) & (i <= bat.current_bounds_cell[1])
    soc_next = soc - i * dt / (3600.0 * bat.capacity_cell)
    dq = aging_increment(q_loss, i, hess, dt)
    loss_j = bat.parallel_count * i * i * (bat.series_count * r) * dt
    aging_usd = dq * bat.pack_capacity * cost.price_capacity_loss
    elec_usd = loss_j / J_PER_KWH * cost.price_electricity
    pen_usd = cost.slack_weight_bat * _slack(soc_next, bat.soc_window)
    total = np.where(ok, aging_usd + elec_usd + pen_usd, np.inf)
    return SideResult(total, i, soc_next, aging_usd, elec_usd, pen_usd, dq, loss_j, ok)


def supercap_side(soc, p_pack, hess: HessParams, cost: CostParams) -> SideResult:
    sc = hess.supercap
    dt = cost.sample_period
    ocv = np.clip(soc, 0.0, 1.0) * sc.max_voltage_cell
    r = sc.resistance_cell
    i, ok = _cell_current(ocv, r, p_pack / sc.n_cells)
    ok = ok & (i >= sc.current_bounds_cell[0]) & (i <= sc.current_bounds_cell[1])
    soc_next = soc - i * dt / sc.charge_capacity
    loss_j = sc.parallel_count * i * i * (sc.series_count * r) * dt
    elec_usd = loss_j / J_PER_KWH * cost.price_electricity
    pen_usd = cost.slack_weight_sc * _slack(soc_next, sc.soc_window)
    total = np.where(ok, elec_usd + pen_usd, np.inf)
    zeros = np.zeros_like(total)
    return SideResult(total, i, soc_next, zeros, elec_usd, pen_usd, zeros, loss_j, ok)


def locate(axis: np.ndarray, x):
    """Lower bracketing index and fractional weight, clamped to the axis ends."""
    x = np.asarray(x, dtype=float)
    n = axis.size
    idx = np.clip(np.searchsorted(axis, x, side="right") - 1, 0, n - 2)
    w = (x - axis[idx]) / (axis[idx + 1] - axis[idx])
    w = np.clip(w, 0.0, 1.0)
    return idx.astype(np.int64), w


def bilinear(table: np.ndarray, ib, wb, js, ws):
    """Interpolate ``table`` at bracketed points; zero-weight corners are ignored
    so that an infinite neighbour only propagates when it actually contributes."""
    w00 = (1.0 - wb) * (1.0 - ws)
    w10 = wb * (1.0 - ws)
    w01 = (1.0 - wb) * ws
    w11 = wb * ws
    acc = np.zeros(np.broadcast(ib, js).shape)
    with np.errstate(invalid="ignore"):
        acc = acc + np.where(w00 > 0.0, w00 * table[ib, js], 0.0)
        acc = acc + np.where(w10 > 0.0, w10 * table[ib + 1, js], 0.0)
        acc = acc + np.where(w01 > 0.0, w01 * table[ib, js + 1], 0.0)
        acc = acc + np.where(w11 > 0.0, w11 * table[ib + 1, js + 1], 0.0)
    return acc


@njit(cache=True)
def _bilinear_scalar(table, ib, wb, js, ws):
    acc = 0.0
    w = (1.0 - wb) * (1.0 - ws)
    if w > 0.0:
        acc += w * table[ib, js]
    w = wb * (1.0 - ws)
    if w > 0.0:
        acc += w * table[ib + 1, js]
    w = (1.0 - wb) * ws
    if w > 0.0:
        acc += w * table[ib, js + 1]
    w = wb * ws
    if w > 0.0:
        acc += w * table[ib + 1, js + 1]
    return acc


@njit(cache=True)
def _min_over_controls_loop(bat_cost, bat_idx, bat_w, sc_cost, sc_idx, sc_w, v_next, v_out, arg_out):
    nb, nu = bat_cost.shape
    ns = sc_cost.shape[0]
    inf = np.inf
    for i in range(nb):
        for j in range(ns):
            best = inf
            arg = -1
            for o in range(nu):
                bs = bat_cost[i, o] + sc_cost[j, o]
                # cost-to-go is non-negative, so bs alone bounds the candidate;
                # also rejects infeasible (inf) stage costs
                if not bs < best:
                    continue
                ib = bat_idx[i, o]
                wb = bat_w[i, o]
                js = sc_idx[j, o]
                ws = sc_w[j, o]
                acc = ((1.0 - wb) * (1.0 - ws) * v_next[ib, js] + wb * (1.0 - ws) * v_next[ib + 1, js]
                       + (1.0 - wb) * ws * v_next[ib, js + 1] + wb * ws * v_next[ib + 1, js + 1])
                if not acc < inf:
                    # an infinite corner only counts if its weight is non-zero
                    acc = _bilinear_scalar(v_next, ib, wb, js, ws)
                c = bs + acc
                if c < best:
                    best = c
                    arg = o
            v_out[i, j] = best
            arg_out[i, j] = arg


def min_over_controls_jit(bat_cost, bat_idx, bat_w, sc_cost, sc_idx, sc_w, v_next):
    nb, ns = bat_cost.shape[0], sc_cost.shape[0]
    v_out = np.empty((nb, ns))
    arg_out = np.empty((nb, ns), dtype=np.int16)
    _min_over_controls_loop(bat_cost, bat_idx, bat_w, sc_cost, sc_idx, sc_w, v_next, v_out, arg_out)
    return v_out, arg_out


def min_over_controls_numpy(bat_cost, bat_idx, bat_w, sc_cost, sc_idx, sc_w, v_next):
    bc = bat_cost[:, None, :]
    sc = sc_cost[None, :, :]
    cont = bilinear(v_next, bat_idx[:, None, :], bat_w[:, None, :], sc_idx[None, :, :], sc_w[None, :, :])
    with np.errstate(invalid="ignore"):
        total = bc + sc + cont
    total = np.where(np.isfinite(bc) & np.isfinite(sc), total, np.inf)
    k = np.argmin(total, axis=2)
    best = np.take_along_axis(total, k[:, :, None], axis=2)[:, :, 0]
    arg = np.where(np.isfinite(best), k, -1).astype(np.int16)
    return best, arg


def min_over_controls(*args):
    """Best value and control column per (battery node, supercap node).

    Control columns must already be in tie-break order: the first column
    reaching the minimum wins.  Returns ``(value, column)`` with column -1
    where every control is infeasible.
    """
    if HAVE_NUMBA:
        return min_over_controls_jit(*args)
    return min_over_controls_numpy(*args)
