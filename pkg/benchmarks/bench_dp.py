"""Compare the numba and pure-numpy DP stage kernels.

    python3 benchmarks/bench_dp.py [--stages 20] [--solve 300]

The kernel part times one backward stage on the default grid with both
backends in-process and checks they agree.  ``--solve N`` also times a full
N-second solve in two subprocesses, one with ``BUSEMS_DISABLE_JIT=1``.
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from busems.dp import CostParams, Grid
from busems.dp.kernels import (battery_side, locate, min_over_controls_jit, min_over_controls_numpy,
                               supercap_side)
from busems.hess import HessParams

SOLVE_SNIPPET = """
import time
from busems._accel import backend
from busems.dp import CostParams, Grid, solve_backward
from busems.hess import HessParams, HessState
from busems.synth import synth_cycle
from busems.vehicle import VehicleParams, cycle_to_profile
hess, cost = HessParams(), CostParams()
prof = cycle_to_profile(synth_cycle(3, {n}), VehicleParams(), 0.8)
grid = Grid.build(hess)
solve_backward(prof.__class__(prof.demands[:5], 0.8), grid, HessState(0.6, 0.9, 1e-3), cost, hess)
t = time.perf_counter()
solve_backward(prof, grid, HessState(0.6, 0.9, 1e-3), cost, hess)
print(backend(), time.perf_counter() - t)
"""


def stage_inputs(demand_w: float, seed: int = 0):
    hess, cost = HessParams(), CostParams()
    grid = Grid.build(hess)
    ctrl = grid.control_axis[grid.order]
    bat = battery_side(grid.soc_bat_axis[:, None], demand_w - ctrl[None, :], 1e-3, hess, cost)
    sc = supercap_side(grid.soc_sc_axis[:, None], ctrl[None, :], hess, cost)
    bi, bw = locate(grid.soc_bat_axis, bat.soc_next)
    si, sw = locate(grid.soc_sc_axis, sc.soc_next)
    v_next = np.random.default_rng(seed).uniform(0.0, 1e-2, (grid.shape[0], grid.shape[1]))
    return (np.ascontiguousarray(bat.cost), bi, bw, np.ascontiguousarray(sc.cost), si, sw, v_next), grid.shape


def best_of(fn, args, repeats):
    times = []
    for _ in range(repeats):
        t = time.perf_counter()
        out = fn(*args)
        times.append(time.perf_counter() - t)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--stages", type=int, default=20, help="repetitions per kernel")
    ap.add_argument("--solve", type=int, default=0, metavar="SECONDS",
                    help="also time a full solve of this many seconds per backend")
    args = ap.parse_args(argv)

    for demand in (-80e3, 0.0, 120e3):
        inputs, shape = stage_inputs(demand)
        min_over_controls_jit(*inputs)   # compile
        t_jit, (v1, a1) = best_of(min_over_controls_jit, inputs, args.stages)
        t_np, (v2, a2) = best_of(min_over_controls_numpy, inputs, max(3, args.stages // 4))
        same = np.array_equal(a1, a2) and np.allclose(v1, v2, rtol=1e-12, atol=0.0, equal_nan=True)
        print(f"demand {demand / 1e3:+7.1f} kW  grid {shape}  numba {1e3 * t_jit:8.2f} ms  "
              f"numpy {1e3 * t_np:8.2f} ms  speedup {t_np / t_jit:5.1f}x  identical {same}")

    if args.solve:
        for flag in ("0", "1"):
            env = dict(os.environ, BUSEMS_DISABLE_JIT=flag)
            out = subprocess.run([sys.executable, "-c", SOLVE_SNIPPET.format(n=args.solve)],
                                 env=env, capture_output=True, text=True, check=True).stdout.split()
            print(f"full {args.solve} s solve with {out[0]:5s}: {float(out[1]):.2f} s")


if __name__ == "__main__":
    main()
