"""Shared builders for small DP instances."""

import numpy as np

from busems.dp import CostParams, Grid
from busems.hess import HessParams, HessState
from busems.vehicle import PowerProfile, quantize_power

HESS = HessParams()
COST = CostParams()


def tiny_instance(seed: int, horizon: int | None = None, nu: int | None = None):
    """Random instance small enough for brute-force enumeration."""
    rng = np.random.default_rng(seed)
    horizon = horizon or int(rng.integers(1, 6))
    nu = nu or int(rng.choice([3, 5, 7, 9]))
    while nu ** horizon > 2 * 10 ** 5:
        horizon -= 1
    nb, ns = (int(n) for n in rng.integers(2, 8, size=2))
    pmax = float(rng.uniform(20e3, 250e3))
    grid = Grid(np.linspace(0.55, 0.65, nb), np.linspace(0.5, 1.0, ns), np.linspace(-pmax, pmax, nu))
    demands = quantize_power(rng.uniform(-150e3, 200e3, horizon))
    init = HessState(float(rng.uniform(0.57, 0.63)), float(rng.uniform(0.6, 0.95)), 1e-3)
    return PowerProfile(demands, 0.5), grid, init


# (criterion, verdict line) pairs collected by the acceptance suite
ACCEPTANCE: list[tuple[int, str]] = []


def record(criterion: int, ok: bool, detail: str) -> None:
    line = f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE.append((criterion, line))
    print(line)
