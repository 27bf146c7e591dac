"""Reference allocators: equal power and interference-blind water-filling."""

from __future__ import annotations

import numpy as np

from .allocation import Allocation
from .scenario import Scenario


def equal_power(scenario: Scenario) -> Allocation:
    """``P_total / N`` on each of the ``N`` unmasked sub-channels."""
    scenario.require_active()
    beta = scenario.beta.astype(float)
    return Allocation(beta * (scenario.p_total / beta.sum()), scenario.beta)


def traditional_wf(scenario: Scenario, tol: float = 1e-12, max_steps: int = 200) -> Allocation:
    """Single network-wide water level over ``B log2(1 + P lambda / N0)``.

    Interference, clutter, QoS and service class are ignored. The level is
    bracketed by bisection and then fixed exactly on the resulting active
    set, so the budget is met with equality.
    """
    scenario.require_active()
    active = (scenario.beta > 0) & (scenario.lam > 0)
    floor = np.broadcast_to(scenario.n0[:, None], active.shape)[active] / scenario.lam[active]
    p_total = scenario.p_total

    lo, hi = 0.0, float(floor.max()) + p_total
    for _ in range(max_steps):
        level = 0.5 * (lo + hi)
        if np.maximum(level - floor, 0.0).sum() > p_total:
            hi = level
        else:
            lo = level
        if hi - lo <= tol * hi:
            break
    on = floor < hi
    while True:
        level = (p_total + floor[on].sum()) / on.sum()
        still = floor < level
        if np.array_equal(still, on):
            break
        on = still

    P = np.zeros(active.shape)
    P[active] = np.where(on, level - floor, 0.0)
    return Allocation(P, scenario.beta)
