"""Capacity, SCNR, JRC utility, objective and detection metrics.

All metrics are evaluated with the interference recomputed from the
allocation being scored, i.e. they describe what the users actually see.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .allocation import Allocation, interference_update
from .scenario import Scenario

DEFAULT_P_FA = 1e-3


def _power(alloc) -> np.ndarray:
    return alloc.power if isinstance(alloc, Allocation) else np.asarray(alloc, dtype=float)


def capacity_terms(power, scenario: Scenario, interference=None) -> np.ndarray:
    """Per-sub-channel rates ``beta * B * log2(1 + P lambda / (N0 + I))`` in bits/s."""
    power = _power(power)
    I = interference_update(power, scenario.gains) if interference is None else interference
    sinr = power * scenario.lam / (scenario.n0[:, None] + I)
    return scenario.beta * scenario.bandwidth * np.log2(1.0 + sinr)


def scnr_terms(power, scenario: Scenario, interference=None) -> np.ndarray:
    """Per-sub-channel SCNR summands over the user's shared denominator.

    The denominator is ``N0 + C0 + sum_i I[k, i]`` with the interference
    summed over the user's existing sub-channels.
    """
    power = _power(power)
    I = interference_update(power, scenario.gains) if interference is None else interference
    shared = np.sum(np.where(scenario.valid, I, 0.0), axis=1)
    denom = scenario.n0 + scenario.c0 + shared
    return scenario.beta * power * scenario.lam / denom[:, None]


def detection_probability(scnr, p_fa: float = DEFAULT_P_FA):
    """Swerling-I detection probability ``p_fa ** (1 / (1 + SCNR))``."""
    if not 0.0 < p_fa < 1.0:
        raise ValueError(f"p_fa must lie in (0, 1), got {p_fa}")
    scnr = np.asarray(scnr, dtype=float)
    if np.any(scnr < 0):
        raise ValueError("SCNR must be non-negative")
    out = p_fa ** (1.0 / (1.0 + scnr))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class UserMetrics:
    capacity_per_sub: np.ndarray
    capacity: float
    scnr_per_sub: np.ndarray
    scnr: float
    utility: float
    p_d: float
    qos_met: bool


@dataclass(frozen=True, eq=False)
class NetworkMetrics:
    """Vectorized metrics for every user of a scenario."""

    capacity_per_sub: np.ndarray
    capacity: np.ndarray
    scnr_per_sub: np.ndarray
    scnr: np.ndarray
    utility: np.ndarray
    p_d: np.ndarray
    qos_met: np.ndarray
    objective: float

    def user(self, k: int) -> UserMetrics:
        return UserMetrics(
            capacity_per_sub=self.capacity_per_sub[k],
            capacity=float(self.capacity[k]),
            scnr_per_sub=self.scnr_per_sub[k],
            scnr=float(self.scnr[k]),
            utility=float(self.utility[k]),
            p_d=float(self.p_d[k]),
            qos_met=bool(self.qos_met[k]),
        )


def qos_flags(capacity: np.ndarray, scnr: np.ndarray, scenario: Scenario) -> np.ndarray:
    """Per-user QoS outcome on the class-relevant targets."""
    comm_ok = capacity >= scenario.c_min
    sense_ok = scnr >= scenario.s_min
    return (~scenario.comm_users | comm_ok) & (~scenario.sense_users | sense_ok)


def evaluate(alloc, scenario: Scenario, p_fa: float = DEFAULT_P_FA) -> NetworkMetrics:
    power = _power(alloc)
    I = interference_update(power, scenario.gains)
    cap_sub = capacity_terms(power, scenario, I)
    scnr_sub = scnr_terms(power, scenario, I)
    cap = cap_sub.sum(axis=1)
    scnr_k = scnr_sub.sum(axis=1)
    alpha = scenario.alpha
    utility = alpha * cap + (1.0 - alpha) * scnr_k
    obj = float(np.sum(alpha[:, None] * cap_sub + (1.0 - alpha[:, None]) * scnr_sub))
    return NetworkMetrics(
        capacity_per_sub=cap_sub, capacity=cap, scnr_per_sub=scnr_sub, scnr=scnr_k,
        utility=utility, p_d=detection_probability(scnr_k, p_fa),
        qos_met=qos_flags(cap, scnr_k, scenario), objective=obj,
    )


def capacity(alloc, scenario: Scenario, k: int) -> float:
    """Sum rate ``C_k`` of user ``k`` in bits/s."""
    return float(capacity_terms(alloc, scenario)[k].sum())


def scnr(alloc, scenario: Scenario, k: int) -> float:
    """Linear SCNR of user ``k``."""
    return float(scnr_terms(alloc, scenario)[k].sum())


def jrc_utility(alloc, scenario: Scenario, k: int) -> float:
    """``alpha_k C_k + (1 - alpha_k) SCNR_k``."""
    a = scenario.alpha[k]
    return float(a * capacity(alloc, scenario, k) + (1.0 - a) * scnr(alloc, scenario, k))


def objective(alloc, scenario: Scenario, interference=None) -> float:
    """Weighted network utility summed over sub-channels.

    ``interference`` may be passed to evaluate with a frozen interference
    map instead of the one induced by ``alloc``.
    """
    power = _power(alloc)
    I = interference_update(power, scenario.gains) if interference is None else interference
    alpha = scenario.alpha[:, None]
    return float(np.sum(alpha * capacity_terms(power, scenario, I)
                        + (1.0 - alpha) * scnr_terms(power, scenario, I)))


def qos_satisfaction(alloc, scenario: Scenario) -> float:
    """Fraction of users meeting every target that applies to their class."""
    power = _power(alloc)
    I = interference_update(power, scenario.gains)
    cap = capacity_terms(power, scenario, I).sum(axis=1)
    s = scnr_terms(power, scenario, I).sum(axis=1)
    return float(np.mean(qos_flags(cap, s, scenario)))
