"""Power allocation container and the interference map it induces."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BUDGET_SLACK = 1e-6


@dataclass(frozen=True, eq=False)
class Allocation:
    """Per-user, per-sub-channel transmit powers in watts.

    ``power`` and ``beta`` are ``(K, R)`` arrays where ``R`` is the largest
    user rank; sub-channels beyond a user's rank carry ``beta == 0``.
    """

    power: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        power = np.asarray(self.power, dtype=float)
        beta = np.asarray(self.beta)
        if power.shape != beta.shape:
            raise ValueError(f"power shape {power.shape} != mask shape {beta.shape}")
        if np.any(power < 0) or not np.all(np.isfinite(power)):
            raise ValueError("powers must be finite and non-negative")
        if np.any(power[beta == 0] != 0):
            raise ValueError("masked sub-channels must carry zero power")
        power.setflags(write=False)
        object.__setattr__(self, "power", power)
        object.__setattr__(self, "beta", beta)

    @property
    def total_power(self) -> float:
        return float(np.sum(self.power * self.beta))

    def within_budget(self, p_total: float) -> bool:
        return self.total_power <= p_total * (1.0 + BUDGET_SLACK)


def interference_update(power: np.ndarray | Allocation, gains) -> np.ndarray:
    """Interference seen on every sub-channel for a given allocation.

    ``I[k, i] = sum_{j != k} P[j, i] * G[k, j, i]``; stream ``i`` of user
    ``j`` only leaks into sub-channel ``i`` of user ``k``.

    Parameters
    ----------
    power : ndarray or Allocation
        Powers ``P[j, i]``, shape ``(K, R)``.
    gains : InterferenceGains or ndarray
        Cross gains ``G[k, j, i]``; the diagonal ``G[k, k, :]`` is zero.
    """
    if isinstance(power, Allocation):
        power = power.power
    G = getattr(gains, "G", gains)
    if G.shape[1:] != np.shape(power):
        raise ValueError(f"gain tensor {G.shape} does not match powers {np.shape(power)}")
    return np.einsum("kji,ji->ki", G, power)
