"""Interference-aware, QoS-constrained iterative water-filling.

Each outer iteration freezes the interference map, computes the closed-form
per-class powers for a power multiplier found by bisection, relaxes toward
them, and moves the QoS multipliers by a projected subgradient step. The
loop stops once successive power iterates differ by less than ``epsilon``.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .allocation import Allocation, interference_update
from .errors import NoFeasibleMuError
from .metrics import capacity_terms, scnr_terms
from .scenario import Scenario, Service

LN2 = np.log(2.0)

__all__ = [
    "SolverConfig", "DualState", "QosTargets", "SolveReport",
    "interference_update", "power_update_comm", "power_update_sense", "power_update_jrc",
    "qos_targets", "solve_mu", "best_response", "subgradient_update",
    "lagrangian", "lagrangian_gradient", "kkt_residual", "solve",
]


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and iteration controls.

    ``epsilon`` is the absolute stopping threshold on ``||P(t) - P(t-1)||_2``;
    when left as ``None`` it defaults to ``1e-5 * P_total``. ``epsilon_mu``
    is the relative bracket width at which the multiplier bisection stops.
    ``relaxation`` is the step toward each new closed-form solution; 1.0
    replaces the iterate outright. ``init`` selects the starting point:
    ``"equal"`` spreads ``P_total / sum_k r_k`` over unmasked sub-channels,
    ``"zero"`` starts from no power.
    """

    epsilon: float | None = None
    epsilon_mu: float = 1e-8
    delta: float = 0.05
    max_iters: int = 500
    mu_bounds: tuple = (1e-8, 1e8)
    mu_limits: tuple = (1e-12, 1e12)
    relaxation: float = 0.5
    init: str = "equal"

    def __post_init__(self):
        if self.epsilon is not None and self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.epsilon_mu <= 0 or self.delta <= 0:
            raise ValueError("epsilon_mu and delta must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        lo, hi = self.mu_bounds
        cap_lo, cap_hi = self.mu_limits
        if not 0 < cap_lo <= lo < hi <= cap_hi:
            raise ValueError("need 0 < mu_limits[0] <= mu_low < mu_high <= mu_limits[1]")
        if not 0 < self.relaxation <= 1:
            raise ValueError("relaxation must lie in (0, 1]")
        if self.init not in ("equal", "zero"):
            raise ValueError(f"unknown init {self.init!r}")
        object.__setattr__(self, "mu_bounds", (float(lo), float(hi)))
        object.__setattr__(self, "mu_limits", (float(cap_lo), float(cap_hi)))

    def tolerance(self, p_total: float) -> float:
        return 1e-5 * p_total if self.epsilon is None else self.epsilon

    @classmethod
    def from_dict(cls, data: dict) -> "SolverConfig":
        data = dict(data)
        for key in ("mu_bounds", "mu_limits"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)


@dataclass(frozen=True, eq=False)
class DualState:
    """Power multiplier ``mu`` and per-sub-channel QoS multipliers."""

    mu: float
    nu: np.ndarray
    eta: np.ndarray
    gamma: np.ndarray | None = None

    @classmethod
    def zeros(cls, shape, mu: float = 1.0) -> "DualState":
        return cls(mu=float(mu), nu=np.zeros(shape), eta=np.zeros(shape))


@dataclass(frozen=True, eq=False)
class QosTargets:
    """Per-sub-channel QoS minima and the masks saying where they apply.

    ``capacity`` is in bits/s and is compared against the user's total rate;
    ``bandwidth`` converts capacity residuals to bits/s/Hz before the
    subgradient step.
    """

    capacity: np.ndarray
    scnr: np.ndarray
    comm: np.ndarray
    sense: np.ndarray
    beta: np.ndarray
    bandwidth: float = 1.0


def qos_targets(scenario: Scenario) -> QosTargets:
    beta = scenario.beta.astype(float)
    comm = scenario.comm_users[:, None] & (beta > 0)
    sense = scenario.sense_users[:, None] & (beta > 0)
    return QosTargets(
        capacity=np.where(comm, scenario.c_min[:, None], 0.0),
        scnr=np.where(sense, scenario.s_min[:, None], 0.0),
        comm=comm, sense=sense, beta=beta, bandwidth=scenario.bandwidth,
    )


# -- closed-form per-class power updates -----------------------------------

def _check_mu(mu):
    if np.any(np.asarray(mu) <= 0):
        raise ValueError("mu must be positive; the water level is undefined otherwise")


def _check_lam(lam):
    if np.any(np.asarray(lam) < 0):
        raise ValueError("eigenvalues must be non-negative")


def _ratio(num, lam):
    """``num / lam`` with ``+inf`` where the eigenvalue vanishes."""
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(np.asarray(lam) > 0, np.divide(num, lam), np.inf)


def power_update_comm(lam, n0, interference, mu, nu, bandwidth):
    """``[B (1 + nu) / (mu ln 2) - (N0 + I) / lambda]^+``."""
    _check_mu(mu)
    _check_lam(lam)
    level = bandwidth * (1.0 + nu) / (mu * LN2)
    out = np.maximum(level - _ratio(n0 + interference, lam), 0.0)
    return float(out) if np.ndim(out) == 0 else out


def power_update_sense(lam, n0, c0, interference, mu, eta):
    """``[(1 + eta) lambda / (mu (N0 + C0 + I))]^+``."""
    _check_mu(mu)
    _check_lam(lam)
    denom = n0 + c0 + interference
    if np.any(np.asarray(denom) <= 0):
        raise ValueError("noise + clutter + interference must be positive")
    out = np.maximum((1.0 + eta) * lam / (mu * denom), 0.0)
    return float(out) if np.ndim(out) == 0 else out


def power_update_jrc(lam, n0, c0, interference, mu, nu, eta, alpha, bandwidth):
    """JRC update: communication water level plus a clutter-scaled sensing term.

    ``[B (alpha + nu) / (mu ln 2) - (N0 + I) / lambda
    + (1 - alpha + eta) (N0 + C0 + I) / (mu lambda)]^+``; zero where
    ``lambda == 0``.
    """
    _check_mu(mu)
    _check_lam(lam)
    if np.any((np.asarray(alpha) <= 0) | (np.asarray(alpha) >= 1)):
        raise ValueError("JRC alpha must lie in (0, 1)")
    level = bandwidth * (alpha + nu) / (mu * LN2)
    sense = (1.0 - alpha + eta) * _ratio(n0 + c0 + interference, lam) / mu
    with np.errstate(invalid="ignore"):
        raw = level - _ratio(n0 + interference, lam) + sense
    out = np.where(np.asarray(lam) > 0, np.maximum(raw, 0.0), 0.0)
    return float(out) if np.ndim(out) == 0 else out


def _class_powers(scenario: Scenario, duals: DualState, interference, mu: float) -> np.ndarray:
    lam = scenario.lam
    n0 = scenario.n0[:, None]
    c0 = scenario.c0[:, None]
    alpha = scenario.alpha[:, None]
    B = scenario.bandwidth
    P = np.zeros_like(lam)
    for tag, rows in scenario.class_rows.items():
        I = interference[rows]
        if tag is Service.COMMUNICATION:
            P[rows] = power_update_comm(lam[rows], n0[rows], I, mu, duals.nu[rows], B)
        elif tag is Service.SENSING:
            P[rows] = power_update_sense(lam[rows], n0[rows], c0[rows], I, mu, duals.eta[rows])
        else:
            P[rows] = power_update_jrc(lam[rows], n0[rows], c0[rows], I, mu,
                                       duals.nu[rows], duals.eta[rows], alpha[rows], B)
    return P * scenario.beta


def _level_coefficients(scenario: Scenario, duals: DualState, interference):
    """Write every class update as ``[a / mu - c]^+`` on the unmasked set.

    Total power is then a cheap, strictly decreasing function of ``mu``.
    """
    active = (scenario.beta > 0) & (scenario.lam > 0)
    lam = np.where(active, scenario.lam, 1.0)
    n0 = scenario.n0[:, None]
    c0 = scenario.c0[:, None]
    alpha = scenario.alpha[:, None]
    B = scenario.bandwidth
    is_comm = (scenario.comm_users & ~scenario.sense_users)[:, None]
    is_sense = (scenario.sense_users & ~scenario.comm_users)[:, None]
    noise = (n0 + interference) / lam
    clutter = (n0 + c0 + interference)
    a_comm = B * (1.0 + duals.nu) / LN2
    a_sense = (1.0 + duals.eta) * lam / clutter
    a_jrc = B * (alpha + duals.nu) / LN2 + (1.0 - alpha + duals.eta) * clutter / lam
    a = np.where(is_comm, a_comm, np.where(is_sense, a_sense, a_jrc))
    c = np.where(is_sense, 0.0, noise)
    return a[active], c[active]


def _bisect_mu(a: np.ndarray, c: np.ndarray, p_total: float, cfg: SolverConfig) -> float:
    buf = np.empty_like(a)

    def total(mu):
        np.divide(a, mu, out=buf)
        np.subtract(buf, c, out=buf)
        np.maximum(buf, 0.0, out=buf)
        return buf.sum()

    lo, hi = cfg.mu_bounds
    cap_lo, cap_hi = cfg.mu_limits
    while total(lo) < p_total:
        if lo <= cap_lo:
            raise NoFeasibleMuError(f"demand stays below P_total={p_total} down to mu={lo:g}")
        lo = max(lo / 10.0, cap_lo)
    while total(hi) > p_total:
        if hi >= cap_hi:
            raise NoFeasibleMuError(f"demand exceeds P_total={p_total} up to mu={hi:g}")
        hi = min(hi * 10.0, cap_hi)
    while hi - lo > cfg.epsilon_mu * hi:
        mu = 0.5 * (lo + hi)
        if total(mu) > p_total:
            lo = mu
        else:
            hi = mu
    # the upper end never overspends the budget
    return hi


def solve_mu(scenario: Scenario, duals: DualState, interference, cfg: SolverConfig | None = None) -> float:
    """Power multiplier whose closed-form powers exhaust ``P_total``.

    Total demand decreases in ``mu``, so a midpoint that overspends raises
    the lower bracket end. The bracket starts at ``cfg.mu_bounds`` and is
    widened tenfold per step up to ``cfg.mu_limits``.
    """
    cfg = cfg or SolverConfig()
    scenario.require_active()
    a, c = _level_coefficients(scenario, duals, interference)
    return _bisect_mu(a, c, scenario.p_total, cfg)


def best_response(scenario: Scenario, duals: DualState, interference,
                  cfg: SolverConfig | None = None) -> tuple[float, np.ndarray]:
    """Solve the frozen-interference subproblem: ``(mu, P)``."""
    mu = solve_mu(scenario, duals, interference, cfg)
    return mu, _class_powers(scenario, duals, interference, mu)


def subgradient_update(duals: DualState, capacity, scnr, targets: QosTargets, delta: float) -> DualState:
    """Projected subgradient step on the QoS multipliers.

    ``capacity`` and ``scnr`` are the achieved per-user values (shape
    ``(K,)``) or per-sub-channel values (shape ``(K, R)``). Multipliers
    outside the class masks are held at zero.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    capacity = np.asarray(capacity, dtype=float)
    scnr = np.asarray(scnr, dtype=float)
    if capacity.ndim == 1:
        capacity = capacity[:, None]
    if scnr.ndim == 1:
        scnr = scnr[:, None]
    beta = targets.beta
    step_nu = (targets.capacity - capacity * beta) / targets.bandwidth
    step_eta = targets.scnr - scnr * beta
    nu = np.where(targets.comm, np.maximum(duals.nu + delta * step_nu, 0.0), 0.0)
    eta = np.where(targets.sense, np.maximum(duals.eta + delta * step_eta, 0.0), 0.0)
    return replace(duals, nu=nu, eta=eta, gamma=None)


# -- Lagrangian diagnostics ----------------------------------------------

def _weights(scenario: Scenario, duals: DualState):
    alpha = scenario.alpha[:, None]
    comm = scenario.comm_users[:, None]
    sense = scenario.sense_users[:, None]
    return alpha + np.where(comm, duals.nu, 0.0), 1.0 - alpha + np.where(sense, duals.eta, 0.0)


def lagrangian(power, scenario: Scenario, interference, duals: DualState,
               targets: QosTargets | None = None) -> float:
    """Per-sub-channel Lagrangian of the frozen-interference subproblem.

    Rate terms are ``B log2(1 + P lambda / (N0 + I))`` and sensing terms
    ``P lambda / (N0 + C0 + I)`` with the sub-channel's own interference;
    the non-negativity multipliers are omitted (they vanish for ``P > 0``).
    """
    targets = targets or qos_targets(scenario)
    P = np.asarray(power, dtype=float)
    beta = scenario.beta
    lam = scenario.lam
    n0 = scenario.n0[:, None]
    c0 = scenario.c0[:, None]
    alpha = scenario.alpha[:, None]
    rate = scenario.bandwidth * np.log2(1.0 + P * lam / (n0 + interference))
    sense = P * lam / (n0 + c0 + interference)
    utility = np.sum(beta * (alpha * rate + (1.0 - alpha) * sense))
    budget = duals.mu * (np.sum(P * beta) - scenario.p_total)
    qos_c = np.sum(np.where(targets.comm, duals.nu * (targets.capacity - beta * rate), 0.0))
    qos_s = np.sum(np.where(targets.sense, duals.eta * (targets.scnr - beta * sense), 0.0))
    return float(utility - budget - qos_c - qos_s)


def lagrangian_gradient(power, scenario: Scenario, interference, duals: DualState) -> np.ndarray:
    """Analytic ``dL/dP[k, i]`` with the non-negativity multiplier at zero."""
    P = np.asarray(power, dtype=float)
    lam = scenario.lam
    n0 = scenario.n0[:, None]
    c0 = scenario.c0[:, None]
    rate_slope = scenario.bandwidth / LN2 * lam / (n0 + interference + P * lam)
    sense_slope = lam / (n0 + c0 + interference)
    w_rate, w_sense = _weights(scenario, duals)
    return scenario.beta * (w_rate * rate_slope + w_sense * sense_slope - duals.mu)


def nonnegativity_multiplier(power, scenario: Scenario, interference, duals: DualState) -> np.ndarray:
    """``gamma[k, i] = mu - dU/dP`` at zero power; zero on powered sub-channels."""
    P = np.asarray(power, dtype=float)
    g0 = lagrangian_gradient(np.zeros_like(P), scenario, interference, duals)
    return np.where((P == 0) & (scenario.beta > 0), -g0, 0.0)


def kkt_residual(scenario: Scenario, alloc, duals: DualState, interference) -> float:
    """Worst stationarity violation over unmasked sub-channels, relative to ``mu``.

    Powered sub-channels contribute ``|dL/dP| / mu``; unpowered ones
    contribute ``[-gamma]^+ / mu``.
    """
    P = alloc.power if isinstance(alloc, Allocation) else np.asarray(alloc, dtype=float)
    active = (scenario.beta > 0) & (scenario.lam > 0)
    if not active.any():
        return 0.0
    g = lagrangian_gradient(P, scenario, interference, duals)
    gamma = nonnegativity_multiplier(P, scenario, interference, duals)
    viol = np.where(P > 0, np.abs(g), np.maximum(-gamma, 0.0))
    return float(np.max(viol[active]) / duals.mu)


# -- outer loop -------------------------------------------------------------

@dataclass(eq=False)
class SolveReport:
    allocation: Allocation
    duals: DualState
    interference: np.ndarray
    iterations: int
    objective_trace: list = field(default_factory=list)
    power_deltas: list = field(default_factory=list)
    kkt_trace: list = field(default_factory=list)
    kkt_residual: float = float("nan")
    converged: bool = False
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return {
            "power_w": self.allocation.power.tolist(),
            "beta": np.asarray(self.allocation.beta).tolist(),
            "mu": self.duals.mu,
            "nu": self.duals.nu.tolist(),
            "eta": self.duals.eta.tolist(),
            "interference_w": self.interference.tolist(),
            "iterations": self.iterations,
            "objective_trace": list(self.objective_trace),
            "power_deltas": list(self.power_deltas),
            "kkt_trace": list(self.kkt_trace),
            "kkt_residual": self.kkt_residual,
            "converged": self.converged,
            "wall_time_s": self.wall_time,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def write_trace_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iter", "objective", "power_delta", "kkt_residual"])
            for t, row in enumerate(zip(self.objective_trace, self.power_deltas, self.kkt_trace), 1):
                w.writerow([t] + [format(x, ".9g") for x in row])


def solve(scenario: Scenario, cfg: SolverConfig | None = None) -> SolveReport:
    """Run the iterative unified water-filling on one scenario.

    The returned allocation is the closed-form solution for the final frozen
    interference map, so ``report.kkt_residual`` and the budget hold for it
    exactly. Hitting ``max_iters`` yields ``converged=False``, not an error.
    """
    cfg = cfg or SolverConfig()
    scenario.require_active()
    start = time.perf_counter()

    beta = scenario.beta.astype(float)
    G = scenario.gains.G
    targets = qos_targets(scenario)
    if cfg.init == "equal":
        P = beta * (scenario.p_total / scenario.n_sub)
    else:
        P = np.zeros_like(beta)
    duals = DualState.zeros(beta.shape)
    eps = cfg.tolerance(scenario.p_total)
    alpha = scenario.alpha[:, None]
    rho = cfg.relaxation

    objective_trace, deltas, kkts = [], [], []
    converged = False
    for t in range(1, cfg.max_iters + 1):
        I = interference_update(P, G)
        mu, P_hat = best_response(scenario, duals, I, cfg)
        used = replace(duals, mu=mu)
        P_next = P + rho * (P_hat - P)

        I_next = interference_update(P_next, G)
        cap_sub = capacity_terms(P_next, scenario, I_next)
        scnr_sub = scnr_terms(P_next, scenario, I_next)
        step = float(np.linalg.norm(P_next - P))

        objective_trace.append(float(np.sum(alpha * cap_sub + (1.0 - alpha) * scnr_sub)))
        deltas.append(step)
        kkts.append(kkt_residual(scenario, P_hat, used, I))

        P = P_next
        if step < eps:
            converged = True
            break
        duals = subgradient_update(used, cap_sub.sum(axis=1), scnr_sub.sum(axis=1), targets, cfg.delta)

    final = replace(used, gamma=nonnegativity_multiplier(P_hat, scenario, I, used))
    return SolveReport(
        allocation=Allocation(P_hat, scenario.beta),
        duals=final,
        interference=I,
        iterations=t,
        objective_trace=objective_trace,
        power_deltas=deltas,
        kkt_trace=kkts,
        kkt_residual=kkts[-1],
        converged=converged,
        wall_time=time.perf_counter() - start,
    )
