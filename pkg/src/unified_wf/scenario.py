"""Seeded downlink MU-MIMO problem instances.

A :class:`Scenario` bundles everything the allocators need: per-user SVD
eigenvalues, the precoders, the cross-user leakage gains and the
channel-quality mask. Channels are i.i.d. unit-variance Rayleigh and fully
determined by ``(seed, user index)``, so a scenario can be serialized as a
small JSON document and regenerated bit-for-bit.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DegenerateScenarioError, ScenarioInfeasibleError

SCHEMA_VERSION = 1

# Tikhonov weight for the overloaded ZF inverse, relative to mean Gram diagonal.
ZF_REGULARIZATION = 1e-6
# Condition threshold below which a square-or-wide stacked channel is singular.
RANK_TOL = 1e-12


class Service(str, enum.Enum):
    COMMUNICATION = "communication"
    SENSING = "sensing"
    JRC = "jrc"


@dataclass(frozen=True)
class UserClass:
    """Service class of a user and its capacity weight ``alpha``."""

    tag: Service
    alpha: float

    def __post_init__(self):
        tag = Service(self.tag)
        object.__setattr__(self, "tag", tag)
        if tag is Service.COMMUNICATION and self.alpha != 1.0:
            raise ValueError("communication users must have alpha == 1")
        if tag is Service.SENSING and self.alpha != 0.0:
            raise ValueError("sensing users must have alpha == 0")
        if tag is Service.JRC and not 0.0 < self.alpha < 1.0:
            raise ValueError(f"JRC alpha must lie in (0, 1), got {self.alpha}")

    @classmethod
    def communication(cls) -> "UserClass":
        return cls(Service.COMMUNICATION, 1.0)

    @classmethod
    def sensing(cls) -> "UserClass":
        return cls(Service.SENSING, 0.0)

    @classmethod
    def jrc(cls, alpha: float = 0.5) -> "UserClass":
        return cls(Service.JRC, float(alpha))

    @property
    def serves_communication(self) -> bool:
        return self.tag is not Service.SENSING

    @property
    def serves_sensing(self) -> bool:
        return self.tag is not Service.COMMUNICATION


@dataclass(frozen=True, eq=False)
class UserChannel:
    """One user's channel ``H`` (``N_r x N_t``) with its SVD and noise levels."""

    H: np.ndarray
    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray
    lam: np.ndarray
    n0: float = 1.0
    c0: float = 1.0

    @classmethod
    def from_matrix(cls, H, n0: float = 1.0, c0: float | None = None) -> "UserChannel":
        H = np.atleast_2d(np.asarray(H, dtype=complex))
        U, s, Vh = np.linalg.svd(H)
        lam = s**2
        for a in (H, U, s, Vh, lam):
            a.setflags(write=False)
        return cls(H=H, U=U, sigma=s, V=Vh.conj().T, lam=lam, n0=float(n0),
                   c0=float(n0 if c0 is None else c0))

    @property
    def rank(self) -> int:
        return int(min(self.H.shape))

    @property
    def n_r(self) -> int:
        return self.H.shape[0]

    @property
    def n_t(self) -> int:
        return self.H.shape[1]


def generate_channel(n_r: int, n_t: int, seed: int, stream_id: int,
                     n0: float = 1.0, c0: float | None = None) -> UserChannel:
    """Draw a circularly-symmetric unit-variance Rayleigh channel.

    The draw depends only on ``(seed, stream_id)``.
    """
    if n_r <= 0 or n_t <= 0:
        raise ValueError(f"antenna counts must be positive, got N_r={n_r}, N_t={n_t}")
    if n_t < n_r:
        raise ValueError(f"N_t ({n_t}) must be at least N_r ({n_r})")
    rng = np.random.default_rng([int(seed), int(stream_id)])
    H = (rng.standard_normal((n_r, n_t)) + 1j * rng.standard_normal((n_r, n_t))) / np.sqrt(2.0)
    return UserChannel.from_matrix(H, n0=n0, c0=c0)


@dataclass(frozen=True, eq=False)
class Precoders:
    """Unit-norm precoder columns per user.

    ``zf_residual_bound`` is the worst leakage ``||H_j W_k||_F / ||H_j||_F``
    over zero-forcing users ``k`` and all ``j != k``.
    """

    W: tuple
    kinds: tuple
    zf_residual_bound: float = 0.0


def _zf_columns(stacked: np.ndarray) -> np.ndarray:
    n_streams, n_t = stacked.shape
    gram = stacked @ stacked.conj().T
    if n_streams <= n_t:
        s = np.linalg.svd(stacked, compute_uv=False)
        if s[-1] <= RANK_TOL * s[0]:
            raise ScenarioInfeasibleError("stacked channel is rank deficient; ZF precoder undefined")
        W = stacked.conj().T @ np.linalg.inv(gram)
    else:
        # more streams than antennas: exact nulling is impossible
        rho = ZF_REGULARIZATION * np.trace(gram).real / n_streams
        W = stacked.conj().T @ np.linalg.solve(gram + rho * np.eye(n_streams), np.eye(n_streams))
    norms = np.linalg.norm(W, axis=0)
    if np.any(norms == 0):
        raise ScenarioInfeasibleError("ZF precoder has a zero column")
    return W / norms


def build_precoders(channels: Sequence[UserChannel], classes: Sequence[UserClass]) -> Precoders:
    """Matched precoders for sensing users, ZF columns for everyone else.

    ZF columns come from the (regularized, when overloaded) pseudoinverse of
    all users' stacked channels; JRC users share the ZF construction.
    """
    if not channels:
        raise ValueError("at least one channel is required")
    if len(channels) != len(classes):
        raise ValueError("one class per channel is required")
    n_t = channels[0].n_t
    if any(ch.n_t != n_t for ch in channels):
        raise ValueError("all users must see the same number of transmit antennas")

    offsets = np.cumsum([0] + [ch.n_r for ch in channels])
    needs_zf = any(c.tag is not Service.SENSING for c in classes)
    W_all = _zf_columns(np.vstack([ch.H for ch in channels])) if needs_zf else None

    W, kinds = [], []
    for k, (ch, cls) in enumerate(zip(channels, classes)):
        if cls.tag is Service.SENSING:
            Wk = ch.V[:, :ch.rank].copy()
            kinds.append("matched")
        else:
            Wk = W_all[:, offsets[k]:offsets[k] + ch.rank]
            kinds.append("zf")
        Wk.setflags(write=False)
        W.append(Wk)

    bound = 0.0
    for k, kind in enumerate(kinds):
        if kind != "zf":
            continue
        for j, ch in enumerate(channels):
            if j != k:
                bound = max(bound, np.linalg.norm(ch.H @ W[k]) / np.linalg.norm(ch.H))
    return Precoders(W=tuple(W), kinds=tuple(kinds), zf_residual_bound=float(bound))


@dataclass(frozen=True, eq=False)
class InterferenceGains:
    """``G[k, j, i] = ||H_k w_{j,i}||^2`` for ``j != k``; zero elsewhere."""

    G: np.ndarray


def interference_gains(channels: Sequence[UserChannel], precoders: Precoders) -> InterferenceGains:
    K = len(channels)
    R = max(ch.rank for ch in channels)
    G = np.zeros((K, K, R))
    for k, ch in enumerate(channels):
        for j, Wj in enumerate(precoders.W):
            if j != k:
                G[k, j, :Wj.shape[1]] = np.sum(np.abs(ch.H @ Wj) ** 2, axis=0)
    G.setflags(write=False)
    return InterferenceGains(G=G)


def beta_mask(lam, beta_threshold: float) -> np.ndarray:
    """1 where the eigenvalue reaches the threshold, 0 otherwise."""
    if beta_threshold < 0:
        raise ValueError("beta_threshold must be non-negative")
    return (np.asarray(lam) >= beta_threshold).astype(np.int8)


def snr_to_noise(snr_db: float, p_total: float, n_sub: int) -> float:
    """Noise power for ``SNR = P_total / (N * N0)`` with ``N`` sub-channels."""
    return p_total / (n_sub * 10.0 ** (snr_db / 10.0))


def _per_user(value, K: int, name: str) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(value, dtype=float), (K,)).copy()
    if np.any(arr < 0):
        raise ValueError(f"{name} must be non-negative")
    return arr


@dataclass(frozen=True, eq=False)
class Scenario:
    """Immutable problem instance for one coherence-interval snapshot."""

    classes: tuple
    channels: tuple
    precoders: Precoders
    gains: InterferenceGains
    beta: np.ndarray
    p_total: float
    bandwidth: float
    c_min: np.ndarray
    s_min: np.ndarray
    seed: int
    n_t: int
    beta_threshold: float = 0.05

    def __post_init__(self):
        if self.p_total <= 0:
            raise ValueError("P_total must be positive")
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")

    @property
    def K(self) -> int:
        return len(self.classes)

    @cached_property
    def lam(self) -> np.ndarray:
        """Eigenvalues padded to ``(K, R)`` with zeros."""
        out = np.zeros(self.beta.shape)
        for k, ch in enumerate(self.channels):
            out[k, :ch.rank] = ch.lam[:ch.rank]
        out.setflags(write=False)
        return out

    @cached_property
    def valid(self) -> np.ndarray:
        """True for sub-channels that exist (``i < r_k``)."""
        return np.arange(self.beta.shape[1])[None, :] < self.ranks[:, None]

    @cached_property
    def n0(self) -> np.ndarray:
        return np.array([ch.n0 for ch in self.channels])

    @cached_property
    def c0(self) -> np.ndarray:
        return np.array([ch.c0 for ch in self.channels])

    @cached_property
    def alpha(self) -> np.ndarray:
        return np.array([c.alpha for c in self.classes])

    @cached_property
    def tags(self) -> tuple:
        return tuple(c.tag for c in self.classes)

    @cached_property
    def class_rows(self) -> dict:
        """Boolean user mask per service class, present classes only."""
        rows = {tag: np.array([t is tag for t in self.tags]) for tag in Service}
        return {tag: m for tag, m in rows.items() if m.any()}

    @cached_property
    def comm_users(self) -> np.ndarray:
        return np.array([c.serves_communication for c in self.classes])

    @cached_property
    def sense_users(self) -> np.ndarray:
        return np.array([c.serves_sensing for c in self.classes])

    @cached_property
    def ranks(self) -> np.ndarray:
        return np.array([ch.rank for ch in self.channels])

    @property
    def n_sub(self) -> int:
        """Total number of sub-channels ``N = sum_k r_k``."""
        return int(self.ranks.sum())

    @property
    def n_active(self) -> int:
        return int(self.beta.sum())

    def require_active(self) -> None:
        if self.n_active == 0:
            raise DegenerateScenarioError("every sub-channel is masked out")

    # -- derived instances -------------------------------------------------

    def with_noise(self, n0, c0=None) -> "Scenario":
        """Same channels and precoders under new noise/clutter powers."""
        n0 = _per_user(n0, self.K, "N0")
        c0 = n0 if c0 is None else _per_user(c0, self.K, "C0")
        channels = tuple(replace(ch, n0=float(a), c0=float(b))
                         for ch, a, b in zip(self.channels, n0, c0))
        return replace(self, channels=channels)

    def with_budget(self, p_total: float) -> "Scenario":
        return replace(self, p_total=float(p_total))

    def with_qos(self, c_min, s_min) -> "Scenario":
        return replace(self, c_min=_per_user(c_min, self.K, "c_min"),
                       s_min=_per_user(s_min, self.K, "s_min"))

    def without_interference(self) -> "Scenario":
        """Copy with every cross-user gain forced to zero."""
        G = np.zeros_like(self.gains.G)
        G.setflags(write=False)
        return replace(self, gains=InterferenceGains(G=G))

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "version": SCHEMA_VERSION,
            "seed": int(self.seed),
            "n_t": int(self.n_t),
            "bandwidth_hz": float(self.bandwidth),
            "p_total_w": float(self.p_total),
            "beta_threshold": float(self.beta_threshold),
            "users": [
                {
                    "class": cls.tag.value,
                    "alpha": float(cls.alpha),
                    "n_r": int(ch.n_r),
                    "n0_w": float(ch.n0),
                    "c0_w": float(ch.c0),
                    "c_min_bps": float(cm),
                    "s_min": float(sm),
                }
                for cls, ch, cm, sm in zip(self.classes, self.channels, self.c_min, self.s_min)
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        if data.get("version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported scenario schema version {data.get('version')!r}")
        users = data["users"]
        return make_scenario(
            classes=[UserClass(Service(u["class"]), float(u["alpha"])) for u in users],
            n_t=int(data["n_t"]),
            n_r=[int(u["n_r"]) for u in users],
            seed=int(data["seed"]),
            p_total=float(data["p_total_w"]),
            bandwidth=float(data["bandwidth_hz"]),
            n0=[float(u["n0_w"]) for u in users],
            c0=[float(u["c0_w"]) for u in users],
            c_min=[float(u["c_min_bps"]) for u in users],
            s_min=[float(u["s_min"]) for u in users],
            beta_threshold=float(data["beta_threshold"]),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "Scenario":
        return cls.from_dict(json.loads(Path(path).read_text()))


def assemble(classes: Sequence[UserClass], channels: Sequence[UserChannel], *, seed: int,
             p_total: float, bandwidth: float = 1e6, c_min=0.0, s_min=0.0,
             beta_threshold: float = 0.05) -> Scenario:
    """Build a scenario from explicit channels.

    ``beta_threshold`` is relative: sub-channel ``i`` of user ``k`` is kept
    when ``lambda[k, i] >= beta_threshold * mean(lambda[k])``.
    """
    classes = tuple(classes)
    channels = tuple(channels)
    K = len(channels)
    precoders = build_precoders(channels, classes)
    gains = interference_gains(channels, precoders)
    R = gains.G.shape[2]
    beta = np.zeros((K, R), dtype=np.int8)
    for k, ch in enumerate(channels):
        beta[k, :ch.rank] = beta_mask(ch.lam[:ch.rank], beta_threshold * float(np.mean(ch.lam)))
    beta.setflags(write=False)
    return Scenario(
        classes=classes, channels=channels, precoders=precoders, gains=gains, beta=beta,
        p_total=float(p_total), bandwidth=float(bandwidth),
        c_min=_per_user(c_min, K, "c_min"), s_min=_per_user(s_min, K, "s_min"),
        seed=int(seed), n_t=channels[0].n_t, beta_threshold=float(beta_threshold),
    )


def make_scenario(classes: Sequence[UserClass], n_t: int, n_r, seed: int, p_total: float,
                  bandwidth: float = 1e6, n0=1.0, c0=None, c_min=0.0, s_min=0.0,
                  beta_threshold: float = 0.05) -> Scenario:
    """Generate a seeded Rayleigh scenario; user ``k`` uses stream id ``k``.

    ``c0`` defaults to ``n0`` per user.
    """
    K = len(classes)
    if K == 0:
        raise ValueError("at least one user is required")
    n_r = np.broadcast_to(np.asarray(n_r, dtype=int), (K,))
    n0 = _per_user(n0, K, "N0")
    c0 = n0 if c0 is None else _per_user(c0, K, "C0")
    channels = [generate_channel(int(n_r[k]), n_t, seed, k, n0=n0[k], c0=c0[k]) for k in range(K)]
    return assemble(classes, channels, seed=seed, p_total=p_total, bandwidth=bandwidth,
                    c_min=c_min, s_min=s_min, beta_threshold=beta_threshold)


def class_split(n_comm: int, n_sense: int, n_jrc: int, alpha_jrc: float = 0.5) -> list:
    """Class list ordered communication, sensing, JRC."""
    return ([UserClass.communication()] * n_comm + [UserClass.sensing()] * n_sense
            + [UserClass.jrc(alpha_jrc)] * n_jrc)
