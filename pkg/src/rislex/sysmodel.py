"""System model for the RIS-assisted MU-MISO mmWave downlink.

Domain containers and the closed-form performance metrics: per-user rate,
total consumed power, energy efficiency (EE), min-weighted-rate fairness and
Jain's index.  The cascaded channel gain is available both by direct complex
evaluation and in the expanded cosine form that the phase gradients are built
on.

Users are served on orthogonal FDMA bands, so there is no inter-user
interference in any rate expression.  All quantities are in linear units
(W, Hz, bit/s); dB conversion happens once, at configuration time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class SystemConfig:
    """Scenario constants and algorithm parameters (linear units)."""

    M: int = 16
    N: int = 64
    K: int = 4
    bandwidth: float = 125e6  # per-user band, Hz
    carriers: tuple = ()  # per-user carrier frequencies, Hz
    p_max: float = 10 ** (25 / 10) * 1e-3  # W
    noise_power: float = 10 ** (-130 / 10) * 1e-3  # W, per user band
    p_bs: float = 10 ** (9 / 10)  # W
    xi: float = 1.2
    p_theta: float = 10 ** (1 / 10) * 1e-3  # W per RIS element
    p_ue: tuple = ()  # W per user
    rho: float = 0.85
    zeta: float = 50.0  # LSE sharpness, applied to rates in bit/s/Hz
    alpha: float = 1e-2  # initial phase step, rad per (bit/s/Hz)/rad
    epsilon: float = 1e-3
    max_iters: int = 100
    phase_max_iters: int = 500
    dinkelbach_warm_start: bool = True
    stage2_phase_reset: bool = True

    def __post_init__(self):
        if not self.carriers:
            object.__setattr__(self, "carriers", fdma_carriers(self.K, 28e9, self.bandwidth))
        if not self.p_ue:
            object.__setattr__(self, "p_ue", (10 ** (10 / 10) * 1e-3,) * self.K)
        object.__setattr__(self, "carriers", tuple(float(f) for f in self.carriers))
        object.__setattr__(self, "p_ue", tuple(float(x) for x in self.p_ue))
        self.validate()

    def validate(self):
        for name in ("M", "N", "K"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("bandwidth", "p_max", "noise_power", "zeta", "alpha", "epsilon"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [0, 1], got {self.rho}")
        if self.xi < 1.0:
            raise ValueError(f"xi must be >= 1, got {self.xi}")
        if min(self.p_bs, self.p_theta, *self.p_ue) < 0:
            raise ValueError("static powers must be nonnegative")
        if len(self.carriers) != self.K or len(self.p_ue) != self.K:
            raise ValueError("carriers and p_ue need one entry per user")
        if self.max_iters < 1 or self.phase_max_iters < 1:
            raise ValueError("iteration caps must be >= 1")

    @property
    def static_power(self) -> float:
        """Power drawn regardless of the transmit allocation, W."""
        return self.p_bs + self.N * self.p_theta + sum(self.p_ue)


def fdma_carriers(K: int, center: float, bandwidth: float) -> tuple:
    """Carrier of each user's band, stacked symmetrically around ``center``."""
    return tuple(center + (k - (K + 1) / 2) * bandwidth for k in range(1, K + 1))


def db_to_linear(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def dbm_to_watt(x_dbm):
    return 1e-3 * db_to_linear(x_dbm)


@dataclass
class ChannelSet:
    """Per-user cascaded channel components.

    Attributes:
        H1: (K, N, M) BS->RIS matrices, one per user carrier.
        h2: (K, N) RIS->user row vectors.
        w: (K,) positive fairness weights.
    """

    H1: np.ndarray
    h2: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        self.H1 = np.asarray(self.H1, dtype=complex)
        self.h2 = np.asarray(self.h2, dtype=complex)
        self.w = np.asarray(self.w, dtype=float)
        K, N, _ = self.H1.shape
        if self.h2.shape != (K, N) or self.w.shape != (K,):
            raise ValueError(
                f"inconsistent channel shapes H1={self.H1.shape} h2={self.h2.shape} w={self.w.shape}"
            )
        if np.any(self.w <= 0):
            raise ValueError("fairness weights must be positive")

    @property
    def K(self) -> int:
        return self.H1.shape[0]

    @property
    def N(self) -> int:
        return self.H1.shape[1]

    @property
    def M(self) -> int:
        return self.H1.shape[2]


@dataclass
class GainDecomposition:
    """Magnitude/phase split of the cascaded channel for fixed precoders.

    ``b[k] * exp(1j*gamma[k]) == H1[k] @ v_k`` and
    ``c[k] * exp(1j*mu[k]) == h2[k]``; ``psi = gamma + mu``.
    """

    b: np.ndarray
    c: np.ndarray
    psi: np.ndarray

    @property
    def bc(self) -> np.ndarray:
        return self.b * self.c


def decompose(ch: ChannelSet, V: np.ndarray) -> GainDecomposition:
    Hv = np.einsum("knm,mk->kn", ch.H1, V)
    return GainDecomposition(
        b=np.abs(Hv),
        c=np.abs(ch.h2),
        psi=np.angle(Hv) + np.angle(ch.h2),
    )


def uniform_precoders(M: int, K: int) -> np.ndarray:
    return np.full((M, K), 1.0 / np.sqrt(M), dtype=complex)


def wrap_phases(theta) -> np.ndarray:
    """Canonical [0, 2*pi) representative of each angle."""
    out = np.mod(np.asarray(theta, dtype=float), TWO_PI)
    out[out >= TWO_PI] = 0.0
    return out


# -- metrics -----------------------------------------------------------------


def user_rate(p_k, h_k, cfg: SystemConfig):
    """Shannon rate B*log2(1 + p*h/sigma^2) of one FDMA user, bit/s."""
    return cfg.bandwidth * np.log2(1.0 + np.asarray(p_k) * np.asarray(h_k) / cfg.noise_power)


def rates(p, gains, cfg: SystemConfig) -> np.ndarray:
    return user_rate(np.asarray(p, dtype=float), np.asarray(gains, dtype=float), cfg)


def total_power(p, cfg: SystemConfig) -> float:
    return cfg.p_bs + cfg.xi * float(np.sum(p)) + cfg.N * cfg.p_theta + sum(cfg.p_ue)


def ee_from_gains(p, gains, cfg: SystemConfig) -> float:
    return float(np.sum(rates(p, gains, cfg))) / total_power(p, cfg)


def effective_gains(theta, V, ch: ChannelSet) -> np.ndarray:
    """|h2_k diag(e^{j theta}) H1_k v_k|^2 for every user, by direct evaluation."""
    Hv = np.einsum("knm,mk->kn", ch.H1, V)
    s = np.einsum("kn,n,kn->k", ch.h2, np.exp(1j * np.asarray(theta, dtype=float)), Hv)
    return np.abs(s) ** 2


def effective_gain_direct(theta, k: int, V, ch: ChannelSet) -> float:
    row = ch.h2[k] * np.exp(1j * np.asarray(theta, dtype=float))
    return float(np.abs(row @ ch.H1[k] @ V[:, k]) ** 2)


def effective_gain_expanded(dec: GainDecomposition, theta, k: int) -> float:
    """Cascaded gain from the pairwise cosine expansion.

    sum_i (b_i c_i)^2 + 2 sum_{m<l} b_m c_m b_l c_l cos(theta_m - theta_l + psi_m - psi_l)
    """
    bc = dec.bc[k]
    x = np.asarray(theta, dtype=float) + dec.psi[k]
    m, l = np.triu_indices(bc.size, k=1)
    cross = bc[m] * bc[l] * np.cos(x[m] - x[l])
    return float(np.sum(bc**2) + 2.0 * np.sum(cross))


def gains_from_decomposition(dec: GainDecomposition, theta) -> np.ndarray:
    """All users' gains in O(NK) from the decomposition (same value as the expansion)."""
    u = dec.bc * np.exp(1j * (np.asarray(theta, dtype=float) + dec.psi))
    return np.abs(u.sum(axis=1)) ** 2


def energy_efficiency(p, theta, V, ch: ChannelSet, cfg: SystemConfig) -> float:
    """Sum rate over total consumed power, bit/s/J."""
    return ee_from_gains(p, effective_gains(theta, V, ch), cfg)


def fairness(rates_, w) -> float:
    """Minimum weighted rate min_k R_k / w_k."""
    return float(np.min(np.asarray(rates_, dtype=float) / np.asarray(w, dtype=float)))


def jain_index(rates_, w) -> float:
    """Jain's index of the weighted rates; 1.0 when every rate is zero."""
    r = np.asarray(rates_, dtype=float) / np.asarray(w, dtype=float)
    denom = r.size * np.sum(r**2)
    if denom == 0.0:
        return 1.0
    return float(np.sum(r) ** 2 / denom)


@dataclass
class SolutionReport:
    p: np.ndarray
    theta: np.ndarray
    V: np.ndarray
    rates: np.ndarray
    ee: float
    min_weighted_rate: float
    jain: float
    ee_trace: list = field(default_factory=list)
    fairness_trace: list = field(default_factory=list)
    stage1_ee_star: Optional[float] = None
    converged: bool = True
    iterations: int = 0


def make_report(p, theta, V, ch: ChannelSet, cfg: SystemConfig, **extra) -> SolutionReport:
    r = rates(p, effective_gains(theta, V, ch), cfg)
    return SolutionReport(
        p=np.asarray(p, dtype=float).copy(),
        theta=wrap_phases(theta),
        V=np.asarray(V).copy(),
        rates=r,
        ee=float(r.sum()) / total_power(p, cfg),
        min_weighted_rate=fairness(r, ch.w),
        jain=jain_index(r, ch.w),
        **extra,
    )
