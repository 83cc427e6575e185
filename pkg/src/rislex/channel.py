"""Scenario geometry and Saleh-Valenzuela channel synthesis.

Coordinate conventions: the BS carries a uniform linear array along the
y-axis, the RIS is a uniform planar array in the y-z plane.  A propagation
direction with unit vector ``u`` has azimuth ``atan2(u_y, u_x)`` and
elevation ``asin(u_z)``; the array phase progressions use the direction
cosines ``cos(el)*sin(az)`` (y-axis) and ``sin(el)`` (z-axis).  Element
patterns are isotropic, so the RIS has no back-lobe suppression.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sysmodel import ChannelSet, SystemConfig

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class ChannelConfig:
    bs_pos: tuple = (0.0, 0.0, 10.0)
    ris_pos: tuple = (5.0, 0.0, 10.0)
    user_low: tuple = (30.0, -75.0, 0.0)
    user_high: tuple = (150.0, 75.0, 2.0)
    center_freq: float = 28e9
    n_paths: int = 4
    nlos_offset_db: float = 15.0
    fading_var_db: float = 1.0  # variance of the dB-domain gain perturbation
    w_low: float = 1.0
    w_high: float = 4.0

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError(f"n_paths must be >= 1, got {self.n_paths}")
        if self.fading_var_db < 0:
            raise ValueError("fading_var_db must be nonnegative")
        if not 0 < self.w_low <= self.w_high:
            raise ValueError("weights need 0 < w_low <= w_high")
        if any(lo > hi for lo, hi in zip(self.user_low, self.user_high)):
            raise ValueError("user_low must be componentwise <= user_high")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.center_freq


@dataclass
class ScenarioGeometry:
    bs_pos: np.ndarray
    ris_pos: np.ndarray
    user_pos: np.ndarray  # (K, 3)
    bs_spacing: float
    ris_spacing: float


@dataclass
class PathSet:
    """Multipath description of one link; path 0 is the LoS component.

    Angles are (azimuth, elevation) pairs in radians, one row per path.
    """

    gains: np.ndarray
    tx_angles: np.ndarray
    rx_angles: np.ndarray

    @property
    def L(self) -> int:
        return self.gains.size


def ris_shape(N: int) -> tuple:
    """Horizontal x vertical element counts, as square as N allows."""
    nv = int(np.floor(np.sqrt(N)))
    while N % nv:
        nv -= 1
    return N // nv, nv


def direction_angles(u) -> tuple:
    u = np.asarray(u, dtype=float)
    u = u / np.linalg.norm(u)
    return float(np.arctan2(u[1], u[0])), float(np.arcsin(np.clip(u[2], -1.0, 1.0)))


def direction_cosines(az, el) -> tuple:
    return np.cos(el) * np.sin(az), np.sin(el)


def array_response(kind: str, size, spacing: float, wavelength: float, cosines) -> np.ndarray:
    """Unit-norm steering vector of a linear or planar array.

    Args:
        kind: ``"linear"`` or ``"planar"``.
        size: Q for a linear array, (Q_h, Q_v) for a planar one.
        spacing: element spacing in metres (both axes for planar arrays).
        wavelength: wavelength of the carrier the response is evaluated at.
        cosines: direction cosine along the array axis (linear) or the pair
            (horizontal, vertical) for planar arrays.
    """
    k = 2.0 * np.pi * spacing / wavelength
    if kind == "linear":
        Q = int(size)
        return np.exp(1j * k * np.arange(Q) * float(cosines)) / np.sqrt(Q)
    if kind == "planar":
        qh, qv = (int(s) for s in size)
        ch, cv = cosines
        ah = np.exp(1j * k * np.arange(qh) * ch) / np.sqrt(qh)
        av = np.exp(1j * k * np.arange(qv) * cv) / np.sqrt(qv)
        return np.kron(ah, av)
    raise ValueError(f"unknown array kind {kind!r}")


def free_space_gain(d: float, f: float) -> float:
    """Free-space amplitude gain lambda / (4 pi d)."""
    if d <= 0:
        raise ValueError(f"link distance must be positive, got {d}")
    if f <= 0:
        raise ValueError(f"frequency must be positive, got {f}")
    return SPEED_OF_LIGHT / (4.0 * np.pi * d * f)


def draw_paths(rng, tx_pos, rx_pos, tx_kind: str, f: float, chan: ChannelConfig) -> PathSet:
    """Draw one link's LoS + NLoS paths at carrier ``f``.

    ``tx_kind`` is the transmitting array type; it sets the visible half-space
    the NLoS departure angles are drawn from.  NLoS arrival angles are drawn
    over the planar half-space (only the RIS receives through an array).
    """
    tx_pos = np.asarray(tx_pos, dtype=float)
    rx_pos = np.asarray(rx_pos, dtype=float)
    d = float(np.linalg.norm(rx_pos - tx_pos))
    amp0 = free_space_gain(d, f)
    L = chan.n_paths
    fading_std = np.sqrt(chan.fading_var_db)

    tx = np.empty((L, 2))
    rx = np.empty((L, 2))
    tx[0] = direction_angles(rx_pos - tx_pos)
    rx[0] = direction_angles(tx_pos - rx_pos)
    if L > 1:
        tx[1:, 0] = rng.uniform(-np.pi / 2, np.pi / 2, L - 1)
        tx[1:, 1] = 0.0 if tx_kind == "linear" else rng.uniform(-np.pi / 2, np.pi / 2, L - 1)
        rx[1:, 0] = rng.uniform(-np.pi / 2, np.pi / 2, L - 1)
        rx[1:, 1] = rng.uniform(-np.pi / 2, np.pi / 2, L - 1)

    fading_db = rng.normal(0.0, fading_std, L) if fading_std > 0 else np.zeros(L)
    mag = np.full(L, amp0)
    mag[1:] *= 10.0 ** (-chan.nlos_offset_db / 20.0)
    mag *= 10.0 ** (fading_db / 20.0)
    phase = np.empty(L)
    phase[0] = -2.0 * np.pi * d * f / SPEED_OF_LIGHT
    phase[1:] = rng.uniform(0.0, 2.0 * np.pi, L - 1)
    return PathSet(gains=mag * np.exp(1j * phase), tx_angles=tx, rx_angles=rx)


def assemble_channel(gains, tx_vectors, rx_vectors) -> np.ndarray:
    """sqrt(Q_T Q_R / L) * sum_l alpha_l a_R,l a_T,l^H  as a (Q_R, Q_T) matrix.

    ``tx_vectors`` is (L, Q_T), ``rx_vectors`` is (L, Q_R).
    """
    gains = np.asarray(gains)
    tx_vectors = np.atleast_2d(tx_vectors)
    rx_vectors = np.atleast_2d(rx_vectors)
    L, qt = tx_vectors.shape
    qr = rx_vectors.shape[1]
    scale = np.sqrt(qt * qr / L)
    return scale * np.einsum("l,lr,lt->rt", gains, rx_vectors, tx_vectors.conj())


def _responses(kind, size, spacing, wavelength, angles):
    return np.array(
        [array_response(kind, size, spacing, wavelength, _cos(kind, az, el)) for az, el in angles]
    )


def _cos(kind, az, el):
    cy, cz = direction_cosines(az, el)
    return cy if kind == "linear" else (cy, cz)


def generate_scenario(rng, cfg: SystemConfig, chan: ChannelConfig = ChannelConfig()):
    """Random user drop, weights and per-user channels at each FDMA carrier.

    Returns:
        (ScenarioGeometry, ChannelSet)
    """
    spacing = chan.wavelength / 2.0
    users = rng.uniform(chan.user_low, chan.user_high, size=(cfg.K, 3))
    w = rng.uniform(chan.w_low, chan.w_high, size=cfg.K)
    geom = ScenarioGeometry(
        bs_pos=np.asarray(chan.bs_pos, dtype=float),
        ris_pos=np.asarray(chan.ris_pos, dtype=float),
        user_pos=users,
        bs_spacing=spacing,
        ris_spacing=spacing,
    )
    shape = ris_shape(cfg.N)
    H1 = np.empty((cfg.K, cfg.N, cfg.M), dtype=complex)
    h2 = np.empty((cfg.K, cfg.N), dtype=complex)
    for k, f in enumerate(cfg.carriers):
        lam = SPEED_OF_LIGHT / f
        ps = draw_paths(rng, geom.bs_pos, geom.ris_pos, "linear", f, chan)
        a_t = _responses("linear", cfg.M, spacing, lam, ps.tx_angles)
        a_r = _responses("planar", shape, spacing, lam, ps.rx_angles)
        H1[k] = assemble_channel(ps.gains, a_t, a_r)

        ps = draw_paths(rng, geom.ris_pos, users[k], "planar", f, chan)
        a_t = _responses("planar", shape, spacing, lam, ps.tx_angles)
        h2[k] = assemble_channel(ps.gains, a_t, np.ones((ps.L, 1)))[0]
    return geom, ChannelSet(H1=H1, h2=h2, w=w)
