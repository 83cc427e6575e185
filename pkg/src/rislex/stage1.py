"""Stage 1: energy-efficiency maximization by alternating optimization.

Each outer round runs, in order, Dinkelbach power allocation, sum-rate
gradient ascent on the RIS phases and beam-aligned analog precoders, then
re-evaluates the EE.  Every block is monotone in EE, so the EE trace is
nondecreasing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .solvers import dinkelbach
from .sysmodel import (
    ChannelSet,
    GainDecomposition,
    SolutionReport,
    SystemConfig,
    decompose,
    effective_gains,
    ee_from_gains,
    fairness,
    gains_from_decomposition,
    make_report,
    rates,
    uniform_precoders,
)

LN2 = np.log(2.0)
ARMIJO_C = 1e-4
MIN_STEP = 1e-8
MAX_STEP = 1e12


def rate_phase_jacobian(theta, p, dec: GainDecomposition, cfg: SystemConfig) -> np.ndarray:
    """(K, N) matrix of dR_k/dtheta_n in bit/s per rad.

    dh_k/dtheta_n = -2 b_n c_n sum_i b_i c_i sin(theta_n - theta_i + psi_n - psi_i),
    evaluated as -2 Im(conj(S_k) u_{n,k}) with u = b c e^{j(theta + psi)} and
    S_k = sum_n u_{n,k}; the i = n term vanishes either way.
    """
    p = np.asarray(p, dtype=float)
    u = dec.bc * np.exp(1j * (np.asarray(theta, dtype=float) + dec.psi))
    S = u.sum(axis=1)
    h = np.abs(S) ** 2
    dh = -2.0 * np.imag(np.conj(S)[:, None] * u)
    coef = cfg.bandwidth * p / (LN2 * (cfg.noise_power + p * h))
    return coef[:, None] * dh


def sum_rate_phase_gradient(theta, p, dec: GainDecomposition, cfg: SystemConfig) -> np.ndarray:
    return rate_phase_jacobian(theta, p, dec, cfg).sum(axis=0)


@dataclass
class AscentResult:
    theta: np.ndarray
    trace: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def gradient_ascent(
    objective: Callable[[np.ndarray], float],
    gradient: Callable[[np.ndarray], np.ndarray],
    theta0,
    cfg: SystemConfig,
    guard: Optional[Callable[[np.ndarray], bool]] = None,
    max_guard_shrinks: int = 20,
) -> AscentResult:
    """theta <- theta + t * grad with an Armijo line search.

    The first trial step is ``cfg.alpha``, later ones reuse the previous
    accepted step.  A trial step that fails the Armijo test is halved (floor
    ``MIN_STEP``); one that passes is doubled for as long as the objective
    keeps improving, so the step tracks the local curvature whatever the
    gradient scale.  When ``guard`` is given, candidates failing it count as
    rejections; after ``max_guard_shrinks`` guard failures in one iteration
    the ascent stops.  Converges once ``||dtheta||_2 < epsilon``.
    """
    theta = np.array(theta0, dtype=float)
    f = objective(theta)
    trace = [f]
    step = cfg.alpha

    def ok(t, g, gg):
        cand = theta + t * g
        fc = objective(cand)
        return cand, fc, fc >= f + ARMIJO_C * t * gg

    for it in range(1, cfg.phase_max_iters + 1):
        g = gradient(theta)
        gg = float(g @ g)
        if gg == 0.0:
            return AscentResult(theta, trace, it, True)
        shrinks = 0
        accepted = None
        while step >= MIN_STEP:
            cand, fc, armijo = ok(step, g, gg)
            if armijo:
                if guard is None or guard(cand):
                    accepted = (cand, fc)
                    break
                shrinks += 1
                if shrinks > max_guard_shrinks:
                    break
            step *= 0.5
        if accepted is None:
            return AscentResult(theta, trace, it, True)
        if shrinks == 0:
            while 2.0 * step <= MAX_STEP:
                cand, fc, armijo = ok(2.0 * step, g, gg)
                if not (armijo and fc > accepted[1]) or (guard is not None and not guard(cand)):
                    break
                step *= 2.0
                accepted = (cand, fc)
        cand, fc = accepted
        moved = float(np.linalg.norm(cand - theta))
        theta, f = cand, fc
        trace.append(f)
        if moved < cfg.epsilon:
            return AscentResult(theta, trace, it, True)
    return AscentResult(theta, trace, cfg.phase_max_iters, False)


def ascend_phases_sumrate(theta0, p, V, ch: ChannelSet, cfg: SystemConfig) -> AscentResult:
    """Sum-rate gradient ascent on the RIS phases for fixed power and precoders.

    The objective is handled in bit/s/Hz (rates divided by B) so that
    ``cfg.alpha`` is a bandwidth-independent step.
    """
    dec = decompose(ch, V)
    B = cfg.bandwidth

    def objective(theta):
        return float(np.sum(rates(p, gains_from_decomposition(dec, theta), cfg))) / B

    def gradient(theta):
        return sum_rate_phase_gradient(theta, p, dec, cfg) / B

    return gradient_ascent(objective, gradient, theta0, cfg)


def align_precoder(theta, ch: ChannelSet, k: int) -> np.ndarray:
    """Constant-modulus precoder co-phased with user k's effective row.

    With h2_k diag(e^{j theta}) H1_k = [s_m e^{j beta_m}], v_m = e^{-j beta_m}/sqrt(M)
    achieves (sum_m s_m)^2 / M, the maximum over unit-modulus precoders.  A
    zero row gives beta = 0, i.e. the all-ones precoder.
    """
    row = (ch.h2[k] * np.exp(1j * np.asarray(theta, dtype=float))) @ ch.H1[k]
    return np.exp(-1j * np.angle(row)) / np.sqrt(ch.M)


def align_precoders(theta, ch: ChannelSet) -> np.ndarray:
    rows = np.einsum("kn,knm->km", ch.h2 * np.exp(1j * np.asarray(theta, dtype=float)), ch.H1)
    return (np.exp(-1j * np.angle(rows)) / np.sqrt(ch.M)).T


def stage1_optimize(ch: ChannelSet, cfg: SystemConfig):
    """Alternate power, phases and precoders until the EE settles.

    Starts from zero phases and uniform precoders.  The loop stops once the
    relative EE change drops to ``cfg.epsilon``.

    Returns:
        (SolutionReport, eta_star)
    """
    theta = np.zeros(ch.N)
    V = uniform_precoders(ch.M, ch.K)
    p = None
    ee_trace = [0.0]
    fair_trace = [0.0]
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        gains = effective_gains(theta, V, ch)
        dk = dinkelbach(gains, cfg, p0=p if cfg.dinkelbach_warm_start else None)
        p = dk.p
        theta = ascend_phases_sumrate(theta, p, V, ch, cfg).theta
        V = align_precoders(theta, ch)
        gains = effective_gains(theta, V, ch)
        ee = ee_from_gains(p, gains, cfg)
        ee_trace.append(ee)
        fair_trace.append(fairness(rates(p, gains, cfg), ch.w))
        if abs(ee - ee_trace[-2]) <= cfg.epsilon * abs(ee):
            converged = True
            break
    report = make_report(
        p, theta, V, ch, cfg,
        ee_trace=ee_trace,
        fairness_trace=fair_trace,
        converged=converged,
        iterations=it,
    )
    report.stage1_ee_star = report.ee
    return report, report.ee
