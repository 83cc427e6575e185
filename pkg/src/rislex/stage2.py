"""Stage 2: min-weighted-rate maximization under an EE floor.

Starting from the Stage-1 point, each outer round allocates power by the
max-min program, ascends a log-sum-exp surrogate of the fairness objective
over the RIS phases (rejecting steps that break the EE floor) and re-aligns
the precoders.  A phase/precoder update is kept only if the max-min power
step at the new channel gains does not lower the fairness, so the recorded
fairness trace is nondecreasing.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .solvers import InfeasibleError, maxmin_power
from .stage1 import AscentResult, align_precoders, gradient_ascent, rate_phase_jacobian
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
    total_power,
)


def _scaled(rates_, w, bandwidth):
    return np.asarray(rates_, dtype=float) / (np.asarray(w, dtype=float) * bandwidth)


def lse_fairness(rates_, w, zeta: float, bandwidth: float = 1.0) -> float:
    """Smooth lower bound of min_k R_k / w_k.

    -(B/zeta) ln sum_k exp(-zeta R_k / (w_k B)); ``zeta`` acts on weighted
    spectral efficiencies.  Satisfies min - B ln(K)/zeta <= value <= min.
    """
    x = _scaled(rates_, w, bandwidth)
    m = x.min()
    return float(bandwidth * (m - np.log(np.sum(np.exp(-zeta * (x - m)))) / zeta))


def lse_weights(rates_, w, zeta: float, bandwidth: float = 1.0) -> np.ndarray:
    """Softmax weights exp(-zeta x_k) / sum_j exp(-zeta x_j); they sum to one."""
    x = _scaled(rates_, w, bandwidth)
    e = np.exp(-zeta * (x - x.min()))
    return e / e.sum()


def lse_phase_gradient(theta, p, dec: GainDecomposition, w, zeta: float, cfg: SystemConfig) -> np.ndarray:
    """Gradient of :func:`lse_fairness` w.r.t. the phases, bit/s per rad."""
    r = rates(p, gains_from_decomposition(dec, theta), cfg)
    s = lse_weights(r, w, zeta, cfg.bandwidth)
    jac = rate_phase_jacobian(theta, p, dec, cfg)
    return (s / np.asarray(w, dtype=float)) @ jac


def guarded_ascend_phases(theta0, p, V, ch: ChannelSet, eta_floor: float, cfg: SystemConfig) -> AscentResult:
    """LSE-fairness ascent that never accepts a step with EE below ``eta_floor``.

    Steps violating the floor are halved up to 20 times and then rejected,
    which ends the ascent.  A start point that is itself below the floor is
    returned unchanged unless some trial step lands back above it.
    """
    dec = decompose(ch, V)
    B = cfg.bandwidth
    ptot = total_power(p, cfg)

    need = eta_floor * ptot

    def objective(theta):
        r = rates(p, gains_from_decomposition(dec, theta), cfg)
        return lse_fairness(r, ch.w, cfg.zeta, B) / B

    def gradient(theta):
        return lse_phase_gradient(theta, p, dec, ch.w, cfg.zeta, cfg) / B

    def guard(theta):
        return float(np.sum(rates(p, gains_from_decomposition(dec, theta), cfg))) >= need

    return gradient_ascent(objective, gradient, theta0, cfg, guard=guard)


def stage2_optimize(ch: ChannelSet, cfg: SystemConfig, stage1_out: SolutionReport, rho: Optional[float] = None) -> SolutionReport:
    """Fairness maximization subject to EE >= rho * eta_star.

    ``rho`` defaults to ``cfg.rho``.  With ``cfg.stage2_phase_reset`` every
    phase ascent restarts from zero phases, otherwise from the current ones.
    A round whose follow-up power step is infeasible or lowers the fairness
    is discarded and ends the loop.  Trace index 0 holds the Stage-1 point,
    index 1 the first max-min power allocation, later entries one
    (phases, precoders, power) round each.
    """
    rho = cfg.rho if rho is None else rho
    eta_star = float(stage1_out.stage1_ee_star if stage1_out.stage1_ee_star is not None else stage1_out.ee)
    floor = rho * eta_star
    w = ch.w

    def evaluate(p, gains):
        return fairness(rates(p, gains, cfg), w), ee_from_gains(p, gains, cfg)

    theta = np.asarray(stage1_out.theta, dtype=float)
    V = stage1_out.V
    gains = effective_gains(theta, V, ch)
    p = stage1_out.p
    f_cur, ee_cur = evaluate(p, gains)
    f_trace, ee_trace = [f_cur], [ee_cur]

    mm = maxmin_power(gains, w, floor, cfg)
    f_new, ee_new = evaluate(mm.p, gains)
    if f_new >= f_cur:
        p, f_cur, ee_cur = mm.p, f_new, ee_new
    f_trace.append(f_cur)
    ee_trace.append(ee_cur)

    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        start = np.zeros_like(theta) if cfg.stage2_phase_reset else theta
        theta_new = guarded_ascend_phases(start, p, V, ch, floor, cfg).theta
        V_new = align_precoders(theta_new, ch)
        gains_new = effective_gains(theta_new, V_new, ch)
        try:
            mm = maxmin_power(gains_new, w, floor, cfg)
        except InfeasibleError:
            converged = True
            break
        f_new, ee_new = evaluate(mm.p, gains_new)
        if f_new < f_cur:
            converged = True
            break
        theta, V, p = theta_new, V_new, mm.p
        prev, f_cur, ee_cur = f_cur, f_new, ee_new
        f_trace.append(f_cur)
        ee_trace.append(ee_cur)
        if abs(f_cur - prev) <= cfg.epsilon * abs(f_cur):
            converged = True
            break

    return make_report(
        p, theta, V, ch, cfg,
        ee_trace=ee_trace,
        fairness_trace=f_trace,
        stage1_ee_star=eta_star,
        converged=converged,
        iterations=it,
    )
