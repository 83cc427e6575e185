"""Power-allocation engines for fixed phases and precoders.

* :func:`waterfill` -- KKT closed form of
  ``max sum_k B log2(1 + p_k h_k / sigma^2) - price * sum_k p_k``
  over ``p >= lower_bounds, sum(p) <= budget``.
* :func:`dinkelbach` -- EE-maximizing power via Dinkelbach's parametric
  iteration, each step a water-filling solve.
* :func:`maxmin_power` -- largest minimum weighted rate under the budget and
  an EE floor, by bisection on the epigraph level with a water-filling
  feasibility oracle.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .sysmodel import SystemConfig, rates, total_power

LN2 = np.log(2.0)


class InfeasibleError(ValueError):
    """The power constraints admit no allocation."""


@dataclass
class WaterfillProblem:
    gains: np.ndarray
    price: float
    budget: float
    lower_bounds: Optional[np.ndarray] = None

    def __post_init__(self):
        self.gains = np.asarray(self.gains, dtype=float)
        if self.lower_bounds is None:
            self.lower_bounds = np.zeros_like(self.gains)
        self.lower_bounds = np.asarray(self.lower_bounds, dtype=float)
        if np.any(self.gains < 0) or self.price < 0:
            raise ValueError("gains and price must be nonnegative")


def water_level(prob: WaterfillProblem, cfg: SystemConfig):
    """Solve the water-filling problem.

    Returns:
        (p, lam): the allocation and the budget multiplier (0 when the budget
        is slack).
    """
    g, lb = prob.gains, prob.lower_bounds
    budget = prob.budget
    if lb.sum() > budget * (1.0 + 1e-12):
        raise InfeasibleError(f"lower bounds sum to {lb.sum():.6g} W > budget {budget:.6g} W")
    p = lb.copy()
    active = g > 0
    if not active.any():
        return p, 0.0

    # Offsets are taken relative to the strongest user so that p = mu - a
    # keeps full precision when sigma^2/h is large.
    a = cfg.noise_power / g[active]
    base = a.min()
    a = a - base
    lba = lb[active]
    B = cfg.bandwidth

    if prob.price > 0:
        mu = B / (LN2 * prob.price) - base
        pa = np.maximum(lba, mu - a)
        if pa.sum() + lb[~active].sum() <= budget:
            p[active] = pa
            return p, 0.0

    # Budget binds: sum_k max(lb_k, mu - a_k) == budget, piecewise linear in mu.
    room = budget - lb[~active].sum()
    t = lba + a
    order = np.argsort(t)
    t_sorted, a_sorted, lb_sorted = t[order], a[order], lba[order]
    n = t.size
    lb_tail = np.cumsum(lb_sorted[::-1])[::-1]  # sum of lb over users j..n-1
    a_head = np.cumsum(a_sorted)
    mu = t_sorted[-1]
    for j in range(1, n + 1):
        unfilled = lb_tail[j] if j < n else 0.0
        mu = (room - unfilled + a_head[j - 1]) / j
        if j == n or mu <= t_sorted[j]:
            break
    p[active] = np.maximum(lba, mu - a)
    level = mu + base
    lam = max(B / (LN2 * level) - prob.price, 0.0) if level > 0 else np.inf
    return p, lam


def waterfill(prob: WaterfillProblem, cfg: SystemConfig) -> np.ndarray:
    return water_level(prob, cfg)[0]


class DinkelbachResult(NamedTuple):
    p: np.ndarray
    ee: float
    omegas: list
    converged: bool


def dinkelbach(gains, cfg: SystemConfig, p0=None) -> DinkelbachResult:
    """EE-optimal power for fixed effective gains.

    Starts from ``omega = 0`` (uniform initial power) or, when ``p0`` is given,
    from ``omega = EE(p0)``.  Stops when successive omegas differ by less than
    ``cfg.epsilon`` (absolute, bit/s/J).
    """
    gains = np.asarray(gains, dtype=float)

    def ee(p):
        return float(np.sum(rates(p, gains, cfg))) / total_power(p, cfg)

    if p0 is None:
        p = np.full(cfg.K, cfg.p_max / cfg.K)
        omega = 0.0
    else:
        p = np.asarray(p0, dtype=float)
        omega = ee(p)
    omegas = [omega]
    best_p, best = p, omega
    for _ in range(cfg.max_iters):
        p = waterfill(WaterfillProblem(gains, omega * cfg.xi, cfg.p_max), cfg)
        new = ee(p)
        omegas.append(new)
        if new >= best:
            best_p, best = p, new
        if abs(new - omega) < cfg.epsilon:
            return DinkelbachResult(best_p, best, omegas, True)
        omega = new
    return DinkelbachResult(best_p, best, omegas, False)


class MaxMinResult(NamedTuple):
    p: np.ndarray
    z: float


def maxmin_power(gains, w, ee_floor: float, cfg: SystemConfig, tol: Optional[float] = None) -> MaxMinResult:
    """Maximize min_k R_k / w_k subject to the power budget and EE >= ee_floor.

    For a candidate level z every user needs at least
    ``(2^(z w_k / B) - 1) sigma^2 / h_k`` watts.  The level is feasible when
    those minimum powers fit the budget and
    ``max_p R_sum(p) - ee_floor * P_tot(p)`` over ``p >= p_min(z)`` is
    nonnegative; that maximization is a water-filling problem with price
    ``ee_floor * xi``.  ``z`` is bisected to within ``tol`` (default
    ``epsilon * B``) and the feasibility maximizer at the final level is
    returned.
    """
    gains = np.asarray(gains, dtype=float)
    w = np.asarray(w, dtype=float)
    B = cfg.bandwidth
    if tol is None:
        tol = cfg.epsilon * B
    price = ee_floor * cfg.xi

    def attempt(z):
        with np.errstate(divide="ignore", invalid="ignore"):
            lb = np.where(gains > 0, np.expm1(z * w / B * LN2) * cfg.noise_power / gains, np.inf)
        if z == 0:
            lb = np.zeros_like(gains)
        if not np.all(np.isfinite(lb)) or lb.sum() > cfg.p_max:
            return None
        p = waterfill(WaterfillProblem(gains, price, cfg.p_max, lb), cfg)
        ptot = total_power(p, cfg)
        margin = float(np.sum(rates(p, gains, cfg))) - ee_floor * ptot
        if margin < -1e-10 * ee_floor * ptot:
            return None
        return p

    p_lo = attempt(0.0)
    if p_lo is None:
        raise InfeasibleError(f"EE floor {ee_floor:.6g} bit/s/J unattainable at any fairness level")
    z_hi = float(np.min(B * np.log2(1.0 + cfg.p_max * gains / cfg.noise_power) / w))
    if z_hi <= 0:
        return MaxMinResult(p_lo, 0.0)
    p_top = attempt(z_hi)
    if p_top is not None:
        return MaxMinResult(p_top, z_hi)

    lo, hi = 0.0, z_hi
    tol = min(tol, 1e-9 * z_hi)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        p = attempt(mid)
        if p is None:
            hi = mid
        else:
            lo, p_lo = mid, p
    return MaxMinResult(p_lo, lo)
