"""Adaptive slot-count selection, optimality oracle and burst detection.

The slot count maximizing frame coverage under the latency and
reliability constraints sits on the boundary of the feasible region:
either the traffic bound ``n_active * lam + delta`` (C1) or the largest
slot count still meeting the short-packet error target (C3), whichever
is smaller.  A brute-force sweep of the analytic coverage curve serves
as the independent optimality oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable

from .analytic import frame_coverage_prob
from .config import Scenario, SystemConfig, validate_config
from .shortpacket import error_prob_ln_form, max_snr_proxy

__all__ = [
    "OptimizerOutput",
    "EoIDecision",
    "BruteForceResult",
    "InfeasibleError",
    "solve_n_epsilon",
    "adaptive_slots",
    "brute_force_slots",
    "detect_eoi",
    "estimate_lambda_hat",
]

DEFAULT_HYPOTHESIS_MAX = 10  # default top packet rate tested for a burst


class InfeasibleError(RuntimeError):
    """No slot count satisfies the named constraint."""

    def __init__(self, constraint: str, message: str):
        super().__init__(f"{constraint}: {message}")
        self.constraint = constraint


@dataclass(frozen=True)
class OptimizerOutput:
    """Chosen slot count and the two candidate bounds it came from."""
    n_practical: int        # floor of the binding bound
    n_star: float           # real-relaxed optimum min(n_lambda, n_epsilon)
    n_lambda_bound: float   # traffic bound (C1)
    n_epsilon_bound: float  # reliability bound (C3)
    binding: str            # "C1" or "C3"
    residual: float         # |error(n_epsilon) - epsilon_max|


@dataclass(frozen=True)
class EoIDecision:
    """Outcome of the burst (event-of-interest) detection."""
    lambda_bar: float       # observed mean packets per active device
    lambda_hat: int         # estimated Poisson rate (1 when no burst)
    emergency: bool


@dataclass(frozen=True)
class BruteForceResult:
    best_n: int
    best_p: float
    curve: tuple[tuple[int, float], ...]  # (n_slots, p_succ) pairs


def solve_n_epsilon(
    gamma: float,
    epsilon_max: float,
    bandwidth: float,
    frame_duration: float,
    packet_bits: int,
    tol: float = 1e-12,
) -> float:
    """Largest slot count meeting the error target, by bisection.

    The error probability is strictly increasing in the slot count, so
    the root of error(n) = epsilon_max is unique on [1, n_up] where
    n_up = B*T_f*log2(1+gamma)/D makes the Q-function argument zero
    (error exactly 0.5).  At epsilon_max = 0.5 the root is n_up itself.

    Raises :class:`InfeasibleError` when even a single slot violates the
    target.
    """
    if gamma <= 0:
        raise ValueError("gamma must be > 0")
    if not 0 < epsilon_max <= 0.5:
        raise ValueError("epsilon_max must lie in (0, 0.5]")
    bt = bandwidth * frame_duration
    n_up = bt * math.log2(1.0 + gamma) / packet_bits
    if epsilon_max == 0.5:
        return n_up
    if n_up <= 1.0:
        raise InfeasibleError(
            "C3", f"slot count bound {n_up:g} leaves no room above one slot"
        )

    def err(n: float) -> float:
        return error_prob_ln_form(gamma, n, bandwidth, frame_duration, packet_bits)

    lo, hi = 1.0, n_up
    f_lo = err(lo) - epsilon_max
    if f_lo > 0:
        raise InfeasibleError(
            "C3",
            f"error probability {f_lo + epsilon_max:.3g} at a single slot "
            f"already exceeds epsilon_max={epsilon_max:g}",
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid = err(mid) - epsilon_max
        if abs(f_mid) <= tol:
            return mid
        if f_mid < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-13 * hi:
            break
    return 0.5 * (lo + hi)


def adaptive_slots(cfg: SystemConfig) -> OptimizerOutput:
    """Slot count for the next frame under the latency/reliability bounds.

    Requires a feasible emergency configuration.  Raises
    :class:`InfeasibleError` naming the first violated constraint,
    including the case where the result would drop below the mean packet
    count (C2).
    """
    issues = validate_config(cfg)
    if issues:
        first = issues[0]
        name = first.split(":", 1)[0] if first.startswith("C") else "config"
        raise InfeasibleError(name, first)
    if cfg.traffic.scenario is not Scenario.EMERGENCY:
        raise InfeasibleError("C4", "adaptive slot selection applies to the emergency scenario")

    n_lambda = cfg.traffic_slot_bound()
    gamma = max_snr_proxy(cfg)
    n_epsilon = solve_n_epsilon(
        gamma,
        cfg.reliability.epsilon_max,
        cfg.channel.bandwidth,
        cfg.frame.frame_duration,
        cfg.frame.packet_bits,
    )
    residual = abs(
        error_prob_ln_form(
            gamma, n_epsilon, cfg.channel.bandwidth, cfg.frame.frame_duration,
            cfg.frame.packet_bits,
        )
        - cfg.reliability.epsilon_max
    )
    n_star = min(n_lambda, n_epsilon)
    n_practical = math.floor(n_star)
    if n_practical < cfg.traffic.lam:
        raise InfeasibleError(
            "C2",
            f"practical slot count {n_practical} below the mean packet count "
            f"lambda={cfg.traffic.lam:g}",
        )
    binding = "C1" if n_lambda <= n_epsilon else "C3"
    return OptimizerOutput(
        n_practical=n_practical,
        n_star=n_star,
        n_lambda_bound=n_lambda,
        n_epsilon_bound=n_epsilon,
        binding=binding,
        residual=residual,
    )


def brute_force_slots(cfg: SystemConfig, n_range: Iterable[int]) -> BruteForceResult:
    """Evaluate analytic coverage at every requested feasible slot count.

    The requested values are intersected with the feasible region
    [ceil(lam), floor(min(n_lambda, n_epsilon))]; an empty intersection
    raises :class:`InfeasibleError`.  Ties on the maximum resolve to the
    smallest slot count.
    """
    bounds = adaptive_slots(cfg)
    lo = math.ceil(cfg.traffic.lam)
    hi = bounds.n_practical
    candidates = sorted({int(n) for n in n_range if lo <= int(n) <= hi})
    if not candidates:
        raise InfeasibleError(
            "C2", f"no requested slot count falls in the feasible range [{lo}, {hi}]"
        )
    curve = []
    for n in candidates:
        cfg_n = replace(cfg, frame=replace(cfg.frame, n_slots=n))
        curve.append((n, frame_coverage_prob(cfg_n).p_succ))
    best_n, best_p = max(curve, key=lambda item: (item[1], -item[0]))
    return BruteForceResult(best_n=best_n, best_p=best_p, curve=tuple(curve))


def estimate_lambda_hat(x: float, m_max: int) -> int:
    """Integer Poisson rate best explaining an observed mean of x packets.

    Sequential likelihood-ratio tests between consecutive rate hypotheses
    i and i+1 with unit threshold, equivalently the integer in [2, m_max]
    maximizing x*ln(i) - i; ties break toward the smaller rate.  The
    factorial of the (generally non-integer) observation drops out of
    every ratio.
    """
    if x <= 1:
        raise ValueError("x must exceed 1 (burst traffic)")
    if m_max < 2:
        raise ValueError("m_max must be >= 2")
    best_i = 2
    best_ll = x * math.log(2.0) - 2.0
    for i in range(3, m_max + 1):
        ll = x * math.log(i) - i
        if ll > best_ll:
            best_i, best_ll = i, ll
    return best_i


def detect_eoi(rho_total: int, n_active: int, m_max: int = DEFAULT_HYPOTHESIS_MAX) -> EoIDecision:
    """Decide from the frame totals whether burst traffic has started.

    A strict mean of more than one packet per active device flags the
    emergency mode and triggers the rate estimate; otherwise the rate
    reports as 1.
    """
    if n_active < 1:
        raise ValueError("n_active must be >= 1")
    if rho_total < 0:
        raise ValueError("rho_total must be >= 0")
    lambda_bar = rho_total / n_active
    emergency = lambda_bar > 1.0
    lambda_hat = estimate_lambda_hat(lambda_bar, m_max) if emergency else 1
    return EoIDecision(lambda_bar=lambda_bar, lambda_hat=lambda_hat, emergency=emergency)
