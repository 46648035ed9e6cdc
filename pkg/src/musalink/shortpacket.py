"""Finite-blocklength reliability of single-slot short packets.

Normal-approximation error probability for D bits carried in one slot of
B*T_f/n_s channel uses, in both the base-2 form (explicit dispersion)
and the natural-log form used by the slot-count root equation; the two
coincide when the dispersion equals (log2 e)^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .config import LOG2_E, SystemConfig

__all__ = [
    "BlocklengthPoint",
    "q_function",
    "packet_error_prob",
    "error_prob_ln_form",
    "max_snr_proxy",
]

_SQRT2 = math.sqrt(2.0)
LN2 = math.log(2.0)


def q_function(x: float) -> float:
    """Upper-tail probability of the standard normal distribution."""
    if math.isnan(x):
        raise ValueError("q_function argument must not be NaN")
    return 0.5 * math.erfc(x / _SQRT2)


@dataclass(frozen=True)
class BlocklengthPoint:
    """One operating point of the finite-blocklength error model."""
    sinr: float           # linear SINR at the receiver
    n_slots: float        # slots per frame (real-relaxed)
    channel_uses: float   # bandwidth-time product B * T_f of the frame
    packet_bits: int      # payload bits per packet
    dispersion: float = LOG2_E**2

    def __post_init__(self):
        if self.n_slots <= 0:
            raise ValueError("n_slots must be > 0")
        if self.channel_uses / self.n_slots < 1.0:
            raise ValueError("need at least one channel use per slot")
        if self.dispersion <= 0:
            raise ValueError("dispersion must be > 0")
        if self.packet_bits < 1:
            raise ValueError("packet_bits must be a positive integer")


def packet_error_prob(pt: BlocklengthPoint) -> float:
    """Decoding error probability of one packet in one slot (base-2 form)."""
    if pt.sinr <= 0:
        raise ValueError("sinr must be > 0")
    rate = pt.packet_bits * pt.n_slots / pt.channel_uses  # bits per channel use
    arg = math.sqrt(pt.channel_uses / (pt.dispersion * pt.n_slots)) * (
        math.log2(1.0 + pt.sinr) - rate
    )
    return q_function(arg)


def error_prob_ln_form(
    gamma: float, n: float, bandwidth: float, frame_duration: float, packet_bits: int
) -> float:
    """Natural-log form of the error probability used by the root equation.

    Identical to :func:`packet_error_prob` with dispersion (log2 e)^2.
    """
    if gamma <= 0:
        raise ValueError("gamma must be > 0")
    if n <= 0:
        raise ValueError("n must be > 0")
    bt = bandwidth * frame_duration
    arg = math.sqrt(bt / n) * (
        math.log1p(gamma) - packet_bits / bt * LN2 * n
    )
    return q_function(arg)


def max_snr_proxy(cfg: SystemConfig) -> float:
    """Best-case SINR: the lone active device directly beneath the UAV.

    Noise-limited link at horizontal distance zero, with the per-packet
    power of the configured policy.
    """
    h2 = cfg.geometry.uav_altitude**2
    pathloss = cfg.channel.pathloss_coeff * h2 ** (-0.5 * cfg.channel.pathloss_exp)
    return cfg.mean_packet_power() * pathloss / cfg.channel.noise_power
