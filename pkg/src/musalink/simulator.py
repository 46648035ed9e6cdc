"""Monte Carlo link-level simulator of the grant-free uplink.

Samples device deployments, bursty traffic, slot and spreading-code
choices and per-subcarrier Rayleigh fading, then runs the successive
interference cancellation receiver slot by slot.  Every frame draws its
random stream from (seed, frame index), so estimates are reproducible
bit for bit regardless of how frames are distributed over workers.

Two SINR bookkeeping rules are available for the cancellation receiver:

``conservative`` (default)
    Interference counts each undecoded device's own despread output
    power, granting no cross-suppression credit.  This matches the
    matched-filter SINR the analytical coverage model is built on and is
    the rule used for analytic/simulation cross-validation.

``post_mmse``
    Textbook post-detection SINR using the cross projections of the
    target's weight row onto the interferers' channels.  Optimistic
    relative to the analytical model; kept for A/B comparison.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .config import Scenario, SystemConfig
from .optimizer import adaptive_slots

__all__ = [
    "Scheme",
    "FailureCause",
    "SlotRealization",
    "DecodingOutcome",
    "FrameStats",
    "CoverageEstimate",
    "code_pool",
    "sample_deployment",
    "generate_traffic",
    "assign_slots_codes",
    "mmse_weights",
    "sic_decode",
    "run_frame",
    "estimate_coverage",
]


class Scheme(Enum):
    """Transmission schemes.

    PROPOSED adapts the slot count to the traffic and splits the power
    budget by the maximum packet count; TPDS keeps the configured slot
    count and splits each device's budget over its own packets; NAS keeps
    the configured slot count at full budget per packet.  BASELINE is the
    fixed-slot equal-power system used to validate the analytical model.
    """
    PROPOSED = "proposed"
    TPDS = "tpds"
    NAS = "nas"
    BASELINE = "baseline"


class FailureCause(Enum):
    DECODED = "decoded"
    COLLISION = "collision"
    BELOW_THRESHOLD = "below_threshold"
    BLOCKED_BY_STRONGER = "blocked_by_stronger"


# ============================================================================
#  Spreading code pool
# ============================================================================

_CODE_ALPHABET = np.array([1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j])
_POOL_ENTROPY = 202608  # fixed: the pool is a deterministic function of (J, size)


def code_pool(n_subcarriers: int, pool_size: int) -> np.ndarray:
    """Deterministic pool of distinct unit-norm spreading codes.

    Codes are length-J vectors over the quaternary alphabet, normalized
    to unit norm.  Raises ``ValueError`` when fewer than ``pool_size``
    distinct codes exist.
    """
    total = 4 ** n_subcarriers
    if total < pool_size:
        raise ValueError(
            f"4^{n_subcarriers} = {total} distinct codes cannot fill a pool of {pool_size}"
        )
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=_POOL_ENTROPY, spawn_key=(n_subcarriers, pool_size))
    )
    if total <= 1 << 16:
        digits = np.array([
            (np.arange(total) >> (2 * j)) & 3 for j in range(n_subcarriers)
        ]).T  # (total, J) base-4 digits
        chosen = rng.permutation(total)[:pool_size]
        raw = _CODE_ALPHABET[digits[chosen]]
    else:
        seen: set[tuple[int, ...]] = set()
        rows = []
        while len(rows) < pool_size:
            cand = tuple(rng.integers(0, 4, n_subcarriers).tolist())
            if cand not in seen:
                seen.add(cand)
                rows.append(_CODE_ALPHABET[list(cand)])
        raw = np.array(rows)
    return raw / math.sqrt(2 * n_subcarriers)  # alphabet modulus sqrt(2)


# ============================================================================
#  Sampling operations
# ============================================================================

def sample_deployment(n_active: int, radius: float, rng: np.random.Generator) -> np.ndarray:
    """Horizontal distances of devices uniform over the serving disk."""
    if n_active < 0:
        raise ValueError("n_active must be >= 0")
    return radius * np.sqrt(rng.random(n_active))


def generate_traffic(cfg: SystemConfig, rng: np.random.Generator) -> np.ndarray:
    """Per-device packet counts: all ones outside an emergency, Poisson inside."""
    n = cfg.traffic.n_active
    if cfg.traffic.scenario is Scenario.NON_EMERGENCY:
        return np.ones(n, dtype=np.int64)
    return rng.poisson(cfg.traffic.lam, n)


def assign_slots_codes(
    counts: np.ndarray, n_slots: int, pool_size: int, rng: np.random.Generator
) -> tuple[list[tuple[int, int, int]], int]:
    """Assign each packet a distinct slot and an independent code index.

    A device transmits min(count, n_slots) packets in distinct uniformly
    chosen slots; the excess packets are dropped.  Returns the flat
    (device, slot, code index) list and the number of dropped packets.
    """
    if n_slots < 1:
        raise ValueError("n_slots must be >= 1")
    assignments: list[tuple[int, int, int]] = []
    dropped = 0
    for device, count in enumerate(counts):
        count = int(count)
        if count <= 0:
            continue
        tx = min(count, n_slots)
        dropped += count - tx
        slots = rng.choice(n_slots, size=tx, replace=False)
        codes = rng.integers(0, pool_size, size=tx)
        assignments.extend(
            (device, int(slot), int(code)) for slot, code in zip(slots, codes)
        )
    return assignments, dropped


# ============================================================================
#  Slot realization and the cancellation receiver
# ============================================================================

@dataclass(frozen=True)
class SlotRealization:
    """Everything the receiver sees in one time slot.

    ``fading`` holds the unit-power small-scale gains per packet and
    subcarrier; ``path_gain`` the corresponding large-scale linear power
    gains derived from the horizontal distances.
    """
    device_ids: np.ndarray     # (K,) int
    radii: np.ndarray          # (K,) m
    path_gain: np.ndarray      # (K,) linear power gain incl. altitude
    fading: np.ndarray         # (K, J) complex, CN(0, 1) entries
    code_indices: np.ndarray   # (K,) int indices into the pool
    code_vectors: np.ndarray   # (K, J) complex unit-norm codes
    powers: np.ndarray         # (K,) W per packet

    def equivalent_channel(self) -> np.ndarray:
        """J x K effective channel: code-spread faded columns with pathloss."""
        cols = (self.fading * self.code_vectors) * np.sqrt(self.path_gain)[:, None]
        return cols.T


@dataclass(frozen=True)
class DecodingOutcome:
    decoded: np.ndarray                      # (K,) bool
    sinr_trace: tuple[tuple[int, float], ...]  # (device id, SINR) per iteration
    failure_cause: tuple[FailureCause, ...]  # per device


def make_slot(
    cfg: SystemConfig,
    pool: np.ndarray,
    device_ids: np.ndarray,
    radii: np.ndarray,
    code_indices: np.ndarray,
    powers: np.ndarray,
    rng: np.random.Generator,
) -> SlotRealization:
    """Draw the per-packet fading and bundle one slot's realization."""
    k = len(device_ids)
    j = cfg.frame.n_subcarriers
    fading = (rng.standard_normal((k, j)) + 1j * rng.standard_normal((k, j))) / math.sqrt(2.0)
    h2 = cfg.geometry.uav_altitude**2
    path_gain = cfg.channel.pathloss_coeff * (radii**2 + h2) ** (-0.5 * cfg.channel.pathloss_exp)
    return SlotRealization(
        device_ids=np.asarray(device_ids),
        radii=np.asarray(radii, dtype=float),
        path_gain=path_gain,
        fading=fading,
        code_indices=np.asarray(code_indices),
        code_vectors=pool[np.asarray(code_indices)],
        powers=np.asarray(powers, dtype=float),
    )


def mmse_weights(equiv_channel: np.ndarray, powers: np.ndarray, noise_power: float) -> np.ndarray:
    """MMSE weight rows for the undecoded set.

    Solves (P^(1/2) G^H G P^(1/2) + noise I) W^H = P^(1/2) G^H for the
    K x J matrix of weight rows.
    """
    g = np.asarray(equiv_channel)
    sqrt_p = np.sqrt(np.asarray(powers, dtype=float))
    gram = g.conj().T @ g
    a = (sqrt_p[:, None] * gram) * sqrt_p[None, :]
    a[np.diag_indices_from(a)] += noise_power
    rhs = sqrt_p[:, None] * g.conj().T
    return np.linalg.solve(a, rhs)


def sic_decode(
    slot: SlotRealization, theta: float, noise_power: float, sinr_rule: str = "conservative"
) -> DecodingOutcome:
    """Distance-ordered successive cancellation of one slot.

    Devices sharing a code index are collided: never decoded, always
    interfering.  At each iteration the nearest undecoded singleton is
    tested against the threshold with weights recomputed over the whole
    undecoded set; a failure blocks it and every weaker singleton.
    """
    if sinr_rule not in ("conservative", "post_mmse"):
        raise ValueError(f"unknown sinr_rule {sinr_rule!r}")
    k_total = len(slot.device_ids)
    decoded = np.zeros(k_total, dtype=bool)
    cause: list[FailureCause | None] = [None] * k_total
    trace: list[tuple[int, float]] = []

    idx, counts = np.unique(slot.code_indices, return_counts=True)
    shared = set(idx[counts > 1].tolist())
    is_collided = np.array([c in shared for c in slot.code_indices.tolist()])
    for i in np.flatnonzero(is_collided):
        cause[i] = FailureCause.COLLISION

    g_full = slot.equivalent_channel()
    undecoded = np.ones(k_total, dtype=bool)

    while True:
        singles = np.flatnonzero(undecoded & ~is_collided)
        if singles.size == 0:
            break
        target = singles[np.argmin(slot.radii[singles])]
        current = np.flatnonzero(undecoded)

        if current.size == 1:
            # lone device: matched filter against noise only
            g_t = g_full[:, target]
            sinr = slot.powers[target] * float(np.real(np.vdot(g_t, g_t))) / noise_power
        else:
            g_u = g_full[:, current]
            p_u = slot.powers[current]
            weights = mmse_weights(g_u, p_u, noise_power)
            outputs = weights @ g_u  # (K_u, K_u): row i is w_i^H applied to all columns
            ti = int(np.flatnonzero(current == target)[0])
            signal = p_u[ti] * abs(outputs[ti, ti]) ** 2
            noise = noise_power * float(np.real(np.vdot(weights[ti], weights[ti])))
            if sinr_rule == "conservative":
                own = p_u * np.abs(np.diag(outputs)) ** 2
                interference = float(own.sum() - own[ti])
            else:
                cross = p_u * np.abs(outputs[ti]) ** 2
                interference = float(cross.sum() - cross[ti])
            sinr = signal / (interference + noise)

        trace.append((int(slot.device_ids[target]), float(sinr)))
        if sinr >= theta:
            decoded[target] = True
            cause[target] = FailureCause.DECODED
            undecoded[target] = False
        else:
            cause[target] = FailureCause.BELOW_THRESHOLD
            for i in singles:
                if i != target:
                    cause[i] = FailureCause.BLOCKED_BY_STRONGER
            break

    assert all(c is not None for c in cause), "every device must be classified"
    return DecodingOutcome(
        decoded=decoded,
        sinr_trace=tuple(trace),
        failure_cause=tuple(cause),
    )


# ============================================================================
#  Frame-level schemes and coverage estimation
# ============================================================================

@dataclass(frozen=True)
class FrameStats:
    n_slots: int
    packets_generated: int
    packets_transmitted: int
    packets_decoded: int
    packets_dropped: int
    collision_failures: int
    threshold_failures: int
    blocked_failures: int


@dataclass(frozen=True)
class CoverageEstimate:
    p_hat: float
    ci_halfwidth: float   # 95% normal approximation over packets
    n_frames: int
    packets_generated: int
    packets_decoded: int
    packets_dropped: int


def _scheme_n_slots(cfg: SystemConfig, scheme: Scheme) -> int:
    if scheme is Scheme.PROPOSED and cfg.traffic.scenario is Scenario.EMERGENCY:
        return adaptive_slots(cfg).n_practical
    return cfg.frame.n_slots


def _per_device_power(cfg: SystemConfig, scheme: Scheme, counts: np.ndarray) -> np.ndarray:
    """Per-packet transmit power of each device under a scheme."""
    p_max = cfg.power.p_max
    if scheme is Scheme.NAS:
        return np.full(len(counts), p_max)
    if scheme is Scheme.TPDS:
        return np.where(counts > 0, p_max / np.maximum(counts, 1), 0.0)
    # PROPOSED / BASELINE: equal split of the budget by the maximum count
    if cfg.power.exact_rho_max:
        rho_max = max(1, int(counts.max(initial=0)))
    else:
        rho_max = cfg.rho_max_proxy()
    return np.full(len(counts), p_max / rho_max)


def run_frame(
    cfg: SystemConfig,
    scheme: Scheme,
    rng: np.random.Generator,
    pool: np.ndarray | None = None,
    n_slots: int | None = None,
    sinr_rule: str = "conservative",
) -> FrameStats:
    """Simulate one transmission frame and aggregate its decode outcomes.

    ``pool`` and ``n_slots`` may be precomputed by callers running many
    frames; both are deterministic functions of the configuration.
    """
    if pool is None:
        pool = code_pool(cfg.frame.n_subcarriers, cfg.frame.code_pool_size)
    if n_slots is None:
        n_slots = _scheme_n_slots(cfg, scheme)

    counts = generate_traffic(cfg, rng)
    radii = sample_deployment(cfg.traffic.n_active, cfg.geometry.cell_radius, rng)
    powers = _per_device_power(cfg, scheme, counts)
    assignments, dropped = assign_slots_codes(
        counts, n_slots, cfg.frame.code_pool_size, rng
    )

    by_slot: dict[int, list[tuple[int, int]]] = {}
    for device, slot_idx, code in assignments:
        by_slot.setdefault(slot_idx, []).append((device, code))

    theta = cfg.reliability.sinr_threshold
    sigma2 = cfg.channel.noise_power
    decoded = collisions = below = blocked = 0
    for slot_index in sorted(by_slot):
        members = by_slot[slot_index]
        ids = np.array([m[0] for m in members])
        codes = np.array([m[1] for m in members])
        slot = make_slot(cfg, pool, ids, radii[ids], codes, powers[ids], rng)
        outcome = sic_decode(slot, theta, sigma2, sinr_rule=sinr_rule)
        decoded += int(outcome.decoded.sum())
        for c in outcome.failure_cause:
            if c is FailureCause.COLLISION:
                collisions += 1
            elif c is FailureCause.BELOW_THRESHOLD:
                below += 1
            elif c is FailureCause.BLOCKED_BY_STRONGER:
                blocked += 1

    generated = int(counts.sum())
    return FrameStats(
        n_slots=n_slots,
        packets_generated=generated,
        packets_transmitted=generated - dropped,
        packets_decoded=decoded,
        packets_dropped=dropped,
        collision_failures=collisions,
        threshold_failures=below,
        blocked_failures=blocked,
    )


def _frame_rng(seed: int, frame_index: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(frame_index,))
    )


def _coverage_worker(args) -> tuple[int, int, int]:
    cfg, scheme, seed, start, stop, n_slots, sinr_rule = args
    pool = code_pool(cfg.frame.n_subcarriers, cfg.frame.code_pool_size)
    generated = decoded = dropped = 0
    for i in range(start, stop):
        stats = run_frame(
            cfg, scheme, _frame_rng(seed, i), pool=pool, n_slots=n_slots,
            sinr_rule=sinr_rule,
        )
        generated += stats.packets_generated
        decoded += stats.packets_decoded
        dropped += stats.packets_dropped
    return generated, decoded, dropped


def estimate_coverage(
    cfg: SystemConfig,
    scheme: Scheme,
    n_frames: int,
    seed: int,
    n_workers: int = 1,
    sinr_rule: str = "conservative",
) -> CoverageEstimate:
    """Empirical coverage over independent frames.

    Frame i draws its stream from (seed, i), so the result is identical
    for any worker count or chunking.  The confidence halfwidth is the
    95% normal approximation treating packets as independent outcomes.
    """
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    n_slots = _scheme_n_slots(cfg, scheme)

    if n_workers <= 1:
        generated, decoded, dropped = _coverage_worker(
            (cfg, scheme, seed, 0, n_frames, n_slots, sinr_rule)
        )
    else:
        chunk = max(1, math.ceil(n_frames / (4 * n_workers)))
        tasks = [
            (cfg, scheme, seed, start, min(start + chunk, n_frames), n_slots, sinr_rule)
            for start in range(0, n_frames, chunk)
        ]
        generated = decoded = dropped = 0
        with ProcessPoolExecutor(max_workers=n_workers) as pool_exec:
            for g, d, dr in pool_exec.map(_coverage_worker, tasks):
                generated += g
                decoded += d
                dropped += dr

    if generated == 0:
        p_hat = math.nan
        ci = 0.0
    else:
        p_hat = decoded / generated
        ci = 1.96 * math.sqrt(max(p_hat * (1.0 - p_hat), 0.0) / generated)
    return CoverageEstimate(
        p_hat=p_hat,
        ci_halfwidth=ci,
        n_frames=n_frames,
        packets_generated=generated,
        packets_decoded=decoded,
        packets_dropped=dropped,
    )
