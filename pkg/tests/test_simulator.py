"""Link-level simulator: sampling laws, receiver micro-oracles, determinism."""

import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats as sps

from musalink.analytic import collision_free_prob, slot_occupancy_prob
from musalink.config import Scenario, default_config
from musalink.optimizer import adaptive_slots
from musalink.simulator import (
    FailureCause,
    Scheme,
    SlotRealization,
    _per_device_power,
    assign_slots_codes,
    code_pool,
    estimate_coverage,
    generate_traffic,
    make_slot,
    mmse_weights,
    run_frame,
    sample_deployment,
    sic_decode,
)

from conftest import reference_config


# ----------------------------------------------------------------------------
#  Code pool
# ----------------------------------------------------------------------------

def test_code_pool_unit_norm_and_distinct():
    pool = code_pool(4, 64)
    assert pool.shape == (64, 4)
    norms = np.linalg.norm(pool, axis=1)
    assert np.allclose(norms, 1.0, atol=1e-12)
    as_tuples = {tuple(np.round(row * math.sqrt(8), 6)) for row in pool}
    assert len(as_tuples) == 64


def test_code_pool_deterministic():
    a = code_pool(4, 64)
    b = code_pool(4, 64)
    assert np.array_equal(a, b)


def test_code_pool_rejects_oversized():
    with pytest.raises(ValueError):
        code_pool(2, 64)  # only 16 distinct quaternary vectors of length 2


# ----------------------------------------------------------------------------
#  Sampling laws
# ----------------------------------------------------------------------------

def test_deployment_empty():
    rng = np.random.default_rng(0)
    assert sample_deployment(0, 50.0, rng).size == 0


def test_deployment_radial_cdf():
    rng = np.random.default_rng(123)
    radii = sample_deployment(1_000_000, 50.0, rng)
    assert np.all(radii <= 50.0)
    result = sps.kstest(radii, lambda x: (x / 50.0) ** 2)
    assert result.statistic < 0.002


def test_traffic_non_emergency_single_packet():
    cfg = default_config()
    cfg = replace(cfg, traffic=replace(cfg.traffic, scenario=Scenario.NON_EMERGENCY))
    counts = generate_traffic(cfg, np.random.default_rng(1))
    assert np.all(counts == 1)


def test_traffic_poisson_moments():
    cfg = reference_config(n_active=1_000_000, lam=4.0)
    counts = generate_traffic(cfg, np.random.default_rng(7))
    n = counts.size
    mean = counts.mean()
    var = counts.var()
    assert abs(mean - 4.0) < 3.0 * math.sqrt(4.0 / n)
    # Poisson variance of the sample variance is approximately (2 lam^2 + lam)/n
    assert abs(var - 4.0) < 3.0 * math.sqrt((2 * 16.0 + 4.0) / n)


def test_traffic_zero_rate():
    cfg = reference_config(n_active=100, lam=0.0)
    cfg = replace(cfg, traffic=replace(cfg.traffic, lambda_min=0.0))
    assert np.all(generate_traffic(cfg, np.random.default_rng(2)) == 0)


def test_assign_single_packet():
    assignments, dropped = assign_slots_codes(
        np.array([1]), 5, 64, np.random.default_rng(3)
    )
    assert dropped == 0
    assert len(assignments) == 1
    device, slot, code = assignments[0]
    assert device == 0 and 0 <= slot < 5 and 0 <= code < 64


def test_assign_clamps_excess_packets():
    assignments, dropped = assign_slots_codes(
        np.array([7]), 5, 64, np.random.default_rng(4)
    )
    assert dropped == 2
    slots = [slot for _, slot, _ in assignments]
    assert len(slots) == 5 and len(set(slots)) == 5


def test_assign_occupancy_matches_analytic():
    # one call over many independent devices = many single-device frames
    rng = np.random.default_rng(5)
    n_dev = 300_000
    counts = rng.poisson(4.0, n_dev)
    assignments, _ = assign_slots_codes(counts, 20, 64, rng)
    hits = sum(1 for _, slot, _ in assignments if slot == 0)
    empirical = hits / n_dev
    assert empirical == pytest.approx(slot_occupancy_prob(4.0, 20), abs=3e-3)


# ----------------------------------------------------------------------------
#  MMSE weights
# ----------------------------------------------------------------------------

def test_mmse_scalar_matched_filter_limit():
    w = mmse_weights(np.array([[1.0 + 0j]]), np.array([1.0]), 1e-12)
    assert w.shape == (1, 1)
    assert w[0, 0] == pytest.approx(1.0, abs=1e-9)


def test_mmse_single_user_matched_direction():
    rng = np.random.default_rng(8)
    g = (rng.standard_normal(4) + 1j * rng.standard_normal(4)).reshape(4, 1)
    w = mmse_weights(g, np.array([2.0]), 0.3)[0]
    cosine = abs(np.vdot(w.conj(), g[:, 0])) / (
        np.linalg.norm(w) * np.linalg.norm(g)
    )
    assert cosine == pytest.approx(1.0, abs=1e-10)


def test_mmse_normal_equations_residual():
    rng = np.random.default_rng(9)
    for _ in range(5):
        g = rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3))
        p = rng.uniform(0.5, 2.0, 3)
        sigma2 = 0.1
        wh = mmse_weights(g, p, sigma2)
        sqrt_p = np.sqrt(p)
        a = (sqrt_p[:, None] * (g.conj().T @ g)) * sqrt_p[None, :] + sigma2 * np.eye(3)
        residual = np.max(np.abs(a @ wh - sqrt_p[:, None] * g.conj().T))
        assert residual < 1e-10


# ----------------------------------------------------------------------------
#  SIC decoding
# ----------------------------------------------------------------------------

def make_manual_slot(fading, codes, path_gain, powers, radii):
    fading = np.asarray(fading, dtype=complex)
    codes = np.asarray(codes, dtype=complex)
    k = fading.shape[0]
    return SlotRealization(
        device_ids=np.arange(k),
        radii=np.asarray(radii, dtype=float),
        path_gain=np.asarray(path_gain, dtype=float),
        fading=fading,
        code_indices=np.arange(k),  # all distinct: no collisions
        code_vectors=codes,
        powers=np.asarray(powers, dtype=float),
    )


def test_sic_single_device_decodes():
    slot = make_manual_slot(
        fading=[[1.0 + 0j, 0.5 - 0.5j]],
        codes=[[1 / math.sqrt(2), 1 / math.sqrt(2)]],
        path_gain=[1.0],
        powers=[1.0],
        radii=[10.0],
    )
    outcome = sic_decode(slot, theta=1.0, noise_power=1e-3)
    assert outcome.decoded.tolist() == [True]
    assert outcome.failure_cause == (FailureCause.DECODED,)


def test_sic_shared_code_collision():
    slot = SlotRealization(
        device_ids=np.array([0, 1]),
        radii=np.array([5.0, 25.0]),
        path_gain=np.array([1.0, 1.0]),
        fading=np.array([[1.0 + 0j], [0.4 + 0.1j]]),
        code_indices=np.array([7, 7]),
        code_vectors=np.array([[1.0 + 0j], [1.0 + 0j]]),
        powers=np.array([1.0, 1.0]),
    )
    outcome = sic_decode(slot, theta=0.5, noise_power=1e-6)
    assert outcome.decoded.tolist() == [False, False]
    assert outcome.failure_cause == (FailureCause.COLLISION, FailureCause.COLLISION)
    assert outcome.sinr_trace == ()


def expected_sinr_chain(g, powers, sigma2, order):
    """Hand arithmetic for the conservative SINR trace, one decode at a time."""
    undecoded = list(range(g.shape[1]))
    sinrs = []
    for target in order:
        cols = list(undecoded)
        gu = g[:, cols]
        p = powers[cols]
        a = (
            np.diag(np.sqrt(p)) @ gu.conj().T @ gu @ np.diag(np.sqrt(p))
            + sigma2 * np.eye(len(cols))
        )
        wh = np.linalg.inv(a) @ (np.diag(np.sqrt(p)) @ gu.conj().T)
        ti = cols.index(target)
        own = [p[i] * abs(wh[i] @ gu[:, i]) ** 2 for i in range(len(cols))]
        noise = sigma2 * np.linalg.norm(wh[ti]) ** 2
        sinrs.append(own[ti] / (sum(own) - own[ti] + noise))
        undecoded.remove(target)
    return sinrs


def test_sic_three_device_hand_trace():
    # three singletons, third too weak: expect decode, decode, fail
    fading = np.array(
        [
            [1.2 + 0.3j, -0.4 + 0.9j],
            [0.8 - 0.6j, 0.3 + 0.4j],
            [0.05 + 0.02j, -0.03 - 0.04j],
        ]
    )
    codes = np.array(
        [
            [1 + 1j, 1 - 1j],
            [1 + 1j, -1 + 1j],
            [-1 - 1j, 1 + 1j],
        ]
    ) / 2.0
    path_gain = np.array([1.0, 0.6, 0.3])
    powers = np.array([1.0, 1.0, 1.0])
    radii = np.array([5.0, 15.0, 30.0])
    sigma2 = 0.01

    g = ((fading * codes) * np.sqrt(path_gain)[:, None]).T
    expected = expected_sinr_chain(g, powers, sigma2, order=[0, 1, 2])
    theta = 0.5
    assert expected[0] >= theta and expected[1] >= theta and expected[2] < theta

    slot = make_manual_slot(fading, codes, path_gain, powers, radii)
    outcome = sic_decode(slot, theta=theta, noise_power=sigma2)
    assert outcome.decoded.tolist() == [True, True, False]
    assert outcome.failure_cause == (
        FailureCause.DECODED,
        FailureCause.DECODED,
        FailureCause.BELOW_THRESHOLD,
    )
    got = [sinr for _, sinr in outcome.sinr_trace]
    assert got == pytest.approx(expected, abs=1e-9)
    assert [dev for dev, _ in outcome.sinr_trace] == [0, 1, 2]


def test_sic_blocked_devices_marked():
    # make the nearest device undecodable: everyone behind it is blocked
    fading = np.array([[0.01 + 0j], [1.0 + 0j], [1.0 + 0j]])
    codes = np.ones((3, 1), dtype=complex)
    slot = SlotRealization(
        device_ids=np.array([0, 1, 2]),
        radii=np.array([1.0, 2.0, 3.0]),
        path_gain=np.array([1.0, 1.0, 1.0]),
        fading=fading,
        code_indices=np.array([0, 1, 2]),
        code_vectors=codes,
        powers=np.array([1.0, 1.0, 1.0]),
    )
    outcome = sic_decode(slot, theta=10.0, noise_power=1e-3)
    assert outcome.decoded.sum() == 0
    assert outcome.failure_cause[0] is FailureCause.BELOW_THRESHOLD
    assert outcome.failure_cause[1] is FailureCause.BLOCKED_BY_STRONGER
    assert outcome.failure_cause[2] is FailureCause.BLOCKED_BY_STRONGER


def test_sic_decode_order_is_nondecreasing_distance():
    cfg = reference_config(n_active=20, lam=6.0)
    rng = np.random.default_rng(11)
    pool = code_pool(4, 64)
    for _ in range(50):
        counts = generate_traffic(cfg, rng)
        radii = sample_deployment(cfg.traffic.n_active, 50.0, rng)
        assignments, _ = assign_slots_codes(counts, 20, 64, rng)
        per_slot = {}
        for device, slot_idx, code in assignments:
            per_slot.setdefault(slot_idx, []).append((device, code))
        for members in per_slot.values():
            ids = np.array([m[0] for m in members])
            codes = np.array([m[1] for m in members])
            slot = make_slot(cfg, pool, ids, radii[ids], codes,
                             np.ones(len(ids)), rng)
            outcome = sic_decode(slot, theta=1.0, noise_power=1e-13)
            decoded_ids = [dev for dev, _ in outcome.sinr_trace][: int(outcome.decoded.sum())]
            dist = {int(d): float(r) for d, r in zip(slot.device_ids, slot.radii)}
            distances = [dist[d] for d in decoded_ids]
            assert distances == sorted(distances)


def test_sic_post_mmse_rule_is_more_permissive():
    cfg = reference_config(n_active=20, lam=8.0)
    rng = np.random.default_rng(13)
    base = run_frame(cfg, Scheme.BASELINE, np.random.default_rng(13))
    optimistic = run_frame(
        cfg, Scheme.BASELINE, np.random.default_rng(13), sinr_rule="post_mmse"
    )
    assert optimistic.packets_decoded >= base.packets_decoded
    with pytest.raises(ValueError):
        run_frame(cfg, Scheme.BASELINE, rng, sinr_rule="bogus")


# ----------------------------------------------------------------------------
#  Frames and schemes
# ----------------------------------------------------------------------------

def test_vacuous_frame():
    cfg = reference_config(n_active=1, lam=0.0)
    cfg = replace(cfg, traffic=replace(cfg.traffic, lambda_min=0.0))
    stats = run_frame(cfg, Scheme.NAS, np.random.default_rng(0))
    assert stats.packets_generated == 0
    assert stats.packets_decoded == 0
    assert stats.packets_dropped == 0


def test_per_device_power_rules():
    cfg = reference_config(n_active=4, lam=4.0)
    counts = np.array([4, 1, 0, 2])
    p_max = cfg.power.p_max
    tpds = _per_device_power(cfg, Scheme.TPDS, counts)
    assert tpds == pytest.approx([p_max / 4, p_max, 0.0, p_max / 2])
    nas = _per_device_power(cfg, Scheme.NAS, counts)
    assert nas == pytest.approx([p_max] * 4)
    prop = _per_device_power(cfg, Scheme.PROPOSED, counts)
    assert prop == pytest.approx([p_max / cfg.rho_max_proxy()] * 4)
    exact = replace(cfg, power=replace(cfg.power, exact_rho_max=True))
    prop_exact = _per_device_power(exact, Scheme.PROPOSED, counts)
    assert prop_exact == pytest.approx([p_max / 4] * 4)


def test_proposed_frame_uses_adaptive_slot_count():
    cfg = reference_config(n_active=10, lam=2.0)
    expected = adaptive_slots(cfg).n_practical
    stats = run_frame(cfg, Scheme.PROPOSED, np.random.default_rng(21))
    assert stats.n_slots == expected


def test_conservation_over_random_frames():
    cfg = reference_config(n_active=15, lam=6.0)
    for seed in range(20):
        stats = run_frame(cfg, Scheme.BASELINE, np.random.default_rng(seed))
        failed = (
            stats.collision_failures
            + stats.threshold_failures
            + stats.blocked_failures
        )
        assert stats.packets_decoded + failed == stats.packets_transmitted
        assert stats.packets_transmitted + stats.packets_dropped == stats.packets_generated


def test_collision_rate_matches_analytic():
    cfg = reference_config(n_active=10, lam=4.0)
    rng = np.random.default_rng(17)
    transmitted = 0
    collided = 0
    n_frames = 10_000  # 200k slots
    for _ in range(n_frames):
        counts = generate_traffic(cfg, rng)
        assignments, _ = assign_slots_codes(counts, 20, 64, rng)
        slot_codes: dict[int, list[int]] = {}
        for _, slot_idx, code in assignments:
            slot_codes.setdefault(slot_idx, []).append(code)
        for codes in slot_codes.values():
            transmitted += len(codes)
            unique, cnt = np.unique(codes, return_counts=True)
            collided += int(cnt[cnt > 1].sum())
    p_lam = slot_occupancy_prob(4.0, 20)
    expected_cf = collision_free_prob(p_lam, 10, 64)
    assert 1.0 - collided / transmitted == pytest.approx(expected_cf, abs=3e-3)


# ----------------------------------------------------------------------------
#  Coverage estimation
# ----------------------------------------------------------------------------

def test_estimate_coverage_reproducible():
    cfg = reference_config(n_active=10, lam=4.0)
    a = estimate_coverage(cfg, Scheme.BASELINE, 30, seed=5)
    b = estimate_coverage(cfg, Scheme.BASELINE, 30, seed=5)
    assert a == b
    c = estimate_coverage(cfg, Scheme.BASELINE, 30, seed=6)
    assert c != a


def test_estimate_coverage_worker_invariance():
    cfg = reference_config(n_active=10, lam=4.0)
    serial = estimate_coverage(cfg, Scheme.BASELINE, 40, seed=9, n_workers=1)
    parallel = estimate_coverage(cfg, Scheme.BASELINE, 40, seed=9, n_workers=2)
    assert serial == parallel


def test_estimate_coverage_accounting():
    cfg = reference_config(n_active=10, lam=6.0)
    est = estimate_coverage(cfg, Scheme.BASELINE, 100, seed=3)
    assert est.p_hat == pytest.approx(est.packets_decoded / est.packets_generated)
    assert est.packets_dropped <= est.packets_generated
    assert est.ci_halfwidth > 0


def test_estimate_coverage_near_one_in_benign_regime():
    cfg = reference_config(n_active=5, lam=2.0, n_slots=200)
    cfg = replace(
        cfg,
        frame=replace(cfg.frame, n_slots=200, n_subcarriers=6, code_pool_size=4096),
        reliability=replace(cfg.reliability, sinr_threshold=1e-12),
    )
    est = estimate_coverage(cfg, Scheme.BASELINE, 200, seed=8)
    assert est.p_hat >= 1.0 - max(3 * est.ci_halfwidth, 2e-3)
