"""End-to-end acceptance suite.

Eight headline checks: rate ordering across session sizes, the three- versus
four-intensity trade-off, the shared-vacuum worst case, the long-haul
operating point, decoy-bound soundness on a parameter grid, confidence
interval coverage, sampled-versus-expected model agreement, and the
large-session limit. Each test appends one verdict line to the shared log
(echoed after the run) before asserting, so a red criterion still reports
its measured numbers.

This module carries nearly all of the suite's runtime; expect ten to
fifteen minutes of optimizer work.
"""

import math
import time
from dataclasses import replace

import numpy as np
import pytest
from scipy.optimize import brentq

from snsqkd import (
    OptimizationProblem,
    ProtocolParams,
    asymptotic_pipeline,
    chernoff_interval,
    expected_observables,
    finite_key_pipeline,
    finite_key_worst_case_s00,
    optimize,
    pooled_yields,
    preset_device,
    scan_distance,
)
from snsqkd.checks import check_chernoff_coverage, compare_sampled_to_expected
from snsqkd.decoy import asymptotic_estimates
from snsqkd.presets import (
    FIELD_404KM_DEVICE,
    FIELD_404KM_PAIRS,
    FIELD_404KM_REFERENCE_BPS,
    ORACLE_CHECK_DISTANCE_KM,
    ORACLE_CHECK_PROTOCOL,
)

RESTARTS = 32
BUDGET = 16000
SEED = 0

DISTANCES = tuple(float(d) for d in range(0, 451, 25))
SESSION_SIZES = (1e12, 1e13, 1e14, math.inf)


def _verdict(log, number, passed, detail):
    log.append(f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}")
    assert passed, f"criterion {number}: {detail}"


def _problem(device, n_pairs, extra=(), **overrides):
    base = dict(
        device=device,
        pipeline="finite" if math.isfinite(n_pairs) else "asymptotic",
        variant="4int",
        n_pairs=n_pairs if math.isfinite(n_pairs) else 1e12,
        restarts=RESTARTS, budget=BUDGET, seed=SEED,
        extra_starts=tuple(extra),
    )
    base.update(overrides)
    return OptimizationProblem(**base)


@pytest.fixture(scope="module")
def ordering_scan():
    """Optimized four-intensity rates over 0..450 km for every session size.

    Each optimization is seeded with the optimum of the previous distance
    (same size) and of every smaller size at the same distance, on top of
    the full set of fresh restarts."""
    started = time.perf_counter()
    results = {n: [] for n in SESSION_SIZES}
    previous = {n: None for n in SESSION_SIZES}
    for distance in DISTANCES:
        device = preset_device("table1", distance_km=distance)
        carried = []
        for n_pairs in SESSION_SIZES:
            extra = list(carried)
            if previous[n_pairs] is not None:
                extra.append(previous[n_pairs])
            result = optimize(_problem(device, n_pairs, extra))
            results[n_pairs].append(result)
            previous[n_pairs] = result.params
            carried.append(result.params)
    return results, time.perf_counter() - started


def test_session_size_ordering(acceptance_log, ordering_scan):
    results, elapsed = ordering_scan
    violations = []
    for i, distance in enumerate(DISTANCES):
        rates = [results[n][i].rate_per_pulse for n in SESSION_SIZES]
        for smaller, larger in zip(rates, rates[1:]):
            ordered = larger >= smaller and (smaller <= 0.0 or larger > smaller)
            if not ordered:
                violations.append((distance, smaller, larger))
    top = results[math.inf][0].rate_per_pulse
    sane = 1e-4 < top < 1.0
    in_time = elapsed <= 1800.0
    detail = (
        f"optimized rates over {len(DISTANCES)} distances (0-450 km) keep "
        f"R(asymptotic) >= R(1e14) >= R(1e13) >= R(1e12), strict where "
        f"positive: {len(violations)} violations; asymptotic rate "
        f"{top:.3e}/pulse at 0 km; scan took {elapsed:.0f}s (limit 1800s)"
    )
    _verdict(acceptance_log, 1, not violations and sane and in_time, detail)


@pytest.fixture(scope="module")
def three_intensity_scan(ordering_scan):
    """Three-intensity optimization at 1e12 pairs, seeded per distance with
    the converted four-intensity optimum and the previous distance."""
    four = ordering_scan[0][1e12]
    rows = []
    previous = None
    for i, distance in enumerate(DISTANCES):
        device = preset_device("table1", distance_km=distance)
        p4 = four[i].params
        converted = replace(p4, p_1=min(p4.p_1 + p4.p_2, 0.994), p_2=0.0,
                            mu2=p4.mu_z)
        extra = [converted] if previous is None else [converted, previous]
        result = optimize(_problem(device, 1e12, extra, variant="3int"))
        previous = result.params
        rows.append(result)
    return rows


def test_three_vs_four_intensity_gap(acceptance_log, ordering_scan,
                                     three_intensity_scan):
    four = ordering_scan[0][1e12]
    gaps = []
    gap_failures = []
    dominance_failures = []
    for distance, r4, r3 in zip(DISTANCES, four, three_intensity_scan):
        rate4, rate3 = r4.rate_per_pulse, r3.rate_per_pulse
        if rate3 > rate4 + 1e-12:
            dominance_failures.append(distance)
        if rate4 >= 1e-6:
            gap = (rate4 - rate3) / rate4
            gaps.append(f"{distance:.0f}km {100 * gap:.3f}%")
            if not gap < 0.01:
                gap_failures.append(distance)
    detail = (
        f"at 1e12 pairs, relative loss of the three-intensity variant where "
        f"the four-intensity rate is at least 1e-6/pulse: {', '.join(gaps)}; "
        f"{len(gap_failures)} distance(s) at or above the 1% limit "
        f"{gap_failures}; dominance (four >= three, tolerance 1e-12) "
        f"violated at {len(dominance_failures)} distance(s) "
        f"{dominance_failures}"
    )
    _verdict(acceptance_log, 2, not gap_failures and not dominance_failures,
             detail)


def test_common_vacuum_worst_case(acceptance_log, ordering_scan):
    four = ordering_scan[0][1e12]
    worst_rel = 0.0
    compared = 0
    for i, distance in enumerate(DISTANCES):
        if not 100.0 <= distance <= 300.0:
            continue
        params = four[i].params
        device = preset_device("table1", distance_km=distance)
        joint = finite_key_worst_case_s00(params, device).rate_per_pulse
        pooled = pooled_yields(expected_observables(params, device),
                               device.epsilon, "4int")
        midpoint = 0.5 * (pooled.s00.lower + pooled.s00.upper)
        mid_rate = finite_key_pipeline(params, device,
                                       s00_value=midpoint).rate_per_pulse
        if mid_rate == 0.0 and joint == 0.0:
            continue
        worst_rel = max(worst_rel, abs(joint - mid_rate) / mid_rate)
        compared += 1
    detail = (
        f"worst-case-over-vacuum-yield rate vs midpoint-value rate at 1e12 "
        f"pairs, 100-300 km ({compared} points): largest relative "
        f"difference {100 * worst_rel:.4f}% (limit 0.1%)"
    )
    _verdict(acceptance_log, 3, compared > 0 and worst_rel < 1e-3, detail)


def test_long_haul_advantage(acceptance_log):
    result = optimize(_problem(FIELD_404KM_DEVICE, FIELD_404KM_PAIRS))
    bps = result.rate_per_pulse * 1e9
    within = 141.0 / 5.0 <= bps <= 141.0 * 5.0
    advantage = bps / FIELD_404KM_REFERENCE_BPS
    exceeds = advantage >= 1e4
    detail = (
        f"404 km device at 6e14 pairs: optimized {result.rate_per_pulse:.3e}"
        f"/pulse = {bps:.0f} bit/s at an assumed 1 GHz clock, target window "
        f"[28.2, 705] bit/s around the quoted 141: "
        f"{'inside' if within else 'outside'} (a ~75 MHz clock reproduces "
        f"the quoted figure); advantage over the {FIELD_404KM_REFERENCE_BPS}"
        f" bit/s reference = {advantage:.2e} (needs >= 1e4)"
    )
    _verdict(acceptance_log, 4, within and exceeds, detail)


def _single_photon_slice_mc(device, half_width, samples, seed):
    """Count wrong and effective events for total-one-photon pairs whose
    announced phase difference is uniform over the matched slice."""
    rng = np.random.default_rng(seed)
    eta = device.eta_d * 10 ** (
        -device.loss_db_per_km * device.distance_km / 20.0)
    p_d = device.p_d
    visibility = 1.0 - 2.0 * device.e_a
    wrong = 0
    effective = 0
    remaining = samples
    while remaining:
        m = min(remaining, 2_500_000)
        remaining -= m
        delta = rng.uniform(-half_width, half_width, m)
        wrong_prob = 0.5 * (1.0 - visibility * np.cos(delta))
        detected = rng.random(m) < eta
        other_dark = rng.random(m) < p_d
        photon_events = detected & ~other_dark
        effective += int(np.count_nonzero(photon_events))
        wrong += int(np.count_nonzero(photon_events
                                      & (rng.random(m) < wrong_prob)))
        dark0 = rng.random(m) < p_d
        dark1 = rng.random(m) < p_d
        dark_events = ~detected & (dark0 ^ dark1)
        effective += int(np.count_nonzero(dark_events))
        wrong += int(np.count_nonzero(dark_events & dark1))
    return wrong, effective


C5_DISTANCES = tuple(float(d) for d in np.linspace(0.0, 450.0, 10))
C5_MU1 = (0.02, 0.05, 0.08, 0.11)
C5_MU2 = (0.12, 0.2, 0.3, 0.45, 0.65)


def test_decoy_bound_soundness_grid(acceptance_log):
    base = ProtocolParams(p_x=0.2, p_1=0.4, p_2=0.2, p_z=0.1, mu1=0.05,
                          mu2=0.2, mu_z=0.8, delta_slice=0.6, n_pairs=1e12)
    violations = []
    points = 0
    for i, distance in enumerate(C5_DISTANCES):
        device = preset_device("table1", distance_km=distance)
        eta = device.eta_d * 10 ** (
            -device.loss_db_per_km * device.distance_km / 20.0)
        y1_true = eta * (1.0 - device.p_d) \
            + (1.0 - eta) * 2.0 * device.p_d * (1.0 - device.p_d)
        wrong, effective = _single_photon_slice_mc(
            device, base.delta_slice / 2.0, 10_000_000, seed=1000 + i)
        e1_mc = wrong / effective
        sigma = math.sqrt(e1_mc * (1.0 - e1_mc) / effective)
        for mu1 in C5_MU1:
            for mu2 in C5_MU2:
                params = replace(base, mu1=mu1, mu2=mu2)
                est = asymptotic_estimates(
                    expected_observables(params, device), params, "4int")
                points += 1
                if est.s1z_lower > y1_true + 1e-12:
                    violations.append(("yield", distance, mu1, mu2))
                if est.e1ph_upper < e1_mc - 3.0 * sigma:
                    violations.append(("error", distance, mu1, mu2))
    detail = (
        f"{points}-point grid ({len(C5_DISTANCES)} distances x "
        f"{len(C5_MU1) * len(C5_MU2)} intensity pairs): single-photon yield "
        f"lower bound and slice-error upper bound (checked against a "
        f"1e7-sample simulation per distance, 3 sigma): "
        f"{len(violations)} violations {violations[:4]}"
    )
    _verdict(acceptance_log, 5, points == 200 and not violations, detail)


def _root_find_interval(k, epsilon):
    beta = math.log(1.0 / epsilon)

    def upper_eq(mu):
        return mu - math.sqrt(2.0 * beta * mu) - k

    hi = k + 10.0 * beta + 10.0 * math.sqrt(beta * max(k, 1.0))
    upper = brentq(upper_eq, 1e-12, hi, xtol=1e-10, rtol=1e-14)
    if k <= beta:
        return 0.0, upper

    def lower_eq(mu):
        return (k - mu) ** 2 - 2.0 * beta * mu - beta * (k - mu)

    lower = brentq(lower_eq, 1e-300, k, xtol=1e-10, rtol=1e-14)
    return lower, upper


def test_interval_coverage(acceptance_log):
    results = check_chernoff_coverage(SEED)
    failed = [r.name for r in results if not r.passed]
    worst_gap = 0.0
    for epsilon in (0.01, 1e-10):
        lo_ref, hi_ref = _root_find_interval(1e6, epsilon)
        ci = chernoff_interval(1e6, epsilon)
        worst_gap = max(worst_gap, abs(ci.mean_lower - lo_ref),
                        abs(ci.mean_upper - hi_ref))
    detail = (
        f"{len(results)} coverage checks at epsilon 0.01 (1e5 trials per "
        f"mean), {len(failed)} failed {failed}; closed-form interval ends "
        f"vs root-finding at count 1e6 differ by at most {worst_gap:.2e} "
        f"(limit 5)"
    )
    _verdict(acceptance_log, 6, not failed and worst_gap <= 5.0, detail)


def test_sampled_model_agreement(acceptance_log):
    params = replace(ORACLE_CHECK_PROTOCOL, n_pairs=1e8)
    device = preset_device("table1", distance_km=ORACLE_CHECK_DISTANCE_KM)
    started = time.perf_counter()
    results = compare_sampled_to_expected(params, device, SEED)
    elapsed = time.perf_counter() - started
    failed = [r.name for r in results if not r.passed]
    detail = (
        f"sampled run of 1e8 pulse pairs against expected counts: "
        f"{len(results)} comparisons all within 5 sigma, {len(failed)} "
        f"failed {failed}; took {elapsed:.0f}s (limit 600s)"
    )
    _verdict(acceptance_log, 7, not failed and elapsed <= 600.0, detail)


C8_DISTANCES = tuple(float(d) for d in range(0, 361, 40))


def test_large_session_limit(acceptance_log):
    device = preset_device("table1", distance_km=0.0)
    problem = OptimizationProblem(
        device=device, pipeline="finite", variant="4int", n_pairs=1e20,
        restarts=16, budget=10000, seed=SEED)
    points = scan_distance(problem, C8_DISTANCES)
    worst_rel = 0.0
    conservative = True
    source_free = True
    for point in points:
        finite_rate = point.result.rate_per_pulse
        at_distance = replace(device, distance_km=point.distance_km)
        asym_rate = asymptotic_pipeline(point.result.params,
                                        at_distance).rate_per_pulse
        conservative &= finite_rate <= asym_rate + 1e-18
        if asym_rate > 0.0:
            worst_rel = max(worst_rel, (asym_rate - finite_rate) / asym_rate)
        else:
            conservative &= finite_rate == 0.0
        # infinite statistics: decoy source probabilities set only cell
        # populations, never the per-population yields, so they drop out
        reweighted = asymptotic_pipeline(
            replace(point.result.params, p_1=0.5, p_2=0.25),
            at_distance).rate_per_pulse
        source_free &= abs(reweighted - asym_rate) <= 1e-12 * max(asym_rate,
                                                                  1e-300)
    positive = sum(1 for p in points if p.result.rate_per_pulse > 0.0)
    detail = (
        f"optimized finite rate at 1e20 pairs vs the asymptotic rate at the "
        f"same parameters over {len(C8_DISTANCES)} distances (0-360 km, "
        f"{positive} with positive rate): largest relative gap "
        f"{100 * worst_rel:.4f}% (limit 1%), finite never above asymptotic: "
        f"{conservative}, asymptotic rate free of decoy source "
        f"probabilities: {source_free}"
    )
    _verdict(acceptance_log, 8,
             worst_rel < 0.01 and conservative and source_free
             and positive == len(points),
             detail)
