"""Self-consistency checks: sampled vs expected observables, and Chernoff
interval coverage. The CLI's oracle-check command runs these; the test suite
reuses them at larger budgets."""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from scipy.stats import binom

from .channel import expected_observables, monte_carlo_observables
from .finitekey import chernoff_interval
from .protocol import DeviceModel, Observables, ProtocolParams

#: Two-sided tail probability of a 5-sigma normal deviation. A sampled count
#: violates the comparison when its exact binomial two-sided tail is rarer
#: than this, which reduces to |k - m| <= 5 sigma for large counts.
FIVE_SIGMA_TAIL = math.erfc(5.0 / math.sqrt(2.0))

COVERAGE_MEANS = (5.0, 50.0, 5e3, 5e5)
COVERAGE_TRIALS = 100_000
COVERAGE_EPSILON = 0.01


class CheckResult(NamedTuple):
    name: str
    passed: bool
    detail: str


def _binomial_tail_check(name: str, observed: float, expected: float,
                         trials: float) -> CheckResult:
    """Exact two-sided binomial test of one sampled count against its
    expected value, at the 5-sigma-equivalent level."""
    n = int(round(trials))
    k = int(round(observed))
    if n == 0:
        return CheckResult(name, expected == 0.0,
                           f"no trials, expected {expected:g}")
    p = min(1.0, expected / trials)
    if k >= expected:
        tail = binom.sf(k - 1, n, p)
    else:
        tail = binom.cdf(k, n, p)
    two_sided = min(1.0, 2.0 * tail)
    sigma = math.sqrt(max(trials * p * (1.0 - p), 1e-300))
    return CheckResult(
        name,
        two_sided >= FIVE_SIGMA_TAIL,
        f"observed {k}, expected {expected:.6g}, deviation "
        f"{(k - expected) / sigma:+.2f} sigma, two-sided tail {two_sided:.3g}",
    )


def compare_sampled_to_expected(params: ProtocolParams, device: DeviceModel,
                                seed: int) -> list[CheckResult]:
    """Run the sampled path and test every count against the expected-value
    path. Each pulse pair lands in any given tally independently, so each
    sampled count is binomial over the session size with the expected rate."""
    expected = expected_observables(params, device)
    sampled = monte_carlo_observables(params, device, seed)
    return compare_observables(expected, sampled, params.n_pairs)


def compare_observables(expected: Observables, sampled: Observables,
                        n_pairs: float) -> list[CheckResult]:
    results: list[CheckResult] = []
    for key in sorted(expected.cap_n):
        label = f"pairs[{key[0]},{key[1]}]"
        results.append(_binomial_tail_check(
            label, sampled.cap_n[key], expected.cap_n[key], n_pairs))
        results.append(_binomial_tail_check(
            f"effective[{key[0]},{key[1]}]", sampled.n[key],
            expected.n[key], n_pairs))
    for name in ("cap_n_slice_plus", "cap_n_slice_minus",
                 "n_slice_wrong_plus", "n_slice_wrong_minus",
                 "n_slice_right_plus", "n_slice_right_minus",
                 "n_t", "err_z"):
        results.append(_binomial_tail_check(
            name, getattr(sampled, name), getattr(expected, name), n_pairs))
    return results


def check_chernoff_coverage(seed: int, epsilon: float = COVERAGE_EPSILON,
                            trials: int = COVERAGE_TRIALS,
                            means: tuple[float, ...] = COVERAGE_MEANS
                            ) -> list[CheckResult]:
    """Empirical coverage of the Chernoff interval: for Poisson and binomial
    counts of known mean, the interval built from each draw must contain the
    true mean in at least a 1 - epsilon fraction of trials."""
    rng = np.random.default_rng(seed)
    beta = math.log(1.0 / epsilon)
    results: list[CheckResult] = []
    for mean in means:
        for family in ("poisson", "binomial"):
            if family == "poisson":
                draws = rng.poisson(mean, size=trials).astype(float)
            else:
                n = int(mean * 10)
                draws = rng.binomial(n, 0.1, size=trials).astype(float)
            uppers = draws + beta + np.sqrt(2.0 * draws * beta + beta * beta)
            lowers = np.maximum(
                0.0, draws + 0.5 * beta
                - 0.5 * np.sqrt(8.0 * draws * beta + beta * beta))
            covered = np.mean((lowers <= mean) & (mean <= uppers))
            results.append(CheckResult(
                f"chernoff-coverage[{family}, mean={mean:g}]",
                covered >= 1.0 - epsilon,
                f"coverage {covered:.5f} over {trials} trials "
                f"(needs >= {1.0 - epsilon})",
            ))
    # Interval sandwich on the same draws' extremes, cheap invariant guard.
    probe = chernoff_interval(float(means[-1]), epsilon)
    sandwich = probe.mean_lower <= means[-1] <= probe.mean_upper
    results.append(CheckResult(
        "chernoff-sandwich",
        sandwich,
        f"interval ({probe.mean_lower:.6g}, {probe.mean_upper:.6g}) "
        f"around count {means[-1]:g}",
    ))
    return results
