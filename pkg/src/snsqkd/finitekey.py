"""Finite-statistics key rates via Chernoff-bound fluctuation analysis.

Observed counts only estimate the underlying rates, so every yield entering
the decoy bounds is replaced by the unfavourable end of a Chernoff interval,
and the estimated single-photon population is shrunk once more when
converting the mean-value bound back to a count. Counts of the same physical
kind from either ordering of the two parties (e.g. vacuum paired with the
first decoy) are pooled before the interval is taken, since their pair
counts are equal by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .channel import expected_observables
from .decoy import (
    MIN_INTENSITY_GAP,
    _check_intensities,
    _require_variant,
    _single_photon_yield_raw,
    e1ph_upper_raw,
)
from .protocol import (
    DeviceModel,
    KeyRateReport,
    Observables,
    ParameterError,
    ProtocolParams,
    UndefinedBoundError,
    key_length_finite,
    key_length_finite_raw,
)

#: Grid resolution for the worst-case scan over the common vacuum yield.
S00_SCAN_POINTS = 9


@dataclass(frozen=True)
class ChernoffInterval:
    """Two-sided interval for the mean of a sum of Bernoulli/Poisson-like
    counts, given an observed count and a per-side failure probability.

    mean_lower and mean_upper are the closed-form inversions of the
    multiplicative Chernoff tail bounds: with beta = ln(1/epsilon),

        mean_upper = k + beta + sqrt(2 k beta + beta^2)
        mean_lower = max(0, k + beta/2 - sqrt(8 k beta + beta^2) / 2)

    inverting the lower-tail bound exp(-delta^2 mu / 2) and the upper-tail
    bound exp(-delta^2 mu / (2 + delta)) respectively.
    """

    count: float
    epsilon: float
    mean_lower: float
    mean_upper: float

    @property
    def delta_lower(self) -> float:
        """Relative deviation so that mean_lower = count / (1 + delta)."""
        if self.count == 0.0:
            return 0.0
        if self.mean_lower == 0.0:
            return math.inf
        return self.count / self.mean_lower - 1.0

    @property
    def delta_upper(self) -> float:
        """Relative deviation so that mean_upper = count / (1 - delta)."""
        if self.mean_upper == 0.0:
            return 0.0
        return 1.0 - self.count / self.mean_upper


def chernoff_interval(k: float, epsilon: float) -> ChernoffInterval:
    """Chernoff interval for the mean given an observed count k.

    k may be real-valued (expected-value mode feeds expected counts).
    """
    if k < 0.0:
        raise ParameterError(f"count must be >= 0, got {k}")
    if not 0.0 < epsilon < 1.0:
        raise ParameterError(f"epsilon must be in (0, 1), got {epsilon}")
    beta = math.log(1.0 / epsilon)
    upper = k + beta + math.sqrt(2.0 * k * beta + beta * beta)
    lower = max(0.0, k + 0.5 * beta - 0.5 * math.sqrt(8.0 * k * beta + beta * beta))
    return ChernoffInterval(count=k, epsilon=epsilon,
                            mean_lower=lower, mean_upper=upper)


class YieldInterval(NamedTuple):
    """A pooled observed yield with its Chernoff-bounded range."""

    observed: float
    lower: float
    upper: float
    pooled_count: float
    pooled_pairs: float


def _pooled_interval(count: float, pairs: float, epsilon: float) -> YieldInterval:
    if pairs <= 0.0:
        raise ParameterError("pooled pair count must be positive")
    ci = chernoff_interval(count, epsilon)
    return YieldInterval(
        observed=count / pairs,
        lower=ci.mean_lower / pairs,
        upper=min(1.0, ci.mean_upper / pairs),
        pooled_count=count,
        pooled_pairs=pairs,
    )


@dataclass(frozen=True)
class PooledYields:
    """Chernoff intervals for every pooled yield the finite-key bounds use.

    s1: vacuum paired with the first decoy (both orderings pooled).
    s_ref: vacuum paired with the second reference intensity; that is the
        second decoy for the four-intensity variant, or the signal intensity
        (cross-window data) for the three-intensity variant.
    s00: both vacuum.
    t_slice: wrong-detector rate over the accepted slices, pooled across the
        two slice signs (their pair counts are equal). The per-sign variant
        keeps the two slices separate and averages their upper bounds.
    """

    s1: YieldInterval
    s_ref: YieldInterval
    s00: YieldInterval
    t_slice: YieldInterval
    t_slice_upper_per_sign: float


def pooled_yields(observables: Observables, epsilon: float,
                  variant: str = "4int") -> PooledYields:
    """Pool symmetric counts and attach Chernoff intervals."""
    _require_variant(variant)
    cap, n = observables.cap_n, observables.n

    ref = ("0", "2") if variant == "4int" else ("0", "z")
    ref_rev = (ref[1], ref[0])

    s1 = _pooled_interval(n[("0", "1")] + n[("1", "0")],
                          cap[("0", "1")] + cap[("1", "0")], epsilon)
    s_ref = _pooled_interval(n[ref] + n[ref_rev],
                             cap[ref] + cap[ref_rev], epsilon)
    s00 = _pooled_interval(n[("0", "0")], cap[("0", "0")], epsilon)

    cap_pooled = observables.cap_n_slice_plus + observables.cap_n_slice_minus
    t_slice = _pooled_interval(
        observables.n_slice_wrong_plus + observables.n_slice_wrong_minus,
        cap_pooled, epsilon)

    if observables.cap_n_slice_plus <= 0.0 or observables.cap_n_slice_minus <= 0.0:
        raise ParameterError("slice pair counts must be positive")
    up_plus = (chernoff_interval(observables.n_slice_wrong_plus, epsilon).mean_upper
               / observables.cap_n_slice_plus)
    up_minus = (chernoff_interval(observables.n_slice_wrong_minus, epsilon).mean_upper
                / observables.cap_n_slice_minus)
    per_sign = min(1.0, 0.5 * (up_plus + up_minus))

    return PooledYields(s1=s1, s_ref=s_ref, s00=s00, t_slice=t_slice,
                        t_slice_upper_per_sign=per_sign)


def mean_s1z_lower(s1_lower: float, s_ref_upper: float, s00_upper: float,
                   mu1: float, mu_ref: float) -> float:
    """Mean-value lower bound on the single-photon yield: the two-decoy
    extraction evaluated at the unfavourable interval ends, clamped at
    zero."""
    _check_intensities(mu1, mu_ref)
    raw = _single_photon_yield_raw(s1_lower, s_ref_upper, s00_upper, mu1, mu_ref)
    return min(1.0, max(0.0, raw))


def mean_e1ph_upper(t_slice_upper: float, s00_lower: float, mu1: float,
                    s1z_mean_lower: float) -> float:
    """Mean-value upper bound on the single-photon phase-flip rate:
    the face-value formula at the unfavourable interval ends, clamped to
    [0, 1]. Raises UndefinedBoundError when the yield bound is zero."""
    raw = e1ph_upper_raw(t_slice_upper, s00_lower, mu1, s1z_mean_lower)
    return min(1.0, max(0.0, raw))


class ObservedBounds(NamedTuple):
    """Mean-value bounds converted to worst-case observed quantities."""

    s1_used: float
    e1ph_used: float
    delta_single: float
    delta_single_error: float


def observed_from_mean(mean_s1_lower: float, mean_e1ph_upper: float,
                       n_single_expected: float, epsilon: float) -> ObservedBounds:
    """Shrink the mean-value bounds to cover the realised counts.

    The correction deviations come from a Chernoff interval built on the
    expected single-photon event population m = mean_s1_lower *
    n_single_expected (and on its error share mean_e1ph_upper * m). This
    construction is a modelling convention, flagged in reports.
    """
    if n_single_expected < 0.0:
        raise ParameterError(
            f"n_single_expected must be >= 0, got {n_single_expected}"
        )
    if not 0.0 <= mean_s1_lower <= 1.0 or not 0.0 <= mean_e1ph_upper <= 1.0:
        raise ParameterError("mean bounds must be in [0, 1]")

    m = mean_s1_lower * n_single_expected
    if m <= 0.0:
        return ObservedBounds(0.0, mean_e1ph_upper, 0.0, 0.0)
    ci = chernoff_interval(m, epsilon)
    delta_single = 1.0 - ci.mean_lower / m
    s1_used = mean_s1_lower * (1.0 - delta_single)

    m_err = mean_e1ph_upper * m
    if m_err <= 0.0:
        return ObservedBounds(s1_used, mean_e1ph_upper, delta_single, 0.0)
    ci_err = chernoff_interval(m_err, epsilon)
    delta_err = ci_err.mean_upper / m_err - 1.0
    e1_used = min(1.0, mean_e1ph_upper * (1.0 + delta_err))
    return ObservedBounds(s1_used, e1_used, delta_single, delta_err)


def _zero_rate_report(params: ProtocolParams, device: DeviceModel,
                      variant: str, obs: Observables, t_used: float,
                      s00_used: float, deviations: dict[str, float],
                      flags: list[str]) -> KeyRateReport:
    raw = key_length_finite_raw(0.0, 0.5, obs.n_t, obs.e_z, device.f_ec)
    return KeyRateReport(
        regime="finite",
        variant=variant,
        rate_per_pulse=0.0,
        rate_per_pulse_raw=raw / params.n_pairs,
        key_length=0.0,
        key_length_raw=raw,
        s1_used=0.0,
        e1ph_used=1.0,
        s_z=obs.s_z,
        e_z=obs.e_z,
        t_delta=t_used,
        s00_used=s00_used,
        a1=params.single_photon_prob_z,
        q1=params.single_photon_prob_pair,
        n1=0.0,
        n_t=obs.n_t,
        deviations=deviations,
        flags=tuple(flags),
    )


def finite_key_pipeline(params: ProtocolParams, device: DeviceModel,
                        variant: str = "4int", *,
                        observables: Observables | None = None,
                        s00_value: float | None = None,
                        per_sign_slices: bool = False) -> KeyRateReport:
    """Expected observables -> Chernoff intervals -> fluctuation-corrected
    decoy bounds -> finite key length and per-pulse rate.

    By default the vacuum yield enters each bound at its own unfavourable
    interval end (upper end in the yield bound, lower end in the error
    bound). Passing s00_value instead evaluates both bounds at that single
    common value, which worst_case_s00 scans over the interval.
    per_sign_slices switches the slice-error upper bound from the pooled
    count to the mean of per-sign bounds.
    """
    _require_variant(variant)
    if variant == "4int" and params.p_2 <= 0.0:
        raise ParameterError("variant '4int' needs p_2 > 0 for second-decoy data")
    mu_ref = params.mu2 if variant == "4int" else params.mu_z
    _check_intensities(params.mu1, mu_ref)

    obs = expected_observables(params, device) if observables is None else observables
    eps = device.epsilon
    pooled = pooled_yields(obs, eps, variant)

    flags: list[str] = ["single-photon-count-from-expected-population"]
    if s00_value is not None:
        if not 0.0 <= s00_value <= 1.0:
            raise ParameterError(f"s00_value must be in [0, 1], got {s00_value}")
        s00_for_yield = s00_for_error = s00_value
        s00_used = s00_value
        flags.append("s00-common-value")
    else:
        s00_for_yield = pooled.s00.upper
        s00_for_error = pooled.s00.lower
        s00_used = pooled.s00.observed

    t_used = pooled.t_slice_upper_per_sign if per_sign_slices else pooled.t_slice.upper
    if per_sign_slices:
        flags.append("per-sign-slice-bounds")

    deviations = {
        "s1_pool": 1.0 - pooled.s1.lower / pooled.s1.observed
        if pooled.s1.observed > 0.0 else 0.0,
        "s_ref_pool": pooled.s_ref.upper / pooled.s_ref.observed - 1.0
        if pooled.s_ref.observed > 0.0 else math.inf,
        "s00_lower": 1.0 - pooled.s00.lower / pooled.s00.observed
        if pooled.s00.observed > 0.0 else 0.0,
        "s00_upper": pooled.s00.upper / pooled.s00.observed - 1.0
        if pooled.s00.observed > 0.0 else math.inf,
        "t_slice_upper": t_used / pooled.t_slice.observed - 1.0
        if pooled.t_slice.observed > 0.0 else math.inf,
    }

    s1_mean = mean_s1z_lower(pooled.s1.lower, pooled.s_ref.upper,
                             s00_for_yield, params.mu1, mu_ref)
    if s1_mean <= 0.0:
        flags.append("s1z-lower-clamped")
        return _zero_rate_report(params, device, variant, obs, t_used,
                                 s00_used, deviations, flags)
    try:
        e1_mean = mean_e1ph_upper(t_used, s00_for_error, params.mu1, s1_mean)
    except UndefinedBoundError:
        flags.append("e1ph-undefined")
        return _zero_rate_report(params, device, variant, obs, t_used,
                                 s00_used, deviations, flags)

    n = params.n_pairs
    a1 = params.single_photon_prob_z
    n_single_expected = (n * (1.0 - params.p_x) ** 2
                         * 2.0 * params.p_z * (1.0 - params.p_z) * a1)
    bounds = observed_from_mean(s1_mean, e1_mean, n_single_expected, eps)
    deviations["single_photon_count"] = bounds.delta_single
    deviations["single_photon_errors"] = bounds.delta_single_error

    n1 = n_single_expected * bounds.s1_used
    raw = key_length_finite_raw(n1, bounds.e1ph_used, obs.n_t, obs.e_z,
                                device.f_ec)
    length = key_length_finite(n1, bounds.e1ph_used, obs.n_t, obs.e_z,
                               device.f_ec)
    if raw < 0.0:
        flags.append("key-length-clamped")
    return KeyRateReport(
        regime="finite",
        variant=variant,
        rate_per_pulse=length / n,
        rate_per_pulse_raw=raw / n,
        key_length=length,
        key_length_raw=raw,
        s1_used=bounds.s1_used,
        e1ph_used=bounds.e1ph_used,
        s_z=obs.s_z,
        e_z=obs.e_z,
        t_delta=t_used,
        s00_used=s00_used,
        a1=a1,
        q1=params.single_photon_prob_pair,
        n1=n1,
        n_t=obs.n_t,
        deviations=deviations,
        flags=tuple(flags),
    )


def worst_case_s00(pipeline: Callable[[float], KeyRateReport],
                   s00_interval: tuple[float, float]) -> KeyRateReport:
    """Minimum key rate over a common vacuum yield shared by the yield and
    error bounds.

    pipeline maps one s00 value to a report; the interval is scanned on a
    fixed grid (endpoints included) so an interior minimum of a non-monotone
    rate is caught. Ties pick the lowest s00.
    """
    lo, hi = s00_interval
    if not 0.0 <= lo <= hi <= 1.0:
        raise ParameterError(f"invalid s00 interval: ({lo}, {hi})")
    if hi - lo < 1e-300:
        return pipeline(lo)
    worst: KeyRateReport | None = None
    for value in np.linspace(lo, hi, S00_SCAN_POINTS):
        report = pipeline(float(value))
        if worst is None or report.rate_per_pulse < worst.rate_per_pulse:
            worst = report
    assert worst is not None
    return worst


def finite_key_worst_case_s00(params: ProtocolParams, device: DeviceModel,
                              variant: str = "4int") -> KeyRateReport:
    """Finite-key rate with the vacuum yield treated as one shared unknown,
    minimised over its Chernoff interval."""
    obs = expected_observables(params, device)
    pooled = pooled_yields(obs, device.epsilon, variant)

    def evaluate(s00: float) -> KeyRateReport:
        return finite_key_pipeline(params, device, variant,
                                   observables=obs, s00_value=s00)

    return worst_case_s00(evaluate, (pooled.s00.lower, pooled.s00.upper))
