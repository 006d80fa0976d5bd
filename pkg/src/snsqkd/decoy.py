"""Decoy-state bounds for the single-photon yield and phase error rate.

The X-window data (vacuum and one or two decoy intensities) bounds the yield
of the single-photon component of Z-window send/not-send pairs from below,
and the slice error rate bounds its phase-flip error from above. With two
decoys this uses the intensities (mu1, mu2); the three-intensity variant
reuses the signal intensity mu_z as the second reference instead, trading
estimation tightness for one fewer source setting.

All bounds here take expected (or observed) yields at face value; the
fluctuation-corrected versions live in the finite-key module.
"""

from __future__ import annotations

import math

from .channel import expected_observables
from .protocol import (
    DecoyEstimates,
    DeviceModel,
    KeyRateReport,
    Observables,
    ParameterError,
    ProtocolParams,
    UndefinedBoundError,
    key_rate_per_pulse,
    key_rate_per_pulse_raw,
)

VARIANTS = ("4int", "3int")

#: Intensity separations below this make the decoy denominators meaningless.
MIN_INTENSITY_GAP = 1e-12


def _check_yield(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ParameterError(f"{name} must be in [0, 1], got {value}")


def _check_intensities(mu1: float, mu2: float) -> None:
    if mu1 <= 0.0:
        raise ParameterError(f"mu1 must be > 0, got {mu1}")
    if mu2 - mu1 < MIN_INTENSITY_GAP:
        raise ParameterError(
            f"decoy intensities too close: mu1={mu1}, mu2={mu2} "
            f"(need mu2 - mu1 >= {MIN_INTENSITY_GAP})"
        )


def _single_photon_yield_raw(s_low: float, s_high: float, s_vac: float,
                             mu1: float, mu2: float) -> float:
    """Shared two-decoy extraction of a one-sided single-photon yield:
    [mu2^2 e^{mu1} S(mu1) - mu1^2 e^{mu2} S(mu2) - (mu2^2 - mu1^2) S(0)]
    / [mu1 mu2 (mu2 - mu1)], before clamping."""
    numerator = (mu2 * mu2 * math.exp(mu1) * s_low
                 - mu1 * mu1 * math.exp(mu2) * s_high
                 - (mu2 * mu2 - mu1 * mu1) * s_vac)
    return numerator / (mu1 * mu2 * (mu2 - mu1))


def s_z0_lower(s01: float, s02: float, s00: float,
               mu1: float, mu2: float) -> float:
    """Lower bound on the yield of the single-photon part of not-send/send
    pairs, from the yields where the first party sent vacuum and the second
    sent mu1 (s01), mu2 (s02) or vacuum (s00). Clamped at zero."""
    _check_intensities(mu1, mu2)
    for name, v in (("s01", s01), ("s02", s02), ("s00", s00)):
        _check_yield(name, v)
    return max(0.0, _single_photon_yield_raw(s01, s02, s00, mu1, mu2))


def s_z1_lower(s10: float, s20: float, s00: float,
               mu1: float, mu2: float) -> float:
    """Mirror of s_z0_lower for send/not-send pairs, from the yields where
    the second party sent vacuum."""
    _check_intensities(mu1, mu2)
    for name, v in (("s10", s10), ("s20", s20), ("s00", s00)):
        _check_yield(name, v)
    return max(0.0, _single_photon_yield_raw(s10, s20, s00, mu1, mu2))


def s1z_lower(s01: float, s10: float, s02: float, s20: float, s00: float,
              mu1: float, mu2: float) -> float:
    """Lower bound on the single-photon yield of Z-window send/not-send
    pairs: the mean of the two one-sided bounds."""
    return 0.5 * (s_z0_lower(s01, s02, s00, mu1, mu2)
                  + s_z1_lower(s10, s20, s00, mu1, mu2))


def s1z_lower_three_intensity(s01: float, s0z: float, s00: float, s10: float,
                              sz0: float, mu1: float, mu_z: float) -> float:
    """Three-intensity variant of s1z_lower: the signal intensity mu_z and
    the cross-window yields s0z / sz0 replace the second decoy."""
    return 0.5 * (s_z0_lower(s01, s0z, s00, mu1, mu_z)
                  + s_z1_lower(s10, sz0, s00, mu1, mu_z))


def t_delta(observables: Observables) -> float:
    """Observed slice error rate: mean wrong-detector effective rate over
    the two accepted phase slices."""
    return observables.t_slice


def e1ph_upper_raw(t_delta_value: float, s00: float, mu1: float,
                   s1z_lower_value: float) -> float:
    """Upper bound on the single-photon phase-flip error rate before
    clamping to [0, 1]:

        (T_delta - 0.5 e^{-2 mu1} S00) / (2 mu1 e^{-2 mu1} s1z_lower)

    The subtraction removes the vacuum (dark-count) share of the slice
    errors; the denominator is the single-photon share of slice pairs times
    the single-photon yield bound.
    """
    if mu1 <= 0.0:
        raise ParameterError(f"mu1 must be > 0, got {mu1}")
    _check_yield("t_delta", t_delta_value)
    _check_yield("s00", s00)
    _check_yield("s1z_lower", s1z_lower_value)
    if s1z_lower_value == 0.0:
        raise UndefinedBoundError(
            "phase-error bound undefined: single-photon yield bound is zero"
        )
    vacuum_share = 0.5 * math.exp(-2.0 * mu1) * s00
    q1 = 2.0 * mu1 * math.exp(-2.0 * mu1)
    return (t_delta_value - vacuum_share) / (q1 * s1z_lower_value)


def e1ph_upper(t_delta_value: float, s00: float, mu1: float,
               s1z_lower_value: float) -> float:
    """Upper bound on the single-photon phase-flip error rate, clamped to
    [0, 1]. Raises UndefinedBoundError when s1z_lower_value is zero."""
    raw = e1ph_upper_raw(t_delta_value, s00, mu1, s1z_lower_value)
    return min(1.0, max(0.0, raw))


def _require_variant(variant: str) -> None:
    if variant not in VARIANTS:
        raise ParameterError(f"variant must be one of {VARIANTS}, got {variant!r}")


def asymptotic_estimates(observables: Observables, params: ProtocolParams,
                         variant: str = "4int") -> DecoyEstimates:
    """Decoy-state estimates from face-value yields.

    variant "4int" uses both decoy intensities; "3int" substitutes the
    signal intensity for the second decoy (requires mu1 < mu_z and works
    with p_2 = 0).
    """
    _require_variant(variant)
    flags: list[str] = []

    s01 = observables.yield_of("0", "1")
    s10 = observables.yield_of("1", "0")
    s00 = observables.yield_of("0", "0")
    if variant == "4int":
        if params.p_2 <= 0.0:
            raise ParameterError("variant '4int' needs p_2 > 0 for second-decoy data")
        s_high_a = observables.yield_of("0", "2")
        s_high_b = observables.yield_of("2", "0")
        mu_ref = params.mu2
    else:
        s_high_a = observables.yield_of("0", "z")
        s_high_b = observables.yield_of("z", "0")
        mu_ref = params.mu_z

    _check_intensities(params.mu1, mu_ref)
    raw_a = _single_photon_yield_raw(s01, s_high_a, s00, params.mu1, mu_ref)
    raw_b = _single_photon_yield_raw(s10, s_high_b, s00, params.mu1, mu_ref)
    if raw_a < 0.0 or raw_b < 0.0:
        flags.append("s1z-lower-clamped")
    s1 = 0.5 * (max(0.0, raw_a) + max(0.0, raw_b))
    s1 = min(1.0, s1)

    t_d = t_delta(observables)
    try:
        e1_raw = e1ph_upper_raw(t_d, s00, params.mu1, s1)
    except UndefinedBoundError:
        flags.append("e1ph-undefined")
        return DecoyEstimates(s1z_lower=0.0, e1ph_upper=1.0, t_delta=t_d,
                              s00=s00, regime="asymptotic", flags=tuple(flags))
    if e1_raw < 0.0:
        flags.append("e1ph-clamped-low")
    elif e1_raw > 1.0:
        flags.append("e1ph-clamped-high")
    e1 = min(1.0, max(0.0, e1_raw))
    return DecoyEstimates(s1z_lower=s1, e1ph_upper=e1, t_delta=t_d,
                          s00=s00, regime="asymptotic", flags=tuple(flags))


def asymptotic_pipeline(params: ProtocolParams, device: DeviceModel,
                        variant: str = "4int") -> KeyRateReport:
    """Expected observables -> decoy estimates -> asymptotic key rate."""
    _require_variant(variant)
    obs = expected_observables(params, device)
    est = asymptotic_estimates(obs, params, variant)
    s_z, e_z = obs.s_z, obs.e_z

    if "e1ph-undefined" in est.flags:
        raw = key_rate_per_pulse_raw(params, 0.0, 0.5, s_z, e_z, device.f_ec)
        rate = 0.0
    else:
        raw = key_rate_per_pulse_raw(params, est.s1z_lower, est.e1ph_upper,
                                     s_z, e_z, device.f_ec)
        rate = key_rate_per_pulse(params, est.s1z_lower, est.e1ph_upper,
                                  s_z, e_z, device.f_ec)
    n = params.n_pairs
    n1 = (n * (1.0 - params.p_x) ** 2 * 2.0 * params.p_z * (1.0 - params.p_z)
          * params.single_photon_prob_z * est.s1z_lower)
    return KeyRateReport(
        regime="asymptotic",
        variant=variant,
        rate_per_pulse=rate,
        rate_per_pulse_raw=raw,
        key_length=rate * n,
        key_length_raw=raw * n,
        s1_used=est.s1z_lower,
        e1ph_used=est.e1ph_upper,
        s_z=s_z,
        e_z=e_z,
        t_delta=est.t_delta,
        s00_used=est.s00,
        a1=params.single_photon_prob_z,
        q1=params.single_photon_prob_pair,
        n1=n1,
        n_t=obs.n_t,
        deviations={},
        flags=est.flags,
    )
