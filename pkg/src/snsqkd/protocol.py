"""Domain types and key-rate formulas for sending-or-not-sending twin-field QKD.

The sending-or-not-sending (SNS) protocol runs pulse pairs through a middle
measurement node. Each party independently chooses an X-window (decoy pulses,
phase later announced) or a Z-window (signal: send a coherent pulse with
probability p_z, otherwise send nothing). Key bits come from Z-window pairs;
X-window pairs feed the decoy-state estimation of the single-photon yield and
the phase-error rate.

This module holds the shared parameter/record types plus the two final
key-rate formulas (asymptotic per-pulse rate and finite key length). Channel
physics, decoy bounds, and fluctuation analysis live in sibling modules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

TWO_PI = 2.0 * math.pi

#: Source labels used in observable tables: vacuum, first decoy, second decoy,
#: signal intensity. A Z-window "not send" counts as source "0".
SOURCE_LABELS = ("0", "1", "2", "z")

MISALIGNMENT_MODELS = ("flip", "visibility")


class ParameterError(ValueError):
    """A parameter is outside its documented domain."""


class UndefinedBoundError(ArithmeticError):
    """A statistical bound is undefined (e.g. zero estimated single-photon
    yield makes the phase-error bound 0/0); the key rate must be zero."""


def binary_entropy(x: float) -> float:
    """Binary Shannon entropy H(x) in bits, with H(0) = H(1) = 0.

    Raises ParameterError outside [0, 1].
    """
    if not 0.0 <= x <= 1.0:
        raise ParameterError(f"binary_entropy argument must be in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


@dataclass(frozen=True)
class ProtocolParams:
    """The eight tunable protocol parameters plus the pulse-pair budget.

    Parameters
    ----------
    p_x : float
        Probability a party chooses the X-window (decoy window) for a pulse.
    p_1, p_2 : float
        Within an X-window, probabilities of sending the first and second
        decoy intensity; the remainder p_0 = 1 - p_1 - p_2 sends vacuum.
        p_2 = 0 selects the three-intensity variant.
    p_z : float
        Within a Z-window, probability of actually sending the signal pulse.
    mu1, mu2 : float
        Decoy intensities (mean photon numbers). mu1 < mu2 required whenever
        the second decoy is in use (p_2 > 0).
    mu_z : float
        Signal intensity sent in Z-windows.
    delta_slice : float
        Full angular width of the accepted phase slice, in (0, 2*pi].
    n_pairs : float
        Total number of pulse pairs N sent during the session.
    """

    p_x: float
    p_1: float
    p_2: float
    p_z: float
    mu1: float
    mu2: float
    mu_z: float
    delta_slice: float
    n_pairs: float

    def __post_init__(self) -> None:
        if not 0.0 < self.p_x < 1.0:
            raise ParameterError(f"p_x must be in (0, 1), got {self.p_x}")
        if not 0.0 <= self.p_1 < 1.0:
            raise ParameterError(f"p_1 must be in [0, 1), got {self.p_1}")
        if not 0.0 <= self.p_2 < 1.0:
            raise ParameterError(f"p_2 must be in [0, 1), got {self.p_2}")
        if self.p_1 + self.p_2 >= 1.0:
            raise ParameterError(
                f"p_1 + p_2 must be < 1 (vacuum share must remain), "
                f"got {self.p_1} + {self.p_2}"
            )
        if not 0.0 < self.p_z < 1.0:
            raise ParameterError(f"p_z must be in (0, 1), got {self.p_z}")
        if self.mu1 <= 0.0:
            raise ParameterError(f"mu1 must be > 0, got {self.mu1}")
        if self.p_2 > 0.0 and not self.mu1 < self.mu2:
            raise ParameterError(
                f"mu1 < mu2 required when p_2 > 0, got mu1={self.mu1}, mu2={self.mu2}"
            )
        if self.mu2 < 0.0:
            raise ParameterError(f"mu2 must be >= 0, got {self.mu2}")
        if self.mu_z <= 0.0:
            raise ParameterError(f"mu_z must be > 0, got {self.mu_z}")
        if not 0.0 < self.delta_slice <= TWO_PI:
            raise ParameterError(
                f"delta_slice must be in (0, 2*pi], got {self.delta_slice}"
            )
        if not self.n_pairs >= 1.0:
            raise ParameterError(f"n_pairs must be >= 1, got {self.n_pairs}")

    @property
    def p_0(self) -> float:
        """X-window vacuum probability."""
        return 1.0 - self.p_1 - self.p_2

    @property
    def single_photon_prob_z(self) -> float:
        """Probability a1 that a sent signal pulse holds exactly one photon."""
        return self.mu_z * math.exp(-self.mu_z)

    @property
    def single_photon_prob_pair(self) -> float:
        """Probability q1 that a decoy pulse pair at (mu1, mu1) holds exactly
        one photon in total across both arms."""
        return 2.0 * self.mu1 * math.exp(-2.0 * self.mu1)


@dataclass(frozen=True)
class DeviceModel:
    """Device and channel constants shared by both parties.

    Parameters
    ----------
    p_d : float
        Dark-count probability per detector per pulse pair.
    eta_d : float
        Detector efficiency at the measurement node.
    e_a : float
        Misalignment error: probability that an interference outcome
        registers at the wrong detector.
    misalignment_model : str
        "flip" (default): each photon-caused effective event is relabelled to
        the opposite detector with probability e_a; dark-count-only events are
        untouched. "visibility": interference visibility is reduced instead,
        cos(delta) -> (1 - 2 e_a) cos(delta), with no relabelling.
    loss_db_per_km : float
        Fibre attenuation.
    distance_km : float
        Total distance between the two parties; the measurement node sits at
        the midpoint, so each arm spans half of it.
    f_ec : float
        Error-correction inefficiency factor (>= 1).
    epsilon : float
        Failure probability per statistical bound.
    """

    p_d: float
    eta_d: float
    e_a: float
    loss_db_per_km: float
    distance_km: float
    f_ec: float
    epsilon: float
    misalignment_model: str = "flip"

    def __post_init__(self) -> None:
        if not 0.0 <= self.p_d < 1.0:
            raise ParameterError(f"p_d must be in [0, 1), got {self.p_d}")
        if not 0.0 < self.eta_d <= 1.0:
            raise ParameterError(f"eta_d must be in (0, 1], got {self.eta_d}")
        if not 0.0 <= self.e_a <= 0.5:
            raise ParameterError(f"e_a must be in [0, 0.5], got {self.e_a}")
        if self.misalignment_model not in MISALIGNMENT_MODELS:
            raise ParameterError(
                f"misalignment_model must be one of {MISALIGNMENT_MODELS}, "
                f"got {self.misalignment_model!r}"
            )
        if self.loss_db_per_km < 0.0:
            raise ParameterError(
                f"loss_db_per_km must be >= 0, got {self.loss_db_per_km}"
            )
        if self.distance_km < 0.0:
            raise ParameterError(f"distance_km must be >= 0, got {self.distance_km}")
        if self.f_ec < 1.0:
            raise ParameterError(f"f_ec must be >= 1, got {self.f_ec}")
        if not 0.0 < self.epsilon < 1.0:
            raise ParameterError(f"epsilon must be in (0, 1), got {self.epsilon}")


@dataclass(frozen=True)
class Observables:
    """Per-session counts, either expected-value (real) or sampled (integer).

    cap_n[(j, k)] is the number of pulse pairs whose announced sources were
    (j, k) with j, k in SOURCE_LABELS; n[(j, k)] the effective events among
    them. Pairs where both parties chose the Z-window are tallied only under
    ("z", "z") since their send decisions stay secret; a Z-window "not send"
    paired with an X-window pulse counts as source "0".

    The slice fields cover the decoy pairs at (mu1, mu1) whose announced
    phase difference falls in the accepted slice around 0 ("plus") or around
    pi ("minus"); "wrong" counts effective events at the destructive-side
    detector for that slice.
    """

    mode: str  # "expected" | "sampled"
    cap_n: Mapping[tuple[str, str], float]
    n: Mapping[tuple[str, str], float]
    cap_n_slice_plus: float
    cap_n_slice_minus: float
    n_slice_wrong_plus: float
    n_slice_wrong_minus: float
    n_slice_right_plus: float
    n_slice_right_minus: float
    n_t: float
    err_z: float

    def __post_init__(self) -> None:
        if self.mode not in ("expected", "sampled"):
            raise ParameterError(f"mode must be 'expected' or 'sampled', got {self.mode!r}")
        for key, cap in self.cap_n.items():
            eff = self.n[key]
            if cap < 0.0 or eff < 0.0 or eff > cap + 1e-9:
                raise ParameterError(
                    f"counts for {key} out of range: n={eff}, cap_n={cap}"
                )
        for cap, eff in (
            (self.cap_n_slice_plus, self.n_slice_wrong_plus + self.n_slice_right_plus),
            (self.cap_n_slice_minus, self.n_slice_wrong_minus + self.n_slice_right_minus),
        ):
            if cap < 0.0 or eff < 0.0 or eff > cap + 1e-9:
                raise ParameterError(
                    f"slice counts out of range: effective={eff}, cap={cap}"
                )
        if self.n_t < 0.0 or self.err_z < 0.0 or self.err_z > self.n_t + 1e-9:
            raise ParameterError(
                f"Z-window counts out of range: n_t={self.n_t}, err_z={self.err_z}"
            )
        if self.mode == "sampled":
            values = [*self.cap_n.values(), *self.n.values(),
                      self.cap_n_slice_plus, self.cap_n_slice_minus,
                      self.n_slice_wrong_plus, self.n_slice_wrong_minus,
                      self.n_slice_right_plus, self.n_slice_right_minus,
                      self.n_t, self.err_z]
            for v in values:
                if v != int(v):
                    raise ParameterError(f"sampled counts must be integers, got {v}")

    def yield_of(self, j: str, k: str) -> float:
        """S_jk = n_jk / N_jk; ParameterError if no pairs of that kind exist."""
        try:
            cap = self.cap_n[(j, k)]
        except KeyError:
            raise ParameterError(f"unknown source pair ({j}, {k})") from None
        if cap <= 0.0:
            raise ParameterError(f"no pulse pairs with sources ({j}, {k})")
        return self.n[(j, k)] / cap

    @property
    def s_z(self) -> float:
        """Z-window effective-event probability S_Z = n_t / N_zz."""
        return self.yield_of("z", "z")

    @property
    def e_z(self) -> float:
        """Z-window bit error rate E_Z = err_z / n_t (0 when n_t = 0)."""
        if self.n_t <= 0.0:
            return 0.0
        return self.err_z / self.n_t

    @property
    def t_slice(self) -> float:
        """Observed slice error rate: mean of the wrong-detector rates of the
        two accepted slices."""
        if self.cap_n_slice_plus <= 0.0 or self.cap_n_slice_minus <= 0.0:
            raise ParameterError("slice pair counts must be positive")
        return 0.5 * (self.n_slice_wrong_plus / self.cap_n_slice_plus
                      + self.n_slice_wrong_minus / self.cap_n_slice_minus)


@dataclass(frozen=True)
class DecoyEstimates:
    """Decoy-state estimates feeding a key-rate formula.

    s1z_lower bounds the single-photon yield of Z-window send/not-send pairs;
    e1ph_upper bounds the single-photon phase-flip error rate. t_delta and
    s00 record the slice error rate and vacuum yield that entered the bound.
    regime is "asymptotic" (expected values used directly) or "finite"
    (fluctuation-corrected). flags lists clamp and convention events.
    """

    s1z_lower: float
    e1ph_upper: float
    t_delta: float
    s00: float
    regime: str
    flags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.regime not in ("asymptotic", "finite"):
            raise ParameterError(f"regime must be 'asymptotic' or 'finite', got {self.regime!r}")
        if not 0.0 <= self.s1z_lower <= 1.0:
            raise ParameterError(f"s1z_lower must be in [0, 1], got {self.s1z_lower}")
        if not 0.0 <= self.e1ph_upper <= 1.0:
            raise ParameterError(f"e1ph_upper must be in [0, 1], got {self.e1ph_upper}")


@dataclass(frozen=True)
class KeyRateReport:
    """Full audit record of one key-rate evaluation.

    rate_per_pulse and key_length are clamped at zero; the unclamped values
    are retained in the *_raw fields. deviations holds every statistical
    deviation applied on the finite-key path (empty for asymptotic).
    """

    regime: str
    variant: str
    rate_per_pulse: float
    rate_per_pulse_raw: float
    key_length: float
    key_length_raw: float
    s1_used: float
    e1ph_used: float
    s_z: float
    e_z: float
    t_delta: float
    s00_used: float
    a1: float
    q1: float
    n1: float
    n_t: float
    deviations: Mapping[str, float] = field(default_factory=dict)
    flags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.rate_per_pulse < 0.0 or self.key_length < 0.0:
            raise ParameterError("clamped rate and key length must be >= 0")
        if not 0.0 <= self.e1ph_used <= 1.0:
            raise ParameterError(f"e1ph_used must be in [0, 1], got {self.e1ph_used}")


def key_rate_per_pulse_raw(params: ProtocolParams, s1_lower: float,
                           e1ph_upper: float, s_z: float, e_z: float,
                           f_ec: float) -> float:
    """Asymptotic secure key rate per pulse pair, before clamping at zero.

    R = (1-p_x)^2 [ 2 p_z (1-p_z) a1 s1 (1 - H(e1ph)) - f S_Z H(E_Z) ]
    with a1 = mu_z exp(-mu_z) the single-photon emission probability of a
    signal pulse.
    """
    if not 0.0 <= s1_lower <= 1.0:
        raise ParameterError(f"s1_lower must be in [0, 1], got {s1_lower}")
    if not 0.0 <= s_z <= 1.0:
        raise ParameterError(f"s_z must be in [0, 1], got {s_z}")
    if f_ec < 1.0:
        raise ParameterError(f"f_ec must be >= 1, got {f_ec}")
    a1 = params.single_photon_prob_z
    # A phase-error bound at or past one half certifies nothing; the
    # extractable fraction saturates at zero rather than growing again.
    e1_eff = min(e1ph_upper, 0.5)
    single = 2.0 * params.p_z * (1.0 - params.p_z) * a1 * s1_lower \
        * (1.0 - binary_entropy(e1_eff))
    correction = f_ec * s_z * binary_entropy(e_z)
    return (1.0 - params.p_x) ** 2 * (single - correction)


def key_rate_per_pulse(params: ProtocolParams, s1_lower: float,
                       e1ph_upper: float, s_z: float, e_z: float,
                       f_ec: float) -> float:
    """Asymptotic secure key rate per pulse pair, clamped at zero."""
    return max(0.0, key_rate_per_pulse_raw(params, s1_lower, e1ph_upper,
                                           s_z, e_z, f_ec))


def key_length_finite_raw(n1: float, e1ph_upper: float, n_t: float,
                          e_z: float, f_ec: float) -> float:
    """Finite-session secure key length before clamping:
    N_f = n1 (1 - H(e1ph)) - f n_t H(E_Z)."""
    if n1 < 0.0 or n_t < 0.0:
        raise ParameterError(f"event counts must be >= 0, got n1={n1}, n_t={n_t}")
    if f_ec < 1.0:
        raise ParameterError(f"f_ec must be >= 1, got {f_ec}")
    # Same saturation as the rate formula: bounds past one half yield nothing.
    return n1 * (1.0 - binary_entropy(min(e1ph_upper, 0.5))) \
        - f_ec * n_t * binary_entropy(e_z)


def key_length_finite(n1: float, e1ph_upper: float, n_t: float,
                      e_z: float, f_ec: float) -> float:
    """Finite-session secure key length, clamped at zero."""
    return max(0.0, key_length_finite_raw(n1, e1ph_upper, n_t, e_z, f_ec))
