"""Linear-optics channel model for the twin-field measurement node.

Both parties send phase-randomised coherent pulses over symmetric fibre arms
to a middle node, where the pulses interfere on a balanced beam splitter
watched by two threshold detectors with dark counts. Everything downstream
(decoy bounds, finite-key analysis) consumes either the expected observables
computed here by phase-space quadrature, or sampled observables from the
Monte Carlo path, which runs the identical click model pulse pair by pulse
pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, NamedTuple, Sequence

import numpy as np
from scipy.integrate import quad

from .protocol import (
    TWO_PI,
    SOURCE_LABELS,
    DeviceModel,
    Observables,
    ParameterError,
    ProtocolParams,
)

# Quadrature settings for phase averaging. Non-convergence is raised, never
# silently degraded.
PHASE_ABS_TOL = 1e-14
PHASE_REL_TOL = 1e-12
QUAD_SUBDIV_LIMIT = 200

# Pulse pairs processed per Monte Carlo batch. Fixed so that a given seed
# always yields the same draw sequence.
_MC_CHUNK = 1_000_000

#: Hard cap on sampled sessions; beyond this, use expected-value mode.
MC_MAX_PAIRS = 1_000_000_000

#: Largest photon number the Poisson decomposition oracle will sum over.
POISSON_TRUNCATION = 40

#: Truncated Poisson tail mass above this is an error in the oracle.
POISSON_TAIL_BOUND = 1e-15


class QuadratureError(RuntimeError):
    """Adaptive phase-averaging quadrature failed to converge."""


@dataclass(frozen=True)
class ArmModel:
    """Effective one-arm transmittance from a party to the middle node,
    detector efficiency included. Arms are symmetric by construction; the
    flag is retained for audit."""

    eta: float
    symmetric: bool = True

    def __post_init__(self) -> None:
        if not 0.0 <= self.eta <= 1.0:
            raise ParameterError(f"eta must be in [0, 1], got {self.eta}")
        if not self.symmetric:
            raise ParameterError("only symmetric arms are modelled")


def arm_transmittance(device: DeviceModel) -> ArmModel:
    """Transmittance of one arm: detector efficiency times fibre loss over
    half the total distance (the measurement node sits at the midpoint)."""
    attenuation_db = device.loss_db_per_km * device.distance_km / 2.0
    return ArmModel(eta=device.eta_d * 10.0 ** (-attenuation_db / 10.0))


def _click_probs_core(x: float, y: float, cos_delta: float, p_d: float,
                      e_a: float, model: str) -> tuple[float, float]:
    """Exactly-one-click probabilities for arrived intensities (x, y) at
    relative phase with cosine cos_delta. Scalar core shared by the public
    function and the quadrature integrands."""
    half = 0.5 * (x + y)
    interference = math.sqrt(x * y) * cos_delta
    if model == "visibility":
        interference *= 1.0 - 2.0 * e_a
    s_p = -math.expm1(-(half + interference))  # photon click, "+" port
    s_m = -math.expm1(-(half - interference))  # photon click, "-" port
    q = 1.0 - p_d
    if model == "visibility":
        # Independent detectors, no outcome relabelling.
        p0 = (1.0 - q * (1.0 - s_p)) * q * (1.0 - s_m)
        p1 = (1.0 - q * (1.0 - s_m)) * q * (1.0 - s_p)
        return p0, p1
    # "flip": a photon-caused effective event registers at the wrong detector
    # with probability e_a; dark-count-only events are never relabelled.
    dark_only = (1.0 - s_p) * (1.0 - s_m) * p_d
    p0 = q * (s_p * (1.0 - s_m) * (1.0 - e_a) + s_m * (1.0 - s_p) * e_a + dark_only)
    p1 = q * (s_m * (1.0 - s_p) * (1.0 - e_a) + s_p * (1.0 - s_m) * e_a + dark_only)
    return p0, p1


def pair_click_probs(x: float, y: float, phase_diff: float,
                     device: DeviceModel) -> tuple[float, float]:
    """Probabilities that exactly detector 0, or exactly detector 1, clicks.

    x and y are the intensities arriving at the beam splitter from the two
    arms (channel loss already applied); phase_diff is the relative phase.
    Detector 0 sits on the constructive port: at phase_diff = 0 it receives
    intensity (x + y)/2 + sqrt(x*y) and detector 1 the remainder.
    """
    if x < 0.0 or y < 0.0:
        raise ParameterError(f"arrived intensities must be >= 0, got {x}, {y}")
    return _click_probs_core(x, y, math.cos(phase_diff), device.p_d,
                             device.e_a, device.misalignment_model)


def _phase_average(f: Callable[[float], float], lo: float, hi: float) -> float:
    """Average of f over [lo, hi] by adaptive quadrature; raises
    QuadratureError when the integrator reports non-convergence."""
    result = quad(f, lo, hi, epsabs=PHASE_ABS_TOL, epsrel=PHASE_REL_TOL,
                  limit=QUAD_SUBDIV_LIMIT, full_output=1)
    if len(result) > 3:
        raise QuadratureError(
            f"phase average over [{lo}, {hi}] did not converge: {result[3]}"
        )
    value = result[0]
    return value / (hi - lo)


def expected_pair_yield(mu_a: float, mu_b: float, arm: ArmModel,
                        device: DeviceModel) -> float:
    """Effective-event probability for a pulse pair of sent intensities
    (mu_a, mu_b) with uniformly random relative phase."""
    if mu_a < 0.0 or mu_b < 0.0:
        raise ParameterError(f"intensities must be >= 0, got {mu_a}, {mu_b}")
    x = arm.eta * mu_a
    y = arm.eta * mu_b
    p_d, e_a, model = device.p_d, device.e_a, device.misalignment_model

    def rate(delta: float) -> float:
        p0, p1 = _click_probs_core(x, y, math.cos(delta), p_d, e_a, model)
        return p0 + p1

    return _phase_average(rate, 0.0, TWO_PI)


class SliceRates(NamedTuple):
    """Per-slice click rates for decoy pairs at (mu1, mu1).

    wrong_plus / total_plus average the wrong-detector (detector 1) and the
    total effective-event probability over the slice centred at phase 0;
    wrong_minus / total_minus do the same around phase pi, where detector 0
    is the wrong one.
    """

    wrong_plus: float
    total_plus: float
    wrong_minus: float
    total_minus: float


def expected_slice_rates(params: ProtocolParams, arm: ArmModel,
                         device: DeviceModel) -> SliceRates:
    """Wrong-detector and total effective rates inside the two accepted
    phase slices, for pulse pairs at (mu1, mu1)."""
    x = arm.eta * params.mu1
    half_width = params.delta_slice / 2.0
    p_d, e_a, model = device.p_d, device.e_a, device.misalignment_model

    def wrong_for_plus(delta: float) -> float:
        return _click_probs_core(x, x, math.cos(delta), p_d, e_a, model)[1]

    def wrong_for_minus(delta: float) -> float:
        return _click_probs_core(x, x, math.cos(delta), p_d, e_a, model)[0]

    def total(delta: float) -> float:
        p0, p1 = _click_probs_core(x, x, math.cos(delta), p_d, e_a, model)
        return p0 + p1

    return SliceRates(
        wrong_plus=_phase_average(wrong_for_plus, -half_width, half_width),
        total_plus=_phase_average(total, -half_width, half_width),
        wrong_minus=_phase_average(wrong_for_minus, math.pi - half_width,
                                   math.pi + half_width),
        total_minus=_phase_average(total, math.pi - half_width,
                                   math.pi + half_width),
    )


def _z_window_from_yields(p_z: float, s_send_send: float, s_send_not: float,
                          s_not_send: float, s_not_not: float) -> tuple[float, float]:
    """Mix the four send/not-send cases into (S_Z, E_Z). An effective event
    is an error exactly when both parties sent or neither sent."""
    w_ss = p_z * p_z
    w_sn = p_z * (1.0 - p_z)
    w_nn = (1.0 - p_z) ** 2
    s_z = (w_ss * s_send_send + w_sn * (s_send_not + s_not_send)
           + w_nn * s_not_not)
    if s_z <= 0.0:
        return 0.0, 0.0
    errors = w_ss * s_send_send + w_nn * s_not_not
    return s_z, errors / s_z


def expected_z_window(params: ProtocolParams, arm: ArmModel,
                      device: DeviceModel) -> tuple[float, float]:
    """Z-window effective-event probability S_Z and bit error rate E_Z."""
    mu = params.mu_z
    s_ss = expected_pair_yield(mu, mu, arm, device)
    s_sn = expected_pair_yield(mu, 0.0, arm, device)
    s_ns = expected_pair_yield(0.0, mu, arm, device)
    s_nn = expected_pair_yield(0.0, 0.0, arm, device)
    return _z_window_from_yields(params.p_z, s_ss, s_sn, s_ns, s_nn)


def _source_probs(params: ProtocolParams) -> dict[str, float]:
    return {"0": params.p_0, "1": params.p_1, "2": params.p_2}


def _pair_counts(params: ProtocolParams) -> dict[tuple[str, str], float]:
    """Expected number of pulse pairs per announced source combination.

    Both-Z pairs stay in the ("z", "z") cell; in X-Z cross pairs the Z party
    contributes "z" when it sent and "0" when it did not, pooled with the
    X-window vacuum counts.
    """
    n = params.n_pairs
    p_x, p_z = params.p_x, params.p_z
    w = _source_probs(params)
    n_xx = p_x * p_x * n
    n_xz = p_x * (1.0 - p_x) * n  # one ordering; the reverse has equal count

    cap: dict[tuple[str, str], float] = {
        (j, k): 0.0 for j in SOURCE_LABELS for k in SOURCE_LABELS
    }
    for j in ("0", "1", "2"):
        for k in ("0", "1", "2"):
            cap[(j, k)] += n_xx * w[j] * w[k]
        # X-window source j paired with a Z-window decision (either order).
        cap[(j, "z")] += n_xz * w[j] * p_z
        cap[("z", j)] += n_xz * p_z * w[j]
        cap[(j, "0")] += n_xz * w[j] * (1.0 - p_z)
        cap[("0", j)] += n_xz * (1.0 - p_z) * w[j]
    cap[("z", "z")] = (1.0 - p_x) ** 2 * n
    return cap


def expected_observables(params: ProtocolParams, device: DeviceModel) -> Observables:
    """Expected-value observables for a full session: pair counts, effective
    events, slice tallies and Z-window totals, with real-valued counts."""
    arm = arm_transmittance(device)
    mu_of = {"0": 0.0, "1": params.mu1, "2": params.mu2, "z": params.mu_z}

    yield_memo: dict[tuple[float, float], float] = {}

    def pair_yield(mu_a: float, mu_b: float) -> float:
        key = (min(mu_a, mu_b), max(mu_a, mu_b))
        if key not in yield_memo:
            yield_memo[key] = expected_pair_yield(key[0], key[1], arm, device)
        return yield_memo[key]

    cap = _pair_counts(params)
    n: dict[tuple[str, str], float] = {}
    for (j, k), pairs in cap.items():
        if (j, k) == ("z", "z") or pairs <= 0.0:
            n[(j, k)] = 0.0
            continue
        n[(j, k)] = pairs * pair_yield(mu_of[j], mu_of[k])

    s_z, e_z = _z_window_from_yields(
        params.p_z,
        pair_yield(params.mu_z, params.mu_z),
        pair_yield(params.mu_z, 0.0),
        pair_yield(0.0, params.mu_z),
        pair_yield(0.0, 0.0),
    )
    n_t = cap[("z", "z")] * s_z
    n[("z", "z")] = n_t

    slice_cap = (params.delta_slice / TWO_PI) * cap[("1", "1")]
    if slice_cap > 0.0:
        rates = expected_slice_rates(params, arm, device)
        wrong_plus = slice_cap * rates.wrong_plus
        right_plus = slice_cap * (rates.total_plus - rates.wrong_plus)
        wrong_minus = slice_cap * rates.wrong_minus
        right_minus = slice_cap * (rates.total_minus - rates.wrong_minus)
    else:
        wrong_plus = right_plus = wrong_minus = right_minus = 0.0

    return Observables(
        mode="expected",
        cap_n=cap,
        n=n,
        cap_n_slice_plus=slice_cap,
        cap_n_slice_minus=slice_cap,
        n_slice_wrong_plus=wrong_plus,
        n_slice_wrong_minus=wrong_minus,
        n_slice_right_plus=right_plus,
        n_slice_right_minus=right_minus,
        n_t=n_t,
        err_z=n_t * e_z,
    )


def monte_carlo_observables(params: ProtocolParams, device: DeviceModel,
                            seed: int) -> Observables:
    """Sampled observables: every pulse pair is drawn individually through
    the same click model the expected-value path integrates.

    Deterministic for a given seed. Refuses sessions above MC_MAX_PAIRS.
    """
    n_pairs = params.n_pairs
    if n_pairs != int(n_pairs):
        raise ParameterError(f"sampled mode needs an integer n_pairs, got {n_pairs}")
    n_pairs = int(n_pairs)
    if n_pairs > MC_MAX_PAIRS:
        raise ParameterError(
            f"n_pairs {n_pairs} exceeds sampled-mode cap {MC_MAX_PAIRS}"
        )

    arm = arm_transmittance(device)
    eta = arm.eta
    p_x, p_z = params.p_x, params.p_z
    p_0, p_1 = params.p_0, params.p_1
    mu_table = np.array([0.0, params.mu1, params.mu2, params.mu_z])
    p_d, e_a = device.p_d, device.e_a
    visibility_model = device.misalignment_model == "visibility"
    vis_factor = (1.0 - 2.0 * e_a) if visibility_model else 1.0
    half_width = params.delta_slice / 2.0

    rng = np.random.default_rng(seed)

    cap_cells = np.zeros(16, dtype=np.int64)
    n_cells = np.zeros(16, dtype=np.int64)
    cap_zz = n_t = err_z = 0
    cap_plus = cap_minus = 0
    wrong_plus = right_plus = wrong_minus = right_minus = 0

    done = 0
    while done < n_pairs:
        m = min(_MC_CHUNK, n_pairs - done)
        done += m

        win_x_a = rng.random(m) < p_x
        win_x_b = rng.random(m) < p_x
        u_src_a = rng.random(m)
        u_src_b = rng.random(m)
        sent_a = rng.random(m) < p_z
        sent_b = rng.random(m) < p_z
        theta_a = rng.random(m) * TWO_PI
        theta_b = rng.random(m) * TWO_PI
        u_click_p = rng.random(m)
        u_click_m = rng.random(m)
        dark_0 = rng.random(m) < p_d
        dark_1 = rng.random(m) < p_d
        u_flip = rng.random(m)

        src = (u_src_a >= p_0).astype(np.int8) + (u_src_a >= p_0 + p_1)
        lab_a = np.where(win_x_a, src, np.where(sent_a, 3, 0)).astype(np.int8)
        src = (u_src_b >= p_0).astype(np.int8) + (u_src_b >= p_0 + p_1)
        lab_b = np.where(win_x_b, src, np.where(sent_b, 3, 0)).astype(np.int8)

        x = eta * mu_table[lab_a]
        y = eta * mu_table[lab_b]
        delta = theta_a - theta_b
        interference = np.sqrt(x * y) * np.cos(delta) * vis_factor
        half = 0.5 * (x + y)
        click_p = u_click_p < -np.expm1(-(half + interference))
        click_m = u_click_m < -np.expm1(-(half - interference))

        raw0 = click_p | dark_0
        raw1 = click_m | dark_1
        effective = raw0 != raw1
        if visibility_model:
            det_is_1 = raw1
        else:
            photon_caused = np.where(raw0, click_p, click_m)
            flip = (u_flip < e_a) & photon_caused & effective
            det_is_1 = raw1 ^ flip

        both_z = ~win_x_a & ~win_x_b
        announced = ~both_z
        cell = lab_a.astype(np.intp) * 4 + lab_b
        cap_cells += np.bincount(cell[announced], minlength=16)
        n_cells += np.bincount(cell[announced & effective], minlength=16)

        cap_zz += int(np.count_nonzero(both_z))
        effective_zz = both_z & effective
        n_t += int(np.count_nonzero(effective_zz))
        err_z += int(np.count_nonzero(effective_zz & (sent_a == sent_b)))

        pair11 = win_x_a & win_x_b & (lab_a == 1) & (lab_b == 1)
        if np.any(pair11):
            wrapped = np.mod(delta[pair11] + math.pi, TWO_PI) - math.pi
            eff11 = effective[pair11]
            det1_11 = det_is_1[pair11]
            in_plus = np.abs(wrapped) <= half_width
            in_minus = math.pi - np.abs(wrapped) <= half_width
            cap_plus += int(np.count_nonzero(in_plus))
            cap_minus += int(np.count_nonzero(in_minus))
            wrong_plus += int(np.count_nonzero(in_plus & eff11 & det1_11))
            right_plus += int(np.count_nonzero(in_plus & eff11 & ~det1_11))
            wrong_minus += int(np.count_nonzero(in_minus & eff11 & ~det1_11))
            right_minus += int(np.count_nonzero(in_minus & eff11 & det1_11))

    labels = SOURCE_LABELS
    cap: dict[tuple[str, str], float] = {}
    n: dict[tuple[str, str], float] = {}
    for ji, j in enumerate(labels):
        for ki, k in enumerate(labels):
            cap[(j, k)] = int(cap_cells[ji * 4 + ki])
            n[(j, k)] = int(n_cells[ji * 4 + ki])
    cap[("z", "z")] = cap_zz
    n[("z", "z")] = n_t

    return Observables(
        mode="sampled",
        cap_n=cap,
        n=n,
        cap_n_slice_plus=cap_plus,
        cap_n_slice_minus=cap_minus,
        n_slice_wrong_plus=wrong_plus,
        n_slice_wrong_minus=wrong_minus,
        n_slice_right_plus=right_plus,
        n_slice_right_minus=right_minus,
        n_t=n_t,
        err_z=err_z,
    )


def poisson_yield_oracle(per_photon_yields: Sequence[float], mu: float) -> float:
    """Coherent-pulse yield from per-photon-number yields:
    S(mu) = sum_n e^{-mu} mu^n / n! * y_n.

    per_photon_yields[n] is the effective-event probability given exactly n
    photons; the sum is truncated at POISSON_TRUNCATION and the neglected
    tail mass must stay below POISSON_TAIL_BOUND.
    """
    if mu < 0.0:
        raise ParameterError(f"mu must be >= 0, got {mu}")
    if len(per_photon_yields) == 0:
        raise ParameterError("per_photon_yields must be non-empty")
    if len(per_photon_yields) > POISSON_TRUNCATION + 1:
        raise ParameterError(
            f"at most {POISSON_TRUNCATION + 1} per-photon yields supported"
        )
    for n, y in enumerate(per_photon_yields):
        if not 0.0 <= y <= 1.0:
            raise ParameterError(f"per-photon yield {n} must be in [0, 1], got {y}")

    weight = math.exp(-mu)
    total = 0.0
    mass = 0.0
    for n, y in enumerate(per_photon_yields):
        total += weight * y
        mass += weight
        weight *= mu / (n + 1)
    tail = 1.0 - mass
    if tail > POISSON_TAIL_BOUND:
        raise ParameterError(
            f"Poisson tail mass {tail:.3e} beyond the supplied yields exceeds "
            f"{POISSON_TAIL_BOUND}; supply more terms or reduce mu"
        )
    return total
