"""Key rates for sending-or-not-sending twin-field quantum key
distribution: channel model, decoy-state bounds, finite-size statistics,
and full parameter optimization."""

from .channel import (ArmModel, QuadratureError, arm_transmittance,
                      expected_observables, expected_pair_yield,
                      expected_slice_rates, expected_z_window,
                      monte_carlo_observables, pair_click_probs,
                      poisson_yield_oracle)
from .checks import (CheckResult, check_chernoff_coverage,
                     compare_observables, compare_sampled_to_expected)
from .decoy import (asymptotic_estimates, asymptotic_pipeline, e1ph_upper,
                    s1z_lower, s1z_lower_three_intensity, s_z0_lower,
                    s_z1_lower, t_delta)
from .finitekey import (ChernoffInterval, chernoff_interval,
                        finite_key_pipeline, finite_key_worst_case_s00,
                        mean_e1ph_upper, mean_s1z_lower, observed_from_mean,
                        pooled_yields, worst_case_s00)
from .optimize import (OptimizationProblem, OptimizationResult, ScanPoint,
                       optimize, scan_distance)
from .presets import (DEFAULT_PROTOCOL, FIELD_404KM_DEVICE,
                      FIELD_404KM_PAIRS, FIELD_404KM_REFERENCE_BPS,
                      TABLE1_DEVICE, preset_device)
from .protocol import (DecoyEstimates, DeviceModel, KeyRateReport,
                       Observables, ParameterError, ProtocolParams,
                       UndefinedBoundError, binary_entropy,
                       key_length_finite, key_length_finite_raw,
                       key_rate_per_pulse, key_rate_per_pulse_raw)

__version__ = "0.1.0"

__all__ = [
    "ArmModel",
    "ChernoffInterval",
    "CheckResult",
    "DecoyEstimates",
    "DeviceModel",
    "KeyRateReport",
    "Observables",
    "OptimizationProblem",
    "OptimizationResult",
    "ParameterError",
    "QuadratureError",
    "ProtocolParams",
    "ScanPoint",
    "UndefinedBoundError",
    "arm_transmittance",
    "asymptotic_estimates",
    "asymptotic_pipeline",
    "binary_entropy",
    "check_chernoff_coverage",
    "chernoff_interval",
    "compare_observables",
    "compare_sampled_to_expected",
    "e1ph_upper",
    "expected_observables",
    "expected_pair_yield",
    "expected_slice_rates",
    "expected_z_window",
    "finite_key_pipeline",
    "finite_key_worst_case_s00",
    "key_length_finite",
    "key_length_finite_raw",
    "key_rate_per_pulse",
    "key_rate_per_pulse_raw",
    "mean_e1ph_upper",
    "mean_s1z_lower",
    "monte_carlo_observables",
    "observed_from_mean",
    "optimize",
    "pair_click_probs",
    "poisson_yield_oracle",
    "pooled_yields",
    "preset_device",
    "s1z_lower",
    "s1z_lower_three_intensity",
    "s_z0_lower",
    "s_z1_lower",
    "scan_distance",
    "t_delta",
    "worst_case_s00",
    "DEFAULT_PROTOCOL",
    "FIELD_404KM_DEVICE",
    "FIELD_404KM_PAIRS",
    "FIELD_404KM_REFERENCE_BPS",
    "TABLE1_DEVICE",
]
