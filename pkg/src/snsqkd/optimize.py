"""Multi-start simplex optimisation of the protocol parameters.

The objective (negative key rate) is evaluated over transformed coordinates:
probabilities and the slice width map to their boxes through a logistic
transform, intensities through the same transform in log space, so every
candidate decodes to an in-box parameter set. The remaining cross-parameter
constraints (decoy ordering, total X-window source probability) are soft
penalties. Restart seeds come from a low-discrepancy sequence, so a given
problem and seed always reproduce the same optimum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, logit
from scipy.stats import qmc

from .decoy import asymptotic_pipeline
from .finitekey import finite_key_pipeline
from .protocol import (
    TWO_PI,
    DeviceModel,
    KeyRateReport,
    ParameterError,
    ProtocolParams,
)

PIPELINES = ("asymptotic", "finite")

#: Free coordinates per variant; the three-intensity variant fixes p_2 = 0
#: and needs no second decoy intensity.
PARAM_NAMES = {
    "4int": ("p_x", "p_1", "p_2", "p_z", "mu1", "mu2", "mu_z", "delta_slice"),
    "3int": ("p_x", "p_1", "p_z", "mu1", "mu_z", "delta_slice"),
}

_LOG_SCALE = frozenset(("mu1", "mu2", "mu_z"))

DEFAULT_BOUNDS: Mapping[str, tuple[float, float]] = {
    "p_x": (1e-3, 0.9),
    "p_1": (1e-4, 0.995),
    "p_2": (1e-4, 0.995),
    "p_z": (1e-4, 0.9),
    "mu1": (1e-5, 0.8),
    "mu2": (1e-3, 1.5),
    "mu_z": (1e-2, 1.5),
    "delta_slice": (1e-3, TWO_PI),
}

#: Values above this are penalty returns, never real objective values
#: (the true objective is a negative rate in [-1, 0]).
_PENALTY_BASE = 10.0

#: Keep a margin of vacuum pulses in the X-window.
_MAX_P1_PLUS_P2 = 0.999

#: Required separation between decoy intensities inside the feasible region.
_ORDERING_MARGIN = 1e-6

_FRACTION_CLIP = 1e-12


@dataclass(frozen=True)
class OptimizationProblem:
    """One optimisation instance: device, pipeline/variant choice, session
    size, parameter box, and the restart/budget/seed knobs."""

    device: DeviceModel
    pipeline: str = "finite"
    variant: str = "4int"
    n_pairs: float = 1e12
    bounds: Mapping[str, tuple[float, float]] = field(
        default_factory=lambda: dict(DEFAULT_BOUNDS))
    restarts: int = 32
    budget: int = 16000
    seed: int = 0
    extra_starts: tuple[ProtocolParams, ...] = ()

    def __post_init__(self) -> None:
        if self.pipeline not in PIPELINES:
            raise ParameterError(
                f"pipeline must be one of {PIPELINES}, got {self.pipeline!r}")
        if self.variant not in PARAM_NAMES:
            raise ParameterError(
                f"variant must be one of {tuple(PARAM_NAMES)}, got {self.variant!r}")
        if self.restarts < 1:
            raise ParameterError(f"restarts must be >= 1, got {self.restarts}")
        if self.budget < 50 * self.restarts:
            raise ParameterError(
                f"budget {self.budget} too small for {self.restarts} restarts "
                f"(need at least 50 per restart)")
        if self.n_pairs < 1.0:
            raise ParameterError(f"n_pairs must be >= 1, got {self.n_pairs}")
        for name in PARAM_NAMES[self.variant]:
            if name not in self.bounds:
                raise ParameterError(f"bounds missing entry for {name!r}")
            lo, hi = self.bounds[name]
            if not 0.0 < lo < hi:
                raise ParameterError(f"invalid bounds for {name!r}: ({lo}, {hi})")


@dataclass(frozen=True)
class OptimizationResult:
    """Best parameter set found, its full report, and search bookkeeping.

    best_rate_trace holds the best rate seen after each restart (and a final
    entry after the polish step), so it is non-decreasing by construction.
    flags may contain "budget-exhausted" (the polish stopped on its
    evaluation cap, not on convergence) and "zero-rate-region" (no start
    found a positive rate anywhere).
    """

    params: ProtocolParams
    report: KeyRateReport
    rate_per_pulse: float
    objective_evaluations: int
    restarts_run: int
    best_start_index: int
    best_rate_trace: tuple[float, ...] = ()
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class ScanPoint:
    """One distance of a scan with its optimisation result."""

    distance_km: float
    result: OptimizationResult


def _decode(u: np.ndarray, names: Sequence[str],
            bounds: Mapping[str, tuple[float, float]]) -> dict[str, float]:
    values: dict[str, float] = {}
    for ui, name in zip(u, names):
        lo, hi = bounds[name]
        frac = expit(ui)
        if name in _LOG_SCALE:
            log_lo, log_hi = math.log(lo), math.log(hi)
            values[name] = math.exp(log_lo + (log_hi - log_lo) * frac)
        else:
            values[name] = lo + (hi - lo) * frac
    return values


def _encode(values: Mapping[str, float], names: Sequence[str],
            bounds: Mapping[str, tuple[float, float]]) -> np.ndarray:
    u = np.empty(len(names))
    for i, name in enumerate(names):
        lo, hi = bounds[name]
        v = values[name]
        if name in _LOG_SCALE:
            frac = (math.log(v) - math.log(lo)) / (math.log(hi) - math.log(lo))
        else:
            frac = (v - lo) / (hi - lo)
        frac = min(1.0 - _FRACTION_CLIP, max(_FRACTION_CLIP, frac))
        u[i] = logit(frac)
    return u


def _penalty(values: Mapping[str, float], variant: str) -> float:
    pen = 0.0
    if variant == "4int":
        gap = values["mu2"] - values["mu1"]
        if gap < _ORDERING_MARGIN:
            pen += 1.0 + (_ORDERING_MARGIN - gap)
        total = values["p_1"] + values["p_2"]
        if total > _MAX_P1_PLUS_P2:
            pen += 1.0 + (total - _MAX_P1_PLUS_P2)
    else:
        gap = values["mu_z"] - values["mu1"]
        if gap < _ORDERING_MARGIN:
            pen += 1.0 + (_ORDERING_MARGIN - gap)
    return pen


def _build_params(values: Mapping[str, float], variant: str,
                  n_pairs: float) -> ProtocolParams:
    if variant == "4int":
        return ProtocolParams(
            p_x=values["p_x"], p_1=values["p_1"], p_2=values["p_2"],
            p_z=values["p_z"], mu1=values["mu1"], mu2=values["mu2"],
            mu_z=values["mu_z"], delta_slice=values["delta_slice"],
            n_pairs=n_pairs)
    return ProtocolParams(
        p_x=values["p_x"], p_1=values["p_1"], p_2=0.0,
        p_z=values["p_z"], mu1=values["mu1"], mu2=values["mu_z"],
        mu_z=values["mu_z"], delta_slice=values["delta_slice"],
        n_pairs=n_pairs)


def _params_to_values(params: ProtocolParams, variant: str) -> dict[str, float]:
    values = {
        "p_x": params.p_x, "p_1": params.p_1, "p_z": params.p_z,
        "mu1": params.mu1, "mu_z": params.mu_z,
        "delta_slice": params.delta_slice,
    }
    if variant == "4int":
        values["p_2"] = params.p_2
        values["mu2"] = params.mu2
    return values


def optimize(problem: OptimizationProblem) -> OptimizationResult:
    """Multi-start Nelder-Mead search for the rate-maximising parameters.

    Deterministic for a given problem (seed included). Start points are a
    Halton sequence over the transformed box, preceded by any extra_starts
    (e.g. the previous distance's optimum during a scan); the best restart
    gets a final polish with the remaining budget.
    """
    names = PARAM_NAMES[problem.variant]
    bounds = problem.bounds
    if problem.pipeline == "asymptotic":
        def evaluate(p: ProtocolParams) -> KeyRateReport:
            return asymptotic_pipeline(p, problem.device, problem.variant)
    else:
        def evaluate(p: ProtocolParams) -> KeyRateReport:
            return finite_key_pipeline(p, problem.device, problem.variant)

    eval_count = [0]

    def objective(u: np.ndarray) -> float:
        eval_count[0] += 1
        values = _decode(u, names, bounds)
        pen = _penalty(values, problem.variant)
        if pen > 0.0:
            return _PENALTY_BASE + pen
        params = _build_params(values, problem.variant, problem.n_pairs)
        # The clamped rate is flat zero over most of the box; the raw rate
        # stays continuous through the unprofitable region and agrees with
        # the clamped one wherever it is positive.
        return -evaluate(params).rate_per_pulse_raw

    halton = qmc.Halton(d=len(names), scramble=True, seed=problem.seed)
    fractions = 0.02 + 0.96 * halton.random(problem.restarts)
    starts = [logit(f) for f in fractions]
    for extra in reversed(problem.extra_starts):
        starts.insert(0, _encode(_params_to_values(extra, problem.variant),
                                 names, bounds))

    # Budget per start is set by the nominal restart count alone, so seeding
    # extra starts (a scan warm start) never thins out the cold starts: the
    # warm run repeats every cold search unchanged and can only add to it.
    per_restart = max(50, problem.budget // (problem.restarts + 1))
    best_fun = math.inf
    best_x: np.ndarray | None = None
    best_index = 0
    trace: list[float] = []
    for index, x0 in enumerate(starts):
        res = minimize(objective, x0, method="Nelder-Mead",
                       options={"maxfev": per_restart, "xatol": 1e-6,
                                "fatol": 0.0, "adaptive": True})
        if res.fun < best_fun:
            best_fun, best_x, best_index = res.fun, res.x, index
        trace.append(max(0.0, -best_fun))

    assert best_x is not None
    polish = minimize(objective, best_x, method="Nelder-Mead",
                      options={"maxfev": max(100, problem.budget // 8),
                               "xatol": 1e-8, "fatol": 0.0, "adaptive": True})
    if polish.fun < best_fun:
        best_fun, best_x = polish.fun, polish.x
    trace.append(max(0.0, -best_fun))

    flags: list[str] = []
    if not polish.success:
        flags.append("budget-exhausted")

    values = _decode(best_x, names, bounds)
    if _penalty(values, problem.variant) > 0.0:
        # Every start ended in the penalty region; fall back to a feasible
        # mid-box point so the result is always a valid parameter set.
        mid = 0.5 * np.ones(len(names))
        values = _decode(logit(mid), names, bounds)
        if problem.variant == "4int" and values["mu1"] >= values["mu2"]:
            values["mu1"] = 0.1 * values["mu2"]
    params = _build_params(values, problem.variant, problem.n_pairs)
    report = evaluate(params)
    if report.rate_per_pulse <= 0.0:
        flags.append("zero-rate-region")
    return OptimizationResult(
        params=params,
        report=report,
        rate_per_pulse=report.rate_per_pulse,
        objective_evaluations=eval_count[0],
        restarts_run=len(starts),
        best_start_index=best_index,
        best_rate_trace=tuple(trace),
        flags=tuple(flags),
    )


def scan_distance(problem: OptimizationProblem,
                  distances: Sequence[float]) -> list[ScanPoint]:
    """Optimise at each distance in order, seeding every point with the
    previous optimum alongside the fresh restarts."""
    points: list[ScanPoint] = []
    previous: ProtocolParams | None = None
    for distance in distances:
        device = replace(problem.device, distance_km=float(distance))
        extra = problem.extra_starts if previous is None \
            else problem.extra_starts + (previous,)
        result = optimize(replace(problem, device=device, extra_starts=extra))
        previous = result.params
        points.append(ScanPoint(distance_km=float(distance), result=result))
    return points
