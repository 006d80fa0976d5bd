"""Command-line front end.

Subcommands:
  rate          evaluate one protocol point and print a structured report
  scan          optimize over a distance range and emit a CSV table
  404km         run the long-haul comparison point
  oracle-check  sampled-vs-expected and interval-coverage validation runs

Exit codes: 0 success, 1 validation error, 2 I/O error, 3 invariant
violation.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from dataclasses import replace

from .channel import expected_observables, monte_carlo_observables
from .checks import (check_chernoff_coverage, compare_observables,
                     compare_sampled_to_expected)
from .decoy import VARIANTS, asymptotic_pipeline
from .figures import render_scan_figures
from .finitekey import finite_key_pipeline
from .optimize import OptimizationProblem, optimize, scan_distance
from .presets import (DEFAULT_PROTOCOL, FIELD_404KM_DEVICE, FIELD_404KM_PAIRS,
                      FIELD_404KM_REFERENCE_BPS, ORACLE_CHECK_DISTANCE_KM,
                      ORACLE_CHECK_PROTOCOL, preset_device)
from .protocol import (DeviceModel, KeyRateReport, ParameterError,
                       ProtocolParams)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_INVARIANT = 3

MIN_ORACLE_BUDGET = 1e6

_DEVICE_FIELDS = {f.name for f in dataclasses.fields(DeviceModel)}
_PROTOCOL_FIELDS = {f.name for f in dataclasses.fields(ProtocolParams)}

#: Column order for scan tables; never reordered so downstream parsers can
#: rely on it.
SCAN_COLUMNS = (
    "series", "variant", "pipeline", "n_pairs", "distance_km",
    "rate_per_pulse", "rate_bps", "key_length",
    "s1_used", "e1ph_used", "s_z", "e_z", "t_delta",
    "p_x", "p_1", "p_2", "p_z", "mu1", "mu2", "mu_z", "delta_slice",
    "restarts", "evaluations",
)


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on usage errors; remap to the validation
    exit code so 2 stays reserved for I/O failures."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        if math.isinf(value):
            return "inf"
        return format(value, ".12g")
    return str(value)


def _emit(text: str, out_path: str | None) -> None:
    if out_path is None:
        sys.stdout.write(text)
    else:
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParameterError(f"config is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ParameterError("config root must be a JSON object")
    unknown = set(data) - {"device", "protocol"}
    if unknown:
        raise ParameterError(
            f"unknown config section(s) {sorted(unknown)}; "
            "expected 'device' and/or 'protocol'")
    for section, allowed in (("device", _DEVICE_FIELDS),
                             ("protocol", _PROTOCOL_FIELDS)):
        block = data.get(section, {})
        if not isinstance(block, dict):
            raise ParameterError(f"config section {section!r} must be an object")
        bad = set(block) - allowed
        if bad:
            raise ParameterError(
                f"unknown field(s) {sorted(bad)} in config section "
                f"{section!r}; allowed: {sorted(allowed)}")
        for key, value in block.items():
            if key == "misalignment_model":
                if not isinstance(value, str):
                    raise ParameterError(
                        "config field 'misalignment_model' must be a string")
            elif not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ParameterError(
                    f"config field {section}.{key} must be a number, "
                    f"got {value!r}")
    return data


def _resolve_device(args, config: dict) -> DeviceModel:
    device = preset_device(getattr(args, "preset", "table1"))
    overrides = dict(config.get("device", {}))
    if getattr(args, "distance", None) is not None:
        overrides["distance_km"] = args.distance
    if overrides:
        device = replace(device, **overrides)
    return device


def _resolve_protocol(args, config: dict) -> ProtocolParams:
    overrides = dict(config.get("protocol", {}))
    flag_map = {
        "p_x": "p_x", "p_1": "p_1", "p_2": "p_2", "p_z": "p_z",
        "mu1": "mu1", "mu2": "mu2", "mu_z": "mu_z",
        "delta_slice": "delta_slice", "pairs": "n_pairs",
    }
    for flag, field in flag_map.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[field] = value
    return replace(DEFAULT_PROTOCOL, **overrides)


def _report_lines(report: KeyRateReport, params: ProtocolParams,
                  device: DeviceModel,
                  rep_rate_hz: float | None) -> list[tuple[str, object]]:
    lines: list[tuple[str, object]] = [
        ("pipeline", report.regime),
        ("variant", report.variant),
        ("distance_km", device.distance_km),
        ("n_pairs", params.n_pairs),
        ("p_x", params.p_x),
        ("p_1", params.p_1),
        ("p_2", params.p_2),
        ("p_z", params.p_z),
        ("mu1", params.mu1),
        ("mu2", params.mu2),
        ("mu_z", params.mu_z),
        ("delta_slice", params.delta_slice),
        ("rate_per_pulse", report.rate_per_pulse),
        ("rate_per_pulse_raw", report.rate_per_pulse_raw),
        ("key_length", report.key_length),
        ("key_length_raw", report.key_length_raw),
        ("s1_used", report.s1_used),
        ("e1ph_used", report.e1ph_used),
        ("s_z", report.s_z),
        ("e_z", report.e_z),
        ("t_delta", report.t_delta),
        ("s00_used", report.s00_used),
        ("a1", report.a1),
        ("q1", report.q1),
        ("n1", report.n1),
        ("n_t", report.n_t),
    ]
    for key in sorted(report.deviations):
        lines.append((f"deviation[{key}]", report.deviations[key]))
    lines.append(("flags", ";".join(report.flags)))
    if rep_rate_hz is not None:
        lines.append(("rep_rate_hz", rep_rate_hz))
        lines.append(("rate_bps", report.rate_per_pulse * rep_rate_hz))
    return lines


def _render_report(lines: list[tuple[str, object]]) -> str:
    return "".join(f"{key}: {_fmt(value)}\n" for key, value in lines)


def _parse_distance_range(text: str) -> list[float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise ParameterError(
            f"--distance-range must be START:STOP:STEP, got {text!r}")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        raise ParameterError(
            f"--distance-range values must be numbers, got {text!r}"
        ) from None
    if step <= 0 or stop < start or start < 0:
        raise ParameterError(
            "--distance-range needs start >= 0, stop >= start, step > 0")
    distances = []
    k = 0
    while True:
        d = start + k * step
        if d > stop + 1e-9:
            break
        distances.append(round(d, 9))
        k += 1
    return distances


def _parse_pairs(text: str) -> float:
    if text.strip().lower() in ("inf", "infinity", "asymptotic"):
        return math.inf
    try:
        value = float(text)
    except ValueError:
        raise ParameterError(
            f"--pairs must be a number or 'inf', got {text!r}") from None
    if value < 1:
        raise ParameterError(f"--pairs must be >= 1, got {text!r}")
    return value


def cmd_rate(args) -> int:
    config = _load_config(args.config)
    device = _resolve_device(args, config)
    params = _resolve_protocol(args, config)
    if args.pipeline == "asymptotic":
        report = asymptotic_pipeline(params, device, variant=args.variant)
    else:
        report = finite_key_pipeline(params, device, variant=args.variant)
    text = _render_report(_report_lines(report, params, device,
                                        args.rep_rate_hz))
    _emit(text, args.out)
    return EXIT_OK


def _series_label(variant: str, pairs: float) -> str:
    if math.isinf(pairs):
        return f"{variant} asymptotic"
    return f"{variant} N={pairs:.6g}"


def _scan_rows(args, device: DeviceModel, distances: list[float],
               variant: str, pairs: float) -> list[dict]:
    if math.isinf(pairs):
        pipeline = "asymptotic"
        n_pairs = DEFAULT_PROTOCOL.n_pairs
    else:
        pipeline = args.pipeline
        n_pairs = pairs
    problem = OptimizationProblem(
        device=device,
        pipeline=pipeline,
        variant=variant,
        n_pairs=n_pairs,
        restarts=args.restarts,
        budget=args.budget,
        seed=args.seed,
    )
    rows = []
    for point in scan_distance(problem, distances):
        result = point.result
        report = result.report
        params = result.params
        row = {
            "series": _series_label(variant, pairs),
            "variant": variant,
            "pipeline": pipeline,
            "n_pairs": pairs,
            "distance_km": point.distance_km,
            "rate_per_pulse": result.rate_per_pulse,
            "rate_bps": (None if args.rep_rate_hz is None
                         else result.rate_per_pulse * args.rep_rate_hz),
            "key_length": (None if math.isinf(pairs) else report.key_length),
            "s1_used": report.s1_used,
            "e1ph_used": report.e1ph_used,
            "s_z": report.s_z,
            "e_z": report.e_z,
            "t_delta": report.t_delta,
            "p_x": params.p_x,
            "p_1": params.p_1,
            "p_2": params.p_2,
            "p_z": params.p_z,
            "mu1": params.mu1,
            "mu2": params.mu2,
            "mu_z": params.mu_z,
            "delta_slice": params.delta_slice,
            "restarts": result.restarts_run,
            "evaluations": result.objective_evaluations,
        }
        rows.append(row)
    return rows


def _render_csv(rows: list[dict]) -> str:
    out = [",".join(SCAN_COLUMNS)]
    for row in rows:
        out.append(",".join(_fmt(row.get(col)) for col in SCAN_COLUMNS))
    return "\n".join(out) + "\n"


def cmd_scan(args) -> int:
    config = _load_config(args.config)
    device = _resolve_device(args, config)
    distances = _parse_distance_range(args.distance_range)
    pairs_list = [_parse_pairs(p) for p in (args.pairs or ["inf"])]
    variants = args.variant or ["4int"]
    for v in variants:
        if v not in VARIANTS:
            raise ParameterError(f"unknown variant {v!r}")
    rows: list[dict] = []
    for variant in variants:
        for pairs in pairs_list:
            rows.extend(_scan_rows(args, device, distances, variant, pairs))
    rows.sort(key=lambda r: (r["series"], r["distance_km"]))
    text = _render_csv(rows)
    _emit(text, args.out)
    if args.out is not None and not args.no_figures:
        for path in render_scan_figures(rows, args.out):
            sys.stderr.write(f"figure written: {path}\n")
    return EXIT_OK


def cmd_404km(args) -> int:
    config = _load_config(args.config)
    device = FIELD_404KM_DEVICE
    overrides = dict(config.get("device", {}))
    if args.distance is not None:
        overrides["distance_km"] = args.distance
    if overrides:
        device = replace(device, **overrides)
    n_pairs = FIELD_404KM_PAIRS if args.pairs is None else _parse_pairs(
        args.pairs)
    problem = OptimizationProblem(
        device=device,
        pipeline="finite",
        variant="4int",
        n_pairs=n_pairs,
        restarts=args.restarts,
        budget=args.budget,
        seed=args.seed,
    )
    result = optimize(problem)
    lines = _report_lines(result.report, result.params, device,
                          args.rep_rate_hz)
    lines.append(("reference_bps", FIELD_404KM_REFERENCE_BPS))
    if args.rep_rate_hz is not None:
        rate_bps = result.rate_per_pulse * args.rep_rate_hz
        lines.append(("improvement_factor",
                      rate_bps / FIELD_404KM_REFERENCE_BPS))
        lines.append(("note", "rate_bps assumes the repetition rate passed "
                              "via --rep-rate-hz; the reference value is the "
                              "published detection rate at this distance"))
    text = _render_report(lines)
    _emit(text, args.out)
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    if args.budget < MIN_ORACLE_BUDGET:
        raise ParameterError(
            f"--budget must be >= {MIN_ORACLE_BUDGET:g}, got {args.budget:g}")
    config = _load_config(args.config)
    device = _resolve_device(args, config)
    if args.distance is None and "device" not in config:
        device = replace(device, distance_km=ORACLE_CHECK_DISTANCE_KM)
    params = replace(ORACLE_CHECK_PROTOCOL, n_pairs=float(args.budget))
    if args.negative_control:
        # Deliberate model mismatch: the sampled run silently drops the
        # misalignment flip while the expected path keeps it.
        expected = expected_observables(params, device)
        sampled = monte_carlo_observables(params, replace(device, e_a=0.0),
                                          args.seed)
        results = compare_observables(expected, sampled, params.n_pairs)
    else:
        results = compare_sampled_to_expected(params, device, args.seed)
    results.extend(check_chernoff_coverage(args.seed))
    failed = [r for r in results if not r.passed]
    out = []
    for r in results:
        out.append(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
    out.append(f"checks: {len(results)}, failures: {len(failed)}")
    _emit("\n".join(out) + "\n", args.out)
    return EXIT_INVARIANT if failed else EXIT_OK


def _add_common(parser, *, distance=True) -> None:
    parser.add_argument("--config", help="JSON config file with 'device' "
                        "and/or 'protocol' sections")
    parser.add_argument("--preset", default="table1",
                        choices=("table1", "404km"),
                        help="named device preset (default table1)")
    if distance:
        parser.add_argument("--distance", type=float, default=None,
                            help="fibre length in km, overrides preset/config")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default=None, help="output file path")
    parser.add_argument("--rep-rate-hz", type=float, default=None,
                        help="source repetition rate; bits-per-second values "
                             "are only emitted when this is given")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="snsqkd",
                     description="Key-rate calculator for the "
                                 "sending-or-not-sending twin-field "
                                 "protocol.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_rate = sub.add_parser("rate", help="evaluate one protocol point")
    _add_common(p_rate)
    p_rate.add_argument("--pipeline", default="finite",
                        choices=("asymptotic", "finite"))
    p_rate.add_argument("--variant", default="4int", choices=VARIANTS)
    p_rate.add_argument("--pairs", type=float, default=None,
                        help="number of pulse pairs in the session")
    for flag in ("--p-x", "--p-1", "--p-2", "--p-z",
                 "--mu1", "--mu2", "--mu-z", "--delta-slice"):
        p_rate.add_argument(flag, type=float, default=None)
    p_rate.set_defaults(func=cmd_rate)

    p_scan = sub.add_parser("scan", help="optimized rate vs distance table")
    _add_common(p_scan, distance=False)
    p_scan.add_argument("--distance-range", required=True,
                        metavar="START:STOP:STEP")
    p_scan.add_argument("--pipeline", default="finite",
                        choices=("asymptotic", "finite"),
                        help="pipeline for finite --pairs values; 'inf' rows "
                             "always use the asymptotic pipeline")
    p_scan.add_argument("--variant", action="append", choices=VARIANTS,
                        help="repeatable; default 4int")
    p_scan.add_argument("--pairs", action="append", metavar="N",
                        help="repeatable; a number or 'inf' (default inf)")
    p_scan.add_argument("--restarts", type=int, default=32)
    p_scan.add_argument("--budget", type=int, default=16000,
                        help="objective evaluations per optimization")
    p_scan.add_argument("--no-figures", action="store_true",
                        help="skip writing PNG figures next to --out")
    p_scan.set_defaults(func=cmd_scan)

    p_404 = sub.add_parser("404km", help="long-haul comparison point")
    _add_common(p_404)
    p_404.add_argument("--pairs", default=None,
                       help="session size (default 6e14)")
    p_404.add_argument("--restarts", type=int, default=32)
    p_404.add_argument("--budget", type=int, default=16000)
    p_404.set_defaults(func=cmd_404km)

    p_oracle = sub.add_parser("oracle-check",
                              help="sampled-vs-expected and coverage checks")
    _add_common(p_oracle)
    p_oracle.add_argument("--budget", type=float, default=MIN_ORACLE_BUDGET,
                          help="pulse pairs to sample (>= 1e6)")
    p_oracle.add_argument("--negative-control", action="store_true",
                          help="corrupt the sampled path's misalignment "
                               "model; the run must then fail")
    p_oracle.set_defaults(func=cmd_oracle_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ParameterError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_VALIDATION
    except FileNotFoundError as exc:
        sys.stderr.write(f"error: cannot read {exc.filename!r}\n")
        return EXIT_IO
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
