"""Command-line interface: argument handling, exit codes, report and CSV
output, config files, figures, and the validation subcommand."""

import json

import pytest

from snsqkd.cli import SCAN_COLUMNS, main


def _parse_report(text):
    out = {}
    for line in text.strip().splitlines():
        key, _, value = line.partition(":")
        out[key] = value.strip()
    return out


def _run(capsys, argv):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


# ----------------------------------------------------------------------- rate

def test_rate_short_link(capsys):
    code, out, _ = _run(capsys, ["rate", "--distance", "0",
                                 "--pipeline", "asymptotic"])
    assert code == 0
    report = _parse_report(out)
    assert report["pipeline"] == "asymptotic"
    assert report["variant"] == "4int"
    assert float(report["rate_per_pulse"]) > 0.0
    assert "flags" in report


def test_rate_flag_overrides_are_echoed(capsys):
    code, out, _ = _run(capsys, [
        "rate", "--distance", "50", "--pipeline", "asymptotic",
        "--mu1", "0.02", "--mu-z", "0.5", "--p-x", "0.08",
        "--delta-slice", "0.4",
    ])
    assert code == 0
    report = _parse_report(out)
    assert float(report["mu1"]) == 0.02
    assert float(report["mu_z"]) == 0.5
    assert float(report["p_x"]) == 0.08
    assert float(report["delta_slice"]) == 0.4
    assert float(report["distance_km"]) == 50.0


def test_rate_rejects_swapped_intensities(capsys):
    code, out, err = _run(capsys, ["rate", "--mu1", "0.3", "--mu2", "0.1"])
    assert code == 1
    assert out == ""
    assert "mu1" in err and "mu2" in err


def test_rate_bits_per_second_needs_rep_rate(capsys):
    code, out, _ = _run(capsys, ["rate", "--distance", "100",
                                 "--pipeline", "asymptotic"])
    assert code == 0
    assert "rate_bps" not in _parse_report(out)
    code, out, _ = _run(capsys, ["rate", "--distance", "100",
                                 "--pipeline", "asymptotic",
                                 "--rep-rate-hz", "1e9"])
    report = _parse_report(out)
    assert float(report["rate_bps"]) == pytest.approx(
        float(report["rate_per_pulse"]) * 1e9, rel=1e-9)


def test_rate_writes_output_file(capsys, tmp_path):
    target = tmp_path / "point.txt"
    code, out, _ = _run(capsys, ["rate", "--distance", "0",
                                 "--pipeline", "asymptotic",
                                 "--out", str(target)])
    assert code == 0
    assert out == ""
    assert "rate_per_pulse" in target.read_text()


def test_usage_errors_use_validation_code(capsys):
    assert main(["frobnicate"]) == 1
    capsys.readouterr()
    assert main([]) == 1
    capsys.readouterr()
    assert main(["rate", "--pipeline", "exact"]) == 1
    capsys.readouterr()
    assert main(["scan"]) == 1  # --distance-range is required
    capsys.readouterr()


# --------------------------------------------------------------------- config

def test_config_missing_file(capsys, tmp_path):
    code, _, err = _run(capsys, ["rate", "--config",
                                 str(tmp_path / "nope.json")])
    assert code == 2
    assert "cannot read" in err


def test_config_unknown_field(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"protocol": {"bogus": 1.0}}))
    code, _, err = _run(capsys, ["rate", "--config", str(cfg)])
    assert code == 1
    assert "bogus" in err


def test_config_invalid_json(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text("{not json")
    code, _, err = _run(capsys, ["rate", "--config", str(cfg)])
    assert code == 1
    assert "JSON" in err


def test_config_values_applied(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "device": {"distance_km": 75.0},
        "protocol": {"mu_z": 0.51},
    }))
    code, out, _ = _run(capsys, ["rate", "--pipeline", "asymptotic",
                                 "--config", str(cfg)])
    assert code == 0
    report = _parse_report(out)
    assert float(report["distance_km"]) == 75.0
    assert float(report["mu_z"]) == 0.51


def test_config_flag_beats_config_file(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"protocol": {"mu_z": 0.51}}))
    code, out, _ = _run(capsys, ["rate", "--pipeline", "asymptotic",
                                 "--config", str(cfg), "--mu-z", "0.6"])
    assert code == 0
    assert float(_parse_report(out)["mu_z"]) == 0.6


def test_config_non_numeric_value(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"protocol": {"mu_z": "half"}}))
    code, _, err = _run(capsys, ["rate", "--config", str(cfg)])
    assert code == 1
    assert "mu_z" in err


# ----------------------------------------------------------------------- scan

SCAN_ARGS = ["scan", "--distance-range", "0:25:25", "--pairs", "1e10",
             "--restarts", "4", "--budget", "1000"]


def test_scan_csv_shape_and_determinism(capsys, tmp_path):
    first = tmp_path / "a.csv"
    second = tmp_path / "b.csv"
    for target in (first, second):
        code, _, _ = _run(capsys, SCAN_ARGS + ["--no-figures",
                                               "--out", str(target)])
        assert code == 0
    assert first.read_bytes() == second.read_bytes()
    lines = first.read_text().strip().splitlines()
    assert lines[0] == ",".join(SCAN_COLUMNS)
    assert len(lines) == 3  # header + two distances
    row = dict(zip(SCAN_COLUMNS, lines[1].split(",")))
    assert row["series"] == "4int N=1e+10"
    assert row["pipeline"] == "finite"
    assert row["distance_km"] == "0"
    assert float(row["rate_per_pulse"]) > 0.0
    assert float(row["key_length"]) > 0.0
    assert row["rate_bps"] == ""  # no repetition rate given


def test_scan_asymptotic_series(capsys, tmp_path):
    target = tmp_path / "asym.csv"
    code, _, _ = _run(capsys, [
        "scan", "--distance-range", "0:0:10", "--pairs", "inf",
        "--restarts", "2", "--budget", "120", "--no-figures",
        "--out", str(target)])
    assert code == 0
    lines = target.read_text().strip().splitlines()
    row = dict(zip(SCAN_COLUMNS, lines[1].split(",")))
    assert row["series"] == "4int asymptotic"
    assert row["pipeline"] == "asymptotic"
    assert row["n_pairs"] == "inf"
    assert row["key_length"] == ""


def test_scan_stdout_when_no_out(capsys):
    code, out, _ = _run(capsys, ["scan", "--distance-range", "0:0:10",
                                 "--pairs", "1e10", "--restarts", "2",
                                 "--budget", "120"])
    assert code == 0
    assert out.startswith(",".join(SCAN_COLUMNS))


def test_scan_writes_figures(capsys, tmp_path):
    target = tmp_path / "table.csv"
    code, _, err = _run(capsys, SCAN_ARGS + ["--out", str(target)])
    assert code == 0
    rate_png = tmp_path / "table_rate.png"
    width_png = tmp_path / "table_slice_width.png"
    assert rate_png.exists() and width_png.exists()
    assert str(rate_png) in err and str(width_png) in err


def test_scan_no_figures_flag(capsys, tmp_path):
    target = tmp_path / "bare.csv"
    code, _, _ = _run(capsys, SCAN_ARGS + ["--no-figures",
                                           "--out", str(target)])
    assert code == 0
    assert not (tmp_path / "bare_rate.png").exists()
    assert not (tmp_path / "bare_slice_width.png").exists()


def test_scan_range_validation(capsys):
    code, _, err = _run(capsys, ["scan", "--distance-range", "10:0:5",
                                 "--pairs", "1e10"])
    assert code == 1
    assert "distance-range" in err
    code, _, err = _run(capsys, ["scan", "--distance-range", "0:10",
                                 "--pairs", "1e10"])
    assert code == 1
    code, _, err = _run(capsys, ["scan", "--distance-range", "0:25:25",
                                 "--pairs", "0.5"])
    assert code == 1
    assert "pairs" in err


# ---------------------------------------------------------- long-haul command

def test_404km_improvement_factor(capsys):
    code, out, _ = _run(capsys, ["404km", "--rep-rate-hz", "7.5e7",
                                 "--restarts", "6", "--budget", "2400"])
    assert code == 0
    report = _parse_report(out)
    assert float(report["reference_bps"]) == 3.2e-4
    factor = float(report["improvement_factor"])
    assert 4.4e5 / 5 < factor < 4.4e5 * 5
    assert "note" in report


# ----------------------------------------------------------- oracle subcommand

def test_oracle_check_passes(capsys):
    code, out, _ = _run(capsys, ["oracle-check"])
    assert code == 0
    assert "FAIL" not in out
    assert out.strip().splitlines()[-1].endswith("failures: 0")


def test_oracle_check_negative_control_fails(capsys):
    code, out, _ = _run(capsys, ["oracle-check", "--negative-control"])
    assert code == 3
    assert "FAIL" in out


def test_oracle_check_budget_floor(capsys):
    code, _, err = _run(capsys, ["oracle-check", "--budget", "1000"])
    assert code == 1
    assert "budget" in err
