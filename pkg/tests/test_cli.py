import json
import subprocess
import sys

import numpy as np
import pytest

from fhbounds.cli import (
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_UNSTABLE,
    EXIT_VIOLATION,
    cmd_bounds,
    cmd_simulate,
    compare_curves,
    main,
)
from fhbounds.config import ExperimentConfig
from fhbounds.curves import DelayCurve
from fhbounds.errors import InvalidParameters

SMALL = {
    "topology": {"n_paths": 4, "capacity_bps": 1000.0},
    "classes": [
        {"name": "a", "packet_size_bits": 200, "arrival_rate_per_s": 1.5, "k": 1},
        {"name": "b", "packet_size_bits": 100, "arrival_rate_per_s": 3, "k": 1},
    ],
    "policy": {"type": "orthogonal_bandwidth", "fractions": {"a": 0.5, "b": 0.5}},
    "tau_grid": {"min": 1e-3, "max": 5.0, "points": 40, "spacing": "log"},
    "simulation": {"packets": 20000, "base_seed": 4},
}


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "exp.json"
    path.write_text(json.dumps(SMALL))
    return path


def files(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir()) if p.is_file()}


def test_bounds_single_path_identical(tmp_path):
    doc = {
        "topology": {"n_paths": 1, "capacity_bps": 2000.0},
        "classes": [{"name": "q", "packet_size_bits": 1, "arrival_rate_per_s": 1000, "k": 1}],
        "policy": {"type": "orthogonal_path", "paths": {"q": 1}},
        "tau_grid": {"min": 1e-5, "max": 1e-2, "points": 30},
    }
    p = tmp_path / "q.json"
    p.write_text(json.dumps(doc))
    assert main(["bounds", "--config", str(p), "--output-dir", str(tmp_path / "out")]) == EXIT_OK
    lo = DelayCurve.load(tmp_path / "out" / "q_lower.csv")
    up = DelayCurve.load(tmp_path / "out" / "q_upper.csv")
    np.testing.assert_allclose(lo.probs, up.probs, rtol=1e-9)
    np.testing.assert_allclose(lo.probs, np.exp(-1000.0 * lo.taus), rtol=1e-12)


def test_simulate_compare_pipeline(config_file, tmp_path):
    b, s = tmp_path / "b", tmp_path / "s"
    assert main(["bounds", "--config", str(config_file), "--output-dir", str(b)]) == EXIT_OK
    assert main(["simulate", "--config", str(config_file), "--output-dir", str(s)]) == EXIT_OK
    summary = json.loads((s / "simulate_summary.json").read_text())
    assert summary["classes"]["a"]["sample_count"] == 18000
    code = main(["compare", "--bounds-dir", str(b), "--sim-dir", str(s), "--output-dir", str(s)])
    assert code == EXIT_OK
    report = json.loads((s / "compare_report.json").read_text())
    assert report["classes"]["a"]["checked_points"] > 5


def test_rerun_from_output_file_is_byte_identical(config_file, tmp_path):
    first = tmp_path / "one"
    assert main(["simulate", "--config", str(config_file), "--output-dir", str(first), "--format", "json"]) == 0
    second = tmp_path / "two"
    emitted = first / "a_empirical.json"
    assert main(["simulate", "--config", str(emitted), "--output-dir", str(second), "--format", "json"]) == 0
    assert files(first) == files(second)


def test_compare_reports_violation(tmp_path):
    taus = np.array([1.0, 2.0, 3.0])
    lo = DelayCurve("analytic-lower", taus, [0.5, 0.2, 0.1]).save(tmp_path / "x_lower.csv")
    up = DelayCurve("analytic-upper", taus, [0.6, 0.3, 0.15]).save(tmp_path / "x_upper.csv")
    em = DelayCurve("empirical", taus, [0.55, 0.5, 0.12], [0.01, 0.01, 0.01], {"sample_count": 10**6})
    em.save(tmp_path / "x_empirical.csv")
    code = main(["compare", "--lower", str(lo), "--upper", str(up), "--empirical", str(tmp_path / "x_empirical.csv")])
    assert code == EXIT_VIOLATION
    res = compare_curves(DelayCurve.load(lo), DelayCurve.load(up), em)
    assert res["violation_count"] == 1 and res["violations"][0]["tau_seconds"] == 2.0


def test_compare_needs_common_grid():
    a = DelayCurve("analytic-lower", [1.0, 2.0], [0.5, 0.2])
    b = DelayCurve("analytic-upper", [1.0, 2.0], [0.6, 0.3])
    e = DelayCurve("empirical", [1.5, 2.5], [0.4, 0.1], [0.0, 0.0], {"sample_count": 3})
    with pytest.raises(InvalidParameters):
        compare_curves(a, b, e)


def test_exit_codes(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({**SMALL, "policy": {"type": "orthogonal_bandwidth", "fractions": {"a": 0.9, "b": 0.9}}}))
    assert main(["bounds", "--config", str(bad)]) == EXIT_CONFIG
    hot = tmp_path / "hot.json"
    hot.write_text(json.dumps({**SMALL, "policy": {"type": "orthogonal_bandwidth", "fractions": {"a": 0.1, "b": 0.9}}}))
    assert main(["bounds", "--config", str(hot)]) == EXIT_UNSTABLE
    assert main(["bounds", "--config", str(tmp_path / "nope.json")]) == EXIT_CONFIG
    shared = tmp_path / "shared.json"
    shared.write_text(json.dumps({**SMALL, "policy": {"type": "non_orthogonal"}}))
    assert main(["bounds", "--config", str(shared)]) == EXIT_CONFIG


def test_sweep_k_and_unstable_points(config_file, tmp_path):
    out = tmp_path / "sw"
    assert main(["sweep", "--config", str(config_file), "--output-dir", str(out),
                 "--parameter", "bw_u", "--values", "0.05,0.5,0.6", "--class", "a"]) == EXIT_OK
    lines = (out / "sweep_bw_u.csv").read_text().splitlines()
    assert any(line.endswith(",unstable") and ",0.05," in line for line in lines)
    assert (out / "bw_u=0.6" / "a_upper.csv").exists()
    assert main(["sweep", "--config", str(config_file), "--output-dir", str(out),
                 "--parameter", "k", "--values", "1,2,4", "--class", "a"]) == EXIT_OK
    assert main(["sweep", "--config", str(config_file), "--output-dir", str(out),
                 "--parameter", "n_u", "--values", "2"]) == EXIT_CONFIG


def test_recommend_command(tmp_path, capsys):
    taus = np.geomspace(1e-6, 1e-1, 300)
    rate = np.log(1e6) / 0.167e-3
    path = DelayCurve("analytic-upper", taus, np.exp(-rate * taus)).save(tmp_path / "c.csv")
    assert main(["recommend", "--curve", str(path), "--output-dir", str(tmp_path)]) == EXIT_OK
    report = json.loads((tmp_path / "recommendation.json").read_text())
    assert report["recommended_split"] == "MAC-PHY"
    assert report["fronthaul_only"] is True
    assert "recommended split: MAC-PHY" in capsys.readouterr().out


def test_module_entry_point(config_file, tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "fhbounds", "bounds", "--config", str(config_file),
         "--output-dir", str(tmp_path / "o"), "--tau-points", "5"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "o" / "a_lower.csv").exists()


def test_simulate_writes_raw_samples(config_file, tmp_path):
    cfg = ExperimentConfig.from_dict(SMALL).with_overrides(output_dir=str(tmp_path), raw_samples=True, packets=2000)
    cmd_simulate(cfg)
    raw = np.load(tmp_path / "a_samples_rep0.npy")
    assert raw.shape == (1800,)
    assert set(cmd_bounds(cfg)) == {"a", "b"}


def test_single_value_sweep_matches_direct_run(config_file, tmp_path):
    assert main(["sweep", "--config", str(config_file), "--output-dir", str(tmp_path / "sw"),
                 "--parameter", "k", "--values", "1", "--class", "a"]) == EXIT_OK
    assert main(["bounds", "--config", str(config_file), "--output-dir", str(tmp_path / "direct")]) == EXIT_OK
    swept = DelayCurve.load(tmp_path / "sw" / "k=1" / "a_upper.csv")
    direct = DelayCurve.load(tmp_path / "direct" / "a_upper.csv")
    np.testing.assert_array_equal(swept.probs, direct.probs)
