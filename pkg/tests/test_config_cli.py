import filecmp
import json
import math
import os

import numpy as np
import pytest

from fftransmon.cli import main
from fftransmon.config import ConfigError, load_config, parse_config
from fftransmon.outputs import read_table
from fftransmon.rates import MEASURED_RATES, RATE_ORDER

HERE = os.path.dirname(os.path.abspath(__file__))
GOLDEN = os.path.join(HERE, "golden")
CONFIGS = os.path.join(os.path.dirname(HERE), "configs")
GOLDEN_NAMES = sorted(os.path.splitext(f)[0] for f in os.listdir(os.path.join(GOLDEN, "configs")))

MINIMAL = """experiment = "simulate"

[device]
omega = [5000.0]

[params]
duration = 1.0
"""


def numeric_equal(a, b):
    try:
        x, y = float(a), float(b)
    except (TypeError, ValueError):
        return a == b
    return math.isclose(x, y, rel_tol=1e-8, abs_tol=1e-10) or (math.isnan(x) and math.isnan(y))


def json_equal(a, b):
    if isinstance(a, dict):
        return isinstance(b, dict) and a.keys() == b.keys() and all(json_equal(a[k], b[k]) for k in a)
    if isinstance(a, list):
        return isinstance(b, list) and len(a) == len(b) and all(json_equal(x, y) for x, y in zip(a, b))
    if isinstance(a, (int, float)) and not isinstance(a, bool):
        return numeric_equal(a, b)
    return a == b


def run_config(path, out, *extra):
    return main(["run", path, "--out", str(out), *extra])


# --- golden files -----------------------------------------------------------------


@pytest.mark.parametrize("name", GOLDEN_NAMES)
def test_output_matches_golden_files(name, tmp_path):
    assert run_config(os.path.join(GOLDEN, "configs", name + ".toml"), tmp_path) == 0
    expected = os.path.join(GOLDEN, name)
    produced = sorted(f for f in os.listdir(tmp_path) if f != "manifest.json")
    assert produced == sorted(os.listdir(expected))
    for fname in produced:
        if fname.endswith(".json"):
            with open(tmp_path / fname) as a, open(os.path.join(expected, fname)) as b:
                assert json_equal(json.load(a), json.load(b)), fname
        else:
            cols_a, rows_a = read_table(tmp_path / fname)
            cols_b, rows_b = read_table(os.path.join(expected, fname))
            assert cols_a == cols_b and len(rows_a) == len(rows_b)
            for ra, rb in zip(rows_a, rows_b):
                assert all(numeric_equal(x, y) for x, y in zip(ra, rb)), fname
    manifest = json.load(open(tmp_path / "manifest.json"))
    assert manifest["files"] == ["results.json"] + sorted(f for f in produced if f != "results.json")
    assert len(manifest["config_sha256"]) == 64 and set(manifest["versions"]) >= {"fftransmon", "numpy"}


def test_golden_ham_tomog_matches_table(tmp_path):
    _, rows = read_table(os.path.join(GOLDEN, "ham-tomog", "rates.tsv"))
    for label, value in rows:
        assert abs(float(value) - MEASURED_RATES[label]) <= max(0.02, 0.03 * abs(MEASURED_RATES[label]))


# --- determinism ------------------------------------------------------------------


def test_same_seed_gives_identical_files(tmp_path):
    cfg = os.path.join(GOLDEN, "configs", "qpt-small.toml")
    assert run_config(cfg, tmp_path / "a") == 0
    assert run_config(cfg, tmp_path / "b") == 0
    cmp = filecmp.dircmp(tmp_path / "a", tmp_path / "b")
    assert not cmp.diff_files and not cmp.left_only and not cmp.right_only


def test_other_seed_changes_results(tmp_path):
    cfg = os.path.join(GOLDEN, "configs", "qpt-small.toml")
    run_config(cfg, tmp_path / "a")
    run_config(cfg, tmp_path / "b", "--seed", "4")
    assert not filecmp.cmp(tmp_path / "a" / "rates.tsv", tmp_path / "b" / "rates.tsv", shallow=False)


def test_manifest_reruns_to_identical_results(tmp_path):
    cfg = os.path.join(GOLDEN, "configs", "delay-scan.toml")
    assert run_config(cfg, tmp_path / "a", "--set", "params.shots=256") == 0
    assert run_config(str(tmp_path / "a" / "manifest.json"), tmp_path / "b") == 0
    for fname in os.listdir(tmp_path / "a"):
        assert filecmp.cmp(tmp_path / "a" / fname, tmp_path / "b" / fname, shallow=False), fname


def test_overrides_reach_the_config(tmp_path):
    cfg = load_config(os.path.join(CONFIGS, "ham-tomog.toml"), ["params.shots=256", "seed=9", "device.cr.model=ideal"])
    assert cfg.params["shots"] == 256 and cfg.seed == 9
    assert cfg.sha256 != load_config(os.path.join(CONFIGS, "ham-tomog.toml")).sha256


def test_shipped_configs_parse():
    for fname in sorted(os.listdir(CONFIGS)):
        cfg = load_config(os.path.join(CONFIGS, fname))
        assert cfg.output and cfg.experiment


# --- report -----------------------------------------------------------------------


def test_report_of_ham_tomog(tmp_path, capsys):
    run_config(os.path.join(GOLDEN, "configs", "ham-tomog.toml"), tmp_path, "--shots", "1024")
    capsys.readouterr()
    assert main(["report", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    lines = out.splitlines()
    start = lines.index("label\trate_mhz")
    labels = [ln.split("\t")[0] for ln in lines[start + 1:start + 8]]
    assert labels == list(RATE_ORDER)
    assert lines[start + 8] == ""


def test_report_of_empty_directory_fails(tmp_path, capsys):
    assert main(["report", str(tmp_path)]) == 3
    err = json.loads(capsys.readouterr().err)
    assert err["error"]["type"] == "report"


def test_report_of_corrupt_manifest_fails(tmp_path):
    (tmp_path / "manifest.json").write_text("{not json")
    assert main(["report", str(tmp_path)]) == 3


def test_flagged_fit_is_reported_as_warning(tmp_path, capsys):
    tls = "[{qubit=0, chi=0.03}, {qubit=0, chi=0.011}, {qubit=0, chi=0.047}]"
    cfg = os.path.join(GOLDEN, "configs", "delay-scan.toml")
    assert run_config(cfg, tmp_path, "--set", f"device.tls={tls}") == 0
    manifest = json.load(open(tmp_path / "manifest.json"))
    assert any("poor-fit" in w for w in manifest["warnings"])
    capsys.readouterr()
    assert main(["report", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "WARNING: repetition_0 flagged poor-fit" in out
    assert any(ln.startswith("WARNING: two-frequency fit flagged") for ln in out.splitlines())


# --- config errors ----------------------------------------------------------------


def test_unknown_key_reports_position():
    text = MINIMAL.replace("omega = [5000.0]", "omega = [5000.0]\n  omgea = 3")
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert (exc.value.line, exc.value.column) == (5, 3)
    assert exc.value.key == "device.omgea"


def test_syntax_error_reports_position():
    with pytest.raises(ConfigError) as exc:
        parse_config(MINIMAL.replace("duration = 1.0", "duration = = 1.0"))
    assert exc.value.line == 7 and exc.value.column is not None


def test_stochastic_experiment_needs_seed():
    text = MINIMAL.replace('"simulate"', '"low-amp"').replace("duration = 1.0", "Omega = 1.0\ntimes = [0.0, 1.0]")
    with pytest.raises(ConfigError, match="seed"):
        parse_config(text)
    parse_config(text, ["seed=1"])


def test_missing_and_unknown_values():
    with pytest.raises(ConfigError, match="missing key 'duration'"):
        parse_config(MINIMAL.replace("duration = 1.0", ""))
    with pytest.raises(ConfigError, match="unknown experiment"):
        parse_config(MINIMAL.replace('"simulate"', '"ramsey"'))
    with pytest.raises(ConfigError, match="unknown cross-resonance model"):
        parse_config(MINIMAL, ["device.cr.model=magic"])
    with pytest.raises(ConfigError):
        parse_config(MINIMAL, ["params.duration"])


def test_cli_config_error_exits_two(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text(MINIMAL.replace("[params]", "[params]\nbogus = 1"))
    assert main(["run", str(bad), "--out", str(tmp_path / "o")]) == 2
    err = json.loads(capsys.readouterr().err)["error"]
    assert err["type"] == "config" and err["line"] == 7 and err["key"] == "params.bogus"
    good = tmp_path / "good.toml"
    good.write_text(MINIMAL)
    assert main(["run", str(good), "--out", str(tmp_path / "o"), "--shots", "10"]) == 2
    assert main(["run", str(good)]) == 2


def test_simulate_writes_bloch_table(tmp_path):
    good = tmp_path / "good.toml"
    good.write_text(MINIMAL + "\n[[params.drives]]\nqubit = 0\namplitude = 1.0\n")
    assert main(["run", str(good), "--out", str(tmp_path / "o")]) == 0
    cols, rows = read_table(tmp_path / "o" / "bloch.tsv")
    assert cols == ["time", "qubit", "x", "y", "z"]
    z = np.array([float(r[4]) for r in rows])
    t = np.array([float(r[0]) for r in rows])
    assert np.allclose(z, np.cos(2 * np.pi * t), atol=1e-6)
