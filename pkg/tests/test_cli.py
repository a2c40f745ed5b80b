from __future__ import annotations

import json
from pathlib import Path

import pytest

from rgbdsde import cli
from rgbdsde.config import config_from_dict, load_config
from rgbdsde.errors import ConfigurationError, NumericalError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_basis_on_poisson_config(tmp_path):
    assert cli.run("basis", CONFIGS / "poisson_basis.yaml", tmp_path) == cli.EXIT_OK
    assert "0.7071067811865475" in (tmp_path / "basis_alpha.csv").read_text()
    manifest = json.loads((tmp_path / "manifest-basis.json").read_text())
    assert manifest["seed"] == 1
    assert set(manifest["artifacts"]) == {"basis_alpha.csv", "basis.json"}
    assert "timestamp" not in json.dumps(manifest)


@pytest.mark.parametrize("sub", ["simulate", "reflect", "solve"])
def test_repeat_runs_are_byte_identical(tmp_path, sub):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(
        "seed: 3\n"
        "characteristics: {T: 1.0, b: 0.1, atoms: [{e: 0.5, lambda: 1.0}, {e: -0.5, lambda: 1.0}]}\n"
        "grid: {N: 10}\nbatch: {paths: 300, backward: common}\n"
        "problem:\n  terminal: {preset: put, strike: 0.5}\n"
        "  drivers: {f: {preset: linear, a: -1.0}, g: {preset: linear, s: 0.3}}\n"
        "domain: {preset: interval, a: -1.0, b: 1.0, sigma: {s0: 0.5, s2: -0.5}, start: [0.0, 0.0]}\n"
    )
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.run(sub, cfg, a) == cli.EXIT_OK
    assert cli.run(sub, cfg, b) == cli.EXIT_OK
    files = sorted(p.name for p in a.iterdir())
    assert files == sorted(p.name for p in b.iterdir())
    for name in files:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_config_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("characteristics: {T: 1.0}\n")
    assert cli.run("basis", bad, tmp_path) == cli.EXIT_CONFIG
    assert "seed is mandatory" in capsys.readouterr().err
    bad.write_text("seed: 1\ncharacteristics: {T: 1.0}\nproblem: {drivers: {f: {preset: nope}}}\n")
    assert cli.run("solve", bad, tmp_path) == cli.EXIT_CONFIG
    assert cli.run("basis", tmp_path / "missing.yaml", tmp_path) == cli.EXIT_CONFIG
    bad.write_text("seed: 1\ncharacteristics: {T: 1.0, atoms: [{e: 1.0, lambda: 1.0}]}\n")
    assert cli.run("reflect", bad, tmp_path) == cli.EXIT_CONFIG
    assert json.loads((tmp_path / "error-reflect.json").read_text())["status"] == "configuration_error"


def test_numerical_error_exit_3(tmp_path, monkeypatch, capsys):
    def boom(cfg, out):
        raise NumericalError("flow integration produced non-finite values")

    monkeypatch.setitem(cli._COMMANDS, "basis", boom)
    assert cli.run("basis", CONFIGS / "poisson_basis.yaml", tmp_path) == cli.EXIT_NUMERICAL
    diag = json.loads((tmp_path / "error-basis.json").read_text())
    assert diag["status"] == "numerical_error" and "non-finite" in diag["message"]
    assert json.loads(capsys.readouterr().err.strip())["subcommand"] == "basis"


def test_verify_subset_via_main(tmp_path, capsys):
    code = cli.main(["verify", "--config", str(CONFIGS / "poisson_basis.yaml"), "--out", str(tmp_path), "--only", "1,4"])
    assert code == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "[PASS] criterion  1" in out and "[PASS] criterion  4" in out
    assert set(json.loads((tmp_path / "verify.json").read_text())) == {"1", "4"}


def test_shipped_configs_parse():
    for path in sorted(CONFIGS.glob("*.yaml")):
        cfg = load_config(path)
        assert len(cfg.source_hash) == 64


def test_config_validation():
    with pytest.raises(ConfigurationError):
        config_from_dict({"seed": 1, "characteristics": {"T": 1.0}, "extra": {}})
    with pytest.raises(ConfigurationError):
        config_from_dict({"seed": -1, "characteristics": {"T": 1.0}})
    with pytest.raises(ConfigurationError):
        config_from_dict({"seed": 1})
    with pytest.raises(ConfigurationError):
        config_from_dict({"seed": 1, "characteristics": {"T": 1.0}, "batch": {"backward": "sideways"}})
