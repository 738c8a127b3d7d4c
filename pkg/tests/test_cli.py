import subprocess
import sys

import pytest
import yaml

from fmms.cli import main
from test_evaluation import TINY_CFG


def _write(tmp_path, raw):
    p = tmp_path / "cfg.yaml"
    p.write_text(yaml.safe_dump(raw))
    return str(p)


def test_unknown_subcommand(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code != 0
    assert "usage" in capsys.readouterr().err


def test_missing_required_key(tmp_path, capsys):
    path = _write(tmp_path, {"data": {}})
    assert main(["gen-data", "-c", path]) == 1
    err = capsys.readouterr().err
    assert "experiment" in err and len(err.strip().splitlines()) == 1


def test_unknown_key_named(tmp_path, capsys):
    path = _write(tmp_path, {"experiment": {"seedz": [0]}})
    assert main(["attack", "-c", path]) == 1
    assert "experiment.seedz" in capsys.readouterr().err


def test_missing_config_file(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("FMMS_CONFIG", raising=False)
    assert main(["train"]) == 1
    assert main(["train", "-c", str(tmp_path / "nope.yaml")]) == 1
    assert "nope.yaml" in capsys.readouterr().err


@pytest.mark.parametrize("seed", ["-1", str(2**64), "abc"])
def test_seed_must_be_u64(seed):
    with pytest.raises(SystemExit):
        main(["gen-data", "--seed", seed, "-c", "x.yaml"])


def test_pipeline_end_to_end(tmp_path, monkeypatch, capsys):
    raw = {**TINY_CFG, "experiment": {"workdir": str(tmp_path / "runs"), "seeds": [0], "workers": 1, "rounds": [2],
                                      "max_pairs": 3}}
    monkeypatch.setenv("FMMS_CONFIG", _write(tmp_path, raw))
    assert main(["gen-data", "--seed", "7"]) == 0
    assert main(["train", "--seed", "7"]) == 0
    out = capsys.readouterr().out.split()
    assert any(p.endswith(".fmms") for p in out) and sum(p.endswith(".ckpt") for p in out) == 2
    report = tmp_path / "rep.csv"
    assert main(["attack", "--seed", "7", "-o", str(report)]) == 0
    assert report.exists() and report.with_suffix(".json").exists()
    capsys.readouterr()
    assert main(["report", str(report)]) == 0
    assert "sga_like" in capsys.readouterr().out


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "fmms", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "gen-data" in res.stdout
