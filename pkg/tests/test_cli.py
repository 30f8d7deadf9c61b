import csv
import json

import pytest

from fgn_lan import cli
from fgn_lan.errors import ConditioningError


def read_csv(path):
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == cli.SCHEMA_LINE
    return list(csv.DictReader(lines[1:]))


def test_fisher(tmp_path):
    assert cli.run(["fisher", "--hurst", "0.7", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "fisher.csv")
    assert list(rows[0]) == ["H", "i1", "i2", "J11", "J12", "J22", "quad_error"]
    assert float(rows[0]["J11"]) == 2.0


def test_rate_check_all_pass(tmp_path):
    code = cli.run(["rate-check", "--kind", "lower_tri", "--sigma", "1.0", "--tau", "0.5",
                    "--out", str(tmp_path)])
    assert code == 0
    rows = read_csv(tmp_path / "conditions.csv")
    assert len(rows) == 6
    assert all(r["verdict"] == "PASS" for r in rows)


def test_simulate_deterministic(tmp_path):
    for d in ("a", "b"):
        assert cli.run(["simulate", "--hurst", "0.5", "--n", "8", "--seed", "7",
                        "--out", str(tmp_path / d)]) == 0
    assert (tmp_path / "a/samples.csv").read_bytes() == (tmp_path / "b/samples.csv").read_bytes()
    assert len(read_csv(tmp_path / "a/samples.csv")) == 8


def test_manifest_round_trip(tmp_path):
    args = ["lan-verify", "--reps", "100", "--n", "32", "64", "--kind", "upper_tri",
            "--u", "1,0", "--u", "0,1", "--chunk", "40"]
    assert cli.run(args + ["--out", str(tmp_path / "a")]) == 0
    manifest = tmp_path / "a/manifest.json"
    doc = json.loads(manifest.read_text())
    assert doc["subcommand"] == "lan-verify" and doc["lan-verify"]["reps"] == 100
    assert cli.run(["lan-verify", "--config", str(manifest), "--workers", "2",
                    "--out", str(tmp_path / "b")]) == 0
    for name in ("lan_summary.csv", "lan_long.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_unknown_flag_is_validation_error(tmp_path, capsys):
    assert cli.run(["fisher", "--bogus", "1"]) == 1
    assert "error" in capsys.readouterr().err


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"fisher": {"hursts": [0.6], "colour": "red"}}))
    assert cli.run(["fisher", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    cfg.write_text(json.dumps({"plots": {}}))
    assert cli.run(["fisher", "--config", str(cfg), "--out", str(tmp_path)]) == 1


def test_config_then_flag_override(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"efficiency": {"hurst": 0.3, "sigma": 2.0}}))
    assert cli.run(["efficiency", "--config", str(cfg), "--sigma", "3.0", "--dry-run"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["efficiency"]["hurst"] == 0.3 and doc["efficiency"]["sigma"] == 3.0


def test_domain_error_exit_code(tmp_path):
    assert cli.run(["efficiency", "--hurst", "1.2", "--out", str(tmp_path)]) == 1
    assert cli.run(["rate-check", "--tau", "1.5", "--out", str(tmp_path)]) == 1


def test_runtime_error_exit_code(tmp_path, monkeypatch):
    def boom(cfg, out):
        raise ConditioningError("T_n(H) lost positive definiteness")
    monkeypatch.setitem(cli.COMMANDS, "fisher", boom)
    assert cli.run(["fisher", "--out", str(tmp_path)]) == 2


@pytest.mark.parametrize("sub", list(cli.SUBCOMMANDS))
def test_dry_run_writes_nothing(tmp_path, sub, capsys):
    out = tmp_path / "o"
    assert cli.run([sub, "--dry-run", "--out", str(out)]) == 0
    assert json.loads(capsys.readouterr().out)["subcommand"] == sub
    assert not out.exists()


def test_env_out_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("FGN_LAN_OUT", str(tmp_path / "env"))
    assert cli.run(["efficiency"]) == 0
    assert (tmp_path / "env/efficiency.csv").exists()
    assert not list((tmp_path / "env").glob("*.tmp"))


def test_loglik_from_data_file(tmp_path):
    data = tmp_path / "x.csv"
    data.write_text("x\n0.0\n0.0\n0.0\n0.0\n")
    assert cli.run(["loglik", "--data", str(data), "--hurst", "0.5", "--sigma", "2.0",
                    "--out", str(tmp_path)]) == 0
    row = read_csv(tmp_path / "loglik.csv")[0]
    assert float(row["loglik"]) == pytest.approx(-2 * 1.8378770664093453 - 4 * 0.6931471805599453)


def test_loglik_bad_data(tmp_path):
    data = tmp_path / "x.csv"
    data.write_text("y\n1\n2\n")
    assert cli.run(["loglik", "--data", str(data), "--out", str(tmp_path)]) == 1


def test_kawai_and_mle_small(tmp_path):
    assert cli.run(["kawai", "--reps", "100", "--n", "32", "64", "--out", str(tmp_path / "k")]) == 0
    assert read_csv(tmp_path / "k/kawai_summary.csv")
    assert cli.run(["mle-sweep", "--reps", "100", "--n", "32", "64",
                    "--out", str(tmp_path / "m")]) == 0
    rows = read_csv(tmp_path / "m/mle_summary.csv")
    assert [int(r["n"]) for r in rows] == [32, 64]


def test_plot_svg_deterministic(tmp_path):
    pytest.importorskip("matplotlib")
    args = ["lan-verify", "--reps", "100", "--n", "32", "64", "--plot"]
    assert cli.run(args + ["--out", str(tmp_path / "a")]) == 0
    assert cli.run(args + ["--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a/r_n_decay.svg").read_bytes()
    assert a.startswith(b"<?xml") and a == (tmp_path / "b/r_n_decay.svg").read_bytes()
