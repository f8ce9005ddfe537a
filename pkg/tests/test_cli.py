import csv
import io
import json
import math
import textwrap

import pytest

from fanet_sybil.cli import COLUMNS, SEED_ENV, cmd_run, cmd_sweep, convert_value, load_config, main, parse_grid
from fanet_sybil.harness import ConfigError, ScenarioConfig

MINIMAL = """
[scenario]
n_nodes = 12
duration_s = 6
replicates = 2
detectors = va, rssi
"""


@pytest.fixture
def config(tmp_path):
    def write(text=MINIMAL, name="run.ini"):
        p = tmp_path / name
        p.write_text(textwrap.dedent(text))
        return str(p)

    return write


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def test_defaults_express_reference_parameters(tmp_path):
    cfg = load_config("configs/default.ini").scenario
    assert cfg == ScenarioConfig()
    assert (cfg.alpha, cfg.p_th, cfg.d_s, cfg.tx_power_dbm) == (2.0, 0.8, 5.0, 30.0)
    assert (cfg.n_s, cfg.duration_s, cfg.sample_interval_s, cfg.replicates) == (10, 300.0, 2.0, 20)


@pytest.mark.parametrize("name", ["default.ini", "ablation.ini", "rssi_baseline.ini", "quick.ini"])
def test_shipped_configs_load(name):
    load_config(f"configs/{name}")


def test_shipped_grids():
    ablation = load_config("configs/ablation.ini")
    assert len(ablation.grid) == 12
    assert set(ablation.scenario.detectors) == {"va", "va_distance", "va_velocity"}
    rssi = load_config("configs/rssi_baseline.ini")
    assert len(rssi.grid) == 8 and {g["p_m"] for g in rssi.grid} == {0.1, 0.2}


def test_convert_value():
    assert convert_value("n_nodes", " 20 ") == 20
    assert convert_value("vd_range", "") is None
    assert convert_value("vd_range", "250") == 250.0
    assert convert_value("detectors", "va, rssi") == ("va", "rssi")
    with pytest.raises(ConfigError):
        convert_value("n_nodes", "twenty")
    with pytest.raises(ConfigError):
        convert_value("bogus", "1")


def test_parse_grid():
    assert parse_grid("n_nodes=20,150") == [{"n_nodes": 20}, {"n_nodes": 150}]
    cells = parse_grid("n_nodes=20,150; v_max=10,20")
    assert cells[1] == {"n_nodes": 20, "v_max": 20.0} and len(cells) == 4
    for bad in ("n_nodes", "n_nodes=", "=1,2", "", "n_nodes=1;n_nodes=2", "n_nodes=a"):
        with pytest.raises(ConfigError):
            parse_grid(bad)


@pytest.mark.parametrize(
    "text, needle",
    [
        ("[scenario]\nnodes = 3\n", "scenario.nodes"),
        ("[radio]\nalpha = 2\n", "radio"),
        ("[channel]\nalpha = 3\n", "singular"),
        ("[output]\nformat = xml\n", "output.format"),
        ("[scenario\n", "malformed"),
    ],
)
def test_config_errors_exit_2(config, capsys, text, needle, tmp_path):
    assert cmd_run(config(text), out=str(tmp_path / "o")) == 2
    assert needle in capsys.readouterr().err


def test_missing_file_exit_2(capsys, tmp_path):
    assert cmd_run(str(tmp_path / "nope.ini")) == 2
    assert "not found" in capsys.readouterr().err


def test_run_writes_both_formats(config, tmp_path):
    out = tmp_path / "out"
    assert main(["run", config(), "--out", str(out)]) == 0
    rows = read_csv(out / "results.csv")
    raw = (out / "results.csv").read_bytes()
    assert b"\r\n" not in raw
    assert raw.decode("utf-8").splitlines()[0].split(",") == list(COLUMNS)
    assert [r["detector"] for r in rows] == ["va", "rssi"]
    doc = json.loads((out / "results.json").read_text())
    assert doc["columns"] == list(COLUMNS)
    # CSV and JSON carry identical values
    for r_csv, r_json in zip(rows, doc["rows"]):
        for c in COLUMNS:
            v = r_json[c]
            if v is None:
                assert r_csv[c] == ""
            elif isinstance(v, float):
                assert float(r_csv[c]) == v
            else:
                assert r_csv[c] == str(v)


def test_format_flag(config, tmp_path):
    out = tmp_path / "o"
    assert cmd_run(config(), out=str(out), fmt="json") == 0
    assert (out / "results.json").exists() and not (out / "results.csv").exists()


def test_seed_precedence(config, tmp_path, monkeypatch):
    text = MINIMAL + "seed = 5\n"
    outs = {}
    for name, flag, env in (("file", None, None), ("env", None, "9"), ("flag", 9, "5"), ("flag2", 9, None)):
        if env is None:
            monkeypatch.delenv(SEED_ENV, raising=False)
        else:
            monkeypatch.setenv(SEED_ENV, env)
        assert cmd_run(config(text), seed=flag, out=str(tmp_path / name)) == 0
        outs[name] = (tmp_path / name / "results.csv").read_bytes()
    assert outs["env"] == outs["flag"] == outs["flag2"] != outs["file"]
    monkeypatch.setenv(SEED_ENV, "x")
    assert cmd_run(config(text), out=str(tmp_path / "bad")) == 2


def test_run_deterministic(config, tmp_path):
    for d in ("a", "b"):
        assert cmd_run(config(), seed=17, out=str(tmp_path / d)) == 0
    for f in ("results.csv", "results.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_sweep_two_rows(config, tmp_path):
    text = MINIMAL.replace("detectors = va, rssi", "detectors = va")
    out = tmp_path / "s"
    assert cmd_sweep(config(text), grid="n_nodes=12,20", out=str(out)) == 0
    rows = read_csv(out / "results.csv")
    assert [(r["cell_id"], r["n_nodes"]) for r in rows] == [("0", "12"), ("1", "20")]
    assert all(not math.isnan(float(r["precision"])) for r in rows)


def test_sweep_grid_errors(config, tmp_path):
    assert cmd_sweep(config(), grid="n_nodes==", out=str(tmp_path / "x")) == 2
    assert cmd_sweep(config(), grid=None, out=str(tmp_path / "x")) == 2
    assert cmd_sweep(config(), grid="alpha=3", out=str(tmp_path / "x")) == 2


def test_sweep_uses_grid_section(config, tmp_path):
    text = MINIMAL.replace("detectors = va, rssi", "detectors = rssi") + "\n[grid]\nv_max = 10, 20\n"
    out = tmp_path / "g"
    assert cmd_sweep(config(text), out=str(out)) == 0
    assert [r["v_max"] for r in read_csv(out / "results.csv")] == ["10.0", "20.0"]


def test_argparse_errors_exit_2(capsys):
    assert main(["frobnicate"]) == 2
    assert main(["run"]) == 2
