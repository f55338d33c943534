import json
import subprocess
import sys

import pytest
from hypothesis import given
from hypothesis import strategies as st

from motility.cli import ConfigError, HypothesisFailure, config_hash, main, model_params, parse_config, resolve_config


def run_cli(tmp_path, *args):
    return main([*args, "--out", str(tmp_path)])


def test_parse_config_sections_and_types():
    text = """
    # comment
    preset = "fig2"
    [params]
    zeta = 2.1   # trailing comment
    m0 = 1.1
    [tw]
    V = [0, 0.05, 0.1]
    label = 'a # b'
    flag = true
    """
    cfg = parse_config(text)
    assert cfg == {"preset": "fig2", "params.zeta": 2.1, "params.m0": 1.1, "tw.V": [0, 0.05, 0.1],
                   "tw.label": "a # b", "tw.flag": True}


@pytest.mark.parametrize("text,line", [
    ("a = 1\nb", 2),
    ("[params\nzeta = 1", 1),
    ("a = 1\na = 2", 2),
    ("a = [1, 2", 1),
    ("x = =", 1),
    ("1bad = 3", 1),
    ("s = 'open", 1),
])
def test_parse_config_errors_name_the_line(text, line):
    with pytest.raises(ConfigError, match=f"line {line}"):
        parse_config(text)


@given(st.dictionaries(st.from_regex(r"[a-z]{1,6}\.[a-z]{1,6}", fullmatch=True),
                       st.one_of(st.integers(-10**6, 10**6), st.floats(-1e6, 1e6, allow_nan=False), st.booleans()),
                       max_size=6))
def test_parse_config_roundtrip(data):
    text = "\n".join(f"{k} = {json.dumps(v)}" for k, v in data.items())
    assert parse_config(text) == data


def test_presets_and_overrides():
    cfg = resolve_config({"params.m0": 2.0}, "fig1")
    assert cfg["params.m0"] == 2.0 and cfg["params.zeta"] == 4.0
    with pytest.raises(ConfigError):
        resolve_config({}, "fig9")
    assert config_hash(cfg) == config_hash(dict(reversed(list(cfg.items()))))


def test_model_params_anchor():
    p, R = model_params(resolve_config({}, "fig2"))
    assert R == pytest.approx(2.0560527749174025)
    assert p.density(R) == pytest.approx(1.1)
    with pytest.raises(HypothesisFailure):
        model_params({"params.m0": 3.0, "params.zeta": 2.0})
    with pytest.raises(ConfigError):
        model_params({"params.m0": "x"})


def test_steady_exit_codes(tmp_path):
    assert run_cli(tmp_path / "ok", "steady", "--preset", "fig2", "--set", "params.R=1.5") == 0
    report = json.loads((tmp_path / "ok" / "report.json").read_text())
    assert report["classification"] == "Stable"
    code = run_cli(tmp_path / "bad", "steady", "--set", "params.m0=3", "--set", "params.zeta=2",
                   "--set", "params.R=1", "--set", "params.k_e=0")
    assert code == 2
    assert run_cli(tmp_path / "cfg", "steady", "--set", "params.m0=oops") == 1


def test_missing_config_file(tmp_path, capsys):
    assert run_cli(tmp_path, "steady", "--config", str(tmp_path / "none.cfg")) == 1
    assert "motility.cli: config error" in capsys.readouterr().err


def test_manifest_and_determinism(tmp_path):
    for name in ("a", "b"):
        assert run_cli(tmp_path / name, "bifurcate", "--preset", "fig2", "--format", "json") == 0
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert ma == mb
    assert {f["file"] for f in ma["files"]} == {"bifurcation.json", "report.json"}
    report = json.loads((tmp_path / "a" / "report.json").read_text())
    assert report["roots"]["primary"][0]["R0"] == pytest.approx(2.0560527749174025, abs=1e-9)


@pytest.mark.parametrize("fmt,name", [("csv", "spectrum.csv"), ("json", "spectrum.json"), ("svg", "spectrum.svg")])
def test_spectrum_formats(tmp_path, fmt, name):
    assert run_cli(tmp_path, "spectrum", "--preset", "fig2", "--quick", "--format", fmt,
                   "--set", "spectrum.n_max=3", "--set", "spectrum.n_r=16") == 0
    text = (tmp_path / name).read_text()
    if fmt == "svg":
        assert text.startswith("<svg") and "</svg>" in text
    elif fmt == "json":
        assert json.loads(text)["zero_multiplicity"] == 3


def test_tw_and_massvel(tmp_path):
    assert run_cli(tmp_path, "tw", "--preset", "fig2", "--quick", "--set", "tw.V=[0.05]") == 0
    assert (tmp_path / "tw_V0.050.csv").exists()
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["shapes"][0]["rear_max"]
    assert run_cli(tmp_path, "massvel", "--preset", "fig2", "--quick", "--format", "json") == 0
    mv = json.loads((tmp_path / "massvel.json").read_text())
    assert mv["initial_slope_negative"] and mv["turning_velocity"] is not None


def test_simulate_quick(tmp_path):
    code = run_cli(tmp_path, "simulate", "--quick", "--set", "params.R=1.2", "--set", "grid.n_r=16",
                   "--set", "grid.n_phi=32", "--set", "time.dt=0.001")
    assert code == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["event"] == "t_end" and summary["mass_rel_drift"] < 1e-12
    assert (tmp_path / "trajectory.csv").read_text().startswith("t,mass")


def test_entry_point_help():
    out = subprocess.run([sys.executable, "-m", "motility.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for name in ("steady", "spectrum", "bifurcate", "tw", "massvel", "simulate", "verify"):
        assert name in out.stdout
