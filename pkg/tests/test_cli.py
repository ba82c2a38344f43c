import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from holoray.cli import ConfigError, REQUIRED, list_presets, main, parse_config, thread_cap

DEMOS = Path(__file__).resolve().parents[1] / "demos" / "configs"

BASE = {
    "model": "catenoid",
    "pair": {"name": "scalar-higgs", "params": {"phi0": 0.7}},
    "grid": [12, 12, 8],
    "ray": {"h": 0.02},
    "experiment": "scatter",
    "seed": 0,
    "output_dir": "out",
    "options": {"boundary": [6, 4]},
}


def _write(tmp_path, cfg, name="cfg.json"):
    cfg = dict(cfg)
    cfg.setdefault("output_dir", str(tmp_path / "out"))
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


@pytest.mark.parametrize("path", sorted(DEMOS.glob("*.json")), ids=lambda p: p.stem)
def test_demo_configs_parse(path):
    cfg = parse_config(path.read_text())
    assert cfg.experiment in path.stem or path.stem.startswith(cfg.experiment)


@pytest.mark.parametrize("key", REQUIRED)
def test_missing_required_key_is_named(key):
    cfg = {k: v for k, v in BASE.items() if k != key}
    with pytest.raises(ConfigError, match=key):
        parse_config(json.dumps(cfg))


@pytest.mark.parametrize("patch, fragment", [
    ({"colour": 1}, "colour"),
    ({"grid": [12, 0, 8]}, "grid[1]"),
    ({"grid": [12, 12]}, "grid"),
    ({"ray": {"h": -1}}, "ray.h"),
    ({"ray": {"dt": 1}}, "dt"),
    ({"model": "sphere"}, "model.name"),
    ({"pair": "magnetic"}, "pair.name"),
    ({"experiment": "explode"}, "experiment"),
    ({"seed": -2}, "seed"),
    ({"options": {"bogus": 1}}, "bogus"),
    ({"pair": {"name": "u1-oscillatory", "params": {"alpha": "big"}}}, "alpha"),
])
def test_invalid_configs_rejected(patch, fragment):
    with pytest.raises(ConfigError) as err:
        parse_config(json.dumps({**BASE, **patch}))
    assert fragment in str(err.value)


def test_json_syntax_error_has_location():
    with pytest.raises(ConfigError, match=r"line 2, column"):
        parse_config('{"model": "catenoid",\n "grid": [1,, 2]}')


def test_check_and_list_presets(tmp_path, capsys):
    assert main(["check", str(_write(tmp_path, {**BASE, "output_dir": str(tmp_path / "o")}))]) == 0
    assert "ok: scatter" in capsys.readouterr().out
    assert main(["list-presets"]) == 0
    text = capsys.readouterr().out
    for name in ("catenoid", "flat-torus", "su2-bump", "gauge-test", "volume-decay"):
        assert name in text
    assert text == list_presets()


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"model": 3}')
    assert main(["run", str(bad)]) == 2
    assert "config error" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.json")]) == 2


def test_run_writes_deterministic_outputs(tmp_path, capsys):
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert main(["run", str(_write(tmp_path, {**BASE, "output_dir": str(out)}, f"c{k}.json"))]) == 0
        outs.append(out)
    printed = capsys.readouterr().out
    assert "PASS" in printed and "FAIL" not in printed
    files = sorted(p.name for p in outs[0].iterdir())
    assert "summary.json" in files and "manifest.json" in files
    for name in files:
        if name == "manifest.json":
            continue
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name
    manifest = json.loads((outs[0] / "manifest.json").read_text())
    assert sorted(manifest["files"]) == files
    assert all(c["statement"] for c in manifest["checks"])


def test_thread_cap_validation(monkeypatch):
    monkeypatch.setenv("HOLONOMY_THREADS", "2")
    assert thread_cap() == 2
    monkeypatch.setenv("HOLONOMY_THREADS", "zero")
    with pytest.raises(ConfigError):
        thread_cap()
    monkeypatch.setenv("HOLONOMY_THREADS", "0")
    with pytest.raises(ConfigError):
        thread_cap()


def test_module_entry_point(tmp_path):
    env = {**os.environ, "HOLONOMY_THREADS": "1"}
    proc = subprocess.run([sys.executable, "-m", "holoray", "list-presets"], capture_output=True, text=True, env=env)
    assert proc.returncode == 0 and "experiments:" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "holoray", "check", str(tmp_path / "nope.json")],
                          capture_output=True, text=True, env=env)
    assert proc.returncode == 2
