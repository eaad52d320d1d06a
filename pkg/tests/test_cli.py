import json
import subprocess
import sys

import pytest

from nodallab.cli import build_parser, main, parse_measure, ConfigError
from nodallab.measures import mix, cilleruelo, uniform_circle


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_parse_measure_forms(tmp_path):
    assert parse_measure("cilleruelo").label == "cilleruelo"
    assert len(parse_measure("uniform16")) == 16
    assert len(parse_measure("mu_n:25")) == 12
    nested = parse_measure("mix(cilleruelo,mix(pair,uniform8,0.5),0.25)")
    assert len(nested) == 8
    m = mix(cilleruelo(), uniform_circle(8), 0.5)
    path = tmp_path / "m.json"
    path.write_text(m.to_json())
    assert parse_measure(f"file:{path}").to_dict() == m.to_dict()
    for bad in ("nosuch", "uniform7", "mu_n:3", "mix(cilleruelo,pair)", "mix(a,b,2)"):
        with pytest.raises(ConfigError):
            parse_measure(bad)


def test_estimate_writes_outputs(tmp_path, capsys):
    out = tmp_path / "run"
    code, stdout, _ = run(["estimate", "--measure", "cilleruelo", "--R", "5", "--trials", "4",
                           "--seed", "7", "--out", str(out)], capsys)
    assert code == 0 and "c_hat" in stdout
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["measure"] == "cilleruelo" and manifest["base_seed"] == 7
    assert manifest["end"] is not None and manifest["status"] == "ok"
    lines = (out / "trials.jsonl").read_text().splitlines()
    assert len(lines) == 4 and json.loads(lines[0])["trial"] == 0
    assert json.loads((out / "summary.json").read_text())["trials"] == 4
    assert sorted(p.name for p in out.iterdir() if p.name.startswith("manifest")) == ["manifest.json"]


def test_rerun_reproduces_trial_log(tmp_path, capsys):
    args = ["estimate", "--measure", "uniform64", "--R", "4", "--trials", "5", "--seed", "3"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b"), "--workers", "2"]) == 0
    capsys.readouterr()
    assert (tmp_path / "a" / "trials.jsonl").read_bytes() == (tmp_path / "b" / "trials.jsonl").read_bytes()


def test_mu2_equals_tilted_cilleruelo(tmp_path, capsys):
    base = ["estimate", "--R", "6", "--trials", "4", "--seed", "7"]
    assert main(base + ["--measure", "mu_n:2", "--out", str(tmp_path / "a")]) == 0
    assert main(base + ["--measure", "tilted-cilleruelo", "--out", str(tmp_path / "b")]) == 0
    capsys.readouterr()
    a = json.loads((tmp_path / "a" / "summary.json").read_text())
    b = json.loads((tmp_path / "b" / "summary.json").read_text())
    a.pop("measure_label"), b.pop("measure_label")
    assert a == b


def test_config_errors_exit_2(tmp_path, capsys):
    code, _, err = run(["estimate", "--measure", "nosuch", "--out", str(tmp_path / "x")], capsys)
    assert code == 2 and not (tmp_path / "x").exists()
    code, _, err = run(["torus", "--n", "3", "--out", str(tmp_path / "y")], capsys)
    assert code == 2 and "3 is not a sum of two squares" in err
    assert run(["lattice", "--n", "0"], capsys)[0] == 2
    assert run(["estimate", "--R", "0.5"], capsys)[0] == 2
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"R": 5, "colour": "red"}))
    code, _, err = run(["estimate", "--config", str(cfg)], capsys)
    assert code == 2 and "colour" in err
    assert run(["estimate", "--bogus"], capsys)[0] == 2


def test_config_file_values_apply(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"measure": "pair", "R": 3, "trials": 3}))
    out = tmp_path / "run"
    code, stdout, _ = run(["estimate", "--config", str(cfg), "--seed", "2", "--out", str(out)], capsys)
    assert code == 0
    conf = json.loads((out / "manifest.json").read_text())["config"]
    assert conf["measure"] == "pair" and conf["R"] == 3 and conf["seed"] == 2


def test_torus_command(tmp_path, capsys):
    out = tmp_path / "t"
    code, stdout, _ = run(["torus", "--n", "25", "--trials", "4", "--seed", "7", "--out", str(out)], capsys)
    assert code == 0 and "r2=12" in stdout
    assert json.loads((out / "manifest.json").read_text())["config"]["r2"] == 12
    code, stdout, _ = run(["torus", "--n", "2", "--trials", "5", "--out", str(tmp_path / "t2")], capsys)
    assert code == 0 and "wrapping" in stdout
    summary = json.loads((tmp_path / "t2" / "summary.json").read_text())
    assert summary["mean_wrapping_components"] > 0 and "wrapping" in summary["note"]


def test_lattice_command(capsys):
    code, out, _ = run(["lattice", "--n", "25"], capsys)
    lines = out.splitlines()
    assert code == 0 and lines[0] == "n=25 r2=12"
    assert len([ln for ln in lines[1:] if not ln.startswith("mu_hat")]) == 12
    code, out, _ = run(["lattice", "--search", "cilleruelo", "--nmax", "100", "--top", "5"], capsys)
    rows = out.splitlines()
    assert rows[0] == "n,r2,distance" and len(rows) == 6
    assert any(r.startswith("1,4,") and float(r.split(",")[2]) == 0.0 for r in rows[1:])


def test_sweep_commands(tmp_path, capsys):
    code, out, _ = run(["sweep", "--kind", "R", "--measure", "uniform16", "--R", "3,4,5", "--trials", "3",
                        "--out", str(tmp_path / "r")], capsys)
    assert code == 0 and out.startswith("R,c_hat,stderr,trials") and "fit:" in out
    assert (tmp_path / "r" / "sweep.csv").read_text().count("\n") == 4
    code, out, _ = run(["sweep", "--kind", "interval", "--t", "0,0.5,1", "--R", "3", "--trials", "3",
                        "--out", str(tmp_path / "i")], capsys)
    assert code == 0 and "max_gap" in out
    code, out, _ = run(["sweep", "--kind", "fourier", "--pairs", "uniform64|uniform128", "--R", "3",
                        "--trials", "3", "--out", str(tmp_path / "f")], capsys)
    assert code == 0 and "uniform64 vs uniform128" in out
    code, out, _ = run(["sweep", "--kind", "growth", "--nmax", "400", "--points", "3", "--trials", "2",
                        "--out", str(tmp_path / "g")], capsys)
    assert code == 0 and "suggestive" in out
    assert run(["sweep", "--kind", "R", "--R", "3,4", "--out", str(tmp_path / "z")], capsys)[0] == 2


def test_help_lists_every_key_with_default():
    parser = build_parser()
    sub = parser._subparsers._group_actions[0].choices
    for name, sp in sub.items():
        text = " ".join(sp.format_help().split())
        for action in sp._actions:
            if action.dest == "help" or not action.option_strings:
                continue
            assert action.option_strings[0] in text, (name, action.dest)
            if not action.required:
                assert f"(default: {action.default})" in text, (name, action.dest)


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "nodallab.cli", "estimate", "--help"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "--measure" in res.stdout and "default: uniform64" in res.stdout
