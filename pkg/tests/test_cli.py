import json
from dataclasses import replace

import pytest

from geophase import cli
from geophase.errors import ConfigError


def write(path, text):
    path.write_text(text)
    return path


def test_list_prints_every_experiment(capsys):
    assert cli.main(["list"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == len(cli.REGISTRY) == 16
    assert {ln.split()[0] for ln in lines} == set(cli.REGISTRY)


def test_spin_berry_row(tmp_path, capsys):
    cfg = write(tmp_path / "s.toml", 'experiment = "spin-berry"\n[params]\ntheta = [1.5707963267948966]\n')
    assert cli.main(["run", str(cfg), "--output-dir", str(tmp_path / "out")]) == 0
    text = (tmp_path / "out" / "spin-berry.csv").read_text()
    assert text == "theta,phi,phi_numeric\n1.5707963267948966,-3.1415926535897927,nan\n"
    assert capsys.readouterr().out.strip() == str(tmp_path / "out")


def test_json_config(tmp_path):
    cfg = write(tmp_path / "s.json", json.dumps({"experiment": "jc-unitary", "params": {"Delta": [0.0, 2.0]}}))
    assert cli.main(["run", str(cfg), "--output-dir", str(tmp_path / "o")]) == 0
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["rows"] == 2
    assert manifest["config"]["params"]["g"] == 1.0


@pytest.mark.parametrize("text, where", [
    ('experiment = "traj-phase-dist"\n[params]\nn_traj = 0\n', "params.n_traj"),
    ('experiment = "nope"\n', "experiment"),
    ('experiment = "spin-berry"\ncolour = 1\n', "colour"),
    ('experiment = "spin-berry"\nseed = -1\n', "seed"),
    ('experiment = "spin-berry"\n[params]\nOmegaa = 1.0\n', "params.Omegaa"),
    ('experiment = "spin-berry"\n[params]\nbranch = "x"\n', "params.branch"),
    ('experiment = "sliding-taud"\n[params]\nmaterial = "Au"\natom_index = 9\n', "params.atom_index"),
    ('experiment = = 1\n', "cannot parse"),
])
def test_config_errors_exit_one(tmp_path, capsys, text, where):
    cfg = write(tmp_path / "c.toml", text)
    assert cli.main(["run", str(cfg), "--output-dir", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err
    assert err.startswith("config error:") and where in err


def test_missing_file_and_bad_flags_exit_one(tmp_path, capsys):
    assert cli.main(["run", str(tmp_path / "absent.toml")]) == 1
    cfg = write(tmp_path / "s.toml", 'experiment = "spin-berry"\n')
    assert cli.main(["run", str(cfg), "--threads", "0"]) == 1
    assert cli.main(["run", str(cfg), "--seed", "abc"]) == 1
    assert cli.main(["frobnicate"]) == 1
    assert cli.main([]) == 1


def test_runtime_failure_exits_two(tmp_path, monkeypatch, capsys):
    def boom(prm, ctx):
        raise FloatingPointError("diverged")
    monkeypatch.setitem(cli.REGISTRY, "spin-echo", replace(cli.REGISTRY["spin-echo"], runner=boom))
    cfg = write(tmp_path / "e.toml", 'experiment = "spin-echo"\n')
    assert cli.main(["run", str(cfg), "--output-dir", str(tmp_path / "o")]) == 2
    assert "runtime error: FloatingPointError" in capsys.readouterr().err


def test_output_directory_precedence(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env"))
    assert cli.output_directory({}) == tmp_path / "env"
    assert cli.output_directory({"output": str(tmp_path / "cfg")}) == tmp_path / "cfg"
    assert cli.output_directory({"output": "x"}, str(tmp_path / "flag")) == tmp_path / "flag"
    monkeypatch.delenv(cli.OUTPUT_ENV)
    assert str(cli.output_directory({})) == cli.DEFAULT_OUTPUT


def test_env_var_used_by_run(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env"))
    cfg = write(tmp_path / "s.toml", 'experiment = "jc-unitary"\n')
    assert cli.main(["run", str(cfg)]) == 0
    assert (tmp_path / "env" / "jc-unitary.csv").exists()


def test_seed_override(tmp_path):
    cfg = write(tmp_path / "t.toml", 'experiment = "traj-phase-dist"\nseed = 4\n[params]\nn_traj = 100\n')
    assert cli.main(["run", str(cfg), "--seed", "9", "--output-dir", str(tmp_path / "o")]) == 0
    assert json.loads((tmp_path / "o" / "manifest.json").read_text())["config"]["seed"] == 9


def test_reruns_are_byte_identical(tmp_path):
    cfg = write(tmp_path / "t.toml", 'experiment = "traj-phase-dist"\nseed = 3\n[params]\nn_traj = 200\n')
    outs = []
    for name, threads in (("a", "1"), ("b", "3")):
        assert cli.main(["run", str(cfg), "--threads", threads, "--output-dir", str(tmp_path / name)]) == 0
        outs.append({f: (tmp_path / name / f).read_bytes()
                     for f in ("traj-phase-dist.csv", "summary.json", "manifest.json")})
    assert outs[0] == outs[1]


def test_resolve_fills_defaults():
    cfg = cli.resolve_config({"experiment": "topo-scan"})
    assert cfg["seed"] == 0
    assert cfg["params"]["n_linear"] == 257
    with pytest.raises(ConfigError):
        cli.resolve_config({"experiment": "topo-scan", "params": []})
