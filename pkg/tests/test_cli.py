"""Command-line runner: outputs, exit codes and determinism."""
import json
import math
import subprocess
import sys

import pytest

from lgeom import cli
from lgeom.errors import ConfigError
from lgeom.io import read_csv


def _run(tmp_path, command, config=None, *extra):
    args = [command, "run", "--out", str(tmp_path / "out")]
    if config is not None:
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(config))
        args += ["--config", str(path)]
    return cli.main(args + list(extra))


def test_flow_flat(tmp_path, capsys):
    assert _run(tmp_path, "flow") == 0
    _, cols, rows = read_csv(tmp_path / "out" / "flow" / "flow.csv")
    assert cols == ["tau", "sup_rm", "flow_residual"]
    assert all(r[1] == "0" for r in rows)
    assert "PASS flow_residual" in capsys.readouterr().out


def test_flow_sphere_column(tmp_path):
    assert _run(tmp_path, "flow", {"model": {"kind": "sphere", "n": 2}}) == 0
    _, _, rows = read_csv(tmp_path / "out" / "flow" / "flow.csv")
    for tau, rm, _ in rows:
        assert float(rm) == pytest.approx(1 / (1 + 2 * float(tau)), rel=1e-6)


def test_flow_warped_matches_closed_form(tmp_path):
    cfg = {"model": {"kind": "warped_cylinder", "half_length": 4.0, "nodes": 41}}
    assert _run(tmp_path, "flow", cfg) == 0
    _, _, rows = read_csv(tmp_path / "out" / "flow" / "flow.csv")
    for tau, rm, _ in rows:
        assert float(rm) == pytest.approx(1 / (1 + 2 * float(tau)), abs=1e-4)
    assert (tmp_path / "out" / "flow" / "profile_T.csv").exists()


def test_lgeo_flat(tmp_path):
    assert _run(tmp_path, "lgeo") == 0
    _, cols, rows = read_csv(tmp_path / "out" / "lgeo" / "lgeo.csv")
    assert cols == ["target", "tau", "l", "V", "heat_residual", "converged"]
    dists = [0.5, 1.0, 2.0]
    for k, tau, l, V, heat, ok in rows:
        assert float(l) == pytest.approx(dists[int(k)] ** 2 / (4 * float(tau)), rel=1e-3)
        assert float(V) == pytest.approx(1.0, abs=1e-3)
        assert ok == "1"


def test_lgeo_sphere_monotone(tmp_path):
    cfg = {"model": {"kind": "sphere", "n": 2}, "lgeo": {"taus": [0.1, 0.5, 1.0, 2.0], "targets": [[1.0]]}}
    assert _run(tmp_path, "lgeo", cfg) == 0
    _, _, rows = read_csv(tmp_path / "out" / "lgeo" / "reduced_volume.csv")
    vals = [float(r[1]) for r in rows]
    assert all(b <= a for a, b in zip(vals, vals[1:]))


def test_lgeo_small_tau(tmp_path):
    cfg = {"model": {"kind": "cylinder"}, "lgeo": {"taus": [1e-3], "targets": [[0.05, 0.05]]}}
    _run(tmp_path, "lgeo", cfg)
    _, _, rows = read_csv(tmp_path / "out" / "lgeo" / "lgeo.csv")
    tau, l, V, heat = (float(x) for x in rows[0][1:5])
    assert V == pytest.approx(1.0, abs=5e-2)
    # the residual is absolute, u = (4 pi tau)^(-3/2) e^(-l) is large here
    u = (4 * math.pi * tau) ** -1.5 * math.exp(-l)
    assert abs(heat) / u <= 1e-4


def test_lgeo_tail_flag_exit_code(tmp_path):
    cfg = {"model": {"kind": "warped_cylinder", "half_length": 2.0, "nodes": 41}, "lgeo": {"taus": [1.0]}}
    assert _run(tmp_path, "lgeo", cfg) == cli.EXIT_NUMERIC


def test_breather_flat(tmp_path, capsys):
    assert _run(tmp_path, "breather", {"breather": {"y": [2.0, 0.0, 0.0]}}, "--i-max", "10") == 0
    _, cols, rows = read_csv(tmp_path / "out" / "breather" / "certificate.csv")
    assert cols == ["i", "tau_i", "L_gamma_i", "l_upper", "l_num", "C2"]
    assert float(rows[10][4]) == pytest.approx(3.0, abs=1e-2)
    summary = json.loads((tmp_path / "out" / "breather" / "summary.json").read_text())
    assert all(summary["checks"].values())
    assert "l_num(i=10)" in capsys.readouterr().out


def test_breather_cylinder_type_one_constant(tmp_path):
    assert _run(tmp_path, "breather", {"model": {"kind": "cylinder"}}, "--i-max", "6") == 0
    summary = json.loads((tmp_path / "out" / "breather" / "summary.json").read_text())
    assert summary["B"] == pytest.approx(summary["C"] * 1.5)
    assert summary["injectivity_delta"] > 0


@pytest.mark.parametrize("alpha", [1.0, 2.0, 0.0])
def test_breather_alpha_config_error(tmp_path, alpha):
    assert _run(tmp_path, "breather", {"breather": {"alpha": alpha}}) == cli.EXIT_CONFIG
    assert not (tmp_path / "out" / "breather").exists()


def test_wrong_alpha_is_invariant_failure(tmp_path):
    cfg = {"model": {"kind": "sphere", "n": 2}, "breather": {"alpha": 0.5}}
    assert _run(tmp_path, "breather", cfg, "--i-max", "3") == cli.EXIT_INVARIANT


def test_detect_cylinder(tmp_path):
    assert _run(tmp_path, "detect", {"model": {"kind": "cylinder"}}, "--i-max", "8") == 0
    _, cols, rows = read_csv(tmp_path / "out" / "detect" / "detect.csv")
    sups = [float(r[2]) for r in rows]
    assert len(rows) == 9 and all(b < a for a, b in zip(sups, sups[1:]))
    assert sups[-1] <= 1e-3
    assert float(rows[-1][cols.index("a2")]) == pytest.approx(0.25)


def test_detect_sphere_einstein(tmp_path):
    assert _run(tmp_path, "detect", {"model": {"kind": "sphere", "n": 2}}, "--i-max", "4") == 0
    _, _, rows = read_csv(tmp_path / "out" / "detect" / "detect.csv")
    # tau_i^-1 (1 + 2 tau_i) -> 2; residual 1/2 - 1/(2 + 1/tau_i) shrinks
    assert float(rows[-1][2]) <= 1e-2


def test_determinism(tmp_path):
    outs = []
    for k in range(2):
        d = tmp_path / f"r{k}"
        d.mkdir()
        assert _run(d, "detect", {"model": {"kind": "cylinder"}, "seed": 7}, "--i-max", "3") == 0
        assert _run(d, "lgeo", {"model": {"kind": "sphere", "n": 2}, "lgeo": {"taus": [0.5]}}) == 0
        outs.append({p.relative_to(d): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file() and p.name != "cfg.json"})
    assert outs[0] == outs[1]


@pytest.mark.parametrize(
    "cfg",
    [
        {"bogus": 1},
        {"model": {"kind": "torus"}},
        {"model": {"radius": 2}},
        {"tolerances": {"opt": -1}},
        {"i_max": -2},
        {"seed": "x"},
        {"breather": {"sigma": "s_linear"}},
        [1, 2],
    ],
)
def test_bad_configs(cfg):
    with pytest.raises(ConfigError):
        cli.ExperimentConfig.from_dict(cfg)


def test_unreadable_config(tmp_path):
    assert cli.main(["flow", "run", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["flow", "run", "--config", str(bad), "--out", str(tmp_path)]) == 1


def test_overrides():
    cfg = cli.load_config(None, seed=5, i_max=3)
    assert cfg.seed == 5 and cfg.i_max == 3


def test_domain_error_exit(tmp_path):
    cfg = {"model": {"kind": "warped_cylinder", "half_length": 4.0, "nodes": 41}, "breather": {"y": [1.0, 0.0]}}
    assert _run(tmp_path, "breather", cfg, "--i-max", "4") == cli.EXIT_CONFIG


def test_console_script_and_log_env(tmp_path):
    env = {"LGEOM_LOG": "debug", "PATH": ""}
    proc = subprocess.run(
        [sys.executable, "-m", "lgeom.cli", "flow", "run", "--out", str(tmp_path)],
        capture_output=True,
        text=True,
        env={**__import__("os").environ, **env},
    )
    assert proc.returncode == 0
    assert "max_flow_residual: 0" in proc.stdout


def test_missing_subcommand():
    with pytest.raises(SystemExit):
        cli.main(["flow"])
