import json
import subprocess
import sys
from importlib import resources

import numpy as np
import pytest

from qbandit.analysis import loglog_slope, peak_time, smooth_log
from qbandit.checks import run_suite
from qbandit.cli import main
from qbandit.experiment import ConfigError, InstanceInvalid, load_spec, parse_spec, value_lines

SPEC = """{
  "schema": "qbandit.experiment/1",
  "name": "tiny",
  "instance": {"U": 1, "K": 3, "lambda": [0.4], "mu": [[0.6, 0.5, 0.3]]},
  "policies": [
    {"policy": "qths"},
    {"policy": "thompson"}
  ],
  "horizon": 600,
  "episodes": 6,
  "seed": 4
}
"""


def _with(old, new):
    assert old in SPEC
    return SPEC.replace(old, new)


def test_value_lines():
    lines = value_lines(SPEC)
    assert lines[("name",)] == 3
    assert lines[("policies", 1)] == 7
    assert lines[("policies", 1, "policy")] == 7
    assert lines[("seed",)] == 11


def test_parse_ok():
    spec = parse_spec(SPEC)
    assert [p.label for p in spec.policies] == ["qths_c3", "thompson"]
    assert spec.cases[0].tag == "inst" and str(spec.output) == "out/tiny"
    assert len(list(spec.configs())) == 2


@pytest.mark.parametrize("old, new, line, text", [
    ('"seed": 4', '"seed": 4,\n  "seeds": 3', 12, "unknown key 'seeds'"),
    ('{"policy": "thompson"}', '{"policy": "thompson", "c": 1}', 7, "unknown policy key 'c'"),
    ('{"policy": "thompson"}', '{"policy": "greedy"}', 7, "unknown policy"),
    ('"horizon": 600', '"horizon": 0', 9, "'horizon' must be an integer"),
    ('"episodes": 6', '"episodes": 6,,', 10, "invalid JSON"),
    ('qbandit.experiment/1', 'qbandit.experiment/9', 2, "unsupported schema"),
    ('"K": 3,', '"K": 3, "k": 1,', 4, "unknown instance key 'k'"),
])
def test_config_errors_are_line_precise(old, new, line, text):
    with pytest.raises(ConfigError) as info:
        parse_spec(_with(old, new), "s.json")
    assert info.value.line == line
    assert str(info.value).startswith(f"s.json:{line}: ") and text in str(info.value)


def test_missing_and_conflicting_keys():
    with pytest.raises(ConfigError, match="missing required key 'seed'"):
        parse_spec(_with(',\n  "seed": 4', ""))
    both = _with('"horizon"', '"sweep": {"eps": [0.1], "mu": [0.6, 0.5]},\n  "horizon"')
    with pytest.raises(ConfigError, match="exactly one"):
        parse_spec(both)


def test_invalid_instance():
    with pytest.raises(InstanceInvalid) as info:
        parse_spec(_with("[0.4]", "[0.7]"))
    assert info.value.line == 4


def test_sweep_instances():
    text = _with('"instance": {"U": 1, "K": 3, "lambda": [0.4], "mu": [[0.6, 0.5, 0.3]]}',
                 '"sweep": {"eps": [0.05, 0.2], "mu_by_K": {"2": [0.6, 0.5], "3": [0.7, 0.5, 0.1]}}')
    spec = parse_spec(text)
    assert [c.tag for c in spec.cases] == ["K2_eps0.05", "K2_eps0.2", "K3_eps0.05", "K3_eps0.2"]
    assert spec.cases[1].instance.lam[0] == pytest.approx(0.4)
    with pytest.raises(InstanceInvalid):
        parse_spec(text.replace("0.2]", "0.6]"))
    with pytest.raises(ConfigError, match="list of 3 rates"):
        parse_spec(text.replace("[0.7, 0.5, 0.1]", "[0.7, 0.5]"))


def test_packaged_recipes():
    root = resources.files("qbandit") / "experiments"
    fig1 = load_spec(root / "fig1.json")
    fig2 = load_spec(root / "fig2.json")
    fig3 = load_spec(root / "fig3.json")
    assert len(fig1.cases) == 1 and fig1.cases[0].instance.derived.eps[0] == pytest.approx(0.1)
    assert len(fig2.cases) == 6
    assert {c.instance.K for c in fig2.cases} == {5, 7}
    assert all(c.instance.derived.delta == pytest.approx(0.17) for c in fig2.cases)
    assert [p.label for p in fig3.policies] == ["qths_c3", "qths_c0.4", "qucb_c3", "ucb1", "thompson"]
    assert fig3.cases[0].instance.derived.eps[0] == pytest.approx(0.15)


def _run(tmp_path, text, *extra):
    p = tmp_path / "spec.json"
    p.write_text(text)
    return main(["run", str(p), *extra])


def test_run_exit_codes(tmp_path, capsys):
    assert _run(tmp_path, _with('"seed": 4', '"seed": 4, "bogus": 1')) == 1
    assert "spec.json:11: unknown key 'bogus'" in capsys.readouterr().err
    assert _run(tmp_path, _with("[0.4]", "[0.7]")) == 2
    assert main(["run", str(tmp_path / "missing.json")]) == 1


def test_run_outputs_are_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert _run(tmp_path, SPEC, "--output", str(a)) == 0
    assert _run(tmp_path, SPEC, "--output", str(b), "--workers", "3") == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    for stem in ("inst_qths_c3", "inst_thompson"):
        for suffix in (".csv", ".json", "_bounds.csv", "_plot.py", ".png"):
            assert f"{stem}{suffix}" in names
        for suffix in (".csv", ".json", "_bounds.csv", "_plot.py"):
            assert (a / f"{stem}{suffix}").read_bytes() == (b / f"{stem}{suffix}").read_bytes()
    assert "tiny.png" in names and "tiny_plot.py" in names
    side = json.loads((a / "inst_qths_c3.json").read_text())
    assert side["config"]["master_seed"] == 4 and side["experiment"] == "tiny"


def test_generated_plot_script_runs(tmp_path):
    out = tmp_path / "o"
    assert _run(tmp_path, SPEC, "--output", str(out)) == 0
    (out / "tiny.png").unlink()
    subprocess.run([sys.executable, "tiny_plot.py"], cwd=out, check=True)
    subprocess.run([sys.executable, "inst_thompson_plot.py"], cwd=out, check=True)
    assert (out / "tiny.png").stat().st_size > 0


def test_bounds_command(tmp_path, capsys):
    inst = tmp_path / "i.json"
    inst.write_text(json.dumps({"U": 1, "K": 5, "lambda": [0.55], "mu": [[0.65, 0.48, 0.40, 0.30, 0.20]]}))
    assert main(["bounds", str(inst), "--horizon", "100", "--per-decade", "1"]) == 0
    cap = capsys.readouterr()
    rows = cap.out.splitlines()
    assert rows[0] == "t,bound_name,value,valid_flag"
    assert "100,late_stage_lb,0.0005013687641,1" in rows
    assert "D(mu) = 0.182316" in cap.err
    out = tmp_path / "b.csv"
    assert main(["bounds", str(inst), "--alpha", "0.3", "--gamma", "2", "--output", str(out)]) == 0
    assert out.read_text().startswith("t,bound_name")
    assert main(["bounds", str(inst), "--alpha", "1.5"]) == 1
    assert main(["bounds", str(inst), "--gamma", "1.0"]) == 1
    inst.write_text(json.dumps({"U": 1, "K": 2, "lambda": [0.7], "mu": [[0.6, 0.5]]}))
    assert main(["bounds", str(inst)]) == 2
    inst.write_text("{")
    assert main(["bounds", str(inst)]) == 1


def test_verify_quick(capsys):
    assert main(["verify", "quick"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 3 and "3/3 passed" in out
    with pytest.raises(KeyError):
        run_suite("nope")


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "qbandit", "verify", "golden"], capture_output=True, text=True)
    assert r.returncode == 0 and "PASS [10]" in r.stdout


def test_analysis_helpers():
    t = np.unique(np.round(np.logspace(0, 5, 500))).astype(int)
    assert np.allclose(smooth_log(t, np.full(len(t), 2.0)), 2.0)
    fit = loglog_slope(t, 3.0 / t, 10, 1e5)
    assert fit.slope == pytest.approx(-1.0) and fit.dropped == 0
    v = np.exp(-(np.log10(t) - 3) ** 2)
    assert 800 <= peak_time(t, v)[0] <= 1250
    with pytest.raises(ValueError):
        loglog_slope(t, -np.ones(len(t)), 10, 100)
