import json

import numpy as np
import pytest

from nonlocalfb.cli import ConfigError, ExperimentConfig, main, parse_kv_lines, sweep
from nonlocalfb.io import read_csv


def verdict_from_summary(path):
    t = read_csv(path)
    ok = []
    for v, ref, bound, cmp in zip(t["value"], t["reference"], t["bound"], t["comparison"]):
        if cmp == "le":
            ok.append(v <= bound)
        elif cmp == "ge":
            ok.append(v >= bound)
        else:
            ok.append(abs(v - ref) <= bound * abs(ref))
    return ok, [p == "true" for p in t["passed"]]


def test_no_arguments_prints_usage(capsys):
    assert main([]) == 0
    assert "usage" in capsys.readouterr().out


def test_help_exits_zero():
    assert main(["getoor", "--help"]) == 0


def test_unknown_parameter_is_config_error(tmp_path):
    assert main(["getoor", "--out", str(tmp_path), "--set", "bogus=1"]) == 2
    assert main(["getoor", "--out", str(tmp_path), "--set", "points=many"]) == 2
    assert main(["no-such-scenario"]) == 2


def test_invalid_value_is_config_error(tmp_path):
    assert main(["heat-kernel", "--out", str(tmp_path), "--set", "t=-1"]) == 2


def test_parse_kv_lines():
    assert parse_kv_lines(["a = 1  # note", "", "# c", "b=x,y"]) == {"a": "1", "b": "x,y"}
    with pytest.raises(ConfigError):
        parse_kv_lines(["novalue"])


def test_config_casting():
    p = ExperimentConfig("getoor", {"sigma": "0.5,1", "points": "512"}).resolved()
    assert p["sigma"] == [0.5, 1.0] and p["points"] == 512


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("pad = 8\nsigma = 1.0\n")
    out = tmp_path / "run"
    assert main(["getoor", "--config", str(cfg), "--set", "window=0.5", "--out", str(out), "-q"]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["parameters"]["pad"] == 8 and man["parameters"]["window"] == 0.5
    assert {"started", "wall_time_s", "build"} <= set(man)


@pytest.mark.parametrize("name,extra", [
    ("getoor", []), ("heat-kernel", []), ("evolve", ["--set", "steps=100"]),
    ("obstacle", ["--set", "points=512"]), ("model1-contrast", []),
])
def test_quick_scenarios_pass(tmp_path, name, extra):
    assert main([name, "--out", str(tmp_path), "-q", *extra]) == 0
    recomputed, stored = verdict_from_summary(tmp_path / "summary.csv")
    assert recomputed == stored and all(stored)
    assert json.loads((tmp_path / "verdict.json").read_text())["passed"] is True


def test_failed_check_gives_exit_one(tmp_path):
    assert main(["getoor", "--out", str(tmp_path), "-q", "--set", "rel_tol=1e-12"]) == 1
    recomputed, stored = verdict_from_summary(tmp_path / "summary.csv")
    assert recomputed == stored and not all(stored)


def test_csv_floats_round_trip(tmp_path):
    main(["heat-kernel", "--out", str(tmp_path), "-q"])
    t = read_csv(tmp_path / "kernel.csv")
    assert t["kernel"].dtype == np.float64 and len(t["x"]) == 4096


def test_sweep(tmp_path):
    code = main(["sweep", "getoor", "sigma", "0.5,1.5", "--out", str(tmp_path), "-q"])
    assert code == 0
    t = read_csv(tmp_path / "sweep.csv")
    assert list(t["axis_value"][:1]) == [0.5]
    assert all(v == "true" for v in t["passed"])


def test_sweep_parallel_matches_serial(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    base = {}
    assert sweep("getoor", "sigma", ["0.5", "1"], base, a, workers=1) == 0
    assert sweep("getoor", "sigma", ["0.5", "1"], base, b, workers=2) == 0
    assert (a / "sweep.csv").read_bytes() == (b / "sweep.csv").read_bytes()


def test_sweep_errors(tmp_path):
    with pytest.raises(ConfigError):
        sweep("getoor", "sigma", [], {}, tmp_path)
    with pytest.raises(ConfigError):
        sweep("getoor", "bogus", ["1"], {}, tmp_path)
    assert main(["sweep", "getoor", "sigma", ",", "--out", str(tmp_path)]) == 2


def test_sweep_aborts_on_crash(tmp_path):
    # sigma=2.5 is outside (0, 2]: the child raises and the sweep stops there
    code = main(["sweep", "getoor", "sigma", "2.5,0.5", "--out", str(tmp_path), "-q"])
    assert code == 1
    t = read_csv(tmp_path / "sweep.csv")
    assert t["metric"] == ["error"]
