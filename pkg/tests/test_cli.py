import textwrap
from pathlib import Path

import numpy as np
import pytest

from ricci_lab.cli import (EXIT_CONFIG, EXIT_FAILED, EXIT_OK, EXIT_SINGULAR, main, verify_all)
from ricci_lab.errors import ConfigError
from ricci_lab.scenario import build_initial, load_scenario, parse_scenario, shipped_scenarios

GOLDEN = Path(__file__).parent / "golden"


def _cfg(tmp_path, text, name="sc.cfg"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text))
    return str(p)


def _body(path):
    """File contents without the timing line."""
    return [l for l in Path(path).read_text().splitlines() if not l.startswith("elapsed_s")]


def test_shipped_scenarios_parse():
    names = shipped_scenarios()
    assert "round_s3.cfg" in names and len(names) >= 10
    for n in names:
        sc = load_scenario(n)
        if sc.command != "pinch-ode":
            build_initial(sc.with_grid(32))


@pytest.mark.parametrize("argv", [
    ["flow3d", "--bogus"],
    ["nocommand"],
    ["flow3d", "--config", "does_not_exist"],
    ["flow2d", "--config", "round_s3"],
    ["flow3d", "--grid", "3"],
    ["flow3d", "--checkpoint-every", "-1"],
    ["pinch-ode", "--seed", "-4"],
])
def test_config_errors_exit_one(argv, tmp_path):
    assert main([*argv, "--out", str(tmp_path)] if argv[0] != "nocommand" else argv) == EXIT_CONFIG


@pytest.mark.parametrize("text", [
    "[scenario]\ncommand = flow3d\n",
    "[scenario]\ncommand = warp\n[initial]\nkind = exact\nsolution = round_s3\n",
    "[scenario]\ncommand = flow3d\n[initial]\nkind = exact\nsolution = bryant\n",
    "[scenario]\ncommand = flow3d\n[initial]\nkind = dumbbell\nradius = 2\n",
    "[scenario]\ncommand = flow3d\n[initial]\nkind = dumbbell\n[flow]\ncfl = fast\n",
    "[scenario]\ncommand = flow3d\n[initial]\nkind = dumbbell\n[flow]\nmode = normalized2d\n",
    "[scenario]\ncommand = flow3d\n[initial]\nkind = dumbbell\n[flow]\ncheckpoint_dir = /tmp\n",
    "not an ini file",
])
def test_bad_scenarios(text):
    with pytest.raises(ConfigError):
        parse_scenario(text)


def test_out_of_range_initial_data(tmp_path):
    cfg = _cfg(tmp_path, """
        [scenario]
        command = flow3d
        [initial]
        kind = dented_sphere
        amplitude = 5.0
        dim = 3
        """)
    assert main(["flow3d", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_flow3d_round_s3_outputs(tmp_path):
    out = tmp_path / "run"
    code = main(["flow3d", "--config", "round_s3", "--grid", "64", "--out", str(out),
                 "--checkpoint-every", "200"])
    assert code == EXIT_OK
    trace = (out / "trace.csv").read_text().splitlines()
    assert trace[:2] == (GOLDEN / "trace_header.csv").read_text().splitlines()
    events = (out / "events.csv").read_text().splitlines()
    assert events[:2] == (GOLDEN / "events_header.csv").read_text().splitlines()
    assert any(",extinction," in e for e in events)
    reports = (out / "reports.txt").read_text()
    assert "status: PASS" in reports and "extinction_time: PASS" in reports
    assert list((out / "checkpoints").glob("*.json"))


def test_reruns_are_bit_identical(tmp_path):
    cfg = _cfg(tmp_path, """
        [scenario]
        command = pinch-ode
        [pinch]
        samples = 200
        horizon = 1.0
        sets = cone pinching
        """)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["pinch-ode", "--config", cfg, "--seed", "7", "--out", str(a), "--csv"]) == EXIT_OK
    assert main(["pinch-ode", "--config", cfg, "--seed", "7", "--out", str(b), "--csv"]) == EXIT_OK
    assert (a / "pinch.csv").read_bytes() == (b / "pinch.csv").read_bytes()
    assert _body(a / "reports.txt") == _body(b / "reports.txt")


def test_flow_reruns_are_bit_identical(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / str(k)
        assert main(["flow3d", "--config", "dented_s3", "--grid", "32", "--out", str(out)]) == EXIT_OK
        outs.append((out / "trace.csv").read_bytes())
    assert outs[0] == outs[1]


def test_singularity_exits_two(tmp_path):
    cfg = _cfg(tmp_path, """
        [scenario]
        command = flow3d
        [initial]
        kind = dumbbell
        neck_ratio = 0.35
        neck_length = 3.0
        blend = 0.1
        grid = 128
        [flow]
        t_end = 10.0
        curvature_blowup_threshold = 20.0
        """)
    out = tmp_path / "o"
    assert main(["flow3d", "--config", cfg, "--out", str(out)]) == EXIT_SINGULAR
    assert "SINGULARITY" in (out / "reports.txt").read_text()
    assert any(",singularity," in l for l in (out / "events.csv").read_text().splitlines())


def test_failing_check_exits_three(tmp_path):
    cfg = _cfg(tmp_path, """
        [scenario]
        command = flow3d
        checks = extinction_time
        [initial]
        kind = exact
        solution = round_s3
        param = 1.0
        grid = 32
        [flow]
        t_end = 1.0
        [checks]
        extinction_rel_tol = 1e-12
        """)
    out = tmp_path / "o"
    assert main(["flow3d", "--config", cfg, "--out", str(out)]) == EXIT_FAILED
    assert "extinction_time: FAIL" in (out / "reports.txt").read_text()


def test_verify_all_summary(tmp_path, capsys):
    code = verify_all(tmp_path, names=["functionals_dented_s3", "dented_s2_harnack"])
    assert code == EXIT_OK
    summary = (tmp_path / "summary.txt").read_text().splitlines()
    assert [l.split(":")[0] for l in summary] == ["functionals_dented_s3", "dented_s2_harnack"]
    assert all(": PASS (" in l for l in summary)
    assert (tmp_path / "functionals_dented_s3" / "reports.txt").exists()


def test_verify_all_propagates_worst_code(tmp_path, monkeypatch):
    monkeypatch.setenv("RICCI_LAB_THREADS", "2")
    assert main(["verify-all", "--only", "dented_s2_harnack", "nope", "--out", str(tmp_path)]) \
        == EXIT_CONFIG
    monkeypatch.setenv("RICCI_LAB_THREADS", "many")
    assert main(["verify-all", "--only", "dented_s2_harnack", "--out", str(tmp_path)]) == EXIT_CONFIG
