import subprocess
import sys

import foggyedge.network as network
from foggyedge.cli import main

FAST = ["--duration", "5"]


def test_run_writes_outputs(tmp_path, capsys):
    assert main(["run", "--rate", "3", "--out", str(tmp_path), *FAST]) == 0
    assert {p.name for p in tmp_path.iterdir()} >= {"summary.csv", "report.txt", "trace.bin"}
    assert "satisfaction" in capsys.readouterr().out


def test_trace_diff(tmp_path, capsys):
    for d in ("a", "b"):
        main(["run", "--seed", "7", "--out", str(tmp_path / d), *FAST])
    main(["run", "--seed", "8", "--out", str(tmp_path / "c"), *FAST])
    capsys.readouterr()
    assert main(["trace-diff", str(tmp_path / "a/trace.bin"), str(tmp_path / "b/trace.bin")]) == 0
    assert "identical" in capsys.readouterr().out
    assert main(["trace-diff", str(tmp_path / "a/trace.bin"), str(tmp_path / "c/trace.bin")]) == 1
    assert "difference" in capsys.readouterr().out


def test_config_error_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("scenario.mode = Nope\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "scenario.mode" in capsys.readouterr().err
    assert main(["sweep", "--rates", "0..2", "--out", str(tmp_path)]) == 2


def test_invariant_violation_exit_code(tmp_path, monkeypatch):
    monkeypatch.setattr(network.Network, "check_invariants", lambda self: ["forced"])
    assert main(["run", "--out", str(tmp_path), *FAST]) == 3


def test_sweep_with_plot(tmp_path, capsys):
    assert main(["sweep", "--rates", "1,2", "--out", str(tmp_path), "--emit-plot", *FAST]) == 0
    out = capsys.readouterr().out
    assert "self-check" in out
    svg = (tmp_path / "csd.svg").read_text()
    assert svg.startswith("<?xml") and "<svg" in svg


def test_console_script_module_entry(tmp_path):
    r = subprocess.run([sys.executable, "-m", "foggyedge.cli", "run", "--out", str(tmp_path), *FAST],
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
