import time

import numpy as np
import pytest

from thinobstacle.cli import ConfigError, RunConfig, main, read_csv
from thinobstacle.geometry import read_snapshot

BASE = """
[grid]
dimension = 2
resolution = 129

[data]
kind = profile
lam = 3/2

[analysis]
centers = 0
"""


def write_cfg(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def body(path):
    return [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]


def test_config_round_trip_and_hash():
    cfg = RunConfig.from_text(BASE)
    again = RunConfig.from_text(cfg.to_text())
    assert again == cfg and again.hash == cfg.hash
    other = RunConfig.from_text(BASE.replace("129", "65"))
    assert other.hash != cfg.hash


def test_verify_allowance_maps_to_its_own_field():
    cfg = RunConfig.from_text(BASE + "\n[verify]\nallowance = 0.5\n")
    assert cfg.verify_allowance == 0.5 and cfg.allowance == 1e-2


@pytest.mark.parametrize("text, field", [
    (BASE.replace("129", "128"), "grid.resolution"),
    (BASE.replace("3/2", "5/4"), "data.lam"),
    (BASE + "\n[solver]\nomega = 2.5\n", "solver.omega"),
    (BASE.replace("centers = 0", "centers = 0.1 0.2 0.3"), "analysis.centers"),
    (BASE + "\n[bogus]\nx = 1\n", "bogus"),
])
def test_invalid_config_names_field(text, field):
    with pytest.raises(ConfigError, match=field):
        RunConfig.from_text(text)


def test_even_resolution_exit_code(tmp_path, capsys):
    p = write_cfg(tmp_path, BASE.replace("129", "128"))
    assert main(["solve", "--config", str(p), "--out", str(tmp_path / "o")]) == 1
    assert "grid.resolution" in capsys.readouterr().err


def test_missing_config_exit_code(tmp_path):
    assert main(["solve", "--config", str(tmp_path / "nope.ini")]) == 1


def test_nonconverged_exit_code(tmp_path):
    p = write_cfg(tmp_path, BASE + "\n[solver]\nmax_iter = 1\n")
    out = tmp_path / "o"
    assert main(["solve", "--config", str(p), "--out", str(out)]) == 2
    u, meta = read_snapshot(out / "solution.snap")
    assert meta["converged"] == "false"


@pytest.fixture(scope="module")
def solved(tmp_path_factory):
    d = tmp_path_factory.mktemp("run")
    text = BASE.replace("centers = 0", "centers = 0; -0.25 0\nestimates = barrier, laplacian_mass")
    p = write_cfg(d, text)
    assert main(["solve", "--config", str(p), "--out", str(d)]) == 0
    return d, p


def test_solve_then_analyze(solved):
    d, p = solved
    _, meta = read_snapshot(d / "solution.snap")
    assert meta["converged"] == "true" and meta["config"] == RunConfig.from_file(p).hash
    assert main(["analyze", "--config", str(p), "--out", str(d), "--threads", "2"]) == 0
    head, rows = read_csv(d / "summary.csv")
    vals = {r[0]: r[1] for r in rows}
    assert float(vals["center0.frequency_estimate"]) == pytest.approx(1.5, abs=0.1)
    assert vals["barrier.holds"] == "true"
    for name in ("frequency_0.csv", "frequency_1.csv", "estimate_barrier.csv", "estimate_laplacian_mass.csv"):
        first = (d / name).read_text().splitlines()[0]
        assert first.startswith(f"# thinobstacle config={RunConfig.from_file(p).hash} generated=")


def test_analyze_is_deterministic(solved, tmp_path):
    d, p = solved
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["analyze", "--config", str(p), "--snapshot", str(d / "solution.snap"), "--out", str(out)]) == 0
    for name in ("summary.csv", "frequency_0.csv"):
        assert body(a / name) == body(b / name)


def test_empty_analysis_writes_summary_only(solved, tmp_path):
    d, _ = solved
    p = write_cfg(tmp_path, BASE.replace("centers = 0", "centers ="))
    out = tmp_path / "e"
    assert main(["analyze", "--config", str(p), "--snapshot", str(d / "solution.snap"), "--out", str(out)]) == 0
    assert sorted(f.name for f in out.iterdir()) == ["summary.csv"]


def test_analyze_rejects_mismatched_snapshot(solved, tmp_path):
    d, _ = solved
    p = write_cfg(tmp_path, BASE.replace("129", "65"))
    assert main(["analyze", "--config", str(p), "--snapshot", str(d / "solution.snap"), "--out", str(tmp_path)]) == 1


def test_report_concatenates(solved, tmp_path, capsys):
    d, _ = solved
    assert main(["report", str(d)]) == 0
    assert "solve_summary.csv" in capsys.readouterr().out
    assert main(["report", str(tmp_path / "empty")]) == 1


def test_verify_selected_criterion(tmp_path):
    p = write_cfg(tmp_path, BASE + "\n[verify]\ncriteria = 11\n")
    t0 = time.perf_counter()
    assert main(["verify", "--config", str(p), "--out", str(tmp_path)]) == 0
    assert time.perf_counter() - t0 < 5.0
    _, rows = read_csv(tmp_path / "acceptance.csv")
    assert [r[0] for r in rows] == ["11"] and rows[0][2] == "true"


def test_verify_failure_exit_code(tmp_path, capsys):
    p = write_cfg(tmp_path, BASE + "\n[verify]\ncriteria = 5:n2:3/2\nres2 = 129\nallowance = 0\n")
    assert main(["verify", "--config", str(p), "--out", str(tmp_path)]) == 3
    assert "5:n2:3/2" in capsys.readouterr().err
