import json

import numpy as np
import pytest

from anchor_deploy.cli import main

SQUARE14 = [(-5, -7), (5, -7), (5, 7), (-5, 7)]
FAST = {"r": 15, "ga": {"population": 20, "generations": 20, "stall_generations": 6}}


def read_all(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_simulate_writes_three_files(scenario_dir, tmp_path, capsys):
    sc = scenario_dir([(0, 0), (25, 0)], SQUARE14, ganp={"r": 15})
    assert main(["simulate", str(sc), "--out", str(tmp_path / "o")]) == 0
    assert set(read_all(tmp_path / "o")) == {"trace.jsonl", "metrics.json", "pdop_series.csv"}
    assert "anchors deployed: 1" in capsys.readouterr().out


def test_simulate_trivial(scenario_dir, tmp_path):
    sc = scenario_dir([(0, 0), (25, 0)], SQUARE14)
    assert main(["simulate", str(sc), "--trivial", "--out", str(tmp_path / "o")]) == 0
    assert json.loads((tmp_path / "o" / "metrics.json").read_text())["m"] % 4 == 0


def test_simulate_missing_path_csv(scenario_dir, tmp_path, capsys):
    sc = scenario_dir([(0, 0), (25, 0)], SQUARE14)
    (sc.parent / "path.csv").unlink()
    assert main(["simulate", str(sc), "--out", str(tmp_path / "o")]) == 2
    assert "path_csv" in capsys.readouterr().err


def test_simulate_schema_violation(scenario_dir, tmp_path, capsys):
    sc = scenario_dir([(0, 0), (25, 0)], SQUARE14, ganp={"n": 0})
    assert main(["simulate", str(sc), "--out", str(tmp_path / "o")]) == 2
    assert "ganp/n" in capsys.readouterr().err


def test_simulate_infeasible_writes_partial(scenario_dir, tmp_path):
    sc = scenario_dir([(0, 0), (25, 0)], SQUARE14, ganp={"p_max": 1.04, "ga": {"population": 10, "generations": 5}})
    assert main(["simulate", str(sc), "--out", str(tmp_path / "o")]) == 3
    metrics = json.loads((tmp_path / "o" / "metrics.json").read_text())
    assert metrics["aborted"]
    assert (tmp_path / "o" / "trace.jsonl").read_text()


def test_simulate_deterministic(scenario_dir, tmp_path):
    sc = scenario_dir([(0, 0), (25, 0)], SQUARE14, ganp=FAST)
    for name in ("a", "b"):
        assert main(["simulate", str(sc), "--no-wall-clock", "--out", str(tmp_path / name)]) == 0
    assert read_all(tmp_path / "a") == read_all(tmp_path / "b")


def test_seed_override_changes_noise(scenario_dir, tmp_path):
    sc = scenario_dir([(0, 0), (25, 0)], SQUARE14, ganp=FAST)
    main(["simulate", str(sc), "--no-wall-clock", "--out", str(tmp_path / "a")])
    main(["simulate", str(sc), "--no-wall-clock", "--seed", "5", "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "trace.jsonl").read_bytes() != (tmp_path / "b" / "trace.jsonl").read_bytes()


def test_heatmap_unit_square(scenario_dir, tmp_path):
    sc = scenario_dir([(0, 0), (1, 0)], [(0, 0), (1, 0), (0, 1), (1, 1)])
    out = tmp_path / "h" / "grid.csv"
    args = ["heatmap", str(sc), "--initial", "--bbox", "0", "0", "1", "1", "--resolution", "0.5", "--out", str(out)]
    assert main(args) == 0
    grid = np.loadtxt(out, delimiter=",")
    assert grid.shape == (3, 3)
    assert grid[1, 1] == pytest.approx(1.0, abs=1e-12)
    meta = json.loads(out.with_suffix(".json").read_text())
    assert meta["bbox"] == [[0, 0], [1, 1]] and meta["resolution"] == 0.5
    assert meta["sentinel_value"] == "inf"
    # corners coincide with an anchor, leaving fewer than four usable rows
    assert np.all(np.isinf(grid[::2, ::2]))
    # edge midpoints: P^T P = diag(2.4, 1.6)
    for v in (grid[0, 1], grid[1, 0], grid[1, 2], grid[2, 1]):
        assert v == pytest.approx(np.sqrt(1 / 2.4 + 1 / 1.6), rel=1e-12)


def test_heatmap_after_mission(scenario_dir, tmp_path):
    sc = scenario_dir([(0, 0), (25, 0)], SQUARE14, ganp=FAST)
    out = tmp_path / "grid.csv"
    assert main(["heatmap", str(sc), "--resolution", "2", "--out", str(out)]) == 0
    grid = np.loadtxt(out, delimiter=",")
    meta = json.loads(out.with_suffix(".json").read_text())
    assert list(grid.shape) == meta["shape"]


def test_heatmap_bad_resolution(scenario_dir, tmp_path):
    sc = scenario_dir([(0, 0), (1, 0)], SQUARE14)
    assert main(["heatmap", str(sc), "--initial", "--resolution", "0", "--out", str(tmp_path / "g.csv")]) == 2
    assert main(["heatmap", str(sc), "--initial", "--bbox", "1", "0", "0", "1", "--out", str(tmp_path / "g.csv")]) == 2


def test_montecarlo_command(tmp_path, capsys):
    assert main(["example-scenario", str(tmp_path / "ex")]) == 0
    sc = tmp_path / "ex" / "reference_sim.json"
    assert main(["montecarlo", str(sc), "--out", str(tmp_path / "a")]) == 0
    assert main(["montecarlo", str(sc), "--out", str(tmp_path / "b")]) == 0
    assert read_all(tmp_path / "a") == read_all(tmp_path / "b")
    assert "summary.json" in read_all(tmp_path / "a")
    assert main(["montecarlo", str(sc), "--trials", "10", "--out", str(tmp_path / "c")]) == 2


def test_taguchi_command(scenario_dir, tmp_path):
    sc = scenario_dir([(0, 0), (20, 0)], SQUARE14, ganp={"ga": {"population": 10, "generations": 8, "stall_generations": 4}})
    for name in ("a", "b"):
        assert main(["taguchi", str(sc), "--replicates", "1", "--no-wall-clock", "--out", str(tmp_path / name)]) == 0
    files = read_all(tmp_path / "a")
    assert files == read_all(tmp_path / "b")
    assert len(files["table1.csv"].decode().splitlines()) == 10
    assert b"c_t" not in files["table1.csv"] + files["table2.csv"]


def test_example_scenario_copies_path(tmp_path):
    assert main(["example-scenario", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "reference_sim.json").read_text())
    assert (tmp_path / doc["path_csv"]).exists()
