import json
import math

import numpy as np
import pytest

from anchor_deploy.dop import Origin
from anchor_deploy.harness import run_mission, run_trivial_baseline
from anchor_deploy.harness.studies import (
    L9_ROWS,
    REFERENCE_TABLE,
    montecarlo_bias_study,
    taguchi_sweep,
)
from anchor_deploy.scenario import ExplorationScenario

SQUARE14 = [(-5, -7), (5, -7), (5, 7), (-5, 7)]


@pytest.fixture
def covered(scenario_dir):
    return ExplorationScenario.load(scenario_dir([(-3, 0), (3, 0)], SQUARE14))


@pytest.fixture
def short_exit(scenario_dir):
    """A 25 m path leaving the initial square: one deployment."""
    return ExplorationScenario.load(scenario_dir([(0, 0), (25, 0)], SQUARE14, ganp={"r": 15}))


# --- missions --------------------------------------------------------------------------


def test_covered_path_needs_no_anchor(covered):
    res = run_mission(covered)
    mt = res.metrics
    assert mt.m == 0 and not res.plans
    assert mt.d_t == pytest.approx(6.0)
    assert res.trace.states() == ["MS"]
    assert mt.max_pdop <= covered.ganp.p_max


def test_covered_path_trivial_baseline(covered):
    assert run_trivial_baseline(covered).metrics.m == 0


def test_one_deployment_state_sequence(short_exit):
    res = run_mission(short_exit)
    mt = res.metrics
    assert mt.m == 1 and mt.deployments == 1
    assert res.trace.states() == ["MS", "DS", "PS", "MS"]
    assert mt.d_t > 25.0
    assert mt.violations == 0
    events = ";".join(r.event or "" for r in res.trace)
    assert "anchor_placed" in events


def test_mission_metrics_consistent(short_exit):
    res = run_mission(short_exit)
    mt = res.metrics
    assert mt.total_anchors == 4 + mt.m
    assert len(res.anchors) == 4 + mt.m
    assert res.anchors.count(Origin.DEPLOYED) == mt.m
    assert mt.max_pdop == max(r.pdop for r in res.trace)
    assert mt.d_terminal == pytest.approx(25.0, abs=1e-9)
    # visits every viapoint in order
    pos = res.trace.positions()
    path = short_exit.load_path()
    k = 0
    for q in path.viapoints:
        while k < len(pos) and not np.allclose(pos[k], q):
            k += 1
        assert k < len(pos)


def test_mission_deterministic(short_exit):
    a, b = run_mission(short_exit), run_mission(short_exit)
    assert a.metrics.to_dict(wall_clock=False) == b.metrics.to_dict(wall_clock=False)
    assert [r.to_json() for r in a.trace] == [r.to_json() for r in b.trace]
    assert "c_t" not in a.metrics.to_dict(wall_clock=False)


def test_mission_writes_outputs(short_exit, tmp_path):
    res = run_mission(short_exit)
    res.write(tmp_path / "out")
    assert {p.name for p in (tmp_path / "out").iterdir()} == {"trace.jsonl", "metrics.json", "pdop_series.csv"}
    metrics = json.loads((tmp_path / "out" / "metrics.json").read_text())
    assert metrics["m"] == 1
    rows = (tmp_path / "out" / "pdop_series.csv").read_text().splitlines()
    assert rows[0] == "k,state,phase,pdop"
    assert len(rows) == len(res.trace) + 1


def test_infeasible_mission_aborts_with_partial_trace(scenario_dir):
    sc = ExplorationScenario.load(
        scenario_dir([(0, 0), (25, 0)], SQUARE14, ganp={"p_max": 1.04, "ga": {"population": 10, "generations": 5}})
    )
    res = run_mission(sc)
    assert res.metrics.aborted
    assert "viapoint" in res.metrics.abort_reason
    assert len(res.trace) >= 1


@pytest.mark.parametrize("policy", [
    {"observation_source": "true"},
    {"bias_correction": False},
    {"delta_mode": "noise"},
    {"terminal_action": "become_anchor"},
    {"terminal_action": "continue_new_area"},
])
def test_policy_variants_run(scenario_dir, policy):
    # 40 m leaves room for the three observation stops after the resume point
    sc = ExplorationScenario.load(scenario_dir([(0, 0), (40, 0)], SQUARE14, ganp={"r": 15}, policy=policy))
    res = run_mission(sc)
    assert not res.metrics.aborted
    assert res.metrics.m >= 1
    if policy.get("terminal_action") == "become_anchor":
        assert len(res.anchors) == 4 + res.metrics.m + 1
    if policy.get("terminal_action") == "continue_new_area":
        assert res.metrics.d_terminal == 0
    corrected = any(a.corrected for a in res.anchors)
    assert corrected == (policy.get("bias_correction", True) and policy.get("delta_mode", "offset") == "offset")


def test_path_conservation_over_seeds(short_exit, covered):
    for seed in range(3):
        mt = run_mission(short_exit.with_seed(seed)).metrics
        assert mt.d_t > short_exit.load_path().length
    assert run_mission(covered).metrics.d_t == pytest.approx(covered.load_path().length)


def test_trivial_baseline_blocks(short_exit):
    res = run_trivial_baseline(short_exit)
    assert res.metrics.m % 4 == 0 and res.metrics.m >= 4
    deployed = res.anchors.true_positions()[4:8]
    side = np.ptp(deployed[:, 0])
    assert side == pytest.approx(10.0, abs=1e-9)
    assert np.ptp(deployed[:, 1]) == pytest.approx(14.0, abs=1e-9)


# --- studies -----------------------------------------------------------------------------


def test_l9_is_orthogonal():
    assert len(L9_ROWS) == len(REFERENCE_TABLE) == 9
    for a in range(3):
        for b in range(a + 1, 3):
            pairs = {(row[a], row[b]) for row in L9_ROWS}
            assert len(pairs) == 9


def test_taguchi_small_sweep(short_exit, tmp_path):
    rows = [(10, 10, 2), (30, 20, 3), (50, 10, 2)]
    res = taguchi_sweep(short_exit, rows=rows, replicates=1)
    assert [(r.w, r.r, r.n) for r in res.rows] == [(10, 10, 2), (30, 20, 3), (50, 10, 2)]
    lm = res.level_means("m_total", "w")
    assert set(lm) == {10, 30, 50}
    for metric, pick in res.best.items():
        key = {"m": "m_total"}.get(metric, metric)
        assert pick[0] == min(res.level_means(key, "w"), key=lambda x: (res.level_means(key, "w")[x], x))
    picks = np.array(list(res.best.values()))
    assert res.average[0] == pytest.approx(picks[:, 0].mean())
    res.write(tmp_path / "a", wall_clock=False)
    t1 = (tmp_path / "a" / "table1.csv").read_text().splitlines()
    assert t1[0] == "w,r,n,m,m_std,m_new,d_t,d_t_std,aborted"
    assert len(t1) == 4
    t2 = (tmp_path / "a" / "table2.csv").read_text().splitlines()
    assert [line.split(",")[0] for line in t2] == ["index", "m", "d_t"]
    res.write(tmp_path / "b")
    assert "c_t" in (tmp_path / "b" / "table1.csv").read_text().splitlines()[0]
    assert (tmp_path / "b" / "table2.csv").read_text().splitlines()[-1].startswith("average,")


def test_montecarlo_requires_enough_trials(packaged_scenario):
    with pytest.raises(ValueError):
        montecarlo_bias_study(packaged_scenario, trials=100)


def test_montecarlo_zero_offset_unbiased(packaged_scenario, tmp_path):
    res = montecarlo_bias_study(packaged_scenario, delta=((0.0, 0.0), (0.0, 0.0)))
    s = res.summary
    assert s["trials"] == 10_000
    for mode in ("noise", "offset"):
        se = max(s[mode]["std_x"], s[mode]["std_y"]) / math.sqrt(s["trials"])
        assert abs(s[mode]["bias_x"]) < 4 * se + 1e-3
        assert abs(s[mode]["bias_y"]) < 4 * se + 1e-3
    res.write(tmp_path)
    hist = (tmp_path / "histogram_x.csv").read_text().splitlines()
    assert hist[0] == "bin_left,bin_right,noise,offset"
    counts = np.array([[float(v) for v in line.split(",")[2:]] for line in hist[1:]])
    assert counts.sum(axis=0).tolist() == [10_000, 10_000]
    assert json.loads((tmp_path / "summary.json").read_text())["trials"] == 10_000
