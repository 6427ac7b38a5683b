import json

import pytest

from anchor_deploy.cli import builtin_scenario_path
from anchor_deploy.errors import ScenarioError
from anchor_deploy.maneuver import TerminalAction
from anchor_deploy.scenario import ExplorationScenario, validate


@pytest.fixture
def doc():
    return json.loads(builtin_scenario_path().read_text())


def test_builtin_scenario_loads(packaged_scenario):
    assert packaged_scenario.ganp.p_work == pytest.approx(0.95 * packaged_scenario.ganp.p_max)
    assert packaged_scenario.policy.terminal_action is TerminalAction.RETURN_TO_START
    path = packaged_scenario.load_path()
    assert path.length == pytest.approx(60.0)
    assert packaged_scenario.initial_positions.shape == (4, 2)


def test_round_trip_identity(packaged_scenario):
    again = ExplorationScenario.from_dict(json.loads(packaged_scenario.dumps()), packaged_scenario.base_dir)
    assert again == packaged_scenario
    assert again.dumps() == packaged_scenario.dumps()


def test_round_trip_with_tables(doc):
    doc["noise"]["sigma_table"] = [[5, 0.01], [20, 0.03]]
    doc["bias_study"] = {"delta": [[0.1, 0.2]], "query": [3, 4]}
    sc = ExplorationScenario.from_dict(doc)
    assert ExplorationScenario.from_dict(sc.to_dict()) == sc


def test_unknown_key_rejected(doc):
    doc["ganp"]["horizon"] = 30
    with pytest.raises(ScenarioError, match="ganp"):
        validate(doc)
    doc = json.loads(builtin_scenario_path().read_text())
    doc["colour"] = "red"
    with pytest.raises(ScenarioError, match="colour"):
        ExplorationScenario.from_dict(doc)


@pytest.mark.parametrize("field,value", [
    ("seed", -1),
    ("initial_anchors", [[0, 0], [1, 0], [0, 1]]),
    ("viapoint_spacing", 0),
])
def test_diagnostics_name_the_field(doc, field, value):
    doc[field] = value
    with pytest.raises(ScenarioError, match=field):
        ExplorationScenario.from_dict(doc)


def test_nested_field_named(doc):
    doc["ganp"]["p_max"] = -1
    with pytest.raises(ScenarioError, match="ganp/p_max"):
        ExplorationScenario.from_dict(doc)
    doc["ganp"]["p_max"] = 1.5
    doc["policy"]["terminal_action"] = "hover"
    with pytest.raises(ScenarioError, match="policy/terminal_action"):
        ExplorationScenario.from_dict(doc)


def test_json_syntax_error_reports_position(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "seed": 0,\n  oops\n}')
    with pytest.raises(ScenarioError, match=r"bad\.json:3:"):
        ExplorationScenario.load(bad)


def test_missing_path_csv(doc, tmp_path):
    doc["path_csv"] = "nowhere.csv"
    sc = ExplorationScenario.from_dict(doc, tmp_path)
    with pytest.raises(ScenarioError, match="path_csv"):
        sc.load_path()


def test_inconsistent_working_threshold(doc):
    doc["ganp"]["p_work"] = 2.0
    with pytest.raises(ScenarioError):
        ExplorationScenario.from_dict(doc)


def test_with_params_and_seed(packaged_scenario):
    sc = packaged_scenario.with_params(w=10, r_horizon=20, n=2).with_seed(7)
    assert (sc.ganp.w, sc.ganp.r_horizon, sc.ganp.n, sc.seed) == (10, 20, 2, 7)
    assert sc.ganp.p_max == packaged_scenario.ganp.p_max
