import json
from pathlib import Path

import numpy as np
import pytest

from anchor_deploy.cli import builtin_scenario_path
from anchor_deploy.scenario import ExplorationScenario


@pytest.fixture(scope="session")
def packaged_scenario() -> ExplorationScenario:
    return ExplorationScenario.load(builtin_scenario_path())


@pytest.fixture
def scenario_dir(tmp_path):
    """Write a scenario JSON plus its path CSV; returns a factory."""

    count = iter(range(1_000))

    def make(viapoints, initial, **overrides):
        base = tmp_path / f"scenario{next(count)}"
        base.mkdir()
        csv = base / "path.csv"
        csv.write_text("x,y\n" + "".join(f"{x},{y}\n" for x, y in viapoints))
        doc = json.loads(builtin_scenario_path().read_text())
        doc["path_csv"] = "path.csv"
        doc["initial_anchors"] = [list(map(float, p)) for p in initial]
        for key, value in overrides.items():
            if isinstance(value, dict) and isinstance(doc.get(key), dict):
                doc[key].update(value)
            else:
                doc[key] = value
        out = base / "scenario.json"
        out.write_text(json.dumps(doc))
        return out

    return make



ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per acceptance criterion."""
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, [])

    def report(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        print(line)
        lines.append((number, line))
        return ok

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
