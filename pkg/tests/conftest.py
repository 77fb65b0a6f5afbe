import json
import math
import os

import pytest

from vlcjcp.scene import load_scenario, load_scenario_file, scenario_to_dict

SCENARIO_PATH = os.path.join(os.path.dirname(__file__), "..", "scenarios", "default.json")


@pytest.fixture(scope="session")
def default_scenario():
    return load_scenario_file(SCENARIO_PATH)


@pytest.fixture()
def scenario_dict():
    with open(SCENARIO_PATH, "r", encoding="utf-8") as fh:
        return json.load(fh)


@pytest.fixture(scope="session")
def los_scenario(default_scenario):
    """Default scenario with the diffuse component switched off."""
    from vlcjcp.scene import with_rician

    return with_rician(default_scenario, math.inf)
