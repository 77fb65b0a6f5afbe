import copy
import math

import pytest
from hypothesis import given, strategies as st

from vlcjcp.errors import SchemaError, ValidationError
from vlcjcp.scene import (
    default_led_positions,
    half_angle_from_lambertian_order,
    lambertian_order_from_half_angle,
    load_scenario,
    scenario_to_dict,
    scenario_to_json,
    validate_scenario,
)


def test_default_document_loads(default_scenario):
    cfg = default_scenario
    assert cfg.n_leds == 4
    assert cfg.n_pds == 2
    assert cfg.room.dims.as_tuple() == (300.0, 300.0, 300.0)
    assert all(led.transmit_power_w == 20.0 for led in cfg.leds)
    assert cfg.seed == 0


def test_default_led_positions():
    positions = default_led_positions()
    assert positions[0].as_tuple() == (50.0, 50.0, 300.0)
    assert positions[3].as_tuple() == (-50.0, -50.0, 300.0)
    assert all(p.z == 300.0 for p in positions)
    assert [tuple(p.as_tuple()) for p in default_scenario_positions()] == \
        [tuple(p.as_tuple()) for p in positions]


def default_scenario_positions():
    from tests.conftest import SCENARIO_PATH
    from vlcjcp.scene import load_scenario_file

    return [led.position for led in load_scenario_file(SCENARIO_PATH).leds]


def test_lambertian_order_formula():
    # half power at 60 degrees gives unit order; 0.647 sits near 70 degrees
    assert lambertian_order_from_half_angle(60.0) == pytest.approx(1.0)
    assert half_angle_from_lambertian_order(0.647) == pytest.approx(69.967, abs=1e-2)


def test_pam_order_must_be_power_of_two(scenario_dict):
    doc = copy.deepcopy(scenario_dict)
    doc["modulation"]["pam_order"] = 3
    with pytest.raises(ValidationError, match="pam_order"):
        load_scenario(doc)


def test_non_negativity_bound(scenario_dict):
    # v_dc * rho_min must cover the most negative PAM level A*(M-1)
    doc = copy.deepcopy(scenario_dict)
    doc["modulation"]["v_dc"] = 1.0
    doc["dimming"]["rho_min"] = 0.1
    doc["dimming"]["kappa"] = [0.5, 0.5]
    with pytest.raises(ValidationError, match="non-negativity"):
        load_scenario(doc)


def test_inconsistent_lambertian_pair(scenario_dict):
    doc = copy.deepcopy(scenario_dict)
    doc["leds"][0]["half_angle_deg"] = 60.0  # implies order 1.0, not 0.647
    cfg_err = None
    with pytest.raises(ValidationError, match="inconsistent") as cfg_err:
        load_scenario(doc)
    assert "leds[0]" in str(cfg_err.value)


def test_zero_grid_resolution_diagnostic(default_scenario):
    import dataclasses

    bad_room = dataclasses.replace(default_scenario.room, grid_resolution_cm=0.0)
    bad = dataclasses.replace(default_scenario, room=bad_room)
    diags = validate_scenario(bad)
    assert any(d.path == "room.grid_resolution_cm" for d in diags)


def test_missing_and_extra_fields(scenario_dict):
    doc = copy.deepcopy(scenario_dict)
    del doc["pilots"]
    with pytest.raises(SchemaError, match="pilots"):
        load_scenario(doc)
    doc = copy.deepcopy(scenario_dict)
    doc["unexpected"] = 1
    with pytest.raises(SchemaError, match="unexpected"):
        load_scenario(doc)


def test_malformed_json_is_schema_error():
    with pytest.raises(SchemaError, match="JSON"):
        load_scenario("{not json")


def test_pd_separation_must_match_offsets(scenario_dict):
    doc = copy.deepcopy(scenario_dict)
    doc["pds"]["separation_cm"] = 25.0
    with pytest.raises(ValidationError, match="separation"):
        load_scenario(doc)


def test_pilot_count_multiple(scenario_dict):
    doc = copy.deepcopy(scenario_dict)
    doc["pilots"] = 401
    with pytest.raises(ValidationError, match="pilot"):
        load_scenario(doc)


def test_round_trip_identity(default_scenario):
    cfg = default_scenario
    again = load_scenario(scenario_to_json(cfg))
    assert again == cfg
    assert scenario_to_dict(again) == scenario_to_dict(cfg)


def test_accepted_scenarios_validate_clean(default_scenario):
    assert validate_scenario(default_scenario) == []


@given(
    m_exp=st.integers(min_value=1, max_value=3),
    amplitude=st.floats(min_value=0.25, max_value=2.0),
    kappa1=st.floats(min_value=0.55, max_value=1.0),
    seed=st.integers(min_value=0, max_value=2**64 - 1),
)
def test_round_trip_over_valid_variations(m_exp, amplitude, kappa1, seed):
    import json

    from tests.conftest import SCENARIO_PATH

    with open(SCENARIO_PATH, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    order = 2 ** m_exp
    doc["modulation"]["pam_order"] = order
    doc["modulation"]["amplitude"] = amplitude
    # keep the non-negativity and peak-power invariants satisfied
    doc["modulation"]["v_dc"] = amplitude * (order - 1) / 0.5
    doc["leds"] = [dict(led, transmit_power_w=1000.0) for led in doc["leds"]]
    doc["dimming"]["kappa"] = [kappa1, 0.9]
    doc["seed"] = seed
    cfg = load_scenario(doc)
    assert load_scenario(scenario_to_json(cfg)) == cfg
    assert validate_scenario(cfg) == []


def test_infinite_k_factor_round_trip(scenario_dict):
    doc = copy.deepcopy(scenario_dict)
    doc["rician"]["k_factor"] = "inf"
    cfg = load_scenario(doc)
    assert cfg.rician.k_factor == math.inf
    assert load_scenario(scenario_to_json(cfg)) == cfg
