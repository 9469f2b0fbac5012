import json

import pytest

from dnrsim.errors import ScenarioError
from dnrsim.scenario import BUNDLED, dump_scenario, load_scenario, parse_scenario, scenario_to_dict

MINIMAL = """\
name: tiny
nodes: [a, b]
lines:
  - {name: L, from: a, to: b, r: 0.01, x: 0.02}
loads:
  - {node: b, p: 0.1, q: 0.05}
generators:
  - {node: a, rating_mva: 1.0}
schedule: {t_end: 1.0}
"""


@pytest.mark.parametrize("name", BUNDLED)
def test_round_trip(name):
    scn = load_scenario(name)
    text = dump_scenario(scn)
    again = parse_scenario(text)
    assert again == scn
    assert dump_scenario(again) == text


def test_bundled_ieee37_contents():
    scn = load_scenario("ieee37-dnr")
    fd = scn.feeder
    assert len(fd.nodes) == 37
    assert len(fd.generators) == 5
    assert len(fd.switches) == 6
    assert [ev.time for ev in scn.schedule.events] == [1.0, 21.0]
    first, second = scn.schedule.events
    assert sorted(first.actions) == [("SW1", True), ("SW2", False), ("SW3", True), ("SW4", True)]
    assert sorted(second.actions) == [("SW5", True), ("SW6", True)]
    assert scn.schedule.t_end == 40.0 and scn.dt == 1e-3 and scn.mode == "sequential"
    for ld in fd.loads.values():
        assert ld.p_coeffs == (0.5, 0.3, 0.2) and ld.q_coeffs == (0.5, 0.3, 0.2)


def test_minimal_scenario_defaults():
    scn = parse_scenario(MINIMAL)
    assert scn.name == "tiny" and scn.dt == 1e-3 and scn.mode == "sequential"
    assert scn.feeder.loads["b"].p_coeffs == (0.5, 0.3, 0.2)


def test_json_is_accepted():
    doc = scenario_to_dict(load_scenario("two-node"))
    assert parse_scenario(json.dumps(doc)) == load_scenario("two-node")


def test_zip_sum_names_the_node():
    text = MINIMAL.replace("{node: b, p: 0.1, q: 0.05}", "{node: b, p: 0.1, q: 0.05, zip_p: [0.5, 0.3, 0.1]}")
    with pytest.raises(ScenarioError, match=r"line 6: load at node b: .*0\.9") as info:
        parse_scenario(text)
    assert info.value.line == 6
    assert info.value.exit_code == 2


@pytest.mark.parametrize("edit,pattern", [
    (("to: b,", "to: z,"), "unknown node z"),
    (("rating_mva: 1.0}", "rating_mva: 1.0, gain: 3}"), "unknown keys"),
    (("schedule: {t_end: 1.0}", "schedule: {t_end: 1.0, events: [{time: 0.5, close: [X]}]}"),
     "unknown switch X"),
    (("r: 0.01, x: 0.02", "r: 0.0, x: 0.0"), "line L"),
    (("nodes: [a, b]", "nodes: [a, b"), "malformed"),
])
def test_validation_errors(edit, pattern):
    with pytest.raises(ScenarioError, match=pattern):
        parse_scenario(MINIMAL.replace(*edit))


def test_missing_file(tmp_path):
    with pytest.raises(ScenarioError, match="no scenario file"):
        load_scenario(tmp_path / "absent.yaml")


def test_load_from_path(tmp_path):
    path = tmp_path / "tiny.yaml"
    path.write_text(MINIMAL)
    assert load_scenario(path) == parse_scenario(MINIMAL)
