import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dnrsim.devices import SgParams, ZipLoadParams, linearize_sg, zip_current
from dnrsim.errors import UnsolvableIslandError
from dnrsim.network import AdmittanceBlock, Feeder, Line, apply_event
from dnrsim.operating_point import node_mismatch, reanchor, rotate_operating_point, solve_power_flow
from dnrsim.scenario import load_scenario
from support import independent_power_flow, three_node_feeder

CONST_P = (0.0, 0.0, 1.0)


def test_single_node_no_load():
    op = solve_power_flow(Feeder(("1",), generators={"1": SgParams(rating=1.0)}))
    np.testing.assert_allclose(op.v0, [1.0, 0.0], atol=1e-14)
    np.testing.assert_allclose(op.i0, [0.0, 0.0], atol=1e-14)


def test_two_bus_against_gauss_seidel():
    z = complex(0.01, 0.02)
    fd = Feeder(("1", "2"), lines=(Line("L", "1", "2", AdmittanceBlock.from_impedance(z.real, z.imag)),),
                loads={"2": ZipLoadParams(0.1, 0.05, 1.0, CONST_P, CONST_P)},
                generators={"1": SgParams(rating=1.0)})
    op = solve_power_flow(fd)
    assert node_mismatch(fd, op) < 1e-8

    y = 1 / z
    v1, v2 = 1.0 + 0j, 1.0 + 0j
    s2 = -complex(0.1, 0.05)
    for _ in range(200):
        v2 = (np.conj(s2 / v2) + y * v1) / y
    assert abs(op.voltage("2") - v2) < 1e-10
    i = op.i0.reshape(-1, 2)
    y_full = np.array([[y, -y], [-y, y]])
    np.testing.assert_allclose(i[:, 0] + 1j * i[:, 1], y_full @ np.array([v1, v2]), atol=1e-12)


def test_bundled_feeder_power_balance():
    scn = load_scenario("ieee37-dnr")
    op = solve_power_flow(scn.feeder)
    assert op.mismatch < 1e-8 and node_mismatch(scn.feeder, op) < 1e-8
    gen, load = op.total_generation(), op.total_load()
    nominal = complex(sum(ld.p0 for ld in scn.feeder.loads.values()),
                      sum(ld.q0 for ld in scn.feeder.loads.values()))
    assert abs(nominal - complex(0.89, 0.56)) < 1e-9
    # part of the demand is disconnected before restoration; the rest plus losses is supplied
    assert gen.real > load.real > 0.0
    assert gen.real - load.real < 0.05 * load.real


@settings(max_examples=20, deadline=None)
@given(angle=st.floats(-np.pi, np.pi))
def test_rotation_leaves_flows_unchanged(angle):
    fd = three_node_feeder()
    op = solve_power_flow(fd)
    rot = rotate_operating_point(op, angle)
    np.testing.assert_allclose(rot.vmag, op.vmag, atol=1e-14)
    assert node_mismatch(fd, rot) < 1e-10
    s = (op.v0[0::2] + 1j * op.v0[1::2]) * np.conj(op.i0[0::2] + 1j * op.i0[1::2])
    s_rot = (rot.v0[0::2] + 1j * rot.v0[1::2]) * np.conj(rot.i0[0::2] + 1j * rot.i0[1::2])
    np.testing.assert_allclose(s_rot, s, atol=1e-12)


def test_load_currents_match_zip_model():
    fd = three_node_feeder()
    op = solve_power_flow(fd)
    k = fd.index["2"]
    drawn = zip_current(fd.loads["2"], op.v0[2 * k : 2 * k + 2])
    np.testing.assert_allclose(op.i0[2 * k : 2 * k + 2], -drawn, atol=1e-10)
    p, q, vm = op.load_points["2"]
    assert abs(vm - op.vmag[k]) < 1e-14


def test_deenergized_node_holds_zero():
    op = solve_power_flow(three_node_feeder())
    assert "3" not in op.energized
    assert not np.any(op.v0[4:6])


def test_no_generator_is_unsolvable():
    fd = Feeder(("a", "b"), lines=(Line("L", "a", "b", AdmittanceBlock(1.0, -2.0)),))
    with pytest.raises(UnsolvableIslandError):
        solve_power_flow(fd)


def test_matches_independent_power_flow():
    scn = load_scenario("ieee37-dnr")
    fd = scn.feeder
    states = fd.initial_switch_states()
    for ev in scn.schedule.events:
        states = apply_event(fd, states, ev)
        op = solve_power_flow(fd, states)
        exact = independent_power_flow(fd, states, op.references[0])
        for n in op.energized:
            assert abs(op.voltage(n) - exact[n]) < 1e-8


def test_reanchor_is_a_power_flow_solution():
    scn = load_scenario("ieee37-dnr")
    fd = scn.feeder
    op0 = solve_power_flow(fd)
    states = apply_event(fd, fd.initial_switch_states(), scn.schedule.events[0])
    op1 = reanchor(fd, states, op0)
    assert node_mismatch(fd, op1) < 1e-8
    ref = op1.references[0]
    assert op1.generators[ref].controls.delta_set == op0.generators[ref].controls.delta_set
    # every machine is at rest under its original controller references
    for n, g in op1.generators.items():
        linearize_sg(fd.generators[n], g, fd.s_base, fd.f_nom, tol=1e-8)
