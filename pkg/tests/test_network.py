import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dnrsim.devices import SgParams
from dnrsim.errors import StructuralError
from dnrsim.network import (
    AdmittanceBlock,
    Feeder,
    Line,
    Switch,
    SwitchEvent,
    apply_event,
    assemble_admittance,
    connectivity_check,
    delta_admittance,
    energization_sources,
    injection_step,
)
from support import complex_ybus, expand_blocks, random_feeder

Y = AdmittanceBlock(2.0, -4.0)


def two_node(closed_line=True):
    if closed_line:
        return Feeder(("1", "2"), lines=(Line("L", "1", "2", Y),))
    return Feeder(("1", "2"), switches=(Switch("S", "1", "2", Y, False),))


def test_two_node_blocks():
    ya = assemble_admittance(two_node()).data
    np.testing.assert_array_equal(ya[:2, :2], [[2, 4], [-4, 2]])
    np.testing.assert_array_equal(ya[2:, 2:], [[2, 4], [-4, 2]])
    np.testing.assert_array_equal(ya[:2, 2:], [[-2, -4], [4, -2]])
    np.testing.assert_array_equal(ya[2:, :2], [[-2, -4], [4, -2]])


def test_open_switch_contributes_nothing():
    np.testing.assert_array_equal(assemble_admittance(two_node(False)).data, np.zeros((4, 4)))


def test_chain_block_rows_sum_to_zero():
    fd = Feeder(("1", "2", "3"), lines=(
        Line("a", "1", "2", AdmittanceBlock.from_impedance(0.01, 0.02)),
        Line("b", "2", "3", AdmittanceBlock.from_impedance(0.03, 0.01)),
    ))
    ya = assemble_admittance(fd)
    for i in range(3):
        total = sum(ya.block(i, j) for j in range(3))
        np.testing.assert_allclose(total, np.zeros((2, 2)), atol=1e-12)
    np.testing.assert_allclose(ya.data, expand_blocks(complex_ybus(fd)), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 12))
def test_assembly_matches_complex_ybus(seed, n):
    fd = random_feeder(np.random.default_rng(seed), n, n_switches=3)
    ya = assemble_admittance(fd)
    np.testing.assert_allclose(ya.data, expand_blocks(complex_ybus(fd)), atol=1e-12)
    np.testing.assert_allclose(ya.to_complex(), complex_ybus(fd), atol=1e-12)


def test_delta_of_identical_matrices_is_zero():
    ya = assemble_admittance(two_node())
    assert not np.any(delta_admittance(ya, ya).data)


def test_closing_and_opening_pattern():
    y_ij = AdmittanceBlock.from_impedance(0.02, 0.03)
    y_jk = AdmittanceBlock.from_impedance(0.05, 0.01)
    fd = Feeder(("i", "j", "k"), lines=(Line("L", "i", "k", Y),),
                switches=(Switch("ij", "i", "j", y_ij, False), Switch("jk", "j", "k", y_jk, True)))
    before = fd.initial_switch_states()
    after = apply_event(fd, before, SwitchEvent(1.0, (("ij", True), ("jk", False))))
    dy = delta_admittance(assemble_admittance(fd, before), assemble_admittance(fd, after))
    m_ij, m_jk = y_ij.matrix(), y_jk.matrix()
    np.testing.assert_allclose(dy.block(0, 1), -m_ij)
    np.testing.assert_allclose(dy.block(1, 2), m_jk)
    np.testing.assert_allclose(dy.block(0, 0), m_ij)
    np.testing.assert_allclose(dy.block(2, 2), -m_jk)
    np.testing.assert_allclose(dy.block(1, 1), m_ij - m_jk)
    assert not np.any(dy.block(0, 2))


def test_zero_delta_gives_zero_step():
    ya = assemble_admittance(two_node())
    step = injection_step(delta_admittance(ya, ya), [1.0, 0.0, 0.9, 0.1])
    assert not np.any(step.delta_it)


def test_resistive_switch_step():
    fd = Feeder(("1", "2"), switches=(Switch("S", "1", "2", AdmittanceBlock(1.0, 0.0), False),))
    before = fd.initial_switch_states()
    after = apply_event(fd, before, SwitchEvent(0.0, (("S", True),)))
    dy = delta_admittance(assemble_admittance(fd, before), assemble_admittance(fd, after))
    step = injection_step(dy, [1.0, 0.0, 0.9, 0.0])
    np.testing.assert_allclose(step.block(0), [0.1, 0.0], atol=1e-15)
    np.testing.assert_allclose(step.block(1), [-0.1, 0.0], atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(vd=st.floats(0.5, 1.5), vq=st.floats(-0.5, 0.5), g=st.floats(0.1, 50), b=st.floats(-50, 50))
def test_equal_endpoint_voltages_give_no_step(vd, vq, g, b):
    fd = Feeder(("1", "2"), switches=(Switch("S", "1", "2", AdmittanceBlock(g, b), False),))
    before = fd.initial_switch_states()
    after = apply_event(fd, before, SwitchEvent(0.0, (("S", True),)))
    dy = delta_admittance(assemble_admittance(fd, before), assemble_admittance(fd, after))
    assert not np.any(injection_step(dy, [vd, vq, vd, vq]).delta_it)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_step_is_linear_in_voltage(seed):
    rng = np.random.default_rng(seed)
    fd = random_feeder(rng, 6, n_switches=3)
    before = fd.initial_switch_states()
    after = {k: not v for k, v in before.items()}
    dy = delta_admittance(assemble_admittance(fd, before), assemble_admittance(fd, after))
    v1, v2 = rng.normal(size=12), rng.normal(size=12)
    lhs = injection_step(dy, 2.0 * v1 - v2).delta_it
    rhs = 2.0 * injection_step(dy, v1).delta_it - injection_step(dy, v2).delta_it
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_connectivity():
    gen = {"1": SgParams(rating=1.0)}
    fd = Feeder(("1", "2", "3"), lines=(Line("a", "1", "2", Y),),
                switches=(Switch("s", "2", "3", Y, True),), generators=gen)
    conn = connectivity_check(fd)
    assert len(conn.energized) == 1 and not conn.deenergized
    opened = apply_event(fd, fd.initial_switch_states(), SwitchEvent(0.0, (("s", False),)))
    conn = connectivity_check(fd, opened)
    assert conn.energized_nodes == {"1", "2"}
    assert conn.deenergized == (("3",),)
    assert energization_sources(fd, fd.initial_switch_states(), {"1", "2"}) == {"3": "2"}


def test_dangling_endpoint_is_rejected():
    with pytest.raises(StructuralError, match="bad"):
        Feeder(("1", "2"), lines=(Line("bad", "1", "9", Y),))
    with pytest.raises(StructuralError, match="S"):
        Feeder(("1",), switches=(Switch("S", "1", "x", Y, False),))


def test_unknown_switch_in_event():
    with pytest.raises(StructuralError, match="nope"):
        apply_event(two_node(False), {"S": False}, SwitchEvent(0.0, (("nope", True),)))
    with pytest.raises(StructuralError, match="already open"):
        apply_event(two_node(False), {"S": False}, SwitchEvent(0.0, (("S", False),)))
