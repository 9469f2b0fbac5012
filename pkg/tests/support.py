"""Independent reference implementations and generators shared by the tests."""

from __future__ import annotations

import numpy as np
from scipy.optimize import root

from dnrsim.devices import SgParams, ZipLoadParams, zip_power
from dnrsim.network import AdmittanceBlock, Feeder, Line, Switch, connectivity_check


def random_feeder(rng: np.random.Generator, n_nodes: int, n_switches: int = 2,
                  devices: bool = False, shunts: bool = True) -> Feeder:
    """Random spanning tree plus a few switches (open or closed) between random node pairs."""
    nodes = [f"n{k}" for k in range(n_nodes)]
    lines = []
    for k in range(1, n_nodes):
        parent = int(rng.integers(0, k))
        y = AdmittanceBlock.from_impedance(rng.uniform(0.005, 0.05), rng.uniform(0.01, 0.08))
        shunt = AdmittanceBlock(0.0, rng.uniform(0.0, 0.01)) if shunts and rng.random() < 0.3 else None
        lines.append(Line(f"L{k}", nodes[parent], nodes[k], y, shunt, shunt))
    switches = []
    for s in range(n_switches):
        i, j = rng.choice(n_nodes, size=2, replace=False)
        y = AdmittanceBlock.from_impedance(rng.uniform(0.005, 0.05), rng.uniform(0.01, 0.08))
        switches.append(Switch(f"S{s}", nodes[i], nodes[j], y, bool(rng.random() < 0.5)))
    loads, gens = {}, {}
    if devices:
        for n in nodes[1:]:
            loads[n] = ZipLoadParams(rng.uniform(0.0, 0.05), rng.uniform(0.0, 0.03))
        gens[nodes[0]] = SgParams(rating=1.0, k_if=10.0, d=20.0, k_pv=20.0, k_iv=100.0,
                                  t_e=0.02, x_q=0.3, p_set=0.0)
    return Feeder(nodes, lines, switches, loads, gens)


def complex_ybus(feeder: Feeder, switch_states=None) -> np.ndarray:
    """Textbook complex bus admittance matrix, built entry by entry."""
    states = feeder.initial_switch_states() if switch_states is None else switch_states
    idx = feeder.index
    y = np.zeros((len(feeder.nodes), len(feeder.nodes)), dtype=complex)
    branches = [(ln.from_node, ln.to_node, ln.y, ln.shunt_from, ln.shunt_to) for ln in feeder.lines]
    branches += [(sw.from_node, sw.to_node, sw.y, None, None)
                 for sw in feeder.switches if states[sw.id]]
    for a, b, blk, sh_a, sh_b in branches:
        i, j = idx[a], idx[b]
        ys = complex(blk.g, blk.b)
        y[i, i] += ys
        y[j, j] += ys
        y[i, j] -= ys
        y[j, i] -= ys
        if sh_a is not None:
            y[i, i] += complex(sh_a.g, sh_a.b)
        if sh_b is not None:
            y[j, j] += complex(sh_b.g, sh_b.b)
    return y


def expand_blocks(y: np.ndarray) -> np.ndarray:
    """Complex N x N -> real 2N x 2N with [[G, -B], [B, G]] blocks."""
    n = y.shape[0]
    out = np.zeros((2 * n, 2 * n))
    out[0::2, 0::2] = y.real
    out[0::2, 1::2] = -y.imag
    out[1::2, 0::2] = y.imag
    out[1::2, 1::2] = y.real
    return out


def independent_power_flow(feeder: Feeder, switch_states, reference: str) -> dict:
    """Rectangular-coordinate power flow solved with scipy's hybrid root finder.

    Single island only. Returns node id -> complex voltage with the
    reference at angle 0.
    """
    conn = connectivity_check(feeder, switch_states)
    assert len(conn.energized) == 1
    nodes = [n for n in feeder.nodes if n in conn.energized_nodes]
    pos = {n: k for k, n in enumerate(nodes)}
    full = complex_ybus(feeder, switch_states)
    sel = [feeder.index[n] for n in nodes]
    y = full[np.ix_(sel, sel)]
    r = pos[reference]
    unknown = [k for k in range(len(nodes)) if k != r]
    v_ref = feeder.generators[reference].v_set

    def voltages(z):
        v = np.empty(len(nodes), dtype=complex)
        v[r] = v_ref
        v[unknown] = z[0::2] + 1j * z[1::2]
        return v

    def residual(z):
        v = voltages(z)
        s = v * np.conj(y @ v)
        out = []
        for k in unknown:
            n = nodes[k]
            p_load, q_load = zip_power(feeder.loads[n], abs(v[k])) if n in feeder.loads else (0.0, 0.0)
            if n in feeder.generators:
                gen = feeder.generators[n]
                out += [s[k].real - (gen.p_set - p_load),
                        abs(v[k]) ** 2 - gen.v_set ** 2]
            else:
                out += [s[k].real + p_load, s[k].imag + q_load]
        return np.array(out)

    z0 = np.tile([1.0, 0.0], len(unknown))
    sol = root(residual, z0, method="hybr", tol=1e-14)
    assert np.max(np.abs(residual(sol.x))) < 1e-10, sol.message
    v = voltages(sol.x)
    return {n: v[pos[n]] for n in nodes}


def three_node_feeder(p3: float = 0.01, k_if: float = 30.0, **overrides) -> Feeder:
    """SG at node 1, load at 2, a switchable load node 3."""
    sg = dict(rating=1.0, d=20.0, k_if=k_if, k_pv=20.0, k_iv=200.0, t_e=0.02, x_q=0.3, p_set=0.2)
    sg.update(overrides)
    return Feeder(
        nodes=("1", "2", "3"),
        lines=(Line("L12", "1", "2", AdmittanceBlock.from_impedance(0.01, 0.02)),),
        switches=(Switch("S23", "2", "3", AdmittanceBlock.from_impedance(0.02, 0.03), False),),
        loads={"2": ZipLoadParams(0.3, 0.15), "3": ZipLoadParams(p3, p3 / 2)},
        generators={"1": SgParams(**sg)},
    )
