"""
dq-frame bus-injection model of a switchable feeder.

A complex admittance ``y = G + jB`` acts on a dq vector ``[V_d, V_q]`` as
the real 2x2 block ``[[G, -B], [B, G]]``. The node admittance matrix is
assembled from these blocks with the usual sign convention (off-diagonal
``-y``, diagonal = sum of incident branches + shunts) so that ``I = Y V``
holds with injection-positive currents.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, Optional

import numpy as np

from .devices import SgParams, ZipLoadParams
from .errors import StructuralError


@dataclass(frozen=True)
class AdmittanceBlock:
    g: float
    b: float

    @classmethod
    def from_complex(cls, y: complex) -> "AdmittanceBlock":
        return cls(float(y.real), float(y.imag))

    @classmethod
    def from_impedance(cls, r: float, x: float) -> "AdmittanceBlock":
        return cls.from_complex(1.0 / complex(r, x))

    def to_complex(self) -> complex:
        return complex(self.g, self.b)

    def matrix(self) -> np.ndarray:
        return np.array([[self.g, -self.b], [self.b, self.g]])

    def scaled(self, factor: float) -> "AdmittanceBlock":
        return AdmittanceBlock(self.g * factor, self.b * factor)


@dataclass(frozen=True)
class Line:
    name: str
    from_node: str
    to_node: str
    y: AdmittanceBlock
    shunt_from: Optional[AdmittanceBlock] = None
    shunt_to: Optional[AdmittanceBlock] = None


@dataclass(frozen=True)
class Switch:
    id: str
    from_node: str
    to_node: str
    y: AdmittanceBlock
    closed: bool


@dataclass(frozen=True)
class Feeder:
    """Immutable network description.

    Node ids are strings. ``loads`` and ``generators`` map node id to device
    parameters; at most one generator per node.
    """

    nodes: tuple
    lines: tuple = ()
    switches: tuple = ()
    loads: Mapping[str, ZipLoadParams] = field(default_factory=dict)
    generators: Mapping[str, SgParams] = field(default_factory=dict)
    s_base: float = 1.0  # MVA
    f_nom: float = 60.0  # Hz

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(str(n) for n in self.nodes))
        object.__setattr__(self, "lines", tuple(self.lines))
        object.__setattr__(self, "switches", tuple(self.switches))
        object.__setattr__(self, "loads", MappingProxyType(dict(self.loads)))
        object.__setattr__(self, "generators", MappingProxyType(dict(self.generators)))
        if len(set(self.nodes)) != len(self.nodes):
            raise StructuralError("node ids are not unique")
        known = set(self.nodes)
        for br in self.lines:
            for end in (br.from_node, br.to_node):
                if end not in known:
                    raise StructuralError(f"line {br.name} refers to unknown node {end}")
            if br.from_node == br.to_node:
                raise StructuralError(f"line {br.name} is a self-loop")
        ids = set()
        for sw in self.switches:
            if sw.id in ids:
                raise StructuralError(f"duplicate switch id {sw.id}")
            ids.add(sw.id)
            for end in (sw.from_node, sw.to_node):
                if end not in known:
                    raise StructuralError(f"switch {sw.id} refers to unknown node {end}")
        for label, devices in (("load", self.loads), ("generator", self.generators)):
            for nid in devices:
                if nid not in known:
                    raise StructuralError(f"{label} at unknown node {nid}")

    @property
    def index(self) -> dict:
        return {nid: k for k, nid in enumerate(self.nodes)}

    @property
    def switch_map(self) -> dict:
        return {sw.id: sw for sw in self.switches}

    def initial_switch_states(self) -> dict:
        return {sw.id: sw.closed for sw in self.switches}


@dataclass(frozen=True)
class BlockAdmittanceMatrix:
    node_ids: tuple
    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=float)
        if data.shape != (2 * len(self.node_ids),) * 2:
            raise ValueError("data must be 2N x 2N")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def n(self) -> int:
        return len(self.node_ids)

    def block(self, i: int, j: int) -> np.ndarray:
        return self.data[2 * i : 2 * i + 2, 2 * j : 2 * j + 2]

    def to_complex(self) -> np.ndarray:
        return self.data[0::2, 0::2] + 1j * self.data[1::2, 0::2]

    def restrict(self, node_ids) -> "BlockAdmittanceMatrix":
        pos = {nid: k for k, nid in enumerate(self.node_ids)}
        idx = dq_indices([pos[n] for n in node_ids])
        return BlockAdmittanceMatrix(tuple(node_ids), self.data[np.ix_(idx, idx)])


@dataclass(frozen=True)
class SwitchEvent:
    time: float
    actions: tuple  # ((switch_id, closed: bool), ...)

    def __post_init__(self):
        acts = tuple((str(sid), bool(c)) for sid, c in self.actions)
        seen = [sid for sid, _ in acts]
        if len(set(seen)) != len(seen):
            raise ValueError(f"event at t={self.time} lists a switch more than once")
        object.__setattr__(self, "actions", acts)

    @property
    def switch_ids(self) -> tuple:
        return tuple(sid for sid, _ in self.actions)


@dataclass(frozen=True)
class InjectionStep:
    delta_it: np.ndarray

    def block(self, i: int) -> np.ndarray:
        return self.delta_it[2 * i : 2 * i + 2]


@dataclass(frozen=True)
class Connectivity:
    energized: tuple  # components (tuples of node ids) that contain a generator
    deenergized: tuple  # components without any generator

    @property
    def energized_nodes(self) -> frozenset:
        return frozenset(n for comp in self.energized for n in comp)


def dq_indices(node_positions) -> np.ndarray:
    pos = np.asarray(list(node_positions), dtype=int)
    return np.column_stack((2 * pos, 2 * pos + 1)).ravel()


def apply_event(feeder: Feeder, switch_states: Mapping[str, bool], event: SwitchEvent) -> dict:
    """Return the switch states after ``event``; rejects redundant actions."""
    states = dict(switch_states)
    for sid, close in event.actions:
        if sid not in states:
            raise StructuralError(f"event at t={event.time} refers to unknown switch {sid}")
        if states[sid] == close:
            verb = "close" if close else "open"
            raise StructuralError(f"cannot {verb} switch {sid} at t={event.time}: already {'closed' if close else 'open'}")
        states[sid] = close
    return states


def closed_branches(feeder: Feeder, switch_states=None):
    """Yield (name, from, to, AdmittanceBlock) of every conducting branch."""
    states = feeder.initial_switch_states() if switch_states is None else switch_states
    for br in feeder.lines:
        yield br.name, br.from_node, br.to_node, br.y
    for sw in feeder.switches:
        if states.get(sw.id, sw.closed):
            yield sw.id, sw.from_node, sw.to_node, sw.y


def assemble_admittance(feeder: Feeder, switch_states=None) -> BlockAdmittanceMatrix:
    states = feeder.initial_switch_states() if switch_states is None else dict(switch_states)
    unknown = set(states) - set(feeder.switch_map)
    if unknown:
        raise StructuralError(f"unknown switch ids {sorted(unknown)}")
    index = feeder.index
    data = np.zeros((2 * len(feeder.nodes),) * 2)

    def stamp(i, j, blk):
        data[2 * i : 2 * i + 2, 2 * j : 2 * j + 2] += blk

    for name, a, b, y in closed_branches(feeder, states):
        if a not in index or b not in index:
            raise StructuralError(f"branch {name} has a dangling endpoint")
        i, j = index[a], index[b]
        blk = y.matrix()
        stamp(i, i, blk)
        stamp(j, j, blk)
        stamp(i, j, -blk)
        stamp(j, i, -blk)
    for br in feeder.lines:
        if br.shunt_from is not None:
            stamp(index[br.from_node], index[br.from_node], br.shunt_from.matrix())
        if br.shunt_to is not None:
            stamp(index[br.to_node], index[br.to_node], br.shunt_to.matrix())
    return BlockAdmittanceMatrix(feeder.nodes, data)


def delta_admittance(y_before: BlockAdmittanceMatrix, y_after: BlockAdmittanceMatrix) -> BlockAdmittanceMatrix:
    if y_before.node_ids != y_after.node_ids:
        raise ValueError("admittance matrices cover different node sets")
    return BlockAdmittanceMatrix(y_after.node_ids, y_after.data - y_before.data)


def injection_step(delta_y: BlockAdmittanceMatrix, v0) -> InjectionStep:
    """Step current ``dI_T = dY V0`` caused by the admittance change."""
    v0 = np.asarray(v0, dtype=float)
    if v0.shape != (delta_y.data.shape[0],):
        raise ValueError(f"V0 has shape {v0.shape}, expected ({delta_y.data.shape[0]},)")
    return InjectionStep(delta_y.data @ v0)


def connectivity_check(feeder: Feeder, switch_states=None) -> Connectivity:
    adj = {n: [] for n in feeder.nodes}
    for _, a, b, _ in closed_branches(feeder, switch_states):
        adj[a].append(b)
        adj[b].append(a)
    seen = set()
    energized, dark = [], []
    for start in feeder.nodes:
        if start in seen:
            continue
        comp = []
        queue = deque([start])
        seen.add(start)
        while queue:
            n = queue.popleft()
            comp.append(n)
            for m in adj[n]:
                if m not in seen:
                    seen.add(m)
                    queue.append(m)
        order = feeder.index
        comp = tuple(sorted(comp, key=order.__getitem__))
        if any(n in feeder.generators for n in comp):
            energized.append(comp)
        else:
            dark.append(comp)
    return Connectivity(tuple(energized), tuple(dark))


def energization_sources(feeder: Feeder, states_after, energized_before) -> dict:
    """Map each newly energized node to the previously energized node feeding it.

    Breadth-first search over conducting branches of the new topology,
    seeded with every node that was already energized.
    """
    adj = {n: [] for n in feeder.nodes}
    for _, a, b, _ in closed_branches(feeder, states_after):
        adj[a].append(b)
        adj[b].append(a)
    source = {}
    queue = deque((n, n) for n in feeder.nodes if n in energized_before)
    visited = set(energized_before)
    while queue:
        n, root = queue.popleft()
        for m in adj[n]:
            if m not in visited:
                visited.add(m)
                source[m] = root
                queue.append((m, root))
    return source
