"""
Scenario files: feeder, devices, switching schedule and solver settings.

Scenarios are YAML mappings (JSON is a subset and is accepted as well).
Diagnostics carry the line number of the offending entry. Lines and
switches may be given as impedance (``r``, ``x``) or admittance (``g``,
``b``); :func:`dump_scenario` always writes admittances so that a dumped
scenario reloads to an identical object.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path

import yaml

from .devices import SgParams, ZipLoadParams
from .errors import ScenarioError, StructuralError
from .linear_sim import MODES, Schedule
from .network import AdmittanceBlock, Feeder, Line, Switch, SwitchEvent

BUNDLED = ("ieee37-dnr", "two-node", "passive")

_SG_FIELDS = tuple(f.name for f in fields(SgParams) if f.name != "rating")


@dataclass(frozen=True)
class Scenario:
    name: str
    feeder: Feeder
    schedule: Schedule
    dt: float = 1e-3
    mode: str = "sequential"
    description: str = ""


class _LineLoader(yaml.SafeLoader):
    """Safe loader that records the source line of every mapping."""


def _construct_mapping(loader, node):
    mapping = loader.construct_mapping(node, deep=True)
    mapping["__line__"] = node.start_mark.line + 1
    return mapping


_LineLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


def _line(entry):
    return entry.get("__line__") if isinstance(entry, dict) else None


def _req(entry, key, what):
    if key not in entry:
        raise ScenarioError(f"{what} is missing '{key}'", line=_line(entry))
    return entry[key]


def _num(entry, key, what, default=None):
    value = entry.get(key, default) if default is not None else _req(entry, key, what)
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise ScenarioError(f"{what}: '{key}' must be a number, got {value!r}", line=_line(entry)) from None
    if not math.isfinite(out):
        raise ScenarioError(f"{what}: '{key}' must be finite", line=_line(entry))
    return out


def _admittance(entry, what):
    has_z = "r" in entry or "x" in entry
    has_y = "g" in entry or "b" in entry
    if has_z == has_y:
        raise ScenarioError(f"{what} needs either r/x or g/b", line=_line(entry))
    if has_y:
        return AdmittanceBlock(_num(entry, "g", what), _num(entry, "b", what))
    r, x = _num(entry, "r", what), _num(entry, "x", what)
    if r == 0.0 and x == 0.0:
        raise ScenarioError(f"{what} has zero impedance", line=_line(entry))
    return AdmittanceBlock.from_impedance(r, x)


def _list(doc, key, required=True):
    value = doc.get(key, None)
    if value is None:
        if required:
            raise ScenarioError(f"scenario is missing '{key}'", line=_line(doc))
        return []
    if not isinstance(value, list):
        raise ScenarioError(f"'{key}' must be a list", line=_line(doc))
    return value


def scenario_from_dict(doc: dict) -> Scenario:
    """Validate a parsed scenario mapping and build the domain objects."""
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a mapping")
    system = doc.get("system", {}) or {}
    s_base = _num(system, "s_base_mva", "system", default=1.0) if system else 1.0
    f_nom = _num(system, "f_nom_hz", "system", default=60.0) if system else 60.0
    nodes = [str(n) for n in _list(doc, "nodes")]
    known = set(nodes)

    def node_ref(entry, key, what):
        nid = str(_req(entry, key, what))
        if nid not in known:
            raise ScenarioError(f"{what} refers to unknown node {nid}", line=_line(entry))
        return nid

    lines = []
    for e in _list(doc, "lines", required=False):
        name = str(_req(e, "name", "line"))
        what = f"line {name}"
        shunt = _num(e, "b_shunt", what, default=0.0)
        half = AdmittanceBlock(0.0, shunt / 2.0) if shunt else None
        lines.append(Line(name, node_ref(e, "from", what), node_ref(e, "to", what),
                          _admittance(e, what), half, half))

    switches = []
    for e in _list(doc, "switches", required=False):
        sid = str(_req(e, "id", "switch"))
        what = f"switch {sid}"
        state = str(e.get("state", "open")).lower()
        if state not in ("open", "closed"):
            raise ScenarioError(f"{what}: state must be 'open' or 'closed'", line=_line(e))
        switches.append(Switch(sid, node_ref(e, "from", what), node_ref(e, "to", what),
                               _admittance(e, what), state == "closed"))

    loads = {}
    for e in _list(doc, "loads", required=False):
        nid = node_ref(e, "node", "load")
        what = f"load at node {nid}"
        if nid in loads:
            raise ScenarioError(f"node {nid} has more than one load", line=_line(e))
        try:
            loads[nid] = ZipLoadParams(
                _num(e, "p", what), _num(e, "q", what), _num(e, "v_nom", what, default=1.0),
                tuple(float(c) for c in e.get("zip_p", (0.5, 0.3, 0.2))),
                tuple(float(c) for c in e.get("zip_q", (0.5, 0.3, 0.2))),
            )
        except (ValueError, TypeError) as exc:
            raise ScenarioError(f"{what}: {exc}", line=_line(e)) from None

    generators = {}
    for e in _list(doc, "generators", required=False):
        nid = node_ref(e, "node", "generator")
        what = f"generator at node {nid}"
        if nid in generators:
            raise ScenarioError(f"node {nid} has more than one generator", line=_line(e))
        unknown = set(e) - set(_SG_FIELDS) - {"node", "rating_mva", "__line__"}
        if unknown:
            raise ScenarioError(f"{what}: unknown keys {sorted(unknown)}", line=_line(e))
        kwargs = {k: _num(e, k, what) for k in _SG_FIELDS if k in e}
        try:
            generators[nid] = SgParams(rating=_num(e, "rating_mva", what), **kwargs)
        except (ValueError, TypeError) as exc:
            raise ScenarioError(f"{what}: {exc}", line=_line(e)) from None

    try:
        feeder = Feeder(nodes, lines, switches, loads, generators, s_base=s_base, f_nom=f_nom)
    except StructuralError as exc:
        raise ScenarioError(str(exc), line=_line(doc)) from None

    sched = doc.get("schedule") or {}
    switch_ids = {sw.id for sw in switches}
    events = []
    for e in _list(sched, "events", required=False):
        t = _num(e, "time", "event")
        actions = []
        for key, closed in (("close", True), ("open", False)):
            for sid in e.get(key, []) or []:
                if str(sid) not in switch_ids:
                    raise ScenarioError(f"event at t={t} refers to unknown switch {sid}", line=_line(e))
                actions.append((str(sid), closed))
        if not actions:
            raise ScenarioError(f"event at t={t} has no switch actions", line=_line(e))
        try:
            events.append(SwitchEvent(t, tuple(actions)))
        except (ValueError, StructuralError) as exc:
            raise ScenarioError(str(exc), line=_line(e)) from None
    try:
        schedule = Schedule(tuple(events), _num(sched, "t_end", "schedule") if sched else 1.0)
    except ValueError as exc:
        raise ScenarioError(str(exc), line=_line(sched)) from None

    solver = doc.get("solver") or {}
    dt = _num(solver, "dt", "solver", default=1e-3) if solver else 1e-3
    if dt <= 0:
        raise ScenarioError("solver: dt must be positive", line=_line(solver))
    mode = str(solver.get("mode", "sequential")) if solver else "sequential"
    if mode not in MODES:
        raise ScenarioError(f"solver: mode must be one of {MODES}", line=_line(solver))
    return Scenario(str(doc.get("name", "unnamed")), feeder, schedule, dt, mode,
                    str(doc.get("description", "")))


def parse_scenario(text: str) -> Scenario:
    try:
        doc = yaml.load(text, Loader=_LineLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ScenarioError(f"malformed scenario: {getattr(exc, 'problem', exc)}",
                            line=mark.line + 1 if mark else None) from None
    return scenario_from_dict(doc)


def load_scenario(source) -> Scenario:
    """Load a scenario from a path or the name of a bundled scenario."""
    name = str(source)
    if name in BUNDLED and not Path(name).exists():
        text = resources.files("dnrsim.data").joinpath(f"{name}.yaml").read_text()
        return parse_scenario(text)
    path = Path(name)
    if not path.is_file():
        raise ScenarioError(f"no scenario file {path} (bundled: {', '.join(BUNDLED)})")
    return parse_scenario(path.read_text())


def _block(y: AdmittanceBlock) -> dict:
    return {"g": float(y.g), "b": float(y.b)}


def scenario_to_dict(scn: Scenario) -> dict:
    fd = scn.feeder
    lines = []
    for ln in fd.lines:
        entry = {"name": ln.name, "from": ln.from_node, "to": ln.to_node, **_block(ln.y)}
        if ln.shunt_from is not None:
            entry["b_shunt"] = float(ln.shunt_from.b + ln.shunt_to.b)
        lines.append(entry)
    gens = []
    for n, p in fd.generators.items():
        entry = {"node": n, "rating_mva": float(p.rating)}
        entry.update({k: float(getattr(p, k)) for k in _SG_FIELDS})
        gens.append(entry)
    events = []
    for ev in scn.schedule.events:
        entry = {"time": float(ev.time)}
        close = [s for s, c in ev.actions if c]
        opened = [s for s, c in ev.actions if not c]
        if close:
            entry["close"] = close
        if opened:
            entry["open"] = opened
        events.append(entry)
    return {
        "name": scn.name,
        "description": scn.description,
        "system": {"s_base_mva": float(fd.s_base), "f_nom_hz": float(fd.f_nom)},
        "nodes": list(fd.nodes),
        "lines": lines,
        "switches": [{"id": s.id, "from": s.from_node, "to": s.to_node, **_block(s.y),
                      "state": "closed" if s.closed else "open"} for s in fd.switches],
        "loads": [{"node": n, "p": float(ld.p0), "q": float(ld.q0), "v_nom": float(ld.v_nom),
                   "zip_p": [float(c) for c in ld.p_coeffs], "zip_q": [float(c) for c in ld.q_coeffs]}
                  for n, ld in fd.loads.items()],
        "generators": gens,
        "schedule": {"t_end": float(scn.schedule.t_end), "events": events},
        "solver": {"dt": float(scn.dt), "mode": scn.mode},
    }


def dump_scenario(scn: Scenario) -> str:
    return yaml.safe_dump(scenario_to_dict(scn), sort_keys=False)
