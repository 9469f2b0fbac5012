"""Time-domain response of the analytical model to a schedule of switching events."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .devices import (
    F,
    N_SG_STATES,
    aggregate_devices,
    linearize_sg,
    linearize_zip,
    reference_frame,
    zip_current,
)
from .network import (
    Feeder,
    SwitchEvent,
    apply_event,
    assemble_admittance,
    connectivity_check,
    dq_indices,
    energization_sources,
)
from .operating_point import OperatingPoint, reanchor, solve_power_flow
from .statespace import LinearSystem, build_system, build_z

log = logging.getLogger(__name__)

MODES = ("sequential", "single-anchor")


@dataclass(frozen=True)
class Schedule:
    events: tuple
    t_end: float

    def __post_init__(self):
        events = tuple(self.events)
        object.__setattr__(self, "events", events)
        last = -math.inf
        for ev in events:
            if not isinstance(ev, SwitchEvent):
                raise TypeError("schedule entries must be SwitchEvent")
            if ev.time <= last:
                raise ValueError("event times must be strictly increasing")
            if not 0.0 <= ev.time < self.t_end:
                raise ValueError(f"event at t={ev.time} lies outside [0, {self.t_end})")
            last = ev.time


@dataclass
class Trajectory:
    """Uniformly sampled response.

    ``delta_vmag`` has shape (N, samples) and is NaN where a node is not
    energized; ``delta_x`` has shape (samples, states) and is measured from
    the initial steady state.
    """

    times: np.ndarray
    delta_f: np.ndarray
    delta_vmag: np.ndarray
    node_ids: tuple
    state_layout: tuple = ()
    coi: np.ndarray = None
    delta_x: np.ndarray = None
    vmag: np.ndarray = None
    flags: dict = field(default_factory=dict)
    models: tuple = ()  # (start time, LinearSystem, step current) per segment

    @property
    def energized(self) -> np.ndarray:
        return ~np.isnan(self.delta_vmag)


def time_grid(t_start: float, t_end: float, dt: float) -> np.ndarray:
    if dt <= 0:
        raise ValueError("dt must be positive")
    n = int(math.floor((t_end - t_start) / dt + 1e-9)) + 1
    return t_start + dt * np.arange(n)


def event_sample(event: SwitchEvent, t_start: float, dt: float) -> int:
    k = int(round((event.time - t_start) / dt))
    if abs(t_start + k * dt - event.time) > 1e-9 * max(1.0, abs(event.time)):
        raise ValueError(f"event at t={event.time} does not fall on the dt={dt} grid")
    return k


def baseline_magnitudes(feeder: Feeder, op0: OperatingPoint, schedule: Schedule) -> np.ndarray:
    """Reference |V| per node against which deviations are reported.

    Initially energized nodes use their initial magnitude; nodes energized
    by a later event inherit the baseline of the node that feeds them.
    """
    base = np.full(len(feeder.nodes), np.nan)
    index = feeder.index
    for n in op0.energized:
        base[index[n]] = op0.vmag[index[n]]
    states = dict(op0.switch_states)
    energized = set(op0.energized)
    for ev in schedule.events:
        states = apply_event(feeder, states, ev)
        src = energization_sources(feeder, states, energized)
        for n, s in src.items():
            if np.isnan(base[index[n]]):
                base[index[n]] = base[index[s]]
        energized = connectivity_check(feeder, states).energized_nodes
    return base


def frame_weights(feeder: Feeder, switch_states, sg_nodes) -> np.ndarray:
    """Row g: inertia weights of the rotors defining generator g's frame.

    The frame follows the machines of the island that have no frequency
    integrator; an island made only of integrating machines uses all of them.
    """
    sg_nodes = list(sg_nodes)
    pos = {n: g for g, n in enumerate(sg_nodes)}
    w = np.zeros((len(sg_nodes), len(sg_nodes)))
    for comp in connectivity_check(feeder, switch_states).energized:
        members = [pos[n] for n in comp if n in pos]
        followers = [g for g in members if feeder.generators[sg_nodes[g]].k_if == 0.0]
        anchors = followers or members
        h = np.array([feeder.generators[sg_nodes[g]].system_inertia(feeder.s_base) for g in anchors])
        w[np.ix_(members, anchors)] = h / h.sum()
    return w


def build_linear_model(feeder: Feeder, y_full, energized, v_anchor, sg_ops, switch_states) -> LinearSystem:
    """Linearize devices and network of the energized nodes about ``v_anchor``.

    The network is expressed in a rotor-angle frame per island (see
    :func:`frame_weights` and :func:`dnrsim.devices.reference_frame`).
    """
    index = feeder.index
    nodes = [n for n in feeder.nodes if n in set(energized)]
    idx = dq_indices([index[n] for n in nodes])
    y_a = np.asarray(y_full)[np.ix_(idx, idx)]
    sg_lins = {
        n: linearize_sg(feeder.generators[n], sg_ops[n], feeder.s_base, feeder.f_nom)
        for n in nodes if n in feeder.generators
    }
    load_blocks = {
        n: linearize_zip(feeder.loads[n], v_anchor[2 * index[n] : 2 * index[n] + 2])
        for n in nodes if n in feeder.loads
    }
    agg = aggregate_devices(sg_lins, load_blocks, nodes)
    agg = reference_frame(agg, frame_weights(feeder, switch_states, agg.sg_nodes))
    z = build_z(agg.y_l, y_a, agg.y_sg)
    inertias = [feeder.generators[n].system_inertia(feeder.s_base) for n in agg.sg_nodes]
    return build_system(agg, z, v_anchor[idx], inertias)


def rk4_propagator(a: np.ndarray, dt: float):
    """Exact one-step map of classical RK4 for dx/dt = a x + w, w constant.

    Returns (phi, gamma) with x_next = phi x + gamma w.
    """
    eye = np.eye(a.shape[0])
    ha = dt * a
    ha2 = ha @ ha
    ha3 = ha2 @ ha
    phi = eye + ha + ha2 / 2.0 + ha3 / 6.0 + ha3 @ ha / 24.0
    gamma = dt * (eye + ha / 2.0 + ha2 / 6.0 + ha3 / 24.0)
    return phi, gamma


@dataclass
class _Segment:
    k0: int
    k1: int  # exclusive
    system: LinearSystem
    u: np.ndarray
    anchor_mag: np.ndarray
    positions: np.ndarray
    x_offset: np.ndarray


def simulate_linear(feeder: Feeder, schedule: Schedule, dt: float = 1e-3, mode: str = "sequential",
                    t_start: float = 0.0, delta_scale: float = 1.0) -> Trajectory:
    """Integrate the analytical model through ``schedule``.

    In ``single-anchor`` mode every event is linearized about the initial
    steady state and step currents accumulate. In ``sequential`` mode the
    operating point is re-solved for the settled pre-event topology before
    each event after the first. ``delta_scale`` multiplies every admittance
    change (used for small-signal studies; events must then keep the set of
    energized nodes unchanged).
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    states = feeder.initial_switch_states()
    op0 = solve_power_flow(feeder, states)
    base = baseline_magnitudes(feeder, op0, schedule)
    index = feeder.index
    times = time_grid(t_start, schedule.t_end, dt)
    n_samples = len(times)
    events = {event_sample(ev, t_start, dt): (i, ev) for i, ev in enumerate(schedule.events)}

    y_nom = assemble_admittance(feeder, states).data
    y_eff = y_nom.copy()
    energized = list(op0.energized)
    anchor = op0
    v_anchor = op0.v0.copy()
    x_init = op0.state_vector
    x_anchor = x_init.copy()
    system = build_linear_model(feeder, y_eff, energized, v_anchor, anchor.generators, states)
    ns = system.n_states
    x = np.zeros(ns)
    u = np.zeros(2 * len(energized))
    abscissa = system.spectral_abscissa

    history = np.empty((n_samples, ns))
    segments = []

    def open_segment(k0):
        pos = np.array([index[n] for n in system.node_ids])
        mag = np.hypot(v_anchor[2 * pos], v_anchor[2 * pos + 1])
        segments.append(_Segment(k0, n_samples, system, u.copy(), mag, pos, x_anchor - x_init))
        phi, gamma = rk4_propagator(system.a, dt)
        return phi, gamma @ (system.b @ u)

    phi, drive = open_segment(0)
    for k in range(n_samples):
        if k in events:
            seq, ev = events[k]
            new_states = apply_event(feeder, states, ev)
            y_new = assemble_admittance(feeder, new_states).data
            d_y = delta_scale * (y_new - y_nom)
            new_energized = [n for n in feeder.nodes
                             if n in connectivity_check(feeder, new_states).energized_nodes]
            gained = [n for n in new_energized if n not in energized]
            lost = [n for n in energized if n not in new_energized]
            if delta_scale != 1.0 and (gained or lost):
                raise ValueError("scaled admittance changes require an unchanged energized set")

            if mode == "sequential" and seq > 0:
                if delta_scale != 1.0:
                    raise ValueError("sequential re-anchoring is undefined for scaled admittance changes")
                anchor = reanchor(feeder, states, op0)
                x_abs = x_anchor + x
                x_anchor = anchor.state_vector
                x = x_abs - x_anchor
                v_anchor = anchor.v0.copy()
                system = build_linear_model(feeder, y_eff, energized, v_anchor, anchor.generators, states)
                u = np.zeros(2 * len(energized))

            v_event = v_anchor.copy()
            if mode == "sequential":
                pos = dq_indices([index[n] for n in system.node_ids])
                v_event[pos] += system.delta_v(x, u)[0]
            src = energization_sources(feeder, new_states, set(energized))
            for n in gained:
                s = index[src[n]]
                v_event[2 * index[n] : 2 * index[n] + 2] = v_event[2 * s : 2 * s + 2]
                v_anchor[2 * index[n] : 2 * index[n] + 2] = v_anchor[2 * s : 2 * s + 2]
            di_full = d_y @ v_event
            for n in gained:
                if n in feeder.loads:
                    di_full[2 * index[n] : 2 * index[n] + 2] += zip_current(
                        feeder.loads[n], v_event[2 * index[n] : 2 * index[n] + 2])
            log.debug("event %d at t=%g: |dI_T|max=%.3e", seq, ev.time, np.max(np.abs(di_full)))

            old_pos = {n: j for j, n in enumerate(energized)}
            carried = np.zeros(2 * len(new_energized))
            if mode == "single-anchor":
                for j, n in enumerate(new_energized):
                    if n in old_pos:
                        carried[2 * j : 2 * j + 2] = u[2 * old_pos[n] : 2 * old_pos[n] + 2]
            u = carried + di_full[dq_indices([index[n] for n in new_energized])]
            states, y_nom, energized = new_states, y_new, new_energized
            y_eff = y_eff + d_y
            system = build_linear_model(feeder, y_eff, energized, v_anchor, anchor.generators, states)
            abscissa = max(abscissa, system.spectral_abscissa)
            segments[-1].k1 = k
            phi, drive = open_segment(k)
        history[k] = x
        x = phi @ x + drive

    delta_f = np.empty(n_samples)
    delta_vmag = np.full((len(feeder.nodes), n_samples), np.nan)
    vmag = np.full((len(feeder.nodes), n_samples), np.nan)
    delta_x = np.empty((n_samples, ns))
    for seg in segments:
        xs = history[seg.k0 : seg.k1]
        df, dvm = seg.system.outputs(xs, seg.u)
        delta_f[seg.k0 : seg.k1] = df
        cols = np.ix_(seg.positions, np.arange(seg.k0, seg.k1))
        vmag[cols] = seg.anchor_mag[:, None] + dvm.T
        delta_vmag[cols] = vmag[cols] - base[seg.positions][:, None]
        delta_x[seg.k0 : seg.k1] = xs + seg.x_offset
    if abscissa >= 0.0:
        log.warning("linear model has an eigenvalue with real part %.3e >= 0", abscissa)
    return Trajectory(
        times=times, delta_f=delta_f, delta_vmag=delta_vmag, node_ids=feeder.nodes,
        state_layout=system.state_layout, coi=system.coi.h, delta_x=delta_x, vmag=vmag,
        flags={"unstable": bool(abscissa >= 0.0), "spectral_abscissa": abscissa, "mode": mode},
        models=tuple((float(times[seg.k0]), seg.system, seg.u) for seg in segments),
    )


def extract_sg_frequencies(trajectory: Trajectory) -> np.ndarray:
    """Per-generator speed deviations, shape (samples, N_G)."""
    if trajectory.delta_x is None:
        raise ValueError("trajectory does not retain the state history")
    ng = len(trajectory.state_layout)
    return trajectory.delta_x[:, N_SG_STATES * np.arange(ng) + F]
