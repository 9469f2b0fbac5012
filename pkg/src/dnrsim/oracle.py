"""
Nonlinear time-domain reference simulator.

Partitioned DAE scheme: the machine states advance with classical RK4 and,
inside every stage, the network equations

    Y V = I_SG(x, V) - I_L(V)

are solved by Newton iteration to a tight residual. The device equations
are the same ones the analytical model is linearized from; only the
linearization and the step-current approximation differ.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .devices import N_SG_STATES, SgBank, ZipBank, F
from .errors import OracleDivergenceError
from .linear_sim import Schedule, Trajectory, baseline_magnitudes, event_sample, time_grid
from .network import (
    Feeder,
    apply_event,
    assemble_admittance,
    connectivity_check,
    dq_indices,
    energization_sources,
)
from .operating_point import solve_power_flow

log = logging.getLogger(__name__)


class _Network:
    """Algebraic part for a fixed topology."""

    def __init__(self, feeder: Feeder, y_full, energized, sgs: SgBank, sg_nodes, tol, max_iter):
        index = feeder.index
        self.nodes = [n for n in feeder.nodes if n in set(energized)]
        self.positions = np.array([index[n] for n in self.nodes])
        idx = dq_indices(self.positions)
        self.idx = idx
        self.y = np.asarray(y_full)[np.ix_(idx, idx)]
        local = {n: k for k, n in enumerate(self.nodes)}
        self.sg_local = np.array([local[n] for n in sg_nodes], dtype=int)
        load_nodes = [n for n in self.nodes if n in feeder.loads]
        self.load_local = np.array([local[n] for n in load_nodes], dtype=int)
        self.loads = ZipBank([feeder.loads[n] for n in load_nodes])
        self.sgs = sgs
        self.tol = tol
        self.max_iter = max_iter
        self._lu = None

    def residual(self, x, v):
        vv = v.reshape(-1, 2)
        inj = np.zeros_like(vv)
        np.add.at(inj, self.sg_local, self.sgs.current(x, vv[self.sg_local]))
        if self.loads.n:
            np.subtract.at(inj, self.load_local, self.loads.current(vv[self.load_local]))
        return self.y @ v - inj.ravel()

    def jacobian(self, x, v):
        vv = v.reshape(-1, 2)
        jac = self.y.copy()
        dsg = self.sgs.current_voltage_jacobian(x, vv[self.sg_local])
        for k, blk in zip(self.sg_local, dsg):
            jac[2 * k : 2 * k + 2, 2 * k : 2 * k + 2] -= blk
        if self.loads.n:
            dl = self.loads.jacobian(vv[self.load_local])
            for k, blk in zip(self.load_local, dl):
                jac[2 * k : 2 * k + 2, 2 * k : 2 * k + 2] += blk
        return jac

    def refresh(self, x, v):
        self._lu = sla.lu_factor(self.jacobian(x, v))

    def solve(self, x, v):
        """Newton iteration; chord steps first, fresh Jacobian if slow."""
        if self._lu is None:
            self.refresh(x, v)
        v = v.copy()
        fresh = False
        for it in range(self.max_iter):
            r = self.residual(x, v)
            err = np.max(np.abs(r))
            if err < self.tol:
                return v
            if not np.isfinite(err):
                break
            if it == 4 and not fresh:
                self.refresh(x, v)
                fresh = True
            v -= sla.lu_solve(self._lu, r)
        raise OracleDivergenceError(f"network Newton iteration stalled (residual {err:.3e})")


@dataclass
class _Stepper:
    sgs: SgBank
    net: _Network

    def rhs(self, x, v):
        v_sg = v.reshape(-1, 2)[self.net.sg_local]
        return self.sgs.derivatives(x, v_sg)

    def step(self, x, v, dt, depth=0):
        """One RK4 step from a consistent (x, v); returns the consistent pair at t + dt."""
        try:
            self.net.refresh(x, v)
            k1 = self.rhs(x, v)
            v2 = self.net.solve(x + 0.5 * dt * k1, v)
            k2 = self.rhs(x + 0.5 * dt * k1, v2)
            v3 = self.net.solve(x + 0.5 * dt * k2, v2)
            k3 = self.rhs(x + 0.5 * dt * k2, v3)
            v4 = self.net.solve(x + dt * k3, v3)
            k4 = self.rhs(x + dt * k3, v4)
            x_new = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            v_new = self.net.solve(x_new, v4)
        except OracleDivergenceError:
            if depth >= 4:
                raise
            log.debug("halving step (depth %d)", depth + 1)
            xm, vm = self.step(x, v, 0.5 * dt, depth + 1)
            return self.step(xm, vm, 0.5 * dt, depth + 1)
        return x_new, v_new


def simulate_nonlinear(feeder: Feeder, schedule: Schedule, dt: float = 1e-3, t_start: float = 0.0,
                       delta_scale: float = 1.0, tol: float = 1e-10, max_iter: int = 30,
                       keep_voltages: bool = False) -> Trajectory:
    """Integrate the full nonlinear model through ``schedule``.

    Returns absolute node voltage magnitudes in ``vmag`` and deviations from
    the initial steady state (same baselines as the linear simulator). With
    ``keep_voltages`` the dq node voltages (samples x 2N, zero where
    de-energized) are stored in ``flags["v_dq"]``.
    """
    states = feeder.initial_switch_states()
    op0 = solve_power_flow(feeder, states)
    base = baseline_magnitudes(feeder, op0, schedule)
    index = feeder.index
    times = time_grid(t_start, schedule.t_end, dt)
    n_samples = len(times)
    events = {event_sample(ev, t_start, dt): ev for ev in schedule.events}

    sg_nodes = list(op0.generators)
    sgs = SgBank([feeder.generators[n] for n in sg_nodes], feeder.s_base, feeder.f_nom,
                 [op0.generators[n].controls for n in sg_nodes])
    h = np.array([feeder.generators[n].system_inertia(feeder.s_base) for n in sg_nodes])
    coi = h / h.sum()

    y_nom = assemble_admittance(feeder, states).data
    y_eff = y_nom.copy()
    energized = list(op0.energized)
    x = np.array([op0.generators[n].x0 for n in sg_nodes])
    x_init = x.ravel().copy()
    v_full = op0.v0.copy()
    net = _Network(feeder, y_eff, energized, sgs, sg_nodes, tol, max_iter)
    stepper = _Stepper(sgs, net)
    v = v_full[net.idx].copy()

    vmag = np.full((len(feeder.nodes), n_samples), np.nan)
    delta_x = np.empty((n_samples, x.size))
    v_dq = np.zeros((n_samples, 2 * len(feeder.nodes))) if keep_voltages else None
    for k in range(n_samples):
        if k in events:
            ev = events[k]
            new_states = apply_event(feeder, states, ev)
            y_new = assemble_admittance(feeder, new_states).data
            d_y = delta_scale * (y_new - y_nom)
            new_energized = [n for n in feeder.nodes
                             if n in connectivity_check(feeder, new_states).energized_nodes]
            if delta_scale != 1.0 and set(new_energized) != set(energized):
                raise ValueError("scaled admittance changes require an unchanged energized set")
            v_full = np.zeros_like(v_full)
            v_full[net.idx] = v
            src = energization_sources(feeder, new_states, set(energized))
            for n in new_energized:
                if n not in energized:
                    s = index[src[n]]
                    v_full[2 * index[n] : 2 * index[n] + 2] = v_full[2 * s : 2 * s + 2]
            states, y_nom, energized = new_states, y_new, new_energized
            y_eff = y_eff + d_y
            net = _Network(feeder, y_eff, energized, sgs, sg_nodes, tol, max_iter)
            stepper = _Stepper(sgs, net)
            v = net.solve(x, v_full[net.idx])
        vv = v.reshape(-1, 2)
        vmag[net.positions, k] = np.hypot(vv[:, 0], vv[:, 1])
        delta_x[k] = x.ravel() - x_init
        if v_dq is not None:
            v_dq[k, net.idx] = v
        if k < n_samples - 1:
            x, v = stepper.step(x, v, dt)

    f_g = delta_x[:, N_SG_STATES * np.arange(len(sg_nodes)) + F]
    return Trajectory(
        times=times, delta_f=f_g @ coi, delta_vmag=vmag - base[:, None], node_ids=feeder.nodes,
        state_layout=tuple(sg_nodes), coi=coi, delta_x=delta_x, vmag=vmag,
        flags={"model": "nonlinear", "v_dq": v_dq, "y_effective": y_eff},
    )


@dataclass(frozen=True)
class RmseReport:
    per_node: dict
    average: float
    maximum: float
    frequency: float
    worst_node: str

    def format(self) -> str:
        lines = [
            "voltage_rmse_average_pu: %.6e" % self.average,
            "voltage_rmse_maximum_pu: %.6e" % self.maximum,
            "voltage_rmse_worst_node: %s" % self.worst_node,
            "frequency_rmse_pu: %.6e" % self.frequency,
            "",
            "node,voltage_rmse_pu",
        ]
        lines += ["%s,%.6e" % (n, r) for n, r in self.per_node.items()]
        return "\n".join(lines) + "\n"


def compare_rmse(estimated: Trajectory, actual: Trajectory) -> RmseReport:
    """Per-node RMSE of |V| deviation over samples where both are energized."""
    if estimated.times.shape != actual.times.shape or not np.allclose(
            estimated.times, actual.times, rtol=0.0, atol=1e-12):
        raise ValueError("trajectories are sampled on different time grids")
    if tuple(estimated.node_ids) != tuple(actual.node_ids):
        raise ValueError("trajectories cover different nodes")
    per_node = {}
    for k, n in enumerate(estimated.node_ids):
        a, b = estimated.delta_vmag[k], actual.delta_vmag[k]
        ok = ~(np.isnan(a) | np.isnan(b))
        if ok.any():
            per_node[n] = float(np.sqrt(np.mean((a[ok] - b[ok]) ** 2)))
    values = np.array(list(per_node.values()))
    worst = max(per_node, key=per_node.get) if per_node else ""
    freq = float(np.sqrt(np.mean((estimated.delta_f - actual.delta_f) ** 2)))
    return RmseReport(per_node, float(values.mean()) if values.size else 0.0,
                      float(values.max()) if values.size else 0.0, freq, worst)
