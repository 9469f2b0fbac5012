"""Pre-event steady state: Newton-Raphson power flow with ZIP loads."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .devices import DELTA, SgControls, SgOperatingPoint, sg_equilibrium, zip_power, zip_power_slope
from .errors import LinearizationAnchorError, PowerFlowError, UnsolvableIslandError
from .network import Feeder, assemble_admittance, connectivity_check, dq_indices


@dataclass(frozen=True)
class OperatingPoint:
    """Steady state over all feeder nodes; de-energized nodes hold zeros."""

    node_ids: tuple
    v0: np.ndarray  # 2N dq voltages
    i0: np.ndarray  # 2N dq injections, Y_B V0
    generators: Mapping[str, SgOperatingPoint]
    load_points: Mapping[str, tuple]  # node -> (P0, Q0, |V|0)
    energized: tuple  # node ids, feeder order
    references: tuple  # angle-reference generator node per island
    switch_states: Mapping[str, bool] = field(default_factory=dict)
    mismatch: float = 0.0
    iterations: int = 0

    def voltage(self, node) -> complex:
        k = self.node_ids.index(node)
        return complex(self.v0[2 * k], self.v0[2 * k + 1])

    @property
    def vmag(self) -> np.ndarray:
        return np.hypot(self.v0[0::2], self.v0[1::2])

    @property
    def state_vector(self) -> np.ndarray:
        return np.concatenate([self.generators[n].x0 for n in self.generators])

    def total_generation(self) -> complex:
        return sum(complex(g.p, g.q) for g in self.generators.values())

    def total_load(self) -> complex:
        return sum(complex(p, q) for p, q, _ in self.load_points.values())


def pick_reference(feeder: Feeder, component) -> str:
    """Largest-rating generator in the component; ties go to feeder order."""
    gens = [n for n in component if n in feeder.generators]
    return max(gens, key=lambda n: (feeder.generators[n].rating, -feeder.index[n]))


def _load_arrays(feeder, nodes):
    return [feeder.loads.get(n) for n in nodes]


def _mismatch(ybus, vm, va, loads, p_gen):
    v = vm * np.exp(1j * va)
    s_calc = v * np.conj(ybus @ v)
    p_l = np.zeros(len(vm))
    q_l = np.zeros(len(vm))
    for k, ld in enumerate(loads):
        if ld is not None:
            p_l[k], q_l[k] = zip_power(ld, vm[k])
    s_mis = s_calc + (p_l + 1j * q_l) - p_gen
    return v, s_calc, s_mis, p_l, q_l


def solve_power_flow(feeder: Feeder, switch_states=None, tol: float = 1e-11,
                     max_iter: int = 50) -> OperatingPoint:
    """Full Newton-Raphson on polar mismatch equations, flat start.

    Each energized island uses its largest generator as slack and angle
    reference; the other generators are PV buses holding ``p_set`` and
    ``v_set``. The returned dq frame has every reference terminal voltage on
    the d axis.
    """
    states = feeder.initial_switch_states() if switch_states is None else dict(switch_states)
    conn = connectivity_check(feeder, states)
    if not conn.energized:
        raise UnsolvableIslandError("no island contains a generator")
    nodes = [n for n in feeder.nodes if n in conn.energized_nodes]
    pos = {n: k for k, n in enumerate(nodes)}
    full = assemble_admittance(feeder, states)
    ybus = full.restrict(nodes).to_complex()
    n = len(nodes)

    refs = tuple(pick_reference(feeder, comp) for comp in conn.energized)
    ref_idx = [pos[r] for r in refs]
    gen_idx = [pos[g] for g in nodes if g in feeder.generators]
    pvpq = [k for k in range(n) if k not in ref_idx]
    pq = [k for k in range(n) if k not in gen_idx]
    loads = _load_arrays(feeder, nodes)

    p_gen = np.zeros(n)
    vm = np.ones(n)
    va = np.zeros(n)
    for g in gen_idx:
        params = feeder.generators[nodes[g]]
        vm[g] = params.v_set
        if g not in ref_idx:
            p_gen[g] = params.p_set

    npvpq, npq = len(pvpq), len(pq)
    it = 0
    while True:
        v, s_calc, s_mis, _, _ = _mismatch(ybus, vm, va, loads, p_gen)
        fvec = np.concatenate((s_mis.real[pvpq], s_mis.imag[pq]))
        err = float(np.max(np.abs(fvec))) if fvec.size else 0.0
        if err < tol:
            break
        if it >= max_iter or not np.isfinite(err):
            raise PowerFlowError(
                f"power flow did not converge in {it} iterations (mismatch {err:.3e} pu)",
                mismatch=err, iterations=it,
            )
        i = ybus @ v
        vnorm = np.exp(1j * va)
        ds_dvm = np.diag(v) @ np.conj(ybus @ np.diag(vnorm)) + np.diag(np.conj(i) * vnorm)
        ds_dva = 1j * np.diag(v) @ np.conj(np.diag(i) - ybus @ np.diag(v))
        for k, ld in enumerate(loads):
            if ld is not None:
                dp, dq = zip_power_slope(ld, vm[k])
                ds_dvm[k, k] += dp + 1j * dq
        jac = np.block([
            [ds_dva.real[np.ix_(pvpq, pvpq)], ds_dvm.real[np.ix_(pvpq, pq)]],
            [ds_dva.imag[np.ix_(pq, pvpq)], ds_dvm.imag[np.ix_(pq, pq)]],
        ])
        dx = np.linalg.solve(jac, -fvec)
        va[pvpq] += dx[:npvpq]
        vm[pq] += dx[npvpq : npvpq + npq]
        it += 1

    v, s_calc, s_mis, p_l, q_l = _mismatch(ybus, vm, va, loads, p_gen)

    # rotate each island so its reference terminal voltage has zero angle
    for comp, r in zip(conn.energized, refs):
        idx = [pos[m] for m in comp]
        v[idx] *= np.exp(-1j * np.angle(v[pos[r]]))
    i_inj = ybus @ v

    v0 = np.zeros(2 * len(feeder.nodes))
    fidx = dq_indices([feeder.index[m] for m in nodes])
    v0[fidx] = np.column_stack((v.real, v.imag)).ravel()
    i0 = full.data @ v0

    generators = {}
    for m in nodes:
        if m not in feeder.generators:
            continue
        k = pos[m]
        s_load = complex(p_l[k], q_l[k])
        s_gen = v[k] * np.conj(i_inj[k]) + s_load
        ig = np.conj(s_gen / v[k])
        generators[m] = sg_equilibrium(
            feeder.generators[m], (v[k].real, v[k].imag), (ig.real, ig.imag),
            feeder.s_base, feeder.f_nom,
        )
    load_points = {m: (float(p_l[pos[m]]), float(q_l[pos[m]]), float(vm[pos[m]]))
                   for m in nodes if m in feeder.loads}
    return OperatingPoint(
        node_ids=feeder.nodes, v0=v0, i0=i0, generators=generators,
        load_points=load_points, energized=tuple(nodes), references=refs,
        switch_states=states, mismatch=err, iterations=it,
    )


def node_mismatch(feeder: Feeder, op: OperatingPoint) -> float:
    """Independent residual check of a solved operating point.

    Re-evaluates I = Y V and S = V conj(I) at every energized node against
    generator and ZIP-load injections; returns the largest |P| or |Q| error.
    """
    y = assemble_admittance(feeder, op.switch_states).to_complex()
    v = op.v0[0::2] + 1j * op.v0[1::2]
    s = v * np.conj(y @ v)
    worst = 0.0
    for k, n in enumerate(feeder.nodes):
        if n not in op.energized:
            continue
        inj = 0j
        if n in op.generators:
            g = op.generators[n]
            inj += complex(g.p, g.q)
        if n in feeder.loads:
            p, q = zip_power(feeder.loads[n], abs(v[k]))
            inj -= complex(p, q)
        worst = max(worst, abs((s[k] - inj).real), abs((s[k] - inj).imag))
    return worst


def rotate_operating_point(op: OperatingPoint, angle: float, nodes=None) -> OperatingPoint:
    """Rotate the dq frame of ``nodes`` (default: all) by ``angle`` radians."""
    nodes = set(op.node_ids if nodes is None else nodes)
    rot = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
    v0 = op.v0.copy().reshape(-1, 2)
    i0 = op.i0.copy().reshape(-1, 2)
    for k, n in enumerate(op.node_ids):
        if n in nodes:
            v0[k] = rot @ v0[k]
            i0[k] = rot @ i0[k]
    gens = {}
    for n, g in op.generators.items():
        if n in nodes:
            x0 = g.x0.copy()
            x0[DELTA] += angle
            c = g.controls
            gens[n] = SgOperatingPoint(x0, rot @ g.v, rot @ g.i,
                                       SgControls(c.p_set, c.v_ref, c.delta_set + angle))
        else:
            gens[n] = g
    return OperatingPoint(op.node_ids, v0.ravel(), i0.ravel(), gens, op.load_points,
                          op.energized, op.references, op.switch_states, op.mismatch, op.iterations)


def reanchor(feeder: Feeder, switch_states, reference_op: OperatingPoint) -> OperatingPoint:
    """Steady state of a reconfigured feeder under the original controllers.

    After settling, every non-reference generator is back at ``p_set`` (its
    speed error is zero) and every terminal voltage at ``v_ref``, so the
    settled state is a power-flow solution. The reference machine carries the
    remaining imbalance through its angle integrator, which fixes the
    absolute rotation of the frame.
    """
    op = solve_power_flow(feeder, switch_states)
    conn = connectivity_check(feeder, switch_states)
    gens = dict(op.generators)
    new = op
    for comp, ref in zip(conn.energized, op.references):
        old = reference_op.generators.get(ref)
        if old is None:
            raise LinearizationAnchorError(f"reference generator {ref} has no prior anchor")
        params = feeder.generators[ref]
        k_if = params.k_if * params.rating / feeder.s_base
        for other in comp:
            if other != ref and other in feeder.generators and feeder.generators[other].k_if != 0.0:
                raise LinearizationAnchorError(
                    f"generator {other} has integral frequency control but is not the island reference; "
                    "its settled dispatch is not a power-flow solution"
                )
        if k_if <= 0.0:
            raise LinearizationAnchorError(
                f"reference generator {ref} needs k_if > 0 for the settled frequency to be nominal"
            )
        omega_b = 2.0 * math.pi * feeder.f_nom
        c = old.controls
        target = c.delta_set - omega_b * (gens[ref].p - c.p_set) / k_if
        new = rotate_operating_point(new, target - new.generators[ref].x0[DELTA], comp)
    # restore the original controller references
    fixed = {}
    for n, g in new.generators.items():
        old = reference_op.generators.get(n)
        controls = old.controls if old is not None else g.controls
        fixed[n] = SgOperatingPoint(g.x0, g.v, g.i, controls)
    return OperatingPoint(new.node_ids, new.v0, new.i0, fixed, new.load_points, new.energized,
                          new.references, new.switch_states, new.mismatch, new.iterations)
