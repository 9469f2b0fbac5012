"""
Device models: synchronous generators and ZIP loads.

Synchronous generator
---------------------
Third-order (flux-decay) machine with a droop + PI governor, valve and
turbine lags, and a PI voltage regulator behind a first-order exciter.
All quantities below are on the system base; ``f`` is the per-unit speed
deviation and the network frame rotates at nominal frequency.

State vector per machine (fixed order)::

    x = [f, delta, Pm, Pv, fe, Eq', Efd, Ve]

    df/dt     = (Pm - Te - D f) / (2 H)
    ddelta/dt = w_b f
    dPm/dt    = (Pv - Pm) / T_t
    dPv/dt    = (P_set - (1/R + k_pf) fe - k_if (delta - delta_set) / w_b - Pv) / T_v
    dfe/dt    = (f - fe) / T_f
    dEq'/dt   = (Efd - Eq' - (X_d - X'_d) i_d) / T'_d0
    dEfd/dt   = (k_pv (V_ref - |V|) + Ve - Efd) / T_e
    dVe/dt    = k_iv (V_ref - |V|)

``fe`` is the measured (transducer-filtered) speed. The integral of the
speed error equals ``(delta - delta_set) / w_b``, so the rotor angle doubles
as the governor's integrator.

Stator (no resistance, no subtransient effects), machine frame rotated by
``psi = delta - pi/2`` from the network frame::

    v_d = X_q i_q,    v_q = Eq' - X'_d i_d,    Te = v_d i_d + v_q i_q

Current sign convention
-----------------------
``SgBank.current`` returns the current injected into the network. The
linearization reports ``c = -dI/dx`` and ``y = -dI/dV`` so that the
absorbed current is ``c dx + y dV``; with this choice the closed loop is
``dV = Z (C_SG dX + dI_T)`` with ``Z = (Y_L - Y_A - Y_SG)^-1`` and ``Y_L``
the injection Jacobian of the loads.

ZIP load
--------
``P = p0 (a_Z (|V|/V_n)^2 + a_I |V|/V_n + a_P)`` (same for Q); the drawn
current is ``conj(S) / conj(V)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateVoltageError, LinearizationAnchorError, StructuralError

N_SG_STATES = 8
STATE_NAMES = ("f", "delta", "pm", "pv", "fe", "eq_prime", "efd", "ve")
F, DELTA, PM, PV, FE, EQP, EFD, VE = range(N_SG_STATES)

ZIP_GUARD = 0.5


@dataclass(frozen=True)
class SgParams:
    """Synchronous generator data on the machine base.

    ``p_set`` (scheduled active power) and ``v_set`` (terminal voltage
    setpoint) are on the system base. ``p_set`` is ignored for the machine
    acting as an island's angle reference.
    """

    rating: float  # MVA
    h: float = 3.0
    d: float = 20.0
    droop: float = 0.05
    t_t: float = 0.5
    t_v: float = 0.2
    t_f: float = 0.02
    k_pf: float = 0.0
    k_if: float = 0.0
    k_pv: float = 20.0
    k_iv: float = 200.0
    t_e: float = 0.02
    x_d: float = 1.8
    x_d_prime: float = 0.3
    x_q: float = 0.3
    t_d0_prime: float = 5.0
    p_set: float = 0.0
    v_set: float = 1.0

    def __post_init__(self):
        if self.rating <= 0:
            raise ValueError("SG rating must be positive")
        if self.h <= 0:
            raise ValueError("H must be positive")
        if self.t_d0_prime <= 0:
            raise ValueError("T'_d0 must be positive")
        if not self.x_d >= self.x_d_prime > 0:
            raise ValueError("require X_d >= X'_d > 0")
        if self.x_q <= 0:
            raise ValueError("X_q must be positive")
        if self.droop <= 0:
            raise ValueError("droop R must be positive")
        for name in ("t_t", "t_v", "t_f", "t_e"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def system_inertia(self, s_base: float) -> float:
        """Inertia constant referred to the system base."""
        return self.h * self.rating / s_base


@dataclass(frozen=True)
class ZipLoadParams:
    p0: float
    q0: float
    v_nom: float = 1.0
    p_coeffs: tuple = (0.5, 0.3, 0.2)
    q_coeffs: tuple = (0.5, 0.3, 0.2)

    def __post_init__(self):
        object.__setattr__(self, "p_coeffs", tuple(float(c) for c in self.p_coeffs))
        object.__setattr__(self, "q_coeffs", tuple(float(c) for c in self.q_coeffs))
        for label, coeffs in (("P", self.p_coeffs), ("Q", self.q_coeffs)):
            if len(coeffs) != 3:
                raise ValueError(f"{label} ZIP coefficients need three entries")
            if min(coeffs) < 0:
                raise ValueError(f"{label} ZIP coefficients must be non-negative")
            if abs(sum(coeffs) - 1.0) > 1e-9:
                raise ValueError(f"{label} ZIP coefficients sum to {sum(coeffs):g}, not 1")
        if self.v_nom <= 0:
            raise ValueError("v_nom must be positive")


@dataclass(frozen=True)
class SgControls:
    """Controller references frozen at the initial steady state."""

    p_set: float
    v_ref: float
    delta_set: float


@dataclass(frozen=True)
class SgOperatingPoint:
    """Equilibrium of one machine: states, terminal quantities, controls."""

    x0: np.ndarray
    v: np.ndarray  # terminal dq voltage (network frame)
    i: np.ndarray  # injected dq current (network frame)
    controls: SgControls

    @property
    def p(self) -> float:
        return float(self.v @ self.i)

    @property
    def q(self) -> float:
        return float(self.v[1] * self.i[0] - self.v[0] * self.i[1])


@dataclass(frozen=True)
class SgLinearization:
    a: np.ndarray  # 8x8
    b: np.ndarray  # 8x2
    c: np.ndarray  # 2x8
    y: np.ndarray  # 2x2


class SgBank:
    """Vectorized machine equations for a group of generators (system base)."""

    def __init__(self, params, s_base, f_nom, controls):
        params = list(params)
        controls = list(controls)
        if len(params) != len(controls):
            raise ValueError("one controls entry per generator required")
        scale = np.array([p.rating / s_base for p in params], dtype=float)

        def arr(name):
            return np.array([getattr(p, name) for p in params], dtype=float)

        self.n = len(params)
        self.omega_b = 2.0 * math.pi * f_nom
        self.h = arr("h") * scale
        self.d = arr("d") * scale
        self.droop = arr("droop") / scale
        self.k_pf = arr("k_pf") * scale
        self.k_if = arr("k_if") * scale
        self.t_t, self.t_v, self.t_f, self.t_e = arr("t_t"), arr("t_v"), arr("t_f"), arr("t_e")
        self.k_pv, self.k_iv = arr("k_pv"), arr("k_iv")
        self.x_d = arr("x_d") / scale
        self.x_dp = arr("x_d_prime") / scale
        self.x_q = arr("x_q") / scale
        self.t_d0p = arr("t_d0_prime")
        self.p_set = np.array([c.p_set for c in controls], dtype=float)
        self.v_ref = np.array([c.v_ref for c in controls], dtype=float)
        self.delta_set = np.array([c.delta_set for c in controls], dtype=float)

    def _frame(self, x, v):
        psi = x[:, DELTA] - 0.5 * math.pi
        c, s = np.cos(psi), np.sin(psi)
        vd = v[:, 0] * c + v[:, 1] * s
        vq = -v[:, 0] * s + v[:, 1] * c
        i_d = (x[:, EQP] - vq) / self.x_dp
        i_q = vd / self.x_q
        return c, s, vd, vq, i_d, i_q

    def current(self, x, v):
        """Injected network-frame current, shape (n, 2)."""
        c, s, _, _, i_d, i_q = self._frame(x, v)
        return np.column_stack((i_d * c - i_q * s, i_d * s + i_q * c))

    def electrical_power(self, x, v):
        _, _, vd, vq, i_d, i_q = self._frame(x, v)
        return vd * i_d + vq * i_q

    def derivatives(self, x, v):
        _, _, vd, vq, i_d, i_q = self._frame(x, v)
        te = vd * i_d + vq * i_q
        vmag = np.hypot(v[:, 0], v[:, 1])
        verr = self.v_ref - vmag
        dx = np.empty_like(x)
        dx[:, F] = (x[:, PM] - te - self.d * x[:, F]) / (2.0 * self.h)
        dx[:, DELTA] = self.omega_b * x[:, F]
        dx[:, PM] = (x[:, PV] - x[:, PM]) / self.t_t
        p_ref = (
            self.p_set
            - (1.0 / self.droop + self.k_pf) * x[:, FE]
            - self.k_if * (x[:, DELTA] - self.delta_set) / self.omega_b
        )
        dx[:, PV] = (p_ref - x[:, PV]) / self.t_v
        dx[:, FE] = (x[:, F] - x[:, FE]) / self.t_f
        dx[:, EQP] = (x[:, EFD] - x[:, EQP] - (self.x_d - self.x_dp) * i_d) / self.t_d0p
        dx[:, EFD] = (self.k_pv * verr + x[:, VE] - x[:, EFD]) / self.t_e
        dx[:, VE] = self.k_iv * verr
        return dx

    def current_voltage_jacobian(self, x, v):
        """dI/dV for every machine, shape (n, 2, 2)."""
        c, s, *_ = self._frame(x, v)
        out = np.empty((self.n, 2, 2))
        for g in range(self.n):
            rot = np.array([[c[g], -s[g]], [s[g], c[g]]])
            inner = np.array([[0.0, -1.0 / self.x_dp[g]], [1.0 / self.x_q[g], 0.0]])
            out[g] = rot @ inner @ rot.T
        return out

    def jacobians(self, g, x, v):
        """Analytic (df/dx, df/dV, dI/dx, dI/dV) of machine ``g``."""
        c, s, vd, vq, i_d, i_q = (a[g] for a in self._frame(x, v))
        xdp, xq = self.x_dp[g], self.x_q[g]
        rot = np.array([[c, -s], [s, c]])
        rot_t = rot.T  # network -> machine

        # machine-frame voltage sensitivities
        dvdq_dv = rot_t  # rows (vd, vq), cols (VD, VQ)
        dvdq_ddelta = np.array([vq, -vd])
        # currents as functions of (vd, vq, Eq')
        didq_dvdq = np.array([[0.0, -1.0 / xdp], [1.0 / xq, 0.0]])
        didq_deq = np.array([1.0 / xdp, 0.0])

        didq_dv = didq_dvdq @ dvdq_dv
        didq_ddelta = didq_dvdq @ dvdq_ddelta

        # Te = vd id + vq iq
        dte_dvdq = np.array([i_d, i_q]) + np.array([vd, vq]) @ didq_dvdq
        dte_dv = dte_dvdq @ dvdq_dv
        dte_ddelta = dte_dvdq @ dvdq_ddelta
        dte_deq = np.array([vd, vq]) @ didq_deq

        vmag = math.hypot(v[g, 0], v[g, 1])
        dvmag_dv = v[g] / vmag

        h2 = 2.0 * self.h[g]
        a = np.zeros((N_SG_STATES, N_SG_STATES))
        b = np.zeros((N_SG_STATES, 2))
        a[F, F] = -self.d[g] / h2
        a[F, PM] = 1.0 / h2
        a[F, DELTA] = -dte_ddelta / h2
        a[F, EQP] = -dte_deq / h2
        b[F] = -dte_dv / h2
        a[DELTA, F] = self.omega_b
        a[PM, PM] = -1.0 / self.t_t[g]
        a[PM, PV] = 1.0 / self.t_t[g]
        a[PV, PV] = -1.0 / self.t_v[g]
        a[PV, FE] = -(1.0 / self.droop[g] + self.k_pf[g]) / self.t_v[g]
        a[PV, DELTA] = -self.k_if[g] / self.omega_b / self.t_v[g]
        a[FE, F] = 1.0 / self.t_f[g]
        a[FE, FE] = -1.0 / self.t_f[g]
        kd = (self.x_d[g] - xdp) / self.t_d0p[g]
        a[EQP, EQP] = -1.0 / self.t_d0p[g] - kd * didq_deq[0]
        a[EQP, EFD] = 1.0 / self.t_d0p[g]
        a[EQP, DELTA] = -kd * didq_ddelta[0]
        b[EQP] = -kd * didq_dv[0]
        a[EFD, EFD] = -1.0 / self.t_e[g]
        a[EFD, VE] = 1.0 / self.t_e[g]
        b[EFD] = -self.k_pv[g] * dvmag_dv / self.t_e[g]
        b[VE] = -self.k_iv[g] * dvmag_dv

        # injected current I = rot @ [id, iq]
        di_dx = np.zeros((2, N_SG_STATES))
        idq = np.array([i_d, i_q])
        drot = np.array([[-s, -c], [c, -s]])
        di_dx[:, DELTA] = drot @ idq + rot @ didq_ddelta
        di_dx[:, EQP] = rot @ didq_deq
        di_dv = rot @ didq_dv
        return a, b, di_dx, di_dv


def sg_equilibrium(params: SgParams, v, i, s_base, f_nom, controls=None) -> SgOperatingPoint:
    """Machine states reproducing terminal voltage ``v`` and injection ``i``.

    Without ``controls`` the references are chosen to make the point an
    equilibrium (P_set = Te, V_ref = |V|, delta_set = delta). With
    ``controls`` given they are kept, and the caller is responsible for
    consistency (checked by :func:`linearize_sg`).
    """
    v = np.asarray(v, dtype=float)
    i = np.asarray(i, dtype=float)
    scale = params.rating / s_base
    x_d, x_dp, x_q = params.x_d / scale, params.x_d_prime / scale, params.x_q / scale
    vc = complex(v[0], v[1])
    ic = complex(i[0], i[1])
    delta = float(np.angle(vc + 1j * x_q * ic))
    rot = np.exp(-1j * (delta - 0.5 * math.pi))
    vm, im = vc * rot, ic * rot
    vd, vq, i_d, i_q = vm.real, vm.imag, im.real, im.imag
    eqp = vq + x_dp * i_d
    efd = eqp + (x_d - x_dp) * i_d
    te = vd * i_d + vq * i_q
    if controls is None:
        controls = SgControls(p_set=te, v_ref=abs(vc), delta_set=delta)
    x0 = np.array([0.0, delta, te, te, 0.0, eqp, efd, efd])
    return SgOperatingPoint(x0=x0, v=v.copy(), i=i.copy(), controls=controls)


def linearize_sg(params: SgParams, op: SgOperatingPoint, s_base: float, f_nom: float,
                 tol: float = 1e-6) -> SgLinearization:
    """Exact Jacobians of the machine model at ``op``.

    Raises LinearizationAnchorError when ``op`` is not an equilibrium.
    """
    bank = SgBank([params], s_base, f_nom, [op.controls])
    x = op.x0[None, :]
    v = op.v[None, :]
    resid = np.max(np.abs(bank.derivatives(x, v)))
    if not resid < tol:
        raise LinearizationAnchorError(f"machine derivatives {resid:.3e} at anchor exceed {tol:g}")
    a, b, di_dx, di_dv = bank.jacobians(0, x, v)
    return SgLinearization(a=a, b=b, c=-di_dx, y=-di_dv)


# --- ZIP loads -------------------------------------------------------------


def zip_power(params: ZipLoadParams, vmag):
    """(P, Q) drawn at voltage magnitude ``vmag``."""
    r = np.asarray(vmag) / params.v_nom
    az, ai, ap = params.p_coeffs
    bz, bi, bp = params.q_coeffs
    return params.p0 * (az * r * r + ai * r + ap), params.q0 * (bz * r * r + bi * r + bp)


def zip_power_slope(params: ZipLoadParams, vmag):
    """(dP/d|V|, dQ/d|V|)."""
    r = np.asarray(vmag) / params.v_nom
    az, ai, _ = params.p_coeffs
    bz, bi, _ = params.q_coeffs
    return (params.p0 * (2 * az * r + ai) / params.v_nom,
            params.q0 * (2 * bz * r + bi) / params.v_nom)


def zip_current(params: ZipLoadParams, v) -> np.ndarray:
    """Drawn dq current at dq voltage ``v``."""
    vc = complex(v[0], v[1])
    p, q = zip_power(params, abs(vc))
    ic = (p - 1j * q) / vc.conjugate()
    return np.array([ic.real, ic.imag])


def linearize_zip(params: ZipLoadParams, v0) -> np.ndarray:
    """Jacobian dI_drawn/dV (2x2) of the ZIP current at ``v0``."""
    x, y = float(v0[0]), float(v0[1])
    m = math.hypot(x, y)
    if m <= ZIP_GUARD:
        raise DegenerateVoltageError(
            f"|V| = {m:.4f} pu is below the {ZIP_GUARD} pu linearization guard"
        )
    p, q = zip_power(params, m)
    dp, dq = zip_power_slope(params, m)
    g = complex(p, -q) / m**2
    dg = complex(dp, -dq) / m**2 - 2.0 * complex(p, -q) / m**3
    vc = complex(x, y)
    d_dx = dg * (x / m) * vc + g
    d_dy = dg * (y / m) * vc + 1j * g
    return np.array([[d_dx.real, d_dy.real], [d_dx.imag, d_dy.imag]])


class ZipBank:
    """Vectorized ZIP loads (drawn-current convention)."""

    def __init__(self, loads):
        loads = list(loads)
        self.n = len(loads)
        self.p0 = np.array([ld.p0 for ld in loads], dtype=float)
        self.q0 = np.array([ld.q0 for ld in loads], dtype=float)
        self.v_nom = np.array([ld.v_nom for ld in loads], dtype=float)
        pc = np.array([ld.p_coeffs for ld in loads], dtype=float).reshape(-1, 3)
        qc = np.array([ld.q_coeffs for ld in loads], dtype=float).reshape(-1, 3)
        self.pc, self.qc = pc, qc

    def power(self, vmag):
        r = vmag / self.v_nom
        p = self.p0 * (self.pc[:, 0] * r * r + self.pc[:, 1] * r + self.pc[:, 2])
        q = self.q0 * (self.qc[:, 0] * r * r + self.qc[:, 1] * r + self.qc[:, 2])
        return p, q

    def current(self, v):
        m2 = v[:, 0] ** 2 + v[:, 1] ** 2
        p, q = self.power(np.sqrt(m2))
        # (P - jQ) V / |V|^2
        return np.column_stack(((p * v[:, 0] + q * v[:, 1]) / m2, (p * v[:, 1] - q * v[:, 0]) / m2))

    def jacobian(self, v):
        m = np.hypot(v[:, 0], v[:, 1])
        r = m / self.v_nom
        p, q = self.power(m)
        dp = self.p0 * (2 * self.pc[:, 0] * r + self.pc[:, 1]) / self.v_nom
        dq = self.q0 * (2 * self.qc[:, 0] * r + self.qc[:, 1]) / self.v_nom
        g = (p - 1j * q) / m**2
        dg = (dp - 1j * dq) / m**2 - 2.0 * (p - 1j * q) / m**3
        vc = v[:, 0] + 1j * v[:, 1]
        d_dx = dg * (v[:, 0] / m) * vc + g
        d_dy = dg * (v[:, 1] / m) * vc + 1j * g
        out = np.empty((self.n, 2, 2))
        out[:, 0, 0], out[:, 0, 1] = d_dx.real, d_dy.real
        out[:, 1, 0], out[:, 1, 1] = d_dx.imag, d_dy.imag
        return out


# --- aggregation -------------------------------------------------------------


@dataclass(frozen=True)
class AggregatedDevices:
    a_sg: np.ndarray
    b_sg: np.ndarray
    c_sg: np.ndarray
    y_sg: np.ndarray
    y_l: np.ndarray
    node_ids: tuple
    sg_nodes: tuple = field(default=())


def aggregate_devices(sg_lins, load_blocks, node_ids) -> AggregatedDevices:
    """Place per-device matrices into the aggregated network coordinates.

    Parameters
    ----------
    sg_lins : mapping node id -> SgLinearization, in state-layout order.
    load_blocks : mapping node id -> 2x2 drawn-current Jacobian.
    node_ids : energized node ids defining the 2N network coordinates.

    ``y_l`` is returned in the injection convention, i.e. the negated
    drawn-current blocks.
    """
    node_ids = tuple(node_ids)
    index = {nid: k for k, nid in enumerate(node_ids)}
    n = len(node_ids)
    ng = len(sg_lins)
    ns = N_SG_STATES * ng
    a_sg = np.zeros((ns, ns))
    b_sg = np.zeros((ns, 2 * n))
    c_sg = np.zeros((2 * n, ns))
    y_sg = np.zeros((2 * n, 2 * n))
    y_l = np.zeros((2 * n, 2 * n))
    for g, (nid, lin) in enumerate(sg_lins.items()):
        if nid not in index:
            raise StructuralError(f"generator at node {nid} is not on an energized node")
        k = 2 * index[nid]
        s = N_SG_STATES * g
        a_sg[s : s + 8, s : s + 8] = lin.a
        b_sg[s : s + 8, k : k + 2] = lin.b
        c_sg[k : k + 2, s : s + 8] = lin.c
        y_sg[k : k + 2, k : k + 2] += lin.y
    for nid, block in load_blocks.items():
        if nid not in index:
            raise StructuralError(f"load at node {nid} is not on an energized node")
        k = 2 * index[nid]
        y_l[k : k + 2, k : k + 2] -= block
    return AggregatedDevices(a_sg, b_sg, c_sg, y_sg, y_l, node_ids, tuple(sg_lins))


def reference_frame(devices: AggregatedDevices, weights) -> AggregatedDevices:
    """Re-express the machine-network coupling in a rotor-angle frame.

    ``weights`` is an (N_G, N_G) array; row ``g`` holds the weights of the
    rotor angles whose combination defines the dq frame seen by generator
    ``g`` (normally the inertia-weighted mean over its island). Network
    voltages and step currents are then held in that rotating frame, so a
    common rotation of an island no longer acts on the constant step
    current. Machines see their angle relative to the frame; only the
    governor integral keeps the absolute angle.

    About an equilibrium anchor a common rotation of an island is a null
    direction of the closed loop ``A_SG + B_SG Z C_SG`` (governor integral
    aside), so the transform leaves the closed-loop matrix unchanged.
    """
    ns = devices.a_sg.shape[0]
    ng = len(devices.sg_nodes)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (ng, ng):
        raise ValueError(f"frame weights must have shape ({ng}, {ng})")
    deltas = N_SG_STATES * np.arange(ng) + DELTA
    t = np.eye(ns)
    t[np.ix_(deltas, deltas)] -= weights
    governor = np.zeros_like(devices.a_sg)
    rows = N_SG_STATES * np.arange(ng) + PV
    governor[rows, deltas] = devices.a_sg[rows, deltas]
    a_frame = devices.a_sg - governor
    return AggregatedDevices(a_frame @ t + governor, devices.b_sg, devices.c_sg @ t,
                             devices.y_sg, devices.y_l, devices.node_ids, devices.sg_nodes)
