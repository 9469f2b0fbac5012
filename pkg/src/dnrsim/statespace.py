"""Closed-loop small-signal model: dX/dt = A dX + B dI_T with COI-frequency and |V| outputs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .devices import F, N_SG_STATES, AggregatedDevices
from .errors import DegenerateVoltageError, SingularNetworkError

COND_LIMIT = 1e12


@dataclass(frozen=True)
class CoiWeights:
    h: np.ndarray


@dataclass(frozen=True)
class MagnitudeMap:
    m: np.ndarray  # N x 2N


@dataclass(frozen=True)
class LinearSystem:
    a: np.ndarray
    b: np.ndarray
    c_f: np.ndarray
    c_v: np.ndarray
    d_v: np.ndarray
    z: np.ndarray
    c_sg: np.ndarray
    coi: CoiWeights
    state_layout: tuple  # generator node ids
    node_ids: tuple  # energized node ids (network coordinates)
    spectral_abscissa: float
    v0: np.ndarray = None  # anchor dq voltages of the energized nodes

    @property
    def anchor_magnitudes(self) -> np.ndarray:
        return np.hypot(self.v0[0::2], self.v0[1::2])

    @property
    def n_states(self) -> int:
        return self.a.shape[0]

    @property
    def frequency_indices(self) -> np.ndarray:
        return N_SG_STATES * np.arange(len(self.state_layout)) + F

    @property
    def stable(self) -> bool:
        return self.spectral_abscissa < 0.0

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvals(self.a)

    def delta_v(self, dx, di_t):
        """Network voltage deviation, rows of ``dx`` are time samples."""
        return (np.atleast_2d(dx) @ self.c_sg.T + di_t) @ self.z.T

    def steady_state(self, di_t) -> np.ndarray:
        return -np.linalg.solve(self.a, self.b @ di_t)

    def outputs(self, dx, di_t):
        """(delta_f, delta_vmag) for state samples ``dx``."""
        dx = np.atleast_2d(dx)
        df = dx[:, self.frequency_indices] @ self.coi.h
        dv = dx @ self.c_v.T + self.d_v @ di_t
        return df, dv


def coi_weights(inertias) -> CoiWeights:
    h = np.asarray(inertias, dtype=float)
    if h.ndim != 1 or h.size == 0:
        raise ValueError("need at least one inertia")
    if np.any(h <= 0):
        raise ValueError("inertia constants must be positive")
    return CoiWeights(h / h.sum())


def magnitude_map(v0) -> MagnitudeMap:
    v = np.asarray(v0, dtype=float).reshape(-1, 2)
    mag = np.hypot(v[:, 0], v[:, 1])
    if np.any(mag == 0.0):
        bad = int(np.flatnonzero(mag == 0.0)[0])
        raise DegenerateVoltageError(f"zero anchor voltage at network position {bad}")
    n = v.shape[0]
    m = np.zeros((n, 2 * n))
    m[np.arange(n), 2 * np.arange(n)] = v[:, 0] / mag
    m[np.arange(n), 2 * np.arange(n) + 1] = v[:, 1] / mag
    return MagnitudeMap(m)


def build_z(y_l, y_a, y_sg) -> np.ndarray:
    """Z = (Y_L - Y_A - Y_SG)^-1 via LU with a condition-number guard."""
    mat = np.asarray(y_l) - np.asarray(y_a) - np.asarray(y_sg)
    if mat.size == 0:
        raise SingularNetworkError("empty network")
    cond = np.linalg.cond(mat)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularNetworkError(
            f"network matrix Y_L - Y_A - Y_SG is singular (condition number {cond:.3e})"
        )
    lu = sla.lu_factor(mat)
    z = sla.lu_solve(lu, np.eye(mat.shape[0]))
    resid = np.max(np.abs(z @ mat - np.eye(mat.shape[0])))
    if resid > 1e-10:
        raise SingularNetworkError(f"inverse residual {resid:.3e} exceeds 1e-10")
    return z


def build_system(devices: AggregatedDevices, z, v0, inertias) -> LinearSystem:
    """Compose A, B and the output maps.

    ``v0`` holds the anchor dq voltages of the energized nodes (network
    coordinates), ``inertias`` the system-base H of each generator in
    state-layout order.
    """
    ns = devices.a_sg.shape[0]
    n2 = z.shape[0]
    if devices.b_sg.shape != (ns, n2) or devices.c_sg.shape != (n2, ns):
        raise ValueError("device matrices do not match the network dimension")
    if len(v0) != n2:
        raise ValueError("anchor voltage length does not match the network dimension")
    b = devices.b_sg @ z
    a = devices.a_sg + b @ devices.c_sg
    coi = coi_weights(inertias)
    m = magnitude_map(v0).m
    d_v = m @ z
    c_v = d_v @ devices.c_sg
    c_f = np.zeros((1, ns))
    c_f[0, N_SG_STATES * np.arange(len(coi.h)) + F] = coi.h
    abscissa = float(np.max(np.linalg.eigvals(a).real)) if ns else -np.inf
    return LinearSystem(a=a, b=b, c_f=c_f, c_v=c_v, d_v=d_v, z=z, c_sg=devices.c_sg, coi=coi,
                        state_layout=devices.sg_nodes, node_ids=devices.node_ids,
                        spectral_abscissa=abscissa, v0=np.array(v0, dtype=float))
