"""
File formats written by the command-line tool.

Trajectory CSV
    One header row ``t,delta_f,<node id>,...``; ``delta_f`` is the COI speed
    deviation in pu and each node column the |V| deviation in pu. Cells of
    de-energized nodes are empty. Numbers use fixed ``%.6f`` (time) and
    ``%.9e`` formats so that identical runs give identical bytes.

Matrix dump
    Plain text. A line ``% <name> <rows> <cols>`` starts each matrix and is
    followed by ``rows`` lines of ``cols`` whitespace-separated ``%.17e``
    values; lines starting with ``#`` are comments. Complex data (such as
    eigenvalues) are stored as two real columns.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np

from .linear_sim import Trajectory


def trajectory_csv(traj: Trajectory, stride: int = 1) -> str:
    buf = io.StringIO()
    buf.write(",".join(["t", "delta_f", *traj.node_ids]) + "\n")
    dv = traj.delta_vmag
    for k in range(0, len(traj.times), stride):
        cells = ["%.6f" % traj.times[k], "%.9e" % traj.delta_f[k]]
        cells += ["" if np.isnan(v) else "%.9e" % v for v in dv[:, k]]
        buf.write(",".join(cells) + "\n")
    return buf.getvalue()


def read_trajectory_csv(path):
    """Return (times, delta_f, node_ids, delta_vmag[N, samples]) with NaN for blanks."""
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    if header[:2] != ["t", "delta_f"]:
        raise ValueError(f"{path}: not a trajectory CSV")
    rows = [[float(c) if c else np.nan for c in ln.split(",")] for ln in lines[1:]]
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return data[:, 0], data[:, 1], tuple(header[2:]), data[:, 2:].T


def write_matrix_dump(path, matrices: dict, comment: str = "") -> None:
    out = ["# dnrsim matrix dump"]
    if comment:
        out += ["# " + ln for ln in comment.splitlines()]
    for name, mat in matrices.items():
        mat = np.asarray(mat)
        if np.iscomplexobj(mat):
            mat = np.column_stack((mat.real.ravel(), mat.imag.ravel()))
        mat = np.atleast_2d(mat).astype(float)
        if " " in name:
            raise ValueError("matrix names cannot contain spaces")
        out.append(f"% {name} {mat.shape[0]} {mat.shape[1]}")
        out += [" ".join("%.17e" % v for v in row) for row in mat]
    Path(path).write_text("\n".join(out) + "\n")


def read_matrix_dump(path) -> dict:
    result = {}
    lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    k = 0
    while k < len(lines):
        head = lines[k].split()
        if head[0] != "%" or len(head) != 4:
            raise ValueError(f"{path}: expected a matrix header, got {lines[k]!r}")
        name, rows, cols = head[1], int(head[2]), int(head[3])
        body = lines[k + 1 : k + 1 + rows]
        mat = np.array([[float(v) for v in ln.split()] for ln in body], dtype=float)
        result[name] = mat.reshape(rows, cols)
        k += 1 + rows
    return result


def _figure():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "dnrsim"
    return plt


def save_svg(fig, path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})


def plot_trajectories(path, named: dict, f_nom: float, title: str = "") -> None:
    """Δf (Hz) and Δ|V| (pu) panels; ``named`` maps a legend label to a trajectory."""
    plt = _figure()
    fig, (ax_f, ax_v) = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    styles = ["-", "--", ":", "-."]
    for (label, traj), ls in zip(named.items(), styles):
        ax_f.plot(traj.times, traj.delta_f * f_nom, ls, lw=1.0, label=label)
        ax_v.plot(traj.times, traj.delta_vmag.T, ls, lw=0.6)
    ax_f.set_ylabel("Δf (Hz)")
    ax_v.set_ylabel("Δ|V| (pu)")
    ax_v.set_xlabel("time (s)")
    ax_f.legend(loc="lower right")
    for ax in (ax_f, ax_v):
        ax.grid(True, lw=0.3)
    if title:
        ax_f.set_title(title)
    fig.tight_layout()
    save_svg(fig, path)
    plt.close(fig)
