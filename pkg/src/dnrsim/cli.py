"""
Command-line driver.

Subcommands ``linearize``, ``simulate``, ``oracle`` and ``compare`` read a
scenario (a path or a bundled name) and write their results to ``--output``.
Exit status is 0 on success and the ``exit_code`` of the raised error class
otherwise (see :mod:`dnrsim.errors`); bad command-line values exit with 2.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .devices import linearize_zip
from .errors import DnrError, UnsolvableIslandError
from .linear_sim import MODES, Schedule, simulate_linear
from .network import assemble_admittance
from .oracle import compare_rmse, simulate_nonlinear
from .outputs import plot_trajectories, trajectory_csv, write_matrix_dump
from .scenario import BUNDLED, Scenario, load_scenario
from .statespace import build_z

log = logging.getLogger("dnrsim")


def _positive(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"{text} is not a positive number")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dnrsim",
        description="Frequency and voltage transients of switching events in islanded feeders.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "linearize": "state-space matrices, eigenvalues and step currents per event",
        "simulate": "linear-model trajectories",
        "oracle": "nonlinear reference trajectories",
        "compare": "both trajectories, RMSE report and overlay plots",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--scenario", action="append", required=True, metavar="PATH",
                       help=f"scenario file or bundled name ({', '.join(BUNDLED)}); repeatable")
        p.add_argument("--dt", type=_positive, help="step size in seconds (scenario default)")
        p.add_argument("--t-end", type=_positive, help="end time in seconds (scenario default)")
        p.add_argument("--mode", choices=MODES, help="event linearization mode (scenario default)")
        p.add_argument("--output", default="results", metavar="DIR", help="output directory")
        p.add_argument("--jobs", type=int, default=1, metavar="N", help="parallel worker processes")
        p.add_argument("--stride", type=int, default=1, metavar="K", help="write every K-th sample")
        if name == "linearize":
            p.add_argument("--dump-matrices", action="store_true",
                           help="write A, B, C, D, Z and step currents to matrices.txt")
    return parser


def _apply_overrides(scn: Scenario, args) -> Scenario:
    schedule = scn.schedule
    if args.t_end is not None:
        kept = tuple(ev for ev in schedule.events if ev.time < args.t_end)
        if len(kept) < len(schedule.events):
            log.warning("%s: dropping %d event(s) at or after --t-end %g",
                        scn.name, len(schedule.events) - len(kept), args.t_end)
        schedule = Schedule(kept, args.t_end)
    return replace(scn, schedule=schedule, dt=args.dt or scn.dt, mode=args.mode or scn.mode)


def _run_linear(scn: Scenario):
    return simulate_linear(scn.feeder, scn.schedule, dt=scn.dt, mode=scn.mode)


def _run_oracle(scn: Scenario):
    return simulate_nonlinear(scn.feeder, scn.schedule, dt=scn.dt)


def _check_passive(scn: Scenario):
    """A feeder without generators has no operating point; diagnose its network matrix."""
    fd = scn.feeder
    flat = np.tile([1.0, 0.0], len(fd.nodes))
    y_a = assemble_admittance(fd).data
    y_l = np.zeros_like(y_a)
    for n, ld in fd.loads.items():
        k = 2 * fd.index[n]
        y_l[k : k + 2, k : k + 2] = -linearize_zip(ld, flat[k : k + 2])
    build_z(y_l, y_a, np.zeros_like(y_a))
    raise UnsolvableIslandError("scenario has no generator, so no island can be energized")


def cmd_linearize(scn: Scenario, out: Path, args) -> None:
    if not scn.feeder.generators:
        _check_passive(scn)
    traj = _run_linear(scn)
    lines = [f"scenario: {scn.name}", f"mode: {scn.mode}", f"dt: {scn.dt:g}"]
    dump = {}
    for k, (t0, system, u) in enumerate(traj.models):
        eig = system.eigenvalues()
        eig = eig[np.lexsort((eig.imag, eig.real))]
        lines += [
            "",
            f"[stage {k}] from t = {t0:.6f} s",
            f"states: {system.n_states}",
            f"energized nodes: {len(system.node_ids)}",
            f"spectral abscissa: {system.spectral_abscissa:.9e}",
            f"stable: {'yes' if system.stable else 'no'}",
            "coi weights: " + " ".join(
                f"{n}={w:.9f}" for n, w in zip(system.state_layout, system.coi.h)),
            "step current (node d q):",
        ]
        for j, n in enumerate(system.node_ids):
            if u[2 * j] != 0.0 or u[2 * j + 1] != 0.0:
                lines.append(f"  {n} {u[2 * j]:.9e} {u[2 * j + 1]:.9e}")
        lines.append("eigenvalues (real imag):")
        lines += [f"  {z.real:.9e} {z.imag:.9e}" for z in eig]
        if args.dump_matrices:
            for key, mat in (("A", system.a), ("B", system.b), ("C_f", system.c_f),
                             ("C_v", system.c_v), ("D_v", system.d_v), ("Z", system.z),
                             ("dI_T", u[:, None]), ("eigenvalues", eig)):
                dump[f"stage{k}.{key}"] = mat
    report = "\n".join(lines) + "\n"
    (out / "linearize.txt").write_text(report)
    if args.dump_matrices:
        comment = "\n".join(
            f"stage{k}: t0={t0:.6f} nodes={','.join(s.node_ids)} generators={','.join(s.state_layout)}"
            for k, (t0, s, _) in enumerate(traj.models))
        write_matrix_dump(out / "matrices.txt", dump, comment)
    sys.stdout.write(report)


def cmd_simulate(scn: Scenario, out: Path, args) -> None:
    traj = _run_linear(scn)
    (out / "linear.csv").write_text(trajectory_csv(traj, args.stride))
    plot_trajectories(out / "linear.svg", {"linear": traj}, scn.feeder.f_nom, scn.name)
    if traj.flags.get("unstable"):
        log.warning("%s: linear model is unstable", scn.name)
    print(f"{scn.name}: wrote {out / 'linear.csv'}")


def cmd_oracle(scn: Scenario, out: Path, args) -> None:
    traj = _run_oracle(scn)
    (out / "nonlinear.csv").write_text(trajectory_csv(traj, args.stride))
    plot_trajectories(out / "nonlinear.svg", {"nonlinear": traj}, scn.feeder.f_nom, scn.name)
    print(f"{scn.name}: wrote {out / 'nonlinear.csv'}")


def cmd_compare(scn: Scenario, out: Path, args) -> None:
    lin = _run_linear(scn)
    nl = _run_oracle(scn)
    report = compare_rmse(lin, nl)
    (out / "linear.csv").write_text(trajectory_csv(lin, args.stride))
    (out / "nonlinear.csv").write_text(trajectory_csv(nl, args.stride))
    header = f"scenario: {scn.name}\nmode: {scn.mode}\ndt: {scn.dt:g}\n"
    (out / "rmse.txt").write_text(header + report.format())
    plot_trajectories(out / "compare.svg", {"nonlinear": nl, "linear": lin}, scn.feeder.f_nom, scn.name)
    print(f"{scn.name}: voltage RMSE average {report.average:.3e} pu, maximum {report.maximum:.3e} pu "
          f"(node {report.worst_node})")


COMMANDS = {"linearize": cmd_linearize, "simulate": cmd_simulate,
            "oracle": cmd_oracle, "compare": cmd_compare}


def _run_one(command, source, args, out: Path) -> int:
    try:
        scn = _apply_overrides(load_scenario(source), args)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[command](scn, out, args)
    except DnrError as exc:
        print(f"error: {source}: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"error: {source}: {exc}", file=sys.stderr)
        return 2
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1 or args.stride < 1:
        print("error: --jobs and --stride must be at least 1", file=sys.stderr)
        return 2
    root = Path(args.output)
    sources = args.scenario
    if len(sources) == 1:
        return _run_one(args.command, sources[0], args, root)
    names = [Path(s).stem for s in sources]
    if len(set(names)) != len(names):
        print("error: scenarios must have distinct names", file=sys.stderr)
        return 2
    targets = [(args.command, s, args, root / n) for s, n in zip(sources, names)]
    if args.jobs == 1:
        codes = [_run_one(*t) for t in targets]
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            codes = list(pool.map(_run_one, *zip(*targets)))
    return next((c for c in codes if c), 0)


if __name__ == "__main__":
    sys.exit(main())
