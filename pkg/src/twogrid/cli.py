"""Command-line entry point: ``twogrid {run, mandel, project-test, mesh-box}``.

Exit codes: 0 success, 1 invalid input, 2 numerical failure, 64 usage error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from .errors import IoError, NumericalFailure, TwoGridError
from .io import write_csv, write_text, write_vtk

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_USAGE = 0, 1, 2, 64

logger = logging.getLogger("twogrid")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def build_parser():
    parser = _Parser(prog="twogrid", description="Two-grid poroelastic simulator.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="{run,mandel,project-test,mesh-box}")
    sub.required = True

    p = sub.add_parser("run", help="run a simulation described by a config file")
    p.add_argument("config")
    p.add_argument("--output", help="output directory (overrides [output] directory)")

    p = sub.add_parser("mandel", help="two-grid Mandel benchmark against the series solution")
    p.add_argument("--fine", choices=("flow", "mech"), required=True,
                   help="which physics gets the finer mesh")
    p.add_argument("--config", help="config overriding the built-in Mandel preset")
    p.add_argument("--output", help="output directory")

    p = sub.add_parser("project-test", help="build transfer operators and print diagnostics")
    p.add_argument("mesh_a", help="flow mesh (tetmesh v1)")
    p.add_argument("mesh_b", help="mechanics mesh (tetmesh v1)")

    p = sub.add_parser("mesh-box", help="write a structured box tet mesh")
    for name in ("nx", "ny", "nz"):
        p.add_argument(name, type=int)
    for name in ("lx", "ly", "lz"):
        p.add_argument(name, type=float)
    p.add_argument("out")
    return parser


# ----------------------------------------------------------------------------
# run

def _step_line(state):
    return (f"step {state.step} t = {state.time!r} iterations = {state.iterations} "
            f"increment = {state.increment!r}")


def run_config(cfg, output_dir=None, out=sys.stdout):
    """Run the simulation of a parsed config and write its outputs.

    Writes ``run.log`` (materialized config and per-step convergence),
    ``probes.csv`` when probes exist and ``csv`` is requested, and VTK
    snapshots of both meshes every ``cadence`` steps when ``vtk`` is requested.
    """
    from .config import serialize_config
    from .coupling import TwoGridProblem, run_simulation

    directory = output_dir or cfg.output_dir
    flow_mesh, mech_mesh = cfg.load_meshes()
    problem = TwoGridProblem(flow_mesh, mech_mesh, cfg.material, cfg.flow_bc,
                             cfg.mech_bc)
    names = list(cfg.probes)
    points = [cfg.probes[n] for n in names]
    log = [serialize_config(cfg), "# steps"]
    rows = []

    def record(state):
        if state.step > 0:
            log.append(_step_line(state))
        rows.append([state.time, *state.probes])
        if "vtk" in cfg.formats and cfg.cadence and state.step % cfg.cadence == 0:
            write_vtk(flow_mesh, {"pressure": state.flow.p, "eps_v": state.flow.eps_v,
                                  "sigma_v": state.flow.sigma_v},
                      os.path.join(directory, f"flow_{state.step:04d}.vtk"), "flow")
            write_vtk(mech_mesh, {"pressure": state.mech.p_mech, "eps_v": state.mech.eps_v,
                                  "sigma_v": state.mech.sigma_v, "displacement": state.mech.u},
                      os.path.join(directory, f"mech_{state.step:04d}.vtk"), "mechanics")

    snaps = run_simulation(problem, cfg.coupling_config(), probes=points, p0=cfg.p0, callback=record)
    write_text(os.path.join(directory, "run.log"), "\n".join(log) + "\n")
    if "csv" in cfg.formats and names:
        write_csv(os.path.join(directory, "probes.csv"), ["t", *names], rows)
    iters = [s.iterations for s in snaps[1:]]
    print(f"steps = {len(snaps) - 1}", file=out)
    print(f"final_time = {float(snaps[-1].time)!r}", file=out)
    if iters:
        print(f"iterations_max = {max(iters)}", file=out)
    for name, value in zip(names, snaps[-1].probes):
        print(f"probe {name} = {float(value)!r}", file=out)
    print(f"output = {directory}", file=out)
    return snaps


# ----------------------------------------------------------------------------
# mandel

def mandel_inputs(cfg, fine_which):
    """Benchmark setup, material and schedule from a (Mandel-shaped) config.

    Both meshes must be box specs over the same domain; the one with more
    elements is given to the ``fine_which`` physics. The plate force on
    ``xmax`` fixes the load; other boundary entries are implied by the
    benchmark and not read.
    """
    from .errors import ValidationError
    from .mandel import MandelSetup

    specs = (cfg.mesh_flow, cfg.mesh_mech)
    if not all(s.is_box for s in specs):
        raise ValidationError("meshes", "the Mandel benchmark needs box mesh specs")
    (n1, l1), (n2, l2) = (s.box_args() for s in specs)
    if not np.allclose(l1, l2):
        raise ValidationError("meshes", "flow and mechanics boxes must cover the same domain")
    plate = cfg.mech_bc.rigid_plate.get("xmax")
    if plate is None or plate[0] != "x":
        raise ValidationError("bc.xmax.mech", "the Mandel benchmark needs 'plate = x <force>'")
    a_x, b_y, t_z = l1
    fine, coarse = (n1, n2) if np.prod(n1) >= np.prod(n2) else (n2, n1)
    setup = MandelSetup(a_x=a_x, b_y=b_y, t_z=t_z, force=-plate[1] / t_z, fine=tuple(fine),
                        coarse=tuple(coarse), fs_tol=cfg.fs_tol, fs_maxiter=cfg.fs_maxiter)
    return setup, cfg.material, cfg.schedule


def run_mandel(fine_which, cfg, output_dir=None, out=sys.stdout):
    from .mandel import mandel_benchmark

    setup, mat, schedule = mandel_inputs(cfg, fine_which)
    report = mandel_benchmark(fine_which, setup, mat, schedule)
    directory = output_dir or cfg.output_dir
    write_text(os.path.join(directory, f"mandel_{fine_which}_probe.csv"), report.probe_csv())
    write_text(os.path.join(directory, f"mandel_{fine_which}_analytic.csv"), report.analytic_csv())
    write_text(os.path.join(directory, f"mandel_{fine_which}_summary.txt"), report.summary())
    out.write(report.summary(runtime=True))
    print(f"output = {directory}", file=out)
    return report


# ----------------------------------------------------------------------------
# project-test and mesh-box

def project_test(path_a, path_b, out=sys.stdout):
    from .geometry import format_diagnostics, projection_diagnostics, two_grid_operators
    from .mesh import read_mesh

    a, b = _read(read_mesh, path_a), _read(read_mesh, path_b)
    pairs, f2m, m2f = two_grid_operators(a, b)
    diag = projection_diagnostics(pairs, f2m, m2f)
    out.write(format_diagnostics(diag))
    uncovered = diag["uncovered_mech"] + diag["uncovered_flow"]
    print(f"identity: {str(diag['identity']).lower()}, uncovered: {uncovered}", file=out)
    return diag


def mesh_box(args, out=sys.stdout):
    from .mesh import box_tet_mesh, write_mesh

    mesh = box_tet_mesh(args.nx, args.ny, args.nz, args.lx, args.ly, args.lz)
    try:
        write_mesh(mesh, args.out)
    except OSError as exc:
        raise IoError(f"cannot write {args.out}: {exc}") from exc
    print(f"wrote {args.out}: {len(mesh.nodes)} nodes, {mesh.n_elements} elements", file=out)
    return mesh


def _read(reader, path):
    from .errors import ValidationError

    try:
        return reader(path)
    except FileNotFoundError as exc:
        raise ValidationError("path", f"file not found: {path}") from exc
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


def _load_config(path):
    from .config import parse_config
    from .errors import ValidationError

    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except FileNotFoundError as exc:
        raise ValidationError("config", f"file not found: {path}") from exc
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    return parse_config(text, base_dir=os.path.dirname(os.path.abspath(path)))


def main(argv=None, out=None):
    """Run the command line; returns the exit code."""
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            run_config(_load_config(args.config), args.output, out)
        elif args.command == "mandel":
            from .config import parse_config

            cfg = _load_config(args.config) if args.config else parse_config("preset = mandel")
            run_mandel(args.fine, cfg, args.output, out)
        elif args.command == "project-test":
            project_test(args.mesh_a, args.mesh_b, out)
        elif args.command == "mesh-box":
            mesh_box(args, out)
    except NumericalFailure as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (TwoGridError, IndexError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


def main_exit():
    """Console-script wrapper that turns the return code into the process status."""
    sys.exit(main())


if __name__ == "__main__":  # pragma: no cover
    main_exit()
