"""Batch driver: run a benchmark study and emit convergence tables.

Outputs in the chosen directory:

* ``convergence.csv``  — one row per level (17 significant digits);
* ``rates.txt``        — least-squares log-log slopes over the last three levels;
* ``err_vs_ndof.dat``, ``est_abs_vs_ndof.dat``, ``est_res_vs_ndof.dat``
  — two-column plot data, zero or negative values skipped;
* ``mesh_level_<j>.txt`` per level with ``--emit-meshes``.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .adaptivity import AdaptiveConfig, run_adaptive
from .benchmarks import get_problem
from .mesh import write_mesh

__all__ = ["main", "write_convergence_csv", "write_rates", "emit_plot_data"]

CSV_COLUMNS = ["level", "ndof", "ntri", "Q_h", "e_goal", "eta_h", "eta_tilde",
               "eta_nc", "eta_abs", "eta_res", "eff_abs", "eff_res", "seconds"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _build_parser():
    p = _Parser(prog="platefem", description="goal-oriented adaptive plate bending studies")
    p.add_argument("--problem", required=True, choices=["example_1", "example_2"])
    p.add_argument("--mode", default="adaptive", choices=["adaptive", "uniform"])
    p.add_argument("--theta", type=float, default=0.25)
    p.add_argument("--levels", type=int, default=1, help="last refinement level index")
    p.add_argument("--sigma", type=float, default=20.0)
    p.add_argument("--tol", type=float, default=1e-10, help="linear solver tolerance")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--emit-meshes", action="store_true")
    p.add_argument("--oscillation", action="store_true",
                   help="track the data oscillation bound (extra load pass)")
    return p


def _fmt(x):
    if x is None:
        return "nan"
    return format(float(x), ".17g")


def write_convergence_csv(records, path):
    with open(path, "w") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for r in records:
            rep = r.report
            row = [str(r.level), str(r.num_free_dofs), str(r.num_triangles),
                   _fmt(rep.q_h), _fmt(rep.e_goal), _fmt(rep.eta_h),
                   _fmt(rep.eta_dual), _fmt(rep.eta_nc), _fmt(rep.eta_abs),
                   _fmt(rep.eta_res), _fmt(rep.effectivity_abs),
                   _fmt(rep.effectivity_res), _fmt(r.seconds)]
            fh.write(",".join(row) + "\n")


def fit_rate(records, pick):
    """Least-squares slope of log(value) vs log(ndof) over the last 3 levels."""
    tail = records[-3:]
    nd, vals = [], []
    for r in tail:
        v = pick(r.report)
        if v is not None and v > 0.0:
            nd.append(r.num_free_dofs)
            vals.append(v)
    if len(vals) < 2:
        return None
    return float(np.polyfit(np.log(nd), np.log(vals), 1)[0])


def write_rates(records, path):
    rates = [
        ("e_goal", fit_rate(records, lambda rep: rep.e_goal)),
        ("eta_abs", fit_rate(records, lambda rep: rep.eta_abs)),
        ("eta_res", fit_rate(records, lambda rep: abs(rep.eta_res))),
    ]
    with open(path, "w") as fh:
        fh.write("log-log slopes vs ndof over the last 3 levels\n")
        for name, val in rates:
            fh.write(f"{name}: {'n/a' if val is None else format(val, '.6f')}\n")


def emit_plot_data(records, outdir):
    """Two-column plot files; zero or negative values are left out (log-safe)."""
    series = [
        ("err_vs_ndof.dat", lambda rep: rep.e_goal),
        ("est_abs_vs_ndof.dat", lambda rep: rep.eta_abs),
        ("est_res_vs_ndof.dat", lambda rep: abs(rep.eta_res)),
    ]
    paths = []
    for fname, pick in series:
        path = os.path.join(outdir, fname)
        with open(path, "w") as fh:
            for r in records:
                v = pick(r.report)
                if v is not None and v > 0.0:
                    fh.write(f"{r.num_free_dofs} {_fmt(v)}\n")
        paths.append(path)
    return paths


def main(argv=None):
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    problem = get_problem(args.problem)
    try:
        config = AdaptiveConfig(theta=args.theta, max_levels=args.levels,
                                sigma=args.sigma, mode=args.mode, rel_tol=args.tol,
                                track_oscillation=args.oscillation)
    except ValueError as exc:
        sys.stderr.write(f"platefem: error: {exc}\n")
        return 1

    try:
        records = run_adaptive(problem, config)
    except RuntimeError as exc:
        sys.stderr.write(f"platefem: solver failure: {exc}\n")
        return 2

    os.makedirs(args.out, exist_ok=True)
    write_convergence_csv(records, os.path.join(args.out, "convergence.csv"))
    write_rates(records, os.path.join(args.out, "rates.txt"))
    emit_plot_data(records, args.out)
    if args.emit_meshes:
        for r in records:
            write_mesh(r.mesh, os.path.join(args.out, f"mesh_level_{r.level}.txt"))
    for r in records:
        rep = r.report
        print(f"level {r.level}: ndof={r.num_free_dofs} ntri={r.num_triangles} "
              f"Q_h={rep.q_h:.10g} e_goal={_fmt(rep.e_goal)} eta_abs={_fmt(rep.eta_abs)}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
