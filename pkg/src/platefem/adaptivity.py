"""Goal-oriented adaptive loop: solve, estimate, mark three sets, refine.

Each level solves the primal and dual systems with one assembled operator,
builds the equilibrated tensors and conforming reconstructions for both,
assembles the goal report, then marks the union of three bulk-criterion sets
(primal, dual and nonconformity indicators) and refines by newest-vertex
bisection.  Uniform mode replaces marking/bisection with red refinement.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from types import SimpleNamespace

import numpy as np

from .assembly import EdgeOps, assemble_aip, assemble_load, solve
from .equilibration import build_equilibrated_tensor, tensor_minus_hessian_norm, verify_equilibrium
from .estimators import (
    equilibrium_defect_term,
    goal_report,
    oscillation_bound,
    residual_goal_estimator,
)
from .fespace import HctSpace, HhjSpace, P2Space
from .mesh import refine_nvb, refine_uniform
from .reconstruction import c1_mismatch, enrich, nonconformity_goal_term

__all__ = [
    "AdaptiveConfig",
    "LevelRecord",
    "dorfler_mark",
    "solve_level",
    "estimate_level",
    "run_adaptive",
]


@dataclass
class AdaptiveConfig:
    """Driver parameters; ``max_levels`` is the last level index solved."""

    theta: float = 0.25
    max_levels: int = 1
    sigma: float = 20.0
    mode: str = "adaptive"
    rel_tol: float = 1e-10
    eta_abs_tol: float = None  # optional early stop, off by default
    diagnostics: bool = True
    track_oscillation: bool = False  # extra load pass per level when enabled

    def __post_init__(self):
        if not 0.0 < self.theta < 1.0:
            raise ValueError("theta must lie strictly between 0 and 1")
        if self.max_levels < 1:
            raise ValueError("at least one refinement level is required")
        if self.mode not in ("adaptive", "uniform"):
            raise ValueError(f"unknown refinement mode {self.mode!r}")
        if self.sigma <= 0.0:
            raise ValueError("penalty parameter sigma must be positive")


@dataclass
class LevelRecord:
    level: int
    num_triangles: int
    num_free_dofs: int
    report: object
    seconds: float = 0.0
    marked: np.ndarray = field(default=None, repr=False)
    mesh: object = field(default=None, repr=False)


def dorfler_mark(squared_indicators, theta):
    """Minimal bulk-criterion set: smallest prefix of the descending order
    whose sum reaches the theta-fraction of the total; ties resolve to the
    smaller element index.  All-zero indicators give the empty set.
    """
    if not 0.0 < theta < 1.0:
        raise ValueError("theta must lie strictly between 0 and 1")
    vals = np.asarray(squared_indicators, dtype=float)
    if np.any(vals < 0.0):
        raise ValueError("indicators must be nonnegative")
    total = vals.sum()
    if total == 0.0:
        return np.empty(0, dtype=np.int64)
    order = np.argsort(-vals, kind="stable")
    cum = np.cumsum(vals[order])
    k = int(np.searchsorted(cum, theta * total)) + 1
    return np.sort(order[:k])


def solve_level(problem, mesh, sigma=20.0, rel_tol=1e-10):
    """Assemble once, solve the primal and dual systems with the same matrix."""
    p2 = P2Space(mesh)
    ops = EdgeOps(mesh, p2)
    A = assemble_aip(mesh, p2, sigma, edge_ops=ops)
    primal_load = assemble_load(mesh, p2, problem.load)
    dual_load = assemble_load(mesh, p2, problem.weight)
    both = solve(A, np.stack([primal_load[p2.free], dual_load[p2.free]], axis=1),
                 rel_tol=rel_tol)
    u = A.expand(both[:, 0])
    ut = A.expand(both[:, 1])
    return SimpleNamespace(mesh=mesh, p2=p2, ops=ops, A=A, sigma=sigma,
                           primal_load=primal_load, dual_load=dual_load,
                           u=u, ut=ut)


def estimate_level(problem, lvl, diagnostics=True, track_oscillation=False):
    """Tensors, reconstructions and the goal report for one solved level."""
    from .fespace import triangle_rule

    mesh, p2, ops = lvl.mesh, lvl.p2, lvl.ops
    hhj = HhjSpace(mesh)
    hct = HctSpace(mesh)

    tensor = build_equilibrated_tensor(mesh, p2, hhj, lvl.u, lvl.sigma, edge_ops=ops,
                                       source="primal", load=lvl.primal_load)
    dual_tensor = build_equilibrated_tensor(mesh, p2, hhj, lvl.ut, lvl.sigma, edge_ops=ops,
                                            source="dual", load=lvl.dual_load)
    s = enrich(mesh, p2, hct, lvl.u, source="primal")
    sd = enrich(mesh, p2, hct, lvl.ut, source="dual")

    # one shared macroelement quadrature grid serves both estimator norms and
    # the goal correction
    rule = triangle_rule(4)
    grid_s = hct.quad_hessians(s.coeffs, rule)
    grid_sd = hct.quad_hessians(sd.coeffs, rule)
    S_p = hhj.values_on_grid(tensor.coeffs, grid_s[0])
    S_d = hhj.values_on_grid(dual_tensor.coeffs, grid_s[0])

    eta_h, eta_h_K = tensor_minus_hessian_norm(mesh, hhj, tensor, hct, s.coeffs,
                                               grid=grid_s, tensor_values=S_p)
    eta_d, eta_d_K = tensor_minus_hessian_norm(mesh, hhj, dual_tensor, hct, sd.coeffs,
                                               grid=grid_sd, tensor_values=S_d)
    avg_vals = 0.5 * (S_d + grid_sd[2])
    correction = float(np.einsum("tgn,tgnab,tgnab->", grid_s[1], S_p - grid_s[2], avg_vals))
    q_uh = float(lvl.dual_load @ lvl.u)
    nc_signed, eta_nc_K = nonconformity_goal_term(mesh, hct, s, p2, lvl.u, problem.weight)
    eta_res, eta_res_K = residual_goal_estimator(mesh, p2, hhj, lvl.u, tensor,
                                                 dual_tensor, edge_ops=ops)

    extras = dict(eta_h_K=eta_h_K, eta_dual_K=eta_d_K, eta_nc_K=eta_nc_K,
                  eta_res_K=eta_res_K)
    if diagnostics:
        extras["equilibrium_primal"] = verify_equilibrium(mesh, p2, hhj, tensor,
                                                          edge_ops=ops)
        extras["equilibrium_dual"] = verify_equilibrium(mesh, p2, hhj, dual_tensor,
                                                        edge_ops=ops)
        vp, gp = c1_mismatch(mesh, hct, s.coeffs)
        vd, gd = c1_mismatch(mesh, hct, sd.coeffs)
        extras["c1_primal"] = max(vp, gp)
        extras["c1_dual"] = max(vd, gd)
        extras["eta_defect"] = equilibrium_defect_term(mesh, p2, hhj, tensor,
                                                       lvl.primal_load, lvl.ut,
                                                       edge_ops=ops)
        if track_oscillation:
            extras["oscillation"] = oscillation_bound(mesh, problem.load)

    report = goal_report(q_uh=q_uh, correction=correction, eta_h=eta_h,
                         eta_dual=eta_d, eta_nc=abs(nc_signed), eta_res=eta_res,
                         q_ref=problem.q_ref, **extras)
    return report


def run_adaptive(problem, config):
    """Run the adaptive (or uniform) study; one record per solved level."""
    mesh = problem.initial_mesh
    records = []
    for j in range(config.max_levels + 1):
        t0 = time.perf_counter()
        try:
            lvl = solve_level(problem, mesh, sigma=config.sigma, rel_tol=config.rel_tol)
        except RuntimeError as exc:
            raise RuntimeError(f"solver failed on level {j}: {exc}") from exc
        report = estimate_level(problem, lvl, diagnostics=config.diagnostics,
                                track_oscillation=config.track_oscillation)
        marked = None
        if j < config.max_levels:
            if config.mode == "uniform":
                next_mesh = refine_uniform(mesh)
            else:
                union = set()
                for ind in (report.eta_h_K, report.eta_dual_K, report.eta_nc_K):
                    union.update(int(i) for i in dorfler_mark(ind**2, config.theta))
                marked = np.array(sorted(union), dtype=np.int64)
                next_mesh = refine_nvb(mesh, marked) if len(marked) else mesh
        records.append(LevelRecord(level=j, num_triangles=mesh.num_triangles,
                                   num_free_dofs=lvl.p2.num_free, report=report,
                                   seconds=time.perf_counter() - t0, marked=marked,
                                   mesh=mesh))
        if j == config.max_levels:
            break
        if config.eta_abs_tol is not None and report.eta_abs < config.eta_abs_tol:
            break
        if config.mode == "adaptive" and marked is not None and len(marked) == 0:
            break  # nothing to refine: estimator identically zero
        mesh = next_mesh
    return records
