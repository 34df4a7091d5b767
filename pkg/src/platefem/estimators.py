"""Goal-error quantities: corrected goal value, guaranteed bound, indicators.

The corrected goal value is

    Q_h = Q(u_h) + (s_eq - D2 s_h, avg_m),    avg_m = (dual_eq + D2 dual_s) / 2,

and the guaranteed bound (data oscillation dropped, reported separately) is

    |Q_ref - Q_h| <= eta_h * eta_dual / 2 + |Q(s_h - u_h)|,

with eta_h = ||D2 s_h - s_eq|| and eta_dual its dual counterpart.  The signed
residual estimator sums the volume mismatch (s_eq - D2 u_h) : dual_eq and the
edge jump terms [dn u_h] * dual_eq_nn; its localization applies weight 1/2
per side of interior edges and 1 on boundary edges.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assembly import EdgeOps
from .equilibration import divdiv_pairing_vector, edge_nn_trace
from .fespace import triangle_rule

__all__ = [
    "GoalReport",
    "AverageMomentTensor",
    "average_moment",
    "goal_correction",
    "abstract_goal_bound",
    "residual_goal_estimator",
    "oscillation_bound",
    "goal_report",
    "OSCILLATION_CONSTANT",
]

OSCILLATION_CONSTANT = 0.3682146


class AverageMomentTensor:
    """Mean of an equilibrated tensor and the hessian of a reconstruction."""

    def __init__(self, tensor, recon):
        if tensor.space.mesh is not recon.space.mesh:
            raise ValueError("tensor and reconstruction live on different meshes")
        self.tensor = tensor
        self.recon = recon
        self.mesh = tensor.space.mesh

    def values_on_rule(self, rule):
        """(points, weights, values) on the macroelement sub-triangle grid."""
        hct = self.recon.space
        pts, w, H = hct.quad_hessians(self.recon.coeffs, rule)
        S = self.tensor.space.values_on_grid(self.tensor.coeffs, pts)
        return pts, w, 0.5 * (S + H)

    def values_at(self, tri, pts_xy):
        """Pointwise values on one element (test-path, unbatched)."""
        H = self.recon.space.eval(self.recon.coeffs, tri, pts_xy, order=2)
        S = self.tensor.space.eval(self.tensor.coeffs, tri, np.atleast_2d(pts_xy))
        return 0.5 * (S + H)


def average_moment(tensor, recon):
    """Average moment tensor of a dual pair (equilibrated tensor, reconstruction)."""
    return AverageMomentTensor(tensor, recon)


def goal_correction(tensor, recon, avg, degree=4):
    """L2 inner product of (tensor - D2 recon) with the average moment tensor."""
    hct = recon.space
    rule = triangle_rule(degree)
    pts, w, H = hct.quad_hessians(recon.coeffs, rule)
    S = tensor.space.values_on_grid(tensor.coeffs, pts)
    _, _, M = avg.values_on_rule(rule)
    return float(np.einsum("tgn,tgnab,tgnab->", w, S - H, M))


def abstract_goal_bound(eta_h, eta_dual, eta_nc):
    """eta_h * eta_dual / 2 + eta_nc, inputs validated nonnegative."""
    if eta_h < 0 or eta_dual < 0 or eta_nc < 0:
        raise ValueError("estimator contributions must be nonnegative")
    return 0.5 * eta_h * eta_dual + eta_nc


def residual_goal_estimator(mesh, p2, hhj, u_coeffs, tensor, dual_tensor, edge_ops=None,
                            degree=4):
    """Signed residual goal estimator with per-element localization.

    Returns (global, per_element); interior-edge contributions are shared
    half-and-half by the two adjacent elements so that the localization sums
    to the global value exactly.
    """
    ops = edge_ops if edge_ops is not None else EdgeOps(mesh, p2)
    rule = triangle_rule(degree)
    pts, w, Hu = p2.quad_hessians(u_coeffs, rule)
    S = hhj.values_on_grid(tensor.coeffs, pts)
    St = hhj.values_on_grid(dual_tensor.coeffs, pts)
    vol = np.einsum("tgn,tgnab,tgnab->t", w, S - Hu, St)

    jumps = ops.normal_jumps(u_coeffs)
    snn = edge_nn_trace(mesh, hhj, dual_tensor.coeffs, ops)
    edge_int = np.einsum("eq,eq,q->e", jumps, snn, ops.w) * ops.h

    per_element = vol.copy()
    gamma = np.where(ops.interior, 0.5, 1.0)
    for k in range(3):
        eid = mesh.tri_edges[:, k]
        per_element += gamma[eid] * edge_int[eid]
    total = float(vol.sum() + edge_int.sum())
    return total, per_element


def equilibrium_defect_term(mesh, p2, hhj, tensor, load, dual_coeffs, edge_ops=None):
    """Diagnostic (load - div div tensor) paired with the discrete dual solution.

    Vanishes identically for an equilibrated tensor tested in the solution
    space; returned relative to the load scale.
    """
    divdiv = divdiv_pairing_vector(mesh, p2, hhj, tensor, edge_ops)
    r = float((load - divdiv)[p2.free] @ np.asarray(dual_coeffs)[p2.free])
    scale = max(1.0, abs(float(load[p2.free] @ np.asarray(dual_coeffs)[p2.free])))
    return r / scale


def oscillation_bound(mesh, load, degree=None):
    """Data oscillation bound: constant * sqrt(sum_K h_K^4 ||f||_K^2).

    Reported as a diagnostic; not added to the guaranteed bound.  A moderate
    dedicated quadrature degree keeps the bookkeeping cheap on large meshes.
    """
    if hasattr(load, "element_integrals"):
        from .assembly import QuadratureLoad

        deg = min(load.degree, 8) if degree is None else degree
        probe = QuadratureLoad(load.f, degree=deg)
        fsq = probe.element_integrals(mesh)
    else:
        fsq = np.array([load.integrate(mesh.tri_coords(t), load.f)
                        for t in range(mesh.num_triangles)])
    return OSCILLATION_CONSTANT * float(np.sqrt(np.sum(mesh.diameters**4 * fsq)))


def full_goal_bound(eta_h, eta_dual, eta_nc, load_pairing_term, osc_prim, osc_dual):
    """Bound variant keeping the load-pairing and oscillation terms explicit."""
    return (eta_h * (0.5 * eta_dual + osc_dual)
            + abs(load_pairing_term) + eta_nc + osc_prim**2)


@dataclass
class GoalReport:
    """Per-level record of the goal value, estimators and diagnostics."""

    q_h: float
    q_uh: float
    correction: float
    eta_h: float
    eta_dual: float
    eta_nc: float
    eta_abs: float
    eta_res: float
    q_ref: float = None
    e_goal: float = None
    signed_gap: float = None
    effectivity_abs: float = None
    effectivity_res: float = None
    eta_h_K: np.ndarray = field(default=None, repr=False)
    eta_dual_K: np.ndarray = field(default=None, repr=False)
    eta_nc_K: np.ndarray = field(default=None, repr=False)
    eta_res_K: np.ndarray = field(default=None, repr=False)
    equilibrium_primal: float = None
    equilibrium_dual: float = None
    c1_primal: float = None
    c1_dual: float = None
    oscillation: float = None
    eta_defect: float = None


def goal_report(q_uh, correction, eta_h, eta_dual, eta_nc, eta_res, q_ref=None,
                **extras):
    """Assemble the level record; effectivities only when a reference is given."""
    q_h = q_uh + correction
    eta_abs = abstract_goal_bound(eta_h, eta_dual, eta_nc)
    e_goal = signed = eff_abs = eff_res = None
    if q_ref is not None:
        signed = q_ref - q_h
        e_goal = abs(signed)
        if e_goal > 0.0:
            eff_abs = eta_abs / e_goal
            eff_res = abs(eta_res) / e_goal
    return GoalReport(q_h=q_h, q_uh=q_uh, correction=correction, eta_h=eta_h,
                      eta_dual=eta_dual, eta_nc=eta_nc, eta_abs=eta_abs,
                      eta_res=eta_res, q_ref=q_ref, e_goal=e_goal,
                      signed_gap=signed, effectivity_abs=eff_abs,
                      effectivity_res=eff_res, **extras)
