"""Equilibrated moment tensors for interior penalty solutions.

Given a discrete solution, the tensor with

* normal-normal edge trace {D2u_nn} - (sigma/h_e) [dn u] on every edge, and
* interior moments of D2u corrected by the weighted edge jumps,

satisfies the discrete equilibrium identity: its distributional double
divergence, paired with any test function of the solution space through

    <div div s, v> = sum_K int_K s : D2v - sum_e int_e s_nn [dn v],

reproduces the load functional exactly.  All integrands involved are low
order polynomials, so the construction is quadrature-exact and the verified
residual is at the level of the linear-solver accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import EdgeOps
from .fespace import _TENSOR_BASIS, triangle_rule

__all__ = [
    "MomentTensor",
    "build_equilibrated_tensor",
    "edge_nn_trace",
    "divdiv_pairing_vector",
    "verify_equilibrium",
    "tensor_minus_hessian_norm",
]


def _nn_components(n):
    """Coefficients of n^T E_c n for the symmetric tensor basis, (..., 3)."""
    return np.stack([n[..., 0] ** 2, 2.0 * n[..., 0] * n[..., 1], n[..., 1] ** 2], axis=-1)


@dataclass
class MomentTensor:
    """HHJ coefficient vector of an equilibrated moment tensor."""

    coeffs: np.ndarray
    space: object           # HhjSpace
    source: str             # "primal" | "dual"
    load: np.ndarray = None  # full load vector the tensor equilibrates


def build_equilibrated_tensor(mesh, p2, hhj, u_coeffs, sigma, edge_ops=None,
                              source="primal", load=None):
    """Equilibrated moment tensor of a discrete solution.

    Edge DOFs impose the normal-normal trace {D2u_nn} - (sigma/h_e)[dn u];
    interior DOFs impose the moments of D2u minus the edge-jump correction
    with weight 1/2 on interior and 1 on boundary edges.
    """
    ops = edge_ops if edge_ops is not None else EdgeOps(mesh, p2)
    coeffs = np.zeros(hhj.ndof)

    jumps = ops.normal_jumps(u_coeffs)          # (ne, nq)
    avgs = ops.nn_averages(u_coeffs)            # (ne,)
    trace = avgs[:, None] - (sigma / ops.h)[:, None] * jumps
    wts = ops.w[None, :] * ops.h[:, None]
    coeffs[0:2 * mesh.num_edges:2] = np.einsum("eq,eq,q->e", trace, wts, 1.0 - ops.s)
    coeffs[1:2 * mesh.num_edges:2] = np.einsum("eq,eq,q->e", trace, wts, ops.s)

    # interior moments: mean hessian minus gamma-weighted edge jump moments
    H = p2.hess_of(u_coeffs)
    interior = np.einsum("tab,cab,t->tc", H, _TENSOR_BASIS, mesh.areas)
    gamma = np.where(ops.interior, 0.5, 1.0)
    jump_int = np.einsum("eq,eq->e", jumps, wts)     # int_e [dn u] ds
    nn_c = _nn_components(mesh.edge_normals)          # (ne, 3)
    edge_term = gamma[:, None] * jump_int[:, None] * nn_c
    for k in range(3):
        eid = mesh.tri_edges[:, k]
        interior -= edge_term[eid]
    coeffs[2 * mesh.num_edges:] = interior.ravel()

    return MomentTensor(coeffs=coeffs, space=hhj, source=source, load=load)


def edge_nn_trace(mesh, hhj, coeffs, edge_ops):
    """Normal-normal trace at the edge quadrature points, (ne, nq).

    Evaluated from the plus side; the trace is single valued by construction.
    """
    tp = mesh.edge_tris[:, 0]
    c = hhj.local_coeffs(coeffs)[tp].reshape(-1, 3, 3)
    tloc = (edge_ops.points - hhj.centers[tp][:, None]) / hhj.scales[tp][:, None, None]
    mono = np.concatenate([np.ones(tloc.shape[:-1] + (1,)), tloc], axis=-1)
    comp = np.einsum("eqm,ecm->eqc", mono, c)
    return np.einsum("eqc,ec->eq", comp, _nn_components(mesh.edge_normals))


def divdiv_pairing_vector(mesh, p2, hhj, tensor, edge_ops=None, absolute=False):
    """<div div tensor, basis_i> for every DOF of the scalar space.

    The pairing is sum_K int_K s : D2v - sum_e int_e s_nn [dn v]; for P2 test
    functions every integrand is exactly integrated.  With ``absolute`` the
    contributions are accumulated in magnitude, which gives the natural
    rounding scale of each entry.
    """
    ops = edge_ops if edge_ops is not None else EdgeOps(mesh, p2)
    divdiv = np.zeros(p2.ndof)
    means = hhj.element_means(tensor.coeffs)
    cell = np.einsum("tab,tiab,t->ti", means, p2.hess, mesh.areas)
    snn = edge_nn_trace(mesh, hhj, tensor.coeffs, ops)
    edge = -np.einsum("eq,eq,eqi->ei", snn, ops.w[None, :] * ops.h[:, None], ops.J)
    if absolute:
        cell, edge = np.abs(cell), np.abs(edge)
    np.add.at(divdiv, p2.tri_dofs, cell)
    np.add.at(divdiv, ops.dofs, edge)
    return divdiv


def verify_equilibrium(mesh, p2, hhj, tensor, load=None, edge_ops=None):
    """Componentwise relative equilibrium residual over the free DOFs.

    Each entry of (pairing - load) is normalized by the magnitude sum of its
    own contributions plus the load entry, the scale at which rounding
    necessarily perturbs the identity; an equilibrated tensor built from an
    accurately solved system stays at rounding level, a perturbed one does
    not.
    """
    b = tensor.load if load is None else load
    if b is None:
        raise ValueError("no load vector to verify against")
    divdiv = divdiv_pairing_vector(mesh, p2, hhj, tensor, edge_ops)
    mag = divdiv_pairing_vector(mesh, p2, hhj, tensor, edge_ops, absolute=True)
    r = np.abs(divdiv - b)[p2.free]
    scale = np.maximum(mag[p2.free] + np.abs(b[p2.free]), 1.0)
    return float((r / scale).max(initial=0.0))


def tensor_minus_hessian_norm(mesh, hhj, tensor, field_space, field_coeffs, degree=4,
                              grid=None, tensor_values=None):
    """L2 norm of (tensor - D2 v) with per-element contributions.

    ``field_space`` is a P2Space or HctSpace; the integration grid follows
    the field's piecewise-polynomial structure (macroelement hessians are
    evaluated per sub-triangle).  Precomputed ``grid`` (points, weights,
    hessians) and ``tensor_values`` may be passed to share work.
    """
    if grid is None:
        grid = field_space.quad_hessians(field_coeffs, triangle_rule(degree))
    pts, w, H = grid
    S = hhj.values_on_grid(tensor.coeffs, pts) if tensor_values is None else tensor_values
    diff = S - H
    per_element_sq = np.einsum("tgn,tgnab,tgnab->t", w, diff, diff)
    per_element_sq = np.maximum(per_element_sq, 0.0)
    return float(np.sqrt(per_element_sq.sum())), np.sqrt(per_element_sq)
