"""C1 potential reconstruction of interior penalty solutions by nodal averaging.

Every interior nodal variable of the macroelement space (vertex value, vertex
gradient, edge-midpoint normal derivative) is set to the arithmetic mean of
the per-element evaluations over the elements sharing it; boundary variables
are zero, so the reconstruction is conforming for the clamped problem.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fespace import locate_sub, p2_grad_ref, p2_shape, _mono_grad, _mono_val

__all__ = [
    "PotentialReconstruction",
    "enrich",
    "nonconformity_goal_term",
    "c1_mismatch",
]

# reference barycentric coordinates of the vertices and opposite-edge midpoints
_NODE_BARY = np.array([
    [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0],
    [0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0],
])
_NODE_GRAD_REF = p2_grad_ref(_NODE_BARY)  # (6 nodes, 6 basis, 2)


@dataclass
class PotentialReconstruction:
    """Coefficients of an averaged conforming potential."""

    coeffs: np.ndarray
    space: object  # HctSpace
    source: str


def enrich(mesh, p2, hct, v_coeffs, source="primal"):
    """Average the element-wise nodal data of a P2 field into the C1 space."""
    v_coeffs = np.asarray(v_coeffs, dtype=float)
    nv = mesh.num_vertices
    local = p2.local_dofs(v_coeffs)  # (nt, 6)
    # per-element gradients at the three vertices and three midpoints
    g = np.einsum("pid,ti->tpd", _NODE_GRAD_REF, local)
    g = np.einsum("tpd,tdc->tpc", g, p2.Binv)

    grad_sum = np.zeros((nv, 2))
    grad_cnt = np.zeros(nv)
    np.add.at(grad_sum, mesh.triangles.ravel(), g[:, :3].reshape(-1, 2))
    np.add.at(grad_cnt, mesh.triangles.ravel(), 1.0)

    ndn_sum = np.zeros(mesh.num_edges)
    ndn_cnt = np.zeros(mesh.num_edges)
    normals = mesh.edge_normals[mesh.tri_edges]  # (nt, 3, 2)
    dn = np.einsum("tkd,tkd->tk", g[:, 3:], normals)
    np.add.at(ndn_sum, mesh.tri_edges.ravel(), dn.ravel())
    np.add.at(ndn_cnt, mesh.tri_edges.ravel(), 1.0)

    coeffs = np.zeros(hct.ndof)
    coeffs[0:3 * nv:3] = v_coeffs[:nv]  # vertex values are single valued
    coeffs[1:3 * nv:3] = grad_sum[:, 0] / grad_cnt
    coeffs[2:3 * nv:3] = grad_sum[:, 1] / grad_cnt
    coeffs[3 * nv:] = ndn_sum / ndn_cnt
    coeffs[hct.is_constrained] = 0.0
    return PotentialReconstruction(coeffs=coeffs, space=hct, source=source)


def nonconformity_goal_term(mesh, hct, recon, p2, v_coeffs, weight, degree=6):
    """Goal integral of (reconstruction - discrete field).

    Returns the signed global value and the per-element absolute values; the
    integration runs per macroelement sub-triangle, where both fields are
    polynomial.  Elements fully inside the goal region are batched; only the
    straddling ones take the clipped path.
    """
    from .fespace import _SUB_TRIS, triangle_rule

    s_local = hct.local_coeffs(recon.coeffs)  # (nt, 12) reference-basis weights
    v_local = p2.local_dofs(np.asarray(v_coeffs, dtype=float))
    c10 = np.einsum("tm,smp->tsp", s_local, hct.ref_coefs)  # (nt, 3, 10)
    per_signed = np.zeros(mesh.num_triangles)

    cls = weight.classify_batch(mesh)
    inside = np.flatnonzero(cls == 1)
    if len(inside):
        rule = triangle_rule(degree)
        nq = len(rule.weights)
        mono = np.empty((3, nq, 10))
        phi = np.empty((3, nq, 6))
        for s in range(3):
            xi = rule.bary @ _SUB_TRIS[s]
            mono[s] = _mono_val(xi)
            bary = np.column_stack([1.0 - xi.sum(axis=1), xi])
            phi[s] = p2_shape(bary)
        svals = np.einsum("snp,tsp->tsn", mono, c10[inside])
        uvals = np.einsum("sni,ti->tsn", phi, v_local[inside])
        per_signed[inside] = weight.scale * (2.0 * mesh.areas[inside] / 3.0) * np.einsum(
            "n,tsn->t", rule.weights, svals - uvals)

    for t in np.flatnonzero(cls == 0):
        coords = mesh.tri_coords(t)
        centroid = coords.mean(axis=0)
        origin = coords[0]
        Binv = hct.Binv[t]

        def diff(pts, t=t, origin=origin, Binv=Binv):
            xi = (np.atleast_2d(pts) - origin) @ Binv.T
            bary = np.column_stack([1.0 - xi.sum(axis=1), xi])
            sub = locate_sub(bary)
            vals = np.empty(len(xi))
            for s in range(3):
                sel = sub == s
                if np.any(sel):
                    vals[sel] = _mono_val(xi[sel]) @ c10[t, s]
            return vals - p2_shape(bary) @ v_local[t]

        q_t = 0.0
        for s in range(3):
            sub_coords = np.array([coords[s], coords[(s + 1) % 3], centroid])
            q_t += float(weight.integrate(sub_coords, diff, degree=degree))
        per_signed[t] = q_t

    return float(per_signed.sum()), np.abs(per_signed)


def c1_mismatch(mesh, hct, coeffs, params=(0.25, 0.5, 0.75)):
    """Max two-sided value and gradient mismatch over interior edges.

    Both adjacent elements are evaluated at the same physical points; for a
    conforming reconstruction the mismatch is at rounding level.
    """
    interior = np.flatnonzero(~mesh.edge_on_boundary)
    if len(interior) == 0:
        return 0.0, 0.0
    a = mesh.edges[interior, 0]
    b = mesh.edges[interior, 1]
    s = np.asarray(params)
    pts = mesh.vertices[a][:, None, :] + s[None, :, None] * (
        mesh.vertices[b] - mesh.vertices[a])[:, None, :]

    lc = hct.local_coeffs(np.asarray(coeffs, dtype=float))

    mono_c = np.einsum("tm,smp->tsp", lc, hct.ref_coefs)  # (nt, 3, 10)

    def side_eval(tris):
        n_e, n_s = pts.shape[0], pts.shape[1]
        xi = np.einsum("esd,ecd->esc", pts - hct.origin[tris][:, None], hct.Binv[tris])
        flat = xi.reshape(-1, 2)
        bary = np.column_stack([1.0 - flat.sum(axis=1), flat])
        sub = locate_sub(bary)
        tidx = np.repeat(tris, n_s)
        cf = mono_c[tidx, sub]  # (n, 10)
        vals = np.einsum("np,np->n", _mono_val(flat), cf)
        gref = np.einsum("npd,np->nd", _mono_grad(flat), cf)
        gphys = np.einsum("nd,ndc->nc", gref, hct.Binv[tidx])
        return vals.reshape(n_e, n_s), gphys.reshape(n_e, n_s, 2)

    vp, gp = side_eval(mesh.edge_tris[interior, 0])
    vm, gm = side_eval(mesh.edge_tris[interior, 1])
    return float(np.abs(vp - vm).max()), float(np.abs(gp - gm).max())
