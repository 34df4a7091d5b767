"""Reference-element machinery: quadrature, P2 Lagrange, C1 macroelement, HHJ tensors.

Three discrete spaces live here:

* :class:`P2Space` — continuous piecewise quadratics (vertex + edge-midpoint
  DOFs), clamped by constraining all boundary DOFs;
* :class:`HctSpace` — the cubic C1 macroelement obtained by splitting each
  triangle at its barycenter, with vertex value/gradient DOFs and an
  edge-midpoint normal-derivative DOF;
* :class:`HhjSpace` — piecewise-linear symmetric 2x2 tensors with a
  single-valued normal-normal trace (two moments per edge, three interior
  moments per triangle).

The macroelement basis is built once on the reference triangle as the
nullspace of the C1 matching conditions across the three internal edges; per
element only a 12x12 DOF matrix is inverted (batched over the mesh).  The
normal-derivative DOFs of both HctSpace and HhjSpace are taken with respect
to the global edge normals of the mesh, which makes the assembled fields
conforming across elements.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import numpy as np

__all__ = [
    "QuadratureRule",
    "EdgeRule",
    "triangle_rule",
    "edge_rule",
    "p2_shape",
    "p2_grad_ref",
    "P2_HESS_REF",
    "eval_p2",
    "eval_hct",
    "eval_hhj",
    "P2Space",
    "HctSpace",
    "HhjSpace",
]

MAX_RULE_DEGREE = 20


# --------------------------------------------------------------------------
# quadrature
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureRule:
    """Quadrature on the reference triangle, points in barycentric coordinates."""

    bary: np.ndarray     # (n, 3)
    weights: np.ndarray  # (n,), sums to the reference area 1/2
    degree: int


@dataclass(frozen=True)
class EdgeRule:
    """Gauss rule on the unit interval [0, 1]."""

    points: np.ndarray
    weights: np.ndarray
    degree: int


def _gauss01(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> QuadratureRule:
    """Positive-weight interior rule exact for polynomials up to ``degree``.

    Built as a collapsed Gauss product on the square; exactness is verified
    against the analytic monomial integrals at construction.
    """
    if not 0 <= degree <= MAX_RULE_DEGREE:
        raise ValueError(f"unsupported triangle rule degree {degree}")
    nu = degree // 2 + 1
    nv = (degree + 1) // 2 + 1
    xu, wu = _gauss01(nu)
    xv, wv = _gauss01(nv)
    U, V = np.meshgrid(xu, xv, indexing="ij")
    x = (U * (1.0 - V)).ravel()
    y = V.ravel()
    w = (np.outer(wu, wv) * (1.0 - V)).ravel()
    bary = np.stack([1.0 - x - y, x, y], axis=1)
    rule = QuadratureRule(bary=bary, weights=w, degree=degree)
    _verify_triangle_rule(rule)
    return rule


def _verify_triangle_rule(rule):
    x, y = rule.bary[:, 1], rule.bary[:, 2]
    for i in range(rule.degree + 1):
        for j in range(rule.degree + 1 - i):
            exact = factorial(i) * factorial(j) / factorial(i + j + 2)
            got = float(np.sum(rule.weights * x**i * y**j))
            if abs(got - exact) > 1e-13 * exact:
                raise AssertionError(f"triangle rule degree {rule.degree} misses x^{i} y^{j}")


@lru_cache(maxsize=None)
def edge_rule(degree: int) -> EdgeRule:
    if not 0 <= degree <= 2 * MAX_RULE_DEGREE:
        raise ValueError(f"unsupported edge rule degree {degree}")
    n = degree // 2 + 1
    x, w = _gauss01(n)
    for k in range(degree + 1):
        exact = 1.0 / (k + 1)
        if abs(float(np.sum(w * x**k)) - exact) > 1e-13 * exact:
            raise AssertionError(f"edge rule degree {degree} misses x^{k}")
    return EdgeRule(points=x, weights=w, degree=degree)


# --------------------------------------------------------------------------
# P2 Lagrange reference element
# --------------------------------------------------------------------------

_GRAD_LAMBDA = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])

# constant reference hessians of the six shape functions
P2_HESS_REF = np.array([
    4.0 * np.outer(_GRAD_LAMBDA[0], _GRAD_LAMBDA[0]),
    4.0 * np.outer(_GRAD_LAMBDA[1], _GRAD_LAMBDA[1]),
    4.0 * np.outer(_GRAD_LAMBDA[2], _GRAD_LAMBDA[2]),
    4.0 * (np.outer(_GRAD_LAMBDA[1], _GRAD_LAMBDA[2]) + np.outer(_GRAD_LAMBDA[2], _GRAD_LAMBDA[1])),
    4.0 * (np.outer(_GRAD_LAMBDA[2], _GRAD_LAMBDA[0]) + np.outer(_GRAD_LAMBDA[0], _GRAD_LAMBDA[2])),
    4.0 * (np.outer(_GRAD_LAMBDA[0], _GRAD_LAMBDA[1]) + np.outer(_GRAD_LAMBDA[1], _GRAD_LAMBDA[0])),
])


def p2_shape(bary):
    """Shape function values at barycentric points, shape (n, 6).

    Local order: three vertex functions, then the midpoint function of the
    edge opposite each vertex.
    """
    bary = np.atleast_2d(bary)
    l0, l1, l2 = bary[:, 0], bary[:, 1], bary[:, 2]
    return np.stack([
        l0 * (2.0 * l0 - 1.0),
        l1 * (2.0 * l1 - 1.0),
        l2 * (2.0 * l2 - 1.0),
        4.0 * l1 * l2,
        4.0 * l2 * l0,
        4.0 * l0 * l1,
    ], axis=1)


def p2_grad_ref(bary):
    """Reference gradients at barycentric points, shape (n, 6, 2)."""
    bary = np.atleast_2d(bary)
    n = len(bary)
    g = np.empty((n, 6, 2))
    for i in range(3):
        g[:, i] = (4.0 * bary[:, i, None] - 1.0) * _GRAD_LAMBDA[i]
    pairs = [(1, 2), (2, 0), (0, 1)]
    for k, (a, b) in enumerate(pairs):
        g[:, 3 + k] = 4.0 * (bary[:, b, None] * _GRAD_LAMBDA[a] + bary[:, a, None] * _GRAD_LAMBDA[b])
    return g


def _affine(tri_coords):
    tri_coords = np.asarray(tri_coords, dtype=float)
    B = np.stack([tri_coords[1] - tri_coords[0], tri_coords[2] - tri_coords[0]], axis=1)
    return B, np.linalg.inv(B)


def eval_p2(local_dofs, tri_coords, bary, order=0):
    """Evaluate a P2 field (or its gradient / hessian) at a barycentric point."""
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    local_dofs = np.asarray(local_dofs, dtype=float)
    single = np.ndim(bary) == 1
    bary = np.atleast_2d(bary)
    if order == 0:
        out = p2_shape(bary) @ local_dofs
    elif order == 1:
        _, Binv = _affine(tri_coords)
        out = np.einsum("nid,i,de->ne", p2_grad_ref(bary), local_dofs, Binv)
    else:
        _, Binv = _affine(tri_coords)
        H = np.einsum("iab,i->ab", P2_HESS_REF, local_dofs)
        out = np.broadcast_to(Binv.T @ H @ Binv, (len(bary), 2, 2)).copy()
    return out[0] if single else out


class P2Space:
    """Continuous P2 space on a mesh, boundary DOFs constrained to zero."""

    def __init__(self, mesh):
        self.mesh = mesh
        nv, ne = mesh.num_vertices, mesh.num_edges
        self.ndof = nv + ne
        self.tri_dofs = np.hstack([mesh.triangles, nv + mesh.tri_edges])
        self.is_constrained = np.concatenate([mesh.vertex_on_boundary, mesh.edge_on_boundary])
        self.free = np.flatnonzero(~self.is_constrained)
        self.num_free = len(self.free)

        p = mesh.vertices[mesh.triangles]
        B = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # (nt, 2, 2)
        self.B = B
        self.Binv = np.linalg.inv(B)
        # physical hessians of the local basis, constant per element: (nt, 6, 2, 2)
        self.hess = np.einsum("tca,icd,tdb->tiab", self.Binv, P2_HESS_REF, self.Binv)

    def local_dofs(self, coeffs):
        """Gather (nt, 6) local DOF values from a global coefficient vector."""
        return np.asarray(coeffs)[self.tri_dofs]

    def grad_at(self, coeffs, tri, bary):
        """Gradient of the field on triangle ``tri`` at barycentric points, (n, 2)."""
        loc = np.asarray(coeffs)[self.tri_dofs[tri]]
        g = np.einsum("nid,i->nd", p2_grad_ref(bary), loc)
        return g @ self.Binv[tri]

    def value_at(self, coeffs, tri, bary):
        loc = np.asarray(coeffs)[self.tri_dofs[tri]]
        return p2_shape(bary) @ loc

    def hess_of(self, coeffs):
        """Element-constant hessians of the field, (nt, 2, 2)."""
        return np.einsum("tiab,ti->tab", self.hess, self.local_dofs(coeffs))

    def quad_hessians(self, coeffs, rule):
        """Hessians on a quadrature grid, shaped like the macroelement variant.

        Returns (points, weights, hessians) with a single group axis:
        (nt, 1, nq, 2), (nt, 1, nq) and (nt, 1, nq, 2, 2).
        """
        mesh = self.mesh
        pts = np.einsum("nk,tkd->tnd", rule.bary, mesh.vertices[mesh.triangles])
        w = rule.weights[None, :] * (2.0 * mesh.areas)[:, None]
        H = self.hess_of(coeffs)
        nq = len(rule.weights)
        hess = np.broadcast_to(H[:, None, None], (len(H), 1, nq, 2, 2)).copy()
        return pts[:, None], w[:, None], hess


# --------------------------------------------------------------------------
# cubic monomials and the C1 macroelement
# --------------------------------------------------------------------------

def _mono_val(pts):
    x, y = pts[:, 0], pts[:, 1]
    one = np.ones_like(x)
    return np.stack([one, x, y, x * x, x * y, y * y, x**3, x * x * y, x * y * y, y**3], axis=1)


def _mono_grad(pts):
    x, y = pts[:, 0], pts[:, 1]
    z = np.zeros_like(x)
    one = np.ones_like(x)
    gx = np.stack([z, one, z, 2 * x, y, z, 3 * x * x, 2 * x * y, y * y, z], axis=1)
    gy = np.stack([z, z, one, z, x, 2 * y, z, x * x, 2 * x * y, 3 * y * y], axis=1)
    return np.stack([gx, gy], axis=2)  # (n, 10, 2)


def _mono_hess(pts):
    x, y = pts[:, 0], pts[:, 1]
    z = np.zeros_like(x)
    one = np.ones_like(x)
    hxx = np.stack([z, z, z, 2 * one, z, z, 6 * x, 2 * y, z, z], axis=1)
    hxy = np.stack([z, z, z, z, one, z, z, 2 * x, 2 * y, z], axis=1)
    hyy = np.stack([z, z, z, z, z, 2 * one, z, z, 2 * x, 6 * y], axis=1)
    H = np.empty((len(x), 10, 2, 2))
    H[:, :, 0, 0] = hxx
    H[:, :, 0, 1] = hxy
    H[:, :, 1, 0] = hxy
    H[:, :, 1, 1] = hyy
    return H


_REF_VERTS = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
_REF_CENTER = np.array([1.0, 1.0]) / 3.0
# sub-triangle s spans (vertex s, vertex s+1, barycenter)
_SUB_TRIS = [np.array([_REF_VERTS[s], _REF_VERTS[(s + 1) % 3], _REF_CENTER]) for s in range(3)]


def locate_sub(bary):
    """Sub-triangle index for barycentric points of the macro triangle.

    Sub-triangle ``s`` is where the barycentric coordinate of vertex ``s+2``
    is minimal; ties resolve to the lowest sub-index.
    """
    bary = np.atleast_2d(bary)
    mn = bary.min(axis=1, keepdims=True)
    cand = np.where(bary <= mn, (np.arange(3) + 1) % 3, 3)
    return cand.min(axis=1)


@lru_cache(maxsize=1)
def _hct_reference():
    """Nullspace basis of the C1 matching conditions on the barycentric split.

    Returns the (3, 12, 10) monomial coefficients of twelve independent C1
    functions (one coefficient block per sub-triangle) plus their values and
    gradients at the vertices and outer-edge midpoints.
    """
    rows = []
    for j in range(3):
        a_sub, b_sub = (j + 2) % 3, j  # subs sharing the internal edge (vertex j, center)
        d = _REF_CENTER - _REF_VERTS[j]
        nrm = np.array([d[1], -d[0]]) / np.hypot(*d)
        for t in (0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0):
            p = (_REF_VERTS[j] + t * d)[None, :]
            row = np.zeros(30)
            row[10 * a_sub:10 * a_sub + 10] = _mono_val(p)[0]
            row[10 * b_sub:10 * b_sub + 10] -= _mono_val(p)[0]
            rows.append(row)
        for t in (1.0 / 6.0, 0.5, 5.0 / 6.0):
            p = (_REF_VERTS[j] + t * d)[None, :]
            gn = _mono_grad(p)[0] @ nrm
            row = np.zeros(30)
            row[10 * a_sub:10 * a_sub + 10] = gn
            row[10 * b_sub:10 * b_sub + 10] -= gn
            rows.append(row)
    C = np.array(rows)
    _, sv, Vt = np.linalg.svd(C)
    rank = int(np.sum(sv > 1e-10 * sv[0]))
    assert rank == 18, f"unexpected C1 constraint rank {rank}"
    null = Vt[rank:]  # (12, 30), orthonormal
    coefs = null.reshape(12, 3, 10).transpose(1, 0, 2).copy()  # (sub, func, mono)

    vert_val = np.empty((3, 12))
    vert_grad = np.empty((3, 12, 2))
    for j in range(3):
        p = _REF_VERTS[j][None, :]
        vert_val[j] = coefs[j] @ _mono_val(p)[0]
        vert_grad[j] = coefs[j] @ _mono_grad(p)[0]
    mid_grad = np.empty((3, 12, 2))
    for k in range(3):
        p = (0.5 * (_REF_VERTS[(k + 1) % 3] + _REF_VERTS[(k + 2) % 3]))[None, :]
        mid_grad[k] = coefs[(k + 1) % 3] @ _mono_grad(p)[0]
    return coefs, vert_val, vert_grad, mid_grad


class HctSpace:
    """H2-conforming macroelement space; boundary DOFs constrained to zero.

    Global DOF layout: three slots per vertex (value, d/dx, d/dy) followed by
    one slot per edge (normal derivative at the midpoint, along the global
    edge normal).
    """

    def __init__(self, mesh):
        self.mesh = mesh
        nv, ne, nt = mesh.num_vertices, mesh.num_edges, mesh.num_triangles
        self.ndof = 3 * nv + ne
        t = mesh.triangles
        self.tri_dofs = np.hstack([
            3 * t[:, 0:1], 3 * t[:, 0:1] + 1, 3 * t[:, 0:1] + 2,
            3 * t[:, 1:2], 3 * t[:, 1:2] + 1, 3 * t[:, 1:2] + 2,
            3 * t[:, 2:3], 3 * t[:, 2:3] + 1, 3 * t[:, 2:3] + 2,
            3 * nv + mesh.tri_edges,
        ])
        self.is_constrained = np.concatenate([
            np.repeat(mesh.vertex_on_boundary, 3), mesh.edge_on_boundary])

        coefs, vert_val, vert_grad, mid_grad = _hct_reference()
        self.ref_coefs = coefs

        p = mesh.vertices[t]
        B = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
        self.origin = p[:, 0]
        self.B = B
        self.Binv = np.linalg.inv(B)
        BinvT = np.transpose(self.Binv, (0, 2, 1))

        # 12x12 physical DOF matrix per element
        D = np.empty((nt, 12, 12))
        for j in range(3):
            D[:, 3 * j] = vert_val[j]
            D[:, 3 * j + 1:3 * j + 3] = np.einsum("tab,mb->tam", BinvT, vert_grad[j])
        normals = mesh.edge_normals[mesh.tri_edges]  # (nt, 3, 2)
        for k in range(3):
            D[:, 9 + k] = np.einsum("ta,tab,mb->tm", normals[:, k], BinvT, mid_grad[k])
        self.dof_matrix = D
        self.lam = np.linalg.inv(D)  # nodal DOFs -> reference-basis coefficients

    def local_coeffs(self, coeffs):
        """Reference-basis coefficients per element, (nt, 12)."""
        return np.einsum("tmn,tn->tm", self.lam, np.asarray(coeffs)[self.tri_dofs])

    def _ref_points(self, tri, pts_xy):
        pts = np.atleast_2d(pts_xy) - self.origin[tri]
        return pts @ self.Binv[tri].T

    def eval(self, coeffs, tri, pts_xy, order=0):
        """Evaluate the field (order 0), gradient (1) or hessian (2) at physical points."""
        c = self.local_coeffs(coeffs)[tri]
        return self._eval_local(c, tri, pts_xy, order)

    def _eval_local(self, c, tri, pts_xy, order):
        xi = self._ref_points(tri, pts_xy)
        bary = np.stack([1.0 - xi[:, 0] - xi[:, 1], xi[:, 0], xi[:, 1]], axis=1)
        if bary.min() < -1e-9:
            raise ValueError("evaluation point outside the element")
        sub = locate_sub(bary)
        out_shape = {0: (len(xi),), 1: (len(xi), 2), 2: (len(xi), 2, 2)}[order]
        out = np.zeros(out_shape)
        for s in range(3):
            sel = sub == s
            if not np.any(sel):
                continue
            mono_c = c @ self.ref_coefs[s]  # (10,)
            if order == 0:
                out[sel] = _mono_val(xi[sel]) @ mono_c
            elif order == 1:
                g = np.einsum("npd,p->nd", _mono_grad(xi[sel]), mono_c)
                out[sel] = g @ self.Binv[tri]
            else:
                H = np.einsum("npab,p->nab", _mono_hess(xi[sel]), mono_c)
                out[sel] = np.einsum("ca,ncd,db->nab", self.Binv[tri], H, self.Binv[tri])
        return out

    def sub_quad_hessians(self, coeffs, rule):
        """Hessians at quadrature points of every sub-triangle of every element.

        Returns (phys_points, weights, hess) with shapes (nt, 3, nq, 2),
        (nt, 3, nq) and (nt, 3, nq, 2, 2); weights include the physical
        sub-triangle areas.
        """
        c = self.local_coeffs(coeffs)
        return _sub_quad_eval(self, c, rule)

    # same grid contract as P2Space.quad_hessians, with one group per sub-triangle
    quad_hessians = sub_quad_hessians

    def element_evaluator(self, coeffs, tri):
        """Closure evaluating the field at arbitrary physical points of one element."""
        c = self.local_coeffs(coeffs)[tri]

        def fn(pts):
            return self._eval_local(c, tri, pts, order=0)

        return fn


def _sub_quad_eval(space, local_coeffs, rule):
    mesh = space.mesh
    nt = mesh.num_triangles
    nq = len(rule.weights)
    # reference points of each sub-triangle and hessian basis there (once per rule)
    ref_pts = np.empty((3, nq, 2))
    hess_basis = np.empty((3, nq, 12, 2, 2))
    for s in range(3):
        ref_pts[s] = rule.bary @ _SUB_TRIS[s]
        hess_basis[s] = np.einsum("npab,mp->nmab", _mono_hess(ref_pts[s]), space.ref_coefs[s])
    # physical points, weights
    pts = np.einsum("snd,tde->stne", ref_pts, np.transpose(space.B, (0, 2, 1)))
    pts = np.transpose(pts, (1, 0, 2, 3)) + space.origin[:, None, None, :]
    # each sub-triangle has a third of the element area; rule weights sum to 1/2
    area_scale = np.abs(np.linalg.det(space.B)) / 3.0
    w = rule.weights[None, None, :] * area_scale[:, None, None]
    Href = np.einsum("snmab,tm->tsnab", hess_basis, local_coeffs)
    H = np.einsum("tca,tsncd,tdb->tsnab", space.Binv, Href, space.Binv)
    return pts, np.broadcast_to(w, (nt, 3, nq)).copy(), H


def eval_hct(macro_dofs, tri_coords, pts_xy, order=0, edge_normals=None):
    """Evaluate a single macroelement from its 12 DOFs.

    ``edge_normals`` fixes the direction of the three midpoint
    normal-derivative DOFs (edge k opposite vertex k); outward normals are
    used when not given.
    """
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    tri_coords = np.asarray(tri_coords, dtype=float)
    coefs, vert_val, vert_grad, mid_grad = _hct_reference()
    B, Binv = _affine(tri_coords)
    if edge_normals is None:
        edge_normals = []
        centroid = tri_coords.mean(axis=0)
        for k in range(3):
            a, b = tri_coords[(k + 1) % 3], tri_coords[(k + 2) % 3]
            d = b - a
            n = np.array([d[1], -d[0]]) / np.hypot(*d)
            if n @ (0.5 * (a + b) - centroid) < 0:
                n = -n
            edge_normals.append(n)
    D = np.empty((12, 12))
    for j in range(3):
        D[3 * j] = vert_val[j]
        D[3 * j + 1:3 * j + 3] = (Binv.T @ vert_grad[j].T)
    for k in range(3):
        D[9 + k] = np.asarray(edge_normals[k]) @ Binv.T @ mid_grad[k].T
    c = np.linalg.solve(D, np.asarray(macro_dofs, dtype=float))

    shim = _HctShim(tri_coords, B, Binv, coefs)
    return shim.eval(c, pts_xy, order)


class _HctShim:
    """Single-element evaluator sharing the batched evaluation path."""

    def __init__(self, tri_coords, B, Binv, coefs):
        self.origin = tri_coords[0:1]
        self.B = B[None]
        self.Binv = Binv[None]
        self.ref_coefs = coefs

    def eval(self, c, pts_xy, order):
        return HctSpace._eval_local(self, c, 0, pts_xy, order)

    def _ref_points(self, tri, pts_xy):
        pts = np.atleast_2d(pts_xy) - self.origin[tri]
        return pts @ self.Binv[tri].T


# --------------------------------------------------------------------------
# HHJ symmetric tensor element
# --------------------------------------------------------------------------

_TENSOR_BASIS = np.array([
    [[1.0, 0.0], [0.0, 0.0]],
    [[0.0, 1.0], [1.0, 0.0]],
    [[0.0, 0.0], [0.0, 1.0]],
])
_TENSOR_DOT = np.array([1.0, 2.0, 1.0])  # E_c : E_c


class HhjSpace:
    """Piecewise-P1 symmetric tensors with continuous normal-normal trace.

    Global DOF layout: two moments per edge (normal-normal trace against the
    linear hats of the sorted edge endpoints) followed by three interior
    moments per triangle (against the constant symmetric tensor basis).
    """

    def __init__(self, mesh):
        self.mesh = mesh
        ne, nt = mesh.num_edges, mesh.num_triangles
        self.ndof = 2 * ne + 3 * nt
        e = mesh.tri_edges
        self.tri_dofs = np.stack([
            2 * e[:, 0], 2 * e[:, 0] + 1,
            2 * e[:, 1], 2 * e[:, 1] + 1,
            2 * e[:, 2], 2 * e[:, 2] + 1,
            2 * ne + 3 * np.arange(nt), 2 * ne + 3 * np.arange(nt) + 1,
            2 * ne + 3 * np.arange(nt) + 2,
        ], axis=1)

        self.centers = mesh.centroids
        self.scales = mesh.diameters

        er = edge_rule(3)
        M = np.zeros((nt, 9, 9))
        for k in range(3):
            eid = mesh.tri_edges[:, k]
            a, b = mesh.edges[eid, 0], mesh.edges[eid, 1]
            pa, pb = mesh.vertices[a], mesh.vertices[b]
            n = mesh.edge_normals[eid]
            nn = np.stack([n[:, 0] ** 2, 2.0 * n[:, 0] * n[:, 1], n[:, 1] ** 2], axis=1)  # (nt, 3)
            h = mesh.edge_lengths[eid]
            for q, wq in zip(er.points, er.weights):
                x = pa + q * (pb - pa)
                tloc = (x - self.centers) / self.scales[:, None]
                mono = np.stack([np.ones(nt), tloc[:, 0], tloc[:, 1]], axis=1)  # (nt, 3)
                hats = np.array([1.0 - q, q])
                # rows 2k, 2k+1; columns 3c + m
                contrib = np.einsum("tc,tm->tcm", nn, mono) * (wq * h)[:, None, None]
                for a_i in range(2):
                    M[:, 2 * k + a_i, :] += (hats[a_i] * contrib).reshape(nt, 9)
        areas = mesh.areas
        for c in range(3):
            M[:, 6 + c, 3 * c] = areas * _TENSOR_DOT[c]
        self.dof_matrix = M
        self.Minv = np.linalg.inv(M)

    def local_coeffs(self, coeffs):
        """Monomial coefficients per element, (nt, 9): (E_c) x (1, t1, t2)."""
        return np.einsum("tmn,tn->tm", self.Minv, np.asarray(coeffs)[self.tri_dofs])

    def eval_local(self, c, tri, pts_xy):
        pts = np.atleast_2d(pts_xy)
        tloc = (pts - self.centers[tri]) / self.scales[tri]
        mono = np.stack([np.ones(len(pts)), tloc[:, 0], tloc[:, 1]], axis=1)
        comp = mono @ c.reshape(3, 3).T  # (n, 3) components per tensor basis
        return np.einsum("nc,cab->nab", comp, _TENSOR_BASIS)

    def eval(self, coeffs, tri, pts_xy):
        return self.eval_local(self.local_coeffs(coeffs)[tri], tri, pts_xy)

    def element_means(self, coeffs):
        """Mean tensor value per element, (nt, 2, 2): linear parts average out."""
        c = self.local_coeffs(coeffs)
        return np.einsum("tc,cab->tab", c[:, ::3], _TENSOR_BASIS)

    def values_at(self, coeffs, pts, tris):
        """Tensor values at one point per listed element, (n, 2, 2)."""
        c = self.local_coeffs(coeffs)[tris]
        tloc = (pts - self.centers[tris]) / self.scales[tris, None]
        mono = np.stack([np.ones(len(pts)), tloc[:, 0], tloc[:, 1]], axis=1)
        comp = np.einsum("nm,ncm->nc", mono, c.reshape(-1, 3, 3))
        return np.einsum("nc,cab->nab", comp, _TENSOR_BASIS)

    def values_on_grid(self, coeffs, pts):
        """Tensor values on an (nt, groups, nq, 2) point grid, (nt, g, nq, 2, 2)."""
        c = self.local_coeffs(coeffs).reshape(-1, 3, 3)
        tloc = (pts - self.centers[:, None, None]) / self.scales[:, None, None, None]
        mono = np.concatenate([np.ones(tloc.shape[:-1] + (1,)), tloc], axis=-1)
        comp = np.einsum("tgnm,tcm->tgnc", mono, c)
        return np.einsum("tgnc,cab->tgnab", comp, _TENSOR_BASIS)


def eval_hhj(local_dofs, tri_coords, pts_xy, edge_normals=None):
    """Evaluate one HHJ element from its 9 DOFs (6 edge moments + 3 interior)."""
    from .mesh import build_mesh

    tri_coords = np.asarray(tri_coords, dtype=float)
    mesh = build_mesh(tri_coords, [(0, 1, 2)])
    space = HhjSpace(mesh)
    c = np.linalg.solve(space.dof_matrix[0], np.asarray(local_dofs, dtype=float))
    return space.eval_local(c, 0, pts_xy)
