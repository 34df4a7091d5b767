"""Assembly of the interior penalty bilinear form, load vectors and solves.

The bilinear form is

    a(u, v) = sum_K int_K D2u : D2v
            - sum_e int_e ( [dn u] {D2v_nn} + {D2u_nn} [dn v] )
            + sum_e (sigma / h_e) int_e [dn u] [dn v],

with jumps/averages over all edges (traces on boundary edges), which imposes
the zero normal derivative weakly; the zero boundary values are imposed
strongly by constraining boundary DOFs.

:class:`EdgeOps` precomputes, for every edge, the normal-derivative jump of
the twelve basis functions of the two adjacent elements at the edge Gauss
points and the averaged normal-normal hessian row; assembly, the mesh-dependent
norm and the estimator edge terms all reuse it.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

try:
    from cvxopt import cholmod as _cholmod
    from cvxopt import matrix as _cvx_matrix
    from cvxopt import spmatrix as _cvx_spmatrix
except ImportError:  # pragma: no cover
    _cholmod = None

from .fespace import edge_rule, p2_grad_ref, p2_shape, triangle_rule

__all__ = [
    "SparseSpdMatrix",
    "EdgeOps",
    "assemble_aip",
    "assemble_load",
    "solve",
    "ip_norm",
    "ip_error_norm",
    "QuadratureLoad",
]


@dataclass
class SparseSpdMatrix:
    """SPD operator restricted to the free DOFs, in compressed-row layout."""

    matrix: sp.csr_matrix
    free: np.ndarray
    ndof: int
    symmetric: bool

    @property
    def dim(self):
        return self.matrix.shape[0]

    def expand(self, x_free):
        """Scatter a free-DOF vector into a full coefficient vector (zeros elsewhere)."""
        x = np.zeros(self.ndof)
        x[self.free] = x_free
        return x


class EdgeOps:
    """Per-edge jump and average data for a P2 space.

    For every edge the twelve slots are the six basis functions of the plus
    triangle followed by the six of the minus triangle; on boundary edges the
    minus slots are zero-padded duplicates of the plus triangle's DOFs.
    """

    def __init__(self, mesh, space):
        self.mesh = mesh
        self.space = space
        rule = edge_rule(3)
        self.s = rule.points
        self.w = rule.weights
        nq = len(self.s)
        ne = mesh.num_edges

        a, b = mesh.edges[:, 0], mesh.edges[:, 1]
        tp = mesh.edge_tris[:, 0]
        tm_raw = mesh.edge_tris[:, 1]
        interior = tm_raw >= 0
        tm = np.where(interior, tm_raw, tp)
        self.h = mesh.edge_lengths
        self.n = mesh.edge_normals
        self.interior = interior

        def side_dn(tris):
            # normal derivative of the 6 local basis functions at the edge points
            loc_a = np.argmax(mesh.triangles[tris] == a[:, None], axis=1)
            loc_b = np.argmax(mesh.triangles[tris] == b[:, None], axis=1)
            bary = np.zeros((ne, nq, 3))
            eidx = np.arange(ne)[:, None]
            qidx = np.arange(nq)[None, :]
            bary[eidx, qidx, loc_a[:, None]] = 1.0 - self.s[None, :]
            bary[eidx, qidx, loc_b[:, None]] = self.s[None, :]
            g = p2_grad_ref(bary.reshape(-1, 3)).reshape(ne, nq, 6, 2)
            gph = np.einsum("eqid,edc->eqic", g, space.Binv[tris])
            return np.einsum("eqic,ec->eqi", gph, self.n)

        dn_p = side_dn(tp)
        dn_m = side_dn(tm)
        J = np.concatenate([dn_p, -dn_m], axis=2)  # (ne, nq, 12)
        J[~interior, :, 6:] = 0.0

        nn_p = np.einsum("ea,eiab,eb->ei", self.n, space.hess[tp], self.n)
        nn_m = np.einsum("ea,eiab,eb->ei", self.n, space.hess[tm], self.n)
        A = 0.5 * np.concatenate([nn_p, nn_m], axis=1)
        A[~interior, :6] = nn_p[~interior]
        A[~interior, 6:] = 0.0

        self.J = J
        self.A = A
        self.dofs = np.concatenate([space.tri_dofs[tp], space.tri_dofs[tm]], axis=1)
        # physical edge quadrature points (ne, nq, 2)
        pa, pb = mesh.vertices[a], mesh.vertices[b]
        self.points = pa[:, None, :] + self.s[None, :, None] * (pb - pa)[:, None, :]

    def normal_jumps(self, coeffs):
        """[dn v] at the edge Gauss points, (ne, nq)."""
        return np.einsum("eqi,ei->eq", self.J, np.asarray(coeffs)[self.dofs])

    def nn_averages(self, coeffs):
        """{D2v_nn} (constant per edge for P2), (ne,)."""
        return np.einsum("ei,ei->e", self.A, np.asarray(coeffs)[self.dofs])

    def jump_penalty_norm_sq(self, coeffs, sigma):
        """sum_e (sigma/h_e) ||[dn v]||^2_e; the edge length cancels the 1/h_e."""
        j = self.normal_jumps(coeffs)
        return sigma * float(np.einsum("eq,q->", j**2, self.w))


def assemble_aip(mesh, space, sigma, edge_ops=None):
    """Assemble the interior penalty operator restricted to the free DOFs."""
    if sigma <= 0:
        raise ValueError("penalty parameter sigma must be positive")
    ops = edge_ops if edge_ops is not None else EdgeOps(mesh, space)
    n = space.ndof

    def scatter(dofs, blocks):
        rows = np.broadcast_to(dofs[:, :, None], blocks.shape).ravel()
        cols = np.broadcast_to(dofs[:, None, :], blocks.shape).ravel()
        return sp.coo_matrix((blocks.ravel(), (rows, cols)), shape=(n, n)).tocsr()

    # element term: hessians are constant per element
    Ke = np.einsum("tiab,tjab,t->tij", space.hess, space.hess, mesh.areas)
    A = scatter(space.tri_dofs, Ke)

    # edge terms, chunked to bound the scatter memory
    intJ = np.einsum("eqi,q,e->ei", ops.J, ops.w, ops.h)
    chunk = 150_000
    for start in range(0, mesh.num_edges, chunk):
        sl = slice(start, min(start + chunk, mesh.num_edges))
        Ee = -(np.einsum("ei,ej->eij", intJ[sl], ops.A[sl])
               + np.einsum("ei,ej->eij", ops.A[sl], intJ[sl]))
        Ee += sigma * np.einsum("eqi,eqj,q->eij", ops.J[sl], ops.J[sl], ops.w)
        A = A + scatter(ops.dofs[sl], Ee)

    asym = abs(A - A.T).max()
    symmetric = asym < 1e-12 * max(abs(A).max(), 1.0)
    Af = A[space.free][:, space.free].tocsr()
    return SparseSpdMatrix(matrix=Af, free=space.free, ndof=n, symmetric=bool(symmetric))


@lru_cache(maxsize=None)
def _composite_rule(degree, level):
    """Barycentric points and unit weights of a red-subdivided rule.

    Weights sum to the reference area 1/2, like a plain rule.
    """
    rule = triangle_rule(degree)
    cells = [np.eye(3)]
    for _ in range(level):
        nxt = []
        for c in cells:
            m01, m12, m20 = 0.5 * (c[0] + c[1]), 0.5 * (c[1] + c[2]), 0.5 * (c[2] + c[0])
            nxt += [np.array([c[0], m01, m20]), np.array([c[1], m12, m01]),
                    np.array([c[2], m20, m12]), np.array([m01, m12, m20])]
        cells = nxt
    bary = np.vstack([rule.bary @ c for c in cells])
    wts = np.tile(rule.weights / 4.0**level, len(cells))
    return bary, wts


class QuadratureLoad:
    """Scalar density integrated by a (composite) interior rule.

    ``subdivisions`` maps triangle corner coordinates (a single (3, 2) array
    or an (n, 3, 2) batch) to the number of red subdivision levels applied
    before the rule; smooth data uses zero.
    """

    def __init__(self, f, degree=8, subdivisions=None):
        self.f = f
        self.degree = degree
        self.rule = triangle_rule(degree)
        self.subdivisions = subdivisions

    def _level(self, coords):
        return 0 if self.subdivisions is None else int(self.subdivisions(coords))

    def _levels(self, mesh):
        if self.subdivisions is None:
            return np.zeros(mesh.num_triangles, dtype=int)
        coords = mesh.vertices[mesh.triangles]
        return np.asarray(self.subdivisions(coords), dtype=int)

    def points_weights(self, coords):
        coords = np.asarray(coords, dtype=float)
        bary, uw = _composite_rule(self.degree, self._level(coords))
        d1, d2 = coords[1] - coords[0], coords[2] - coords[0]
        area2 = abs(d1[0] * d2[1] - d1[1] * d2[0])
        return bary @ coords, uw * area2

    def integrate(self, coords, fn):
        """Integral of density * fn over the triangle; fn maps (n,2) -> (n, m)."""
        pts, wts = self.points_weights(coords)
        vals = np.asarray(fn(pts))
        dens = self.f(pts)
        return np.einsum("n,n,n...->...", wts, dens, vals)

    def element_basis_integrals(self, mesh, space):
        """Batched per-element load integrals against the P2 basis, (nt, 6)."""
        out = np.empty((mesh.num_triangles, 6))
        levels = self._levels(mesh)
        for lv in np.unique(levels):
            idx = np.flatnonzero(levels == lv)
            bary, uw = _composite_rule(self.degree, int(lv))
            phi = p2_shape(bary)
            pts = np.einsum("mk,gkd->gmd", bary, mesh.vertices[mesh.triangles[idx]])
            dens = self.f(pts.reshape(-1, 2)).reshape(len(idx), -1)
            out[idx] = np.einsum("gm,m,mi->gi", dens, uw, phi) * (2.0 * mesh.areas[idx])[:, None]
        return out

    def element_integrals(self, mesh, values_fn=None):
        """Batched per-element integrals of density * values_fn, (nt,).

        ``values_fn`` defaults to the density itself (squared-density
        integrals for oscillation bookkeeping).
        """
        out = np.empty(mesh.num_triangles)
        levels = self._levels(mesh)
        for lv in np.unique(levels):
            idx = np.flatnonzero(levels == lv)
            bary, uw = _composite_rule(self.degree, int(lv))
            pts = np.einsum("mk,gkd->gmd", bary, mesh.vertices[mesh.triangles[idx]])
            flat = pts.reshape(-1, 2)
            dens = self.f(flat).reshape(len(idx), -1)
            vals = dens if values_fn is None else np.asarray(values_fn(flat)).reshape(len(idx), -1)
            out[idx] = np.einsum("gm,m,gm->g", dens, uw, vals) * 2.0 * mesh.areas[idx]
        return out


def assemble_load(mesh, space, load):
    """Load vector over all DOFs; solve with the free slice.

    ``load`` provides either batched ``element_basis_integrals(mesh, space)``
    or per-element ``integrate(tri_coords, fn)`` with a vector callback.
    """
    b = np.zeros(space.ndof)
    if hasattr(load, "element_basis_integrals"):
        np.add.at(b, space.tri_dofs, load.element_basis_integrals(mesh, space))
        return b
    for t in range(mesh.num_triangles):
        coords = mesh.tri_coords(t)
        Binv = space.Binv[t]

        def basis(pts, origin=coords[0], Binv=Binv):
            lam12 = (np.atleast_2d(pts) - origin) @ Binv.T
            bary = np.column_stack([1.0 - lam12.sum(axis=1), lam12])
            return p2_shape(bary)

        b[space.tri_dofs[t]] += load.integrate(coords, basis)
    return b


class _Factorization:
    """Sparse SPD factorization: supernodal Cholesky, LU as fallback."""

    def __init__(self, M):
        self.backend = "splu"
        if _cholmod is not None:
            coo = M.tocoo()
            Acv = _cvx_spmatrix(coo.data, coo.row.astype(int), coo.col.astype(int), coo.shape)
            self._F = _cholmod.symbolic(Acv)
            _cholmod.numeric(Acv, self._F)  # raises on indefinite input
            self.backend = "cholmod"
        else:  # pragma: no cover
            self._lu = spla.splu(M.tocsc())

    def solve(self, b):
        if self.backend == "cholmod":
            x = _cvx_matrix(np.ascontiguousarray(b))
            _cholmod.solve(self._F, x)
            return np.asarray(x).reshape(b.shape)
        return self._lu.solve(b)  # pragma: no cover


def solve(A, b, rel_tol=1e-10):
    """Solve the SPD system with a sparse direct factorization.

    Accepts either a :class:`SparseSpdMatrix` (with a free-DOF sized right
    hand side) or any scipy sparse matrix.  Iterative refinement drives the
    residual to the backward-stable floor; the verified quantity is the
    normwise backward error ||r|| / (||A|| ||x|| + ||b||), which remains
    meaningful for the strongly conditioned fourth-order systems where a
    residual relative to ||b|| alone cannot reach rounding level.
    """
    M = A.matrix if isinstance(A, SparseSpdMatrix) else sp.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    single = b.ndim == 1
    B = b[:, None] if single else b
    if B.shape[0] != M.shape[0]:
        raise ValueError("right-hand side does not match the free system size")
    X = np.zeros_like(B)
    live = np.linalg.norm(B, axis=0) > 0.0
    if np.any(live):
        anorm = abs(M).sum(axis=1).max()
        fac = _Factorization(M)
        Bl = B[:, live]
        bnorm = np.linalg.norm(Bl, axis=0)
        x = fac.solve(Bl)
        r = Bl - M @ x

        def done(r, x):
            back = np.linalg.norm(r, axis=0) / (anorm * np.linalg.norm(x, axis=0) + bnorm)
            small = np.linalg.norm(r, axis=0) <= rel_tol * bnorm
            return np.all(small | (back <= rel_tol)), back

        ok, backward = done(r, x)
        for _ in range(8):
            if ok:
                break
            dx = fac.solve(r)
            if np.linalg.norm(dx) <= 1e-17 * np.linalg.norm(x):
                break
            x = x + dx
            r = Bl - M @ x
            ok, backward = done(r, x)
        if not ok:
            raise RuntimeError(
                f"linear solve stalled at backward error {backward.max():.3e}")
        X[:, live] = x
    return X[:, 0] if single else X


def ip_norm(mesh, space, coeffs, sigma, edge_ops=None):
    """Mesh-dependent norm: broken hessian seminorm plus penalized jumps."""
    ops = edge_ops if edge_ops is not None else EdgeOps(mesh, space)
    H = space.hess_of(coeffs)
    broken = float(np.einsum("tab,tab,t->", H, H, mesh.areas))
    return np.sqrt(broken + ops.jump_penalty_norm_sq(coeffs, sigma))


def ip_error_norm(mesh, space, coeffs, exact_hess, sigma, degree=8, edge_ops=None,
                  exact_grad=None):
    """Mesh-dependent norm of (exact - discrete) for a C1 exact solution.

    ``exact_hess`` maps (n, 2) points to (n, 2, 2) hessians.  A C1 exact
    solution has no jumps across interior edges; on boundary edges its normal
    derivative enters the trace term and is taken from ``exact_grad`` when
    given (clamped data otherwise).
    """
    ops = edge_ops if edge_ops is not None else EdgeOps(mesh, space)
    rule = triangle_rule(degree)
    Hd = space.hess_of(coeffs)
    broken = 0.0
    for t in range(mesh.num_triangles):
        pts = rule.bary @ mesh.tri_coords(t)
        w = rule.weights * 2.0 * mesh.areas[t]
        diff = exact_hess(pts) - Hd[t]
        broken += float(np.einsum("n,nab,nab->", w, diff, diff))
    jumps = -ops.normal_jumps(coeffs)
    if exact_grad is not None:
        bnd = ~ops.interior
        g = exact_grad(ops.points[bnd].reshape(-1, 2)).reshape(-1, len(ops.s), 2)
        jumps[bnd] += np.einsum("eqd,ed->eq", g, ops.n[bnd])
    return np.sqrt(broken + sigma * float(np.einsum("eq,q->", jumps**2, ops.w)))
