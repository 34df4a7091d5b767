import numpy as np
import pytest

from platefem.assembly import ip_error_norm, ip_norm
from platefem.benchmarks import StripWeight
from platefem.fespace import HctSpace, P2Space
from platefem.mesh import build_mesh, refine_uniform
from platefem.reconstruction import c1_mismatch, enrich, nonconformity_goal_term

SIGMA = 20.0


def square_mesh(refines=0):
    m = build_mesh([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)],
                   [(0, 1, 2), (0, 2, 3)])
    for _ in range(refines):
        m = refine_uniform(m)
    return m


def interpolate(mesh, space, fn):
    coeffs = np.zeros(space.ndof)
    coeffs[: mesh.num_vertices] = [fn(p) for p in mesh.vertices]
    coeffs[mesh.num_vertices:] = [fn(p) for p in mesh.edge_midpoints]
    return coeffs


def test_enrich_zero():
    mesh = square_mesh(1)
    p2, hct = P2Space(mesh), HctSpace(mesh)
    s = enrich(mesh, p2, hct, np.zeros(p2.ndof))
    assert np.all(s.coeffs == 0.0)


def test_enrich_two_element_gradient_average():
    # hand-computed two-element patch: the normal-derivative DOF at the shared
    # midpoint is the mean of the two one-sided normal derivatives
    mesh = square_mesh(0)
    p2, hct = P2Space(mesh), HctSpace(mesh)
    rng = np.random.default_rng(2)
    v = rng.standard_normal(p2.ndof)
    s = enrich(mesh, p2, hct, v)
    e = int(np.flatnonzero(~mesh.edge_on_boundary)[0])
    mid = mesh.edge_midpoints[e]
    n = mesh.edge_normals[e]
    tp, tm = mesh.edge_tris[e]

    def one_sided(t):
        coords = mesh.tri_coords(t)
        B = p2.B[t]
        lam12 = np.linalg.solve(B, mid - coords[0])
        bary = np.array([1 - lam12.sum(), *lam12])
        return float(p2.grad_at(v, t, bary[None])[0] @ n)

    want = 0.5 * (one_sided(tp) + one_sided(tm))
    got = s.coeffs[3 * mesh.num_vertices + e]
    assert got == pytest.approx(want, rel=1e-12)


def test_enrich_reproduces_clamped_c1_field():
    # a field whose one-sided nodal data agree is reproduced exactly
    mesh = square_mesh(2)
    p2, hct = P2Space(mesh), HctSpace(mesh)
    q = lambda p: p[0] ** 2 * (1 - p[0]) * p[1]  # smooth, not clamped; compare averaging only
    v = interpolate(mesh, p2, q)
    s = enrich(mesh, p2, hct, v)
    # vertex values of the reconstruction equal the field's vertex values
    nv = mesh.num_vertices
    inner = ~mesh.vertex_on_boundary
    assert np.allclose(s.coeffs[0:3 * nv:3][inner], v[:nv][inner], atol=1e-13)


def test_reconstruction_is_c1_and_clamped(bench):
    b = bench("example_1", 2)
    hct = HctSpace(b.mesh)
    s = enrich(b.mesh, b.p2, hct, b.u)
    vmax, gmax = c1_mismatch(b.mesh, hct, s.coeffs)
    scale = max(1.0, np.abs(s.coeffs).max())
    assert vmax < 1e-10 * scale
    assert gmax < 1e-10 * scale
    # boundary nodal data vanish exactly
    nv = b.mesh.num_vertices
    bdry_v = np.flatnonzero(b.mesh.vertex_on_boundary)
    for j in bdry_v:
        assert s.coeffs[3 * j] == 0.0 and s.coeffs[3 * j + 1] == 0.0 and s.coeffs[3 * j + 2] == 0.0
    assert np.all(s.coeffs[3 * nv:][b.mesh.edge_on_boundary] == 0.0)


def test_quasi_best_approximation_band(bench):
    # || E v - v || / || u - v || stays within a bounded band under refinement
    ratios = []
    for r in (0, 1, 2):
        b = bench("example_1", r)
        hct = HctSpace(b.mesh)
        s = enrich(b.mesh, b.p2, hct, b.u)
        # || E u - u ||: hessian part per sub-triangle + jumps of u alone
        from platefem.fespace import triangle_rule

        rule = triangle_rule(6)
        pts, w, Hs = hct.quad_hessians(s.coeffs, rule)
        Hu = b.p2.hess_of(b.u)
        diff = Hs - Hu[:, None, None]
        broken = float(np.einsum("tgn,tgnab,tgnab->", w, diff, diff))
        jump = b.ops.jump_penalty_norm_sq(b.u, b.sigma)
        enr = np.sqrt(broken + jump)
        err = ip_error_norm(b.mesh, b.p2, b.u, b.problem.exact.hess, b.sigma,
                            degree=12, edge_ops=b.ops, exact_grad=b.problem.exact.grad)
        ratios.append(enr / err)
    assert max(ratios) <= 10.0


def test_nonconformity_term_zero_cases(bench):
    b = bench("example_1", 1)
    hct = HctSpace(b.mesh)
    s = enrich(b.mesh, b.p2, hct, b.u)
    # weight identically outside every element -> 0
    far = StripWeight(lo=10.0, hi=11.0, measure=1.0)
    g, per = nonconformity_goal_term(b.mesh, hct, s, b.p2, b.u, far)
    assert g == 0.0 and np.all(per == 0.0)


def test_nonconformity_global_vs_local(bench):
    b = bench("example_1", 2)
    hct = HctSpace(b.mesh)
    s = enrich(b.mesh, b.p2, hct, b.u)
    g, per = nonconformity_goal_term(b.mesh, hct, s, b.p2, b.u, b.problem.weight)
    assert per.sum() >= abs(g) - 1e-15
    assert g != 0.0
