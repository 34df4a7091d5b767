import numpy as np
import pytest

from platefem.assembly import EdgeOps, ip_error_norm
from platefem.equilibration import (
    build_equilibrated_tensor,
    tensor_minus_hessian_norm,
    verify_equilibrium,
)
from platefem.fespace import HhjSpace, P2Space
from platefem.mesh import build_mesh, refine_uniform

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


def test_zero_input_gives_zero_tensor():
    mesh = square_mesh(1)
    p2, hhj = P2Space(mesh), HhjSpace(mesh)
    t = build_equilibrated_tensor(mesh, p2, hhj, np.zeros(p2.ndof), SIGMA)
    assert np.all(t.coeffs == 0.0)
    res = verify_equilibrium(mesh, p2, hhj, t, load=np.zeros(p2.ndof))
    assert res == 0.0


def test_edge_trace_formula():
    # nn-trace of the built tensor equals {D2u_nn} - (sigma/h)[dn u] pointwise
    mesh = square_mesh(2)
    p2, hhj = P2Space(mesh), HhjSpace(mesh)
    ops = EdgeOps(mesh, p2)
    rng = np.random.default_rng(5)
    u = rng.standard_normal(p2.ndof)
    t = build_equilibrated_tensor(mesh, p2, hhj, u, SIGMA, edge_ops=ops)
    jumps = ops.normal_jumps(u)
    avgs = ops.nn_averages(u)
    want = avgs[:, None] - (SIGMA / ops.h)[:, None] * jumps
    for e in range(mesh.num_edges):
        tp = mesh.edge_tris[e, 0]
        n = mesh.edge_normals[e]
        got = np.array([
            n @ hhj.eval(t.coeffs, tp, ops.points[e, q][None])[0] @ n
            for q in range(len(ops.s))
        ])
        scale = max(1.0, np.abs(want[e]).max())
        assert np.abs(got - want[e]).max() < 1e-10 * scale


def test_equilibrium_example1(bench):
    b = bench("example_1", 2)
    p2, hhj = b.p2, HhjSpace(b.mesh)
    t = build_equilibrated_tensor(b.mesh, p2, hhj, b.u, b.sigma, edge_ops=b.ops)
    res = verify_equilibrium(b.mesh, p2, hhj, t, load=b.primal_load, edge_ops=b.ops)
    assert res < 1e-9
    td = build_equilibrated_tensor(b.mesh, p2, hhj, b.ut, b.sigma, edge_ops=b.ops)
    res_d = verify_equilibrium(b.mesh, p2, hhj, td, load=b.dual_load, edge_ops=b.ops)
    assert res_d < 1e-9


def test_equilibrium_fails_for_perturbed_solution(bench):
    b = bench("example_1", 1)
    p2, hhj = b.p2, HhjSpace(b.mesh)
    rng = np.random.default_rng(9)
    scale = np.abs(b.u).max()
    u_bad = b.u.copy()
    u_bad[p2.free] += 1e-3 * scale * rng.standard_normal(len(p2.free))
    t = build_equilibrated_tensor(b.mesh, p2, hhj, u_bad, b.sigma, edge_ops=b.ops)
    res = verify_equilibrium(b.mesh, p2, hhj, t, load=b.primal_load, edge_ops=b.ops)
    assert res > 1e-7


def test_tensor_linearity(bench):
    b = bench("example_1", 1)
    p2, hhj = b.p2, HhjSpace(b.mesh)
    rng = np.random.default_rng(13)
    u1 = rng.standard_normal(p2.ndof)
    u2 = rng.standard_normal(p2.ndof)
    t1 = build_equilibrated_tensor(b.mesh, p2, hhj, u1, b.sigma, edge_ops=b.ops)
    t2 = build_equilibrated_tensor(b.mesh, p2, hhj, u2, b.sigma, edge_ops=b.ops)
    t12 = build_equilibrated_tensor(b.mesh, p2, hhj, u1 + u2, b.sigma, edge_ops=b.ops)
    scale = np.abs(t12.coeffs).max()
    assert np.abs(t1.coeffs + t2.coeffs - t12.coeffs).max() < 1e-12 * scale


def test_rebuild_bitwise_identical(bench):
    b = bench("example_1", 1)
    p2, hhj = b.p2, HhjSpace(b.mesh)
    t1 = build_equilibrated_tensor(b.mesh, p2, hhj, b.u, b.sigma, edge_ops=b.ops)
    t2 = build_equilibrated_tensor(b.mesh, p2, hhj, b.u, b.sigma, edge_ops=b.ops)
    assert np.array_equal(t1.coeffs, t2.coeffs)


def test_tensor_equals_hessian_for_c1_quadratic():
    # interpolating the (constant) hessian of a quadratic into the tensor
    # space represents it exactly
    from platefem.equilibration import MomentTensor
    from platefem.fespace import _TENSOR_BASIS

    mesh = square_mesh(1)
    p2, hhj = P2Space(mesh), HhjSpace(mesh)
    v = interpolate(mesh, p2, lambda p: p[0] ** 2 - 3.0 * p[0] * p[1] + 0.5 * p[1] ** 2)
    T = np.array([[2.0, -3.0], [-3.0, 1.0]])
    coeffs = np.zeros(hhj.ndof)
    for e in range(mesh.num_edges):
        n = mesh.edge_normals[e]
        nn = n @ T @ n
        coeffs[2 * e] = coeffs[2 * e + 1] = 0.5 * mesh.edge_lengths[e] * nn
    for t in range(mesh.num_triangles):
        for c in range(3):
            coeffs[2 * mesh.num_edges + 3 * t + c] = mesh.areas[t] * np.tensordot(T, _TENSOR_BASIS[c])
    tensor = MomentTensor(coeffs=coeffs, space=hhj, source="primal")
    norm, per_el = tensor_minus_hessian_norm(mesh, hhj, tensor, p2, v)
    assert norm < 1e-12
    assert np.all(per_el < 1e-12)


def test_norm_localization_and_triangle_inequality(bench):
    b = bench("example_1", 2)
    p2, hhj = b.p2, HhjSpace(b.mesh)
    t = build_equilibrated_tensor(b.mesh, p2, hhj, b.u, b.sigma, edge_ops=b.ops)
    norm, per_el = tensor_minus_hessian_norm(b.mesh, hhj, t, p2, b.u)
    assert np.sqrt((per_el**2).sum()) == pytest.approx(norm, rel=1e-12)
    # || s - D2 w || <= || s - D2 u || + || D2 u - D2 w || for another field w
    w = b.ut
    norm_w, _ = tensor_minus_hessian_norm(b.mesh, hhj, t, p2, w)
    Hu = p2.hess_of(b.u)
    Hw = p2.hess_of(w)
    diff = Hu - Hw
    mid = float(np.sqrt(np.einsum("tab,tab,t->", diff, diff, b.mesh.areas)))
    assert norm_w <= norm + mid + 1e-12


def test_efficiency_trend_under_refinement(bench):
    # || tensor - D2 u_h || decreases about linearly in h and the ratio to the
    # discretization error stays within a factor band (levels past the
    # pre-asymptotic regime of the peaked benchmark solution)
    vals, errs = [], []
    for r in (0, 1, 2):
        b = bench("example_1", r)
        hhj = HhjSpace(b.mesh)
        t = build_equilibrated_tensor(b.mesh, b.p2, hhj, b.u, b.sigma, edge_ops=b.ops)
        norm, _ = tensor_minus_hessian_norm(b.mesh, hhj, t, b.p2, b.u)
        vals.append(norm)
        errs.append(ip_error_norm(b.mesh, b.p2, b.u, b.problem.exact.hess, b.sigma,
                                  degree=12, edge_ops=b.ops, exact_grad=b.problem.exact.grad))
    assert vals[2] < vals[1] < vals[0]
    ratios = [v / e for v, e in zip(vals, errs)]
    assert max(ratios) / min(ratios) < 10.0
    assert max(ratios) < 10.0
