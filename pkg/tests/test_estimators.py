import numpy as np
import pytest

from platefem.assembly import QuadratureLoad
from platefem.equilibration import build_equilibrated_tensor, tensor_minus_hessian_norm
from platefem.estimators import (
    abstract_goal_bound,
    average_moment,
    equilibrium_defect_term,
    goal_correction,
    goal_report,
    oscillation_bound,
    residual_goal_estimator,
)
from platefem.fespace import HctSpace, HhjSpace, triangle_rule
from platefem.mesh import build_mesh
from platefem.reconstruction import enrich


def pipeline(b):
    hct = HctSpace(b.mesh)
    hhj = HhjSpace(b.mesh)
    t = build_equilibrated_tensor(b.mesh, b.p2, hhj, b.u, b.sigma, edge_ops=b.ops,
                                  source="primal", load=b.primal_load)
    td = build_equilibrated_tensor(b.mesh, b.p2, hhj, b.ut, b.sigma, edge_ops=b.ops,
                                   source="dual", load=b.dual_load)
    s = enrich(b.mesh, b.p2, hct, b.u, source="primal")
    sd = enrich(b.mesh, b.p2, hct, b.ut, source="dual")
    return hct, hhj, t, td, s, sd


def test_average_moment_pointwise(bench):
    b = bench("example_1", 1)
    hct, hhj, t, td, s, sd = pipeline(b)
    avg = average_moment(td, sd)
    rule = triangle_rule(4)
    pts, w, vals = avg.values_on_rule(rule)
    # direct mean of the two constituents at the same points
    _, _, H = hct.quad_hessians(sd.coeffs, rule)
    S = hhj.values_on_grid(td.coeffs, pts)
    assert np.abs(vals - 0.5 * (S + H)).max() < 1e-13 * max(1.0, np.abs(vals).max())
    # pointwise check on a single element at the 7 innermost grid points
    got = avg.values_at(0, pts[0, 0, :7])
    assert np.allclose(got, vals[0, 0, :7], atol=1e-12 * max(1.0, np.abs(vals).max()))


def test_average_moment_zero_and_mesh_mismatch(bench):
    b1 = bench("example_1", 1)
    b2 = bench("example_1", 2)
    hct1, hhj1, t1, td1, s1, sd1 = pipeline(b1)
    _, _, _, td2, _, sd2 = pipeline(b2)
    with pytest.raises(ValueError):
        average_moment(td2, sd1)
    # zero inputs give zero values
    from platefem.equilibration import MomentTensor
    from platefem.reconstruction import PotentialReconstruction

    z = average_moment(MomentTensor(np.zeros(hhj1.ndof), hhj1, "dual"),
                       PotentialReconstruction(np.zeros(hct1.ndof), hct1, "dual"))
    _, _, vals = z.values_on_rule(triangle_rule(2))
    assert np.all(vals == 0.0)


def test_goal_correction_zero_when_equal(bench):
    # if the tensor equals the reconstruction hessian the correction vanishes
    b = bench("example_1", 1)
    hct, hhj, t, td, s, sd = pipeline(b)
    avg = average_moment(td, sd)
    # build a fake tensor matching D2 s_h is nontrivial; use bilinearity instead:
    # correction is linear in (tensor - D2 s), so correction(t, s) with t := D2s
    # realized through sign flip symmetry: c(t,s;avg) + c_flip = 0 when avg flips
    c1 = goal_correction(t, s, avg)
    avg_neg = average_moment(
        type(td)(coeffs=-td.coeffs, space=td.space, source="dual"),
        type(sd)(coeffs=-sd.coeffs, space=sd.space, source="dual"),
    )
    c2 = goal_correction(t, s, avg_neg)
    assert c1 == pytest.approx(-c2, rel=1e-12)


def test_goal_correction_summation_oracle(bench):
    # contraction against a constant identity tensor field, checked against an
    # independent per-element summation
    b = bench("example_1", 1)
    hct, hhj, t, td, s, sd = pipeline(b)

    class IdentityAvg:
        def values_on_rule(self, rule):
            pts, w, H = hct.quad_hessians(s.coeffs, rule)
            vals = np.zeros(H.shape)
            vals[..., 0, 0] = 1.0
            vals[..., 1, 1] = 1.0
            return pts, w, vals

    c = goal_correction(t, s, IdentityAvg())
    rule = triangle_rule(4)
    pts, w, H = hct.quad_hessians(s.coeffs, rule)
    S = hhj.values_on_grid(t.coeffs, pts)
    manual = 0.0
    for tt in range(b.mesh.num_triangles):
        diff = S[tt] - H[tt]
        manual += float(np.einsum("gn,gn->", w[tt], diff[..., 0, 0] + diff[..., 1, 1]))
    assert c == pytest.approx(manual, rel=1e-12)


def test_abstract_goal_bound_arithmetic():
    assert abstract_goal_bound(0.0, 5.0, 0.0) == 0.0
    assert abstract_goal_bound(2.0, 3.0, 0.5) == 3.5
    with pytest.raises(ValueError):
        abstract_goal_bound(-1.0, 1.0, 0.0)


def test_residual_estimator_localization(bench):
    b = bench("example_1", 2)
    hct, hhj, t, td, s, sd = pipeline(b)
    total, per = residual_goal_estimator(b.mesh, b.p2, hhj, b.u, t, td, edge_ops=b.ops)
    assert per.sum() == pytest.approx(total, rel=1e-12)
    assert total != 0.0


def test_residual_estimator_zero_for_c1_matching(bench):
    # zero solution: both terms vanish
    b = bench("example_1", 1)
    hhj = HhjSpace(b.mesh)
    z = np.zeros(b.p2.ndof)
    t0 = build_equilibrated_tensor(b.mesh, b.p2, hhj, z, b.sigma, edge_ops=b.ops)
    td = build_equilibrated_tensor(b.mesh, b.p2, hhj, b.ut, b.sigma, edge_ops=b.ops)
    total, per = residual_goal_estimator(b.mesh, b.p2, hhj, z, t0, td, edge_ops=b.ops)
    assert total == 0.0 and np.all(per == 0.0)


def test_equilibrium_defect_vanishes(bench):
    b = bench("example_1", 2)
    hct, hhj, t, td, s, sd = pipeline(b)
    d = equilibrium_defect_term(b.mesh, b.p2, hhj, t, b.primal_load, b.ut, edge_ops=b.ops)
    assert abs(d) < 1e-9


def test_oscillation_bound_zero_and_closed_form():
    mesh = build_mesh([(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)], [(0, 1, 2)])
    zero = QuadratureLoad(lambda p: np.zeros(len(p)), degree=2)
    assert oscillation_bound(mesh, zero) == 0.0
    one = QuadratureLoad(lambda p: np.ones(len(p)), degree=2)
    h = mesh.diameters[0]
    want = 0.3682146 * np.sqrt(h**4 * mesh.areas[0])
    assert oscillation_bound(mesh, one) == pytest.approx(want, rel=1e-12)


def test_oscillation_bound_quarter_scaling(bench):
    # halving h scales the bound by about 1/4 for fixed smooth data
    b1 = bench("example_1", 1)
    b2 = bench("example_1", 2)
    o1 = oscillation_bound(b1.mesh, b1.problem.load)
    o2 = oscillation_bound(b2.mesh, b2.problem.load)
    assert o2 / o1 == pytest.approx(0.25, rel=0.2)


def test_goal_report_assembly():
    r = goal_report(q_uh=1.0, correction=0.25, eta_h=2.0, eta_dual=3.0,
                    eta_nc=0.5, eta_res=0.1, q_ref=1.5)
    assert r.q_h == 1.25
    assert r.eta_abs == 3.5
    assert r.e_goal == pytest.approx(0.25)
    assert r.effectivity_abs == pytest.approx(3.5 / 0.25)
    assert r.effectivity_res == pytest.approx(0.1 / 0.25)
    # no reference: effectivities absent
    r2 = goal_report(q_uh=1.0, correction=0.0, eta_h=1.0, eta_dual=1.0,
                     eta_nc=0.0, eta_res=0.0)
    assert r2.e_goal is None and r2.effectivity_abs is None
    # zero goal error: effectivity reported as absent
    r3 = goal_report(q_uh=1.5, correction=0.0, eta_h=1.0, eta_dual=1.0,
                     eta_nc=0.0, eta_res=0.0, q_ref=1.5)
    assert r3.e_goal == 0.0 and r3.effectivity_abs is None


def test_role_symmetry_swapping_loads(bench):
    # swapping the primal and dual data swaps the two estimator norms
    b = bench("example_1", 1)
    hct, hhj, t, td, s, sd = pipeline(b)
    eta_h, _ = tensor_minus_hessian_norm(b.mesh, hhj, t, hct, s.coeffs)
    eta_d, _ = tensor_minus_hessian_norm(b.mesh, hhj, td, hct, sd.coeffs)
    # swapped pipeline: u <-> ut
    t2 = build_equilibrated_tensor(b.mesh, b.p2, hhj, b.ut, b.sigma, edge_ops=b.ops)
    s2 = enrich(b.mesh, b.p2, hct, b.ut)
    eta_h2, _ = tensor_minus_hessian_norm(b.mesh, hhj, t2, hct, s2.coeffs)
    assert eta_h2 == pytest.approx(eta_d, rel=1e-12)
    assert abstract_goal_bound(eta_h, eta_d, 0.0) == abstract_goal_bound(eta_d, eta_h, 0.0)
