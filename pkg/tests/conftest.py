from types import SimpleNamespace

import pytest

from platefem.assembly import EdgeOps, assemble_aip, assemble_load, solve
from platefem.benchmarks import get_problem
from platefem.fespace import P2Space
from platefem.mesh import refine_uniform

SIGMA = 20.0


def solve_uniform(problem_id, refines, sigma=SIGMA):
    """Primal and dual solves of a benchmark on a uniformly refined mesh."""
    prob = get_problem(problem_id)
    mesh = prob.initial_mesh
    for _ in range(refines):
        mesh = refine_uniform(mesh)
    p2 = P2Space(mesh)
    ops = EdgeOps(mesh, p2)
    A = assemble_aip(mesh, p2, sigma, edge_ops=ops)
    primal_load = assemble_load(mesh, p2, prob.load)
    dual_load = assemble_load(mesh, p2, prob.weight)
    u = A.expand(solve(A, primal_load[p2.free]))
    ut = A.expand(solve(A, dual_load[p2.free]))
    return SimpleNamespace(problem=prob, mesh=mesh, p2=p2, ops=ops, A=A,
                           primal_load=primal_load, dual_load=dual_load,
                           u=u, ut=ut, sigma=sigma)


@pytest.fixture(scope="session")
def bench():
    """Cached factory for benchmark solves: bench(problem_id, refines)."""
    cache = {}

    def get(problem_id, refines):
        key = (problem_id, refines)
        if key not in cache:
            cache[key] = solve_uniform(problem_id, refines)
        return cache[key]

    return get
