"""Goal-oriented adaptive interior penalty solver for clamped plate bending."""

from .mesh import Mesh, build_mesh, read_mesh, refine_nvb, refine_uniform, write_mesh
from .fespace import HctSpace, HhjSpace, P2Space, edge_rule, triangle_rule
from .assembly import (
    EdgeOps,
    QuadratureLoad,
    SparseSpdMatrix,
    assemble_aip,
    assemble_load,
    ip_error_norm,
    ip_norm,
    solve,
)
from .equilibration import (
    MomentTensor,
    build_equilibrated_tensor,
    tensor_minus_hessian_norm,
    verify_equilibrium,
)
from .reconstruction import PotentialReconstruction, c1_mismatch, enrich, nonconformity_goal_term
from .estimators import (
    AverageMomentTensor,
    GoalReport,
    abstract_goal_bound,
    average_moment,
    goal_correction,
    goal_report,
    oscillation_bound,
    residual_goal_estimator,
)
from .adaptivity import AdaptiveConfig, LevelRecord, dorfler_mark, run_adaptive
from .benchmarks import get_problem, reference_goal

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
