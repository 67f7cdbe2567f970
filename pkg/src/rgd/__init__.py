"""Robust generation dispatch with purchased predictions."""

__version__ = "0.1.0"

from .model import (
    Agent,
    CaseOptions,
    DispatchCase,
    FirstStageDecision,
    Generator,
    Line,
    SecondStageDecision,
    ValidationReport,
    first_stage_cost,
    second_stage_cost,
    validate_case,
)
from .fusion import (
    DduUncertaintySet,
    FusionResult,
    NormalizedPolytope,
    accuracy_to_noise,
    budgets,
    build_set,
    chebyshev_bound_check,
    fuse,
    membership,
    prediction_cost,
    signature,
)
from .formulations import (
    CanonicalTwoStage,
    MasterState,
    VertexSignature,
    build_fc,
    build_first_stage,
    build_mp,
    build_sp,
    canonicalize,
    extract_signature,
)
from .ccg import (
    IterationRecord,
    SolveReport,
    SolverFailure,
    bounds_trace,
    solve_ccg,
    solve_mapping_ccg,
    solve_traditional_ccg,
)
from .oracles import (
    BilevelResult,
    FullSolveResult,
    OosResult,
    VertexList,
    enumerate_vertices,
    exact_bilevel,
    exact_full,
    oos_evaluate,
)
from .casefile import CaseFileError, case_from_dict, case_to_dict, load_case, save_case
