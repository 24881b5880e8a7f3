"""Numerical laboratory for linear consensus dynamics on growing graph
families: build sparse consensus matrices, apply local perturbations,
compute consensus weight vectors and hitting/return times, and diagnose
democracy (vanishing maximum weight) across family size."""

from .matrix import (
    BallExtract,
    ProbabilityVector,
    SparseStochasticMatrix,
    SmatFormatError,
    ValidationReport,
    blend,
    check_stochastic,
    extract_ball,
    is_aperiodic,
    is_irreducible,
    read_smat,
    strongly_connected_components,
    write_smat,
)
from .families import (
    ConductanceMatrix,
    GraphFamily,
    StabilizationReport,
    append_cycle_tail,
    check_stabilization,
    directed_torus,
    drift_cycle,
    drift_line,
    drift_line_stationary,
    family,
    from_conductance,
    lazy_srw_grid,
    lazy_torus,
    read_fam,
    suggested_tail_length,
    write_fam,
)
from .perturb import (
    PerturbationSpec,
    apply_perturbation,
    cut_directed_edges,
    homophily,
    read_pert,
    replace_rows,
    srw_profile,
    write_pert,
)
from .stationary import (
    PowerIterationError,
    ReducibleMatrixError,
    ScanError,
    ScanRecord,
    degree_bound,
    democracy_scan,
    read_scan_csv,
    residual_l1,
    reversible_stationary,
    scan_to_csv,
    scan_to_json,
    stationary_direct,
    stationary_power,
)
from .hitting import (
    HittingDiagnosisError,
    HittingQuery,
    KacReport,
    expected_hitting,
    expected_return,
    gamblers_ruin_expected,
    hitting_times,
    kac_check,
    max_hitting_from,
    ruin_chain,
)
from .simulate import (
    SimResult,
    StepCapExceededError,
    estimate_stationary_occupation,
    return_time_samples,
    simulate_return_time,
)

__version__ = "0.1.0"
