"""Rigid planar formations under gradient control with mismatched target distances."""
from .analysis import (
    AnalysisSettings,
    OutcomeReport,
    SquareSubsystem,
    classify_outcome,
    estimate_equilibrium_output,
    extract_square_subsystem,
    fit_convergence,
    genericity_vector,
    orbit_diagnostics,
)
from .dynamics import (
    IntegrationError,
    IntegratorSettings,
    Scenario,
    TrajectoryRecord,
    edge_errors,
    error_rhs,
    integrate,
    m_matrix,
    mismatch_from_distance_pairs,
    vector_field,
)
from .graph import FormationGraph, edge_vectors, incidence_transpose, neighbor_split
from .rigidity import (
    RigidityReport,
    independent_edge_pair,
    kernel_basis,
    polarization,
    rigidity_matrix,
    rigidity_test,
    shape_coordinates,
    unaligned_test,
)

__version__ = "0.1.0"
