"""Canonical pi_1 mappings: residuals, auxiliary tensors and the closed systems."""
from .auxiliary import (
    build_A4,
    build_A6,
    build_A_rho,
    build_B,
    build_C4,
    build_C6,
    build_mu,
    build_N,
    build_omega,
    build_S,
    build_T,
    delta_sym,
    fundamental,
    grs_a_derivative,
    k_derivative,
    k_derivative_derived,
    null_structure,
    ricci_commutator,
    second_derivative_a_derived,
    transfer,
    second_derivative_a,
    theta,
)
from .closure import (
    CONSTRAINT_TOL,
    RiemannAux,
    auxiliary_tensors,
    build_riemannian_aux,
    closure_rhs,
    grs_closure_rhs,
    integrability_residual,
    riemannian_closure_rhs,
)
from .core import (
    GRS,
    RIEMANNIAN,
    TARGETS,
    AgsError,
    GrsUnknowns,
    Pi1State,
    RiemannUnknowns,
    algebraic_constraint_residual,
    constraint_violation,
    deformation,
    fundamental_rhs,
    metric_derivative,
    parameter_bound,
    pi1_residual,
    project,
    unknowns_class,
)

build_theta = theta
