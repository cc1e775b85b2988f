"""Numerical toolkit for covariant (de Donder-Weyl) Hamiltonian field theory on multicotangent bundles."""

from .algebra import (
    AlternatingForm,
    MultiVector,
    compound_matrix,
    contract,
    flat,
    flat_matrix,
    interior,
    is_k_horizontal,
    multi_indices,
    wedge,
)
from .bundle import (
    AdmissibilityError,
    BundleShape,
    HamiltonianFunction,
    HamiltonVolterraFunction,
    chi,
    function_from_section,
    hamiltonian_section,
    liouville_form,
    omega_coordinate,
    omega_h,
    section_from_function,
    theta_h,
    z_derivative,
    z_flow,
)
from .calculus import (
    BoundaryStencilError,
    ChartedDomain,
    DifferentiationConfig,
    FormField,
    SmoothMap,
    exterior_derivative,
    pullback,
    pushforward_multivector,
)
from .catalog import ExampleSpec, catalog, get_example
from .equations import (
    AnalyticSection,
    DiscreteSection,
    Variation,
    action,
    action_first_variation,
    dhdw_residual,
    energy_residual,
    evaluate_suites,
    hv_residual,
    pullback_residual,
    vertical_residual_suite,
    vortex_residual,
)
from .expr import parse_expression, to_text
from .nplectic import (
    CoVolume,
    HamiltonianForm,
    NPlecticManifold,
    check_nplectic,
    degeneracy_scan,
    dynamical_hdw_residual,
    hdw_residual_pair,
    hdw_sign,
)
from .report import ResidualReport
from .solvers import solve_laplace, solve_ode

__version__ = "0.1.0"
