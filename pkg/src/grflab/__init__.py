"""grflab: a desk-scale numerical laboratory for generalized Ricci flow.

The package studies the coupled evolution of a metric g and a closed 3-form
H = Hhat + db on flat tori (and its reduction to 3D Lie groups), together
with the variational structure behind it: the lowest eigenvalue of the
Schrodinger operator -4 Delta + R - |H|^2/12 acts as a Lyapunov functional
whose gradient flow the dynamics follows up to diffeomorphism.
"""

from .errors import (
    ConfigError,
    ConvergenceError,
    FieldError,
    GrflabError,
    JacobianError,
    PositivityError,
    SnapshotError,
    StepSizeError,
)
from .lattice import (
    Grid,
    ScalarField,
    TensorField,
    integrate,
    partial_derivative,
    shift,
    weighted_inner,
)
from .snapshots import load_snapshot, read_snapshot_header, save_snapshot
from .geometry import (
    MetricField,
    christoffel,
    codifferential,
    deturck_vector,
    divergence,
    exterior_derivative,
    flat_metric,
    form_norm_sq,
    gradient_vector,
    h_squared,
    hessian,
    hodge_laplacian,
    interior_product,
    laplace_beltrami,
    lichnerowicz,
    lie_derivative_metric,
    ricci,
    scalar_curvature,
)
from .spectrum import (
    CriticalPointReport,
    MuGradient,
    SchrodingerOperator,
    SpectralSolution,
    critical_point_diagnostics,
    energy_functional,
    linearized_gradient_flat,
    lowest_eigenpair,
    mu_directional_derivative,
    mu_gradient,
    mu_value,
    normalize_profile,
    schrodinger_apply,
    total_field_strength,
)
from .flow import (
    FlowConfig,
    FlowState,
    Trajectory,
    deturck_rhs,
    grf_rhs,
    mu_gradient_flow_rhs,
    read_trajectory_csv,
    run_flow,
    step,
    write_trajectory_csv,
)
from .diffeo import diffeo_flow, pullback
from .lojasiewicz import LojasiewiczFit, lojasiewicz_estimate
from .homogeneous import (
    LieData,
    abelian_algebra,
    find_stationary,
    heisenberg_algebra,
    invariant_codifferential,
    invariant_flow,
    invariant_grf_rhs,
    invariant_h_squared,
    invariant_norm_sq,
    invariant_ricci,
    invariant_scalar_curvature,
    stationarity_residual,
    su2_algebra,
    write_invariant_csv,
)
from .perturbations import (
    divergence_free_projection,
    random_form_perturbation,
    random_metric_perturbation,
    trig_polynomial,
)
from .experiments import (
    background_three_form,
    eigen_report,
    flat_equilibrium_report,
    flow_run,
    gauge_consistency_run,
    gradient_check,
    homogeneous_report,
    lojasiewicz_report,
    monotonicity_run,
    perturbed_state,
    stability_run,
)

__version__ = "0.1.0"
