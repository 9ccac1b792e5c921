"""Numerical laboratory for degenerate weighted p-Laplacian diffusion.

The package solves u_t = div(w(x) |grad u|^{p-2} grad u) + f(x, t, u) on
radial and tensor-product grids with homogeneous Dirichlet data, and ships
the surrounding toolbox: weight admissibility checks, a nonlinear
eigensolver, an adaptive implicit time stepper with blow-up detection, and
diagnostics (closed-form ODE comparisons, self-similar reference solutions,
decay-rate fits).
"""

from .errors import (
    ConfigError,
    ConvergenceError,
    DataError,
    DegenerateBallError,
    DegenerateFieldError,
    DegenflowError,
    DivergenceError,
    FitError,
    NumericalError,
    OutOfRangeError,
    ShapeError,
)
from .weight_models import (
    DoublingReport,
    MuckenhouptReport,
    WeightSpec,
    ball_mass,
    check_doubling,
    check_muckenhoupt,
    eval_radial,
    load_weight_csv,
    surface_area,
)
from .discretization import (
    Field,
    Grid,
    build_grid,
    cell_volumes,
    integrate,
    nodal_gradient,
    quad_weights,
    read_field_csv,
    sobolev_norm,
    weight_on_grid,
    write_field_csv,
)
from .plap_operator import (
    ReactionSpec,
    apply_plaplacian,
    diffusion_jacobian,
    energy,
    energy_hessian_matrix,
    reaction_derivative,
    reaction_eval,
    variational_dot,
)
from .eigensolver import EigenPair, rayleigh_quotient, smallest_eigenpair
from .timestepper import (
    ProblemSpec,
    RunOutcome,
    StepControls,
    Trajectory,
    estimate_blowup_time,
    run_simulation,
    step_implicit,
)
from .diagnostics import (
    Exponents,
    OdeParams,
    barenblatt_corrected,
    barenblatt_exact,
    barenblatt_front,
    bernoulli_blowup,
    blowup_threshold,
    condition_star,
    decay_exponent_fit,
    exp_forced_bound,
    fit_bernoulli_constant,
    fit_exp_forced_constant,
    g_functional,
    phi_r_characteristic,
    residual_check,
    triple_norm,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ConvergenceError",
    "DataError",
    "DegenerateBallError",
    "DegenerateFieldError",
    "DegenflowError",
    "DivergenceError",
    "FitError",
    "NumericalError",
    "OutOfRangeError",
    "ShapeError",
    "DoublingReport",
    "MuckenhouptReport",
    "WeightSpec",
    "ball_mass",
    "check_doubling",
    "check_muckenhoupt",
    "eval_radial",
    "load_weight_csv",
    "surface_area",
    "Field",
    "Grid",
    "build_grid",
    "cell_volumes",
    "integrate",
    "nodal_gradient",
    "quad_weights",
    "read_field_csv",
    "sobolev_norm",
    "weight_on_grid",
    "write_field_csv",
    "ReactionSpec",
    "apply_plaplacian",
    "diffusion_jacobian",
    "energy",
    "energy_hessian_matrix",
    "reaction_derivative",
    "reaction_eval",
    "variational_dot",
    "EigenPair",
    "rayleigh_quotient",
    "smallest_eigenpair",
    "ProblemSpec",
    "RunOutcome",
    "StepControls",
    "Trajectory",
    "estimate_blowup_time",
    "run_simulation",
    "step_implicit",
    "Exponents",
    "OdeParams",
    "barenblatt_corrected",
    "barenblatt_exact",
    "barenblatt_front",
    "bernoulli_blowup",
    "blowup_threshold",
    "condition_star",
    "decay_exponent_fit",
    "exp_forced_bound",
    "fit_bernoulli_constant",
    "fit_exp_forced_constant",
    "g_functional",
    "phi_r_characteristic",
    "residual_check",
    "triple_norm",
    "__version__",
]
