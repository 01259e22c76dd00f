"""Simulation and Lyapunov certification for dilution-rate control of an
age-structured chemostat."""

from .certificates import (
    CertificateBundle,
    clf_Q_full,
    clf_reduced,
    clf_W_full,
    decay_check,
    decay_constants_continuous,
    decay_constants_sampled,
    gain_quadratic_form,
)
from .config import ExperimentConfig, load_config, preset
from .errors import ChemostatError, NumericalError, ValidationError
from .ide import (
    Kernel,
    envelope_bounds,
    ergodic_projection,
    find_contraction_lambda,
    ide_solve,
    kernel_contraction_gap,
    lyapunov_V,
    lyapunov_W_sup,
    sigma_rate,
)
from .model import (
    ModelParams,
    TransformedState,
    TriangularBirth,
    equilibrium_profile,
    family_initial_profile,
    from_transformed,
    lotka_sharpe_residual,
    normalized_kernel,
    pi_functional,
    setpoint_scale,
    solve_equilibrium_dilution,
    to_transformed,
    triangular_birth_gain,
)
from .profiles import AgeProfile, History
from .quadrature import (
    Cell,
    age_weighted_integral,
    cell_integral,
    exp_interp_params,
    output_integral,
    reflected_weighted_integral,
    renewal_integral,
)
from .runner import certificate_report, emit_trajectory_csv, run_experiment
from .simulate import (
    ControllerSpec,
    ControllerState,
    TrajectoryLog,
    characteristic_step,
    control_action,
    deadzone_q,
    saturate,
    simulate,
)

__version__ = "0.1.0"
