"""Discrete-time SIWS epidemics on layered population/resource networks."""

from .analysis import (
    Classification,
    EquilibriumResult,
    TwoVirusReport,
    classify_single,
    classify_tv,
    endemic_fixed_point,
    equilibrium_residual,
    error_matrices,
    homogeneous_equilibrium,
    homogeneous_params,
    omega_family,
    sensitivity,
    two_virus_analysis,
)
from .dynamics import (
    DomainError,
    ParameterSchedule,
    Trajectory,
    reference_continuous,
    simulate,
    simulate_multi,
    step_multi,
    step_single,
)
from .model import (
    FullSystem,
    MultiVirusScenario,
    SpreadingParams,
    State,
    ValidationReport,
    Violation,
    assemble_full,
    check_irreducible,
    compute_w_max,
    validate,
)
from .scenario import ScenarioFile, SweepSpec, generate_random, run_sweep, write_trajectory_csv
from .spectral import (
    ConvergenceError,
    PerronData,
    metzler_sign,
    metzler_s1,
    reproduction_number,
    s1_shifted,
    spectral_radius,
)

__version__ = "0.1.0"
